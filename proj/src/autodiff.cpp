#include "lidarvoice/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Core>
#include <fmt/format.h>

#include "lidarvoice/error.hpp"

namespace lidarvoice::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using ConstVec = Eigen::Map<const Eigen::RowVectorXd>;
using MutVec = Eigen::Map<Eigen::RowVectorXd>;

ConstMap cmat(const double* p, std::size_t r, std::size_t c) {
  return ConstMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
MutMap mmat(double* p, std::size_t r, std::size_t c) {
  return MutMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

[[noreturn]] void shape_error(const std::string& what) { throw Error(ErrorKind::kShape, what); }

void expect_rank(const Tensor& t, std::size_t rank, const char* op, const char* name) {
  if (t.rank() != rank) {
    shape_error(fmt::format("{}: {} must have rank {}, got {}", op, name, rank, shape_string(t.shape())));
  }
}

}  // namespace

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  return fmt::format("[{}]", fmt::join(shape, ","));
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : s_(std::make_shared<Storage>()) {
  if (shape_size(shape) != values.size()) {
    shape_error(fmt::format("tensor of shape {} cannot hold {} values", shape_string(shape), values.size()));
  }
  s_->shape = std::move(shape);
  s_->values = std::move(values);
  s_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

double Tensor::item() const {
  if (size() != 1) shape_error(fmt::format("item() on tensor of shape {}", shape_string(shape())));
  return s_->values[0];
}

std::span<double> Tensor::grad_buffer() const {
  if (s_->grad.empty()) s_->grad.assign(s_->values.size(), 0.0);
  return s_->grad;
}

void Tensor::zero_grad() const {
  if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

void Tensor::release_grad() const {
  std::vector<double>().swap(s_->grad);
}

Tensor Tensor::clone(bool requires_grad) const { return Tensor(s_->shape, s_->values, requires_grad); }

// ---------------------------------------------------------------------------
// Graph

Tensor Graph::make_output(Shape shape, std::initializer_list<const Tensor*> inputs) {
  bool needs = false;
  if (recording()) {
    for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  }
  return Tensor::zeros(std::move(shape), needs);
}

void Graph::record(const Tensor& output, std::function<void()> backward) {
  if (!output.requires_grad()) return;
  nodes_.push_back({output, std::move(backward)});
}

void Graph::backward(const Tensor& root) {
  if (consumed_) throw Error(ErrorKind::kInvalidArgument, "graph backward may only run once");
  if (root.size() != 1) shape_error("backward root must hold exactly one element");
  consumed_ = true;
  if (!root.requires_grad()) return;
  Tensor seed = root;
  seed.grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
    it->output.release_grad();
    it->backward = nullptr;
  }
  nodes_.clear();
}

// ---------------------------------------------------------------------------
// affine maps

namespace {

void apply_relu(double* v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) v[i] = v[i] > 0 ? v[i] : 0.0;
}

// Upstream gradient with the folded activation undone: dY itself, or dY
// masked where the (post-relu) output is zero.
std::span<const double> pre_activation_grad(const Tensor& y, Activation act, std::vector<double>& scratch) {
  if (act == Activation::kIdentity) return y.grad();
  const auto dy = y.grad();
  const auto yv = y.values();
  scratch.resize(dy.size());
  for (std::size_t i = 0; i < dy.size(); ++i) scratch[i] = yv[i] > 0 ? dy[i] : 0.0;
  return scratch;
}

// y[rows,out] = act(x[rows,in] * w[in,out] + b)
Tensor affine_rows(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b, Activation act, Shape out_shape,
                   std::size_t rows) {
  const std::size_t in = w.dim(0);
  const std::size_t out = w.dim(1);
  Tensor y = g.make_output(std::move(out_shape), {&x, &w, &b});
  auto Y = mmat(y.mutable_values().data(), rows, out);
  Y.noalias() = cmat(x.values().data(), rows, in) * cmat(w.values().data(), in, out);
  Y.rowwise() += ConstVec(b.values().data(), static_cast<Eigen::Index>(out));
  if (act == Activation::kRelu) apply_relu(y.mutable_values().data(), y.size());

  g.record(y, [x, w, b, y, act, rows, in, out]() mutable {
    std::vector<double> scratch;
    const auto dY = cmat(pre_activation_grad(y, act, scratch).data(), rows, out);
    if (x.requires_grad()) {
      mmat(x.grad_buffer().data(), rows, in).noalias() += dY * cmat(w.values().data(), in, out).transpose();
    }
    if (w.requires_grad()) {
      mmat(w.grad_buffer().data(), in, out).noalias() += cmat(x.values().data(), rows, in).transpose() * dY;
    }
    if (b.requires_grad()) {
      MutVec(b.grad_buffer().data(), static_cast<Eigen::Index>(out)) += dY.colwise().sum();
    }
  });
  return y;
}

void check_affine(const Tensor& x, const Tensor& w, const Tensor& b, const char* op) {
  expect_rank(w, 2, op, "weight");
  expect_rank(b, 1, op, "bias");
  if (x.shape().back() != w.dim(0) || b.dim(0) != w.dim(1)) {
    shape_error(fmt::format("{}: cannot apply weight {} / bias {} to input {}", op, shape_string(w.shape()),
                            shape_string(b.shape()), shape_string(x.shape())));
  }
}

}  // namespace

Tensor matmul_bias(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b, Activation act) {
  expect_rank(x, 2, "matmul_bias", "input");
  check_affine(x, w, b, "matmul_bias");
  return affine_rows(g, x, w, b, act, {x.dim(0), w.dim(1)}, x.dim(0));
}

Tensor shared_point_dense(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b, Activation act) {
  expect_rank(x, 3, "shared_point_dense", "input");
  check_affine(x, w, b, "shared_point_dense");
  return affine_rows(g, x, w, b, act, {x.dim(0), x.dim(1), w.dim(1)}, x.dim(0) * x.dim(1));
}

Tensor relu(Graph& g, const Tensor& x) {
  Tensor y = g.make_output(x.shape(), {&x});
  const auto xv = x.values();
  auto yv = y.mutable_values();
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] > 0 ? xv[i] : 0.0;
  g.record(y, [x, y]() mutable {
    if (!x.requires_grad()) return;
    const auto xv = x.values();
    const auto dy = y.grad();
    auto dx = x.grad_buffer();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > 0) dx[i] += dy[i];
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// convolution and pooling

namespace {

// Row (y*W + x) of col holds the 3x3 neighborhood in (ky, kx, c) order.
void im2col3x3(const double* img, std::size_t H, std::size_t W, std::size_t C, double* col) {
  const std::size_t row_len = 9 * C;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      double* row = col + (y * W + x) * row_len;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - 1;
          double* dst = row + (ky * 3 + kx) * C;
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(H) || ix >= static_cast<std::ptrdiff_t>(W)) {
            std::fill(dst, dst + C, 0.0);
          } else {
            std::memcpy(dst, img + (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * C,
                        C * sizeof(double));
          }
        }
      }
    }
  }
}

void col2im3x3_add(const double* col, std::size_t H, std::size_t W, std::size_t C, double* img) {
  const std::size_t row_len = 9 * C;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double* row = col + (y * W + x) * row_len;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - 1;
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
          const double* src = row + (ky * 3 + kx) * C;
          double* dst = img + (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * C;
          for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(Graph& g, const Tensor& x, const Tensor& k, const Tensor& b, Activation act) {
  expect_rank(x, 4, "conv2d", "input");
  expect_rank(k, 4, "conv2d", "kernel");
  expect_rank(b, 1, "conv2d", "bias");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (k.dim(0) != 3 || k.dim(1) != 3 || k.dim(2) != C || b.dim(0) != k.dim(3) || H == 0 || W == 0) {
    shape_error(fmt::format("conv2d: kernel {} / bias {} incompatible with input {}", shape_string(k.shape()),
                            shape_string(b.shape()), shape_string(x.shape())));
  }
  const std::size_t O = k.dim(3);
  const std::size_t HW = H * W;
  const std::size_t K9 = 9 * C;

  Tensor y = g.make_output({B, H, W, O}, {&x, &k, &b});
  std::vector<double> col(HW * K9);
  const auto kernel = cmat(k.values().data(), K9, O);
  const auto bias = ConstVec(b.values().data(), static_cast<Eigen::Index>(O));
  for (std::size_t s = 0; s < B; ++s) {
    im2col3x3(x.values().data() + s * HW * C, H, W, C, col.data());
    auto Y = mmat(y.mutable_values().data() + s * HW * O, HW, O);
    Y.noalias() = cmat(col.data(), HW, K9) * kernel;
    Y.rowwise() += bias;
  }
  if (act == Activation::kRelu) apply_relu(y.mutable_values().data(), y.size());

  g.record(y, [x, k, b, y, act, B, H, W, C, O, HW, K9]() mutable {
    std::vector<double> scratch;
    const double* grad_y = pre_activation_grad(y, act, scratch).data();
    std::vector<double> col(HW * K9);
    std::vector<double> dcol(x.requires_grad() ? HW * K9 : 0);
    const auto kernel = cmat(k.values().data(), K9, O);
    for (std::size_t s = 0; s < B; ++s) {
      const auto dY = cmat(grad_y + s * HW * O, HW, O);
      if (k.requires_grad()) {
        im2col3x3(x.values().data() + s * HW * C, H, W, C, col.data());
        mmat(k.grad_buffer().data(), K9, O).noalias() += cmat(col.data(), HW, K9).transpose() * dY;
      }
      if (b.requires_grad()) {
        MutVec(b.grad_buffer().data(), static_cast<Eigen::Index>(O)) += dY.colwise().sum();
      }
      if (x.requires_grad()) {
        mmat(dcol.data(), HW, K9).noalias() = dY * kernel.transpose();
        col2im3x3_add(dcol.data(), H, W, C, x.grad_buffer().data() + s * HW * C);
      }
    }
  });
  return y;
}

Tensor maxpool2d(Graph& g, const Tensor& x) {
  expect_rank(x, 4, "maxpool2d", "input");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t OH = (H + 1) / 2, OW = (W + 1) / 2;
  Tensor y = g.make_output({B, OH, OW, C}, {&x});
  std::vector<std::uint32_t> argmax(y.size());
  const auto xv = x.values();
  auto yv = y.mutable_values();
  for (std::size_t s = 0; s < B; ++s) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      const std::size_t y0 = 2 * oy, y1 = std::min(2 * oy + 1, H - 1);
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const std::size_t x0 = 2 * ox, x1 = std::min(2 * ox + 1, W - 1);
        const std::size_t out_base = ((s * OH + oy) * OW + ox) * C;
        for (std::size_t c = 0; c < C; ++c) {
          std::size_t best = ((s * H + y0) * W + x0) * C + c;
          for (std::size_t iy = y0; iy <= y1; ++iy) {
            for (std::size_t ix = x0; ix <= x1; ++ix) {
              const std::size_t idx = ((s * H + iy) * W + ix) * C + c;
              if (xv[idx] > xv[best]) best = idx;
            }
          }
          yv[out_base + c] = xv[best];
          argmax[out_base + c] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  g.record(y, [x, y, argmax = std::move(argmax)]() mutable {
    if (!x.requires_grad()) return;
    auto dx = x.grad_buffer();
    const auto dy = y.grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  });
  return y;
}

Tensor global_max_pool(Graph& g, const Tensor& x) {
  expect_rank(x, 3, "global_max_pool", "input");
  const std::size_t B = x.dim(0), N = x.dim(1), C = x.dim(2);
  if (N == 0) shape_error("global_max_pool: point axis is empty");
  Tensor y = g.make_output({B, C}, {&x});
  std::vector<std::uint32_t> argmax(B * C);
  const auto xv = x.values();
  auto yv = y.mutable_values();
  for (std::size_t s = 0; s < B; ++s) {
    double* best = yv.data() + s * C;
    std::uint32_t* arg = argmax.data() + s * C;
    const double* base = xv.data() + s * N * C;
    std::copy(base, base + C, best);
    std::fill(arg, arg + C, 0u);
    for (std::size_t n = 1; n < N; ++n) {
      const double* row = base + n * C;
      for (std::size_t c = 0; c < C; ++c) {
        if (row[c] > best[c]) {
          best[c] = row[c];
          arg[c] = static_cast<std::uint32_t>(n);
        }
      }
    }
  }
  g.record(y, [x, y, argmax = std::move(argmax), B, N, C]() mutable {
    if (!x.requires_grad()) return;
    auto dx = x.grad_buffer();
    const auto dy = y.grad();
    for (std::size_t s = 0; s < B; ++s)
      for (std::size_t c = 0; c < C; ++c) dx[(s * N + argmax[s * C + c]) * C + c] += dy[s * C + c];
  });
  return y;
}

// ---------------------------------------------------------------------------
// regularization and loss

Tensor dropout(Graph& g, const Tensor& x, double rate, bool training, std::uint64_t seed) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("dropout rate {} outside [0, 1)", rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = u(rng) < rate ? 0.0 : keep_scale;

  Tensor y = g.make_output(x.shape(), {&x});
  const auto xv = x.values();
  auto yv = y.mutable_values();
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] * mask[i];
  g.record(y, [x, y, mask = std::move(mask)]() mutable {
    if (!x.requires_grad()) return;
    auto dx = x.grad_buffer();
    const auto dy = y.grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * mask[i];
  });
  return y;
}

std::vector<double> softmax_rows(std::span<const double> logits, std::size_t classes) {
  std::vector<double> p(logits.size());
  for (std::size_t r = 0; r * classes < logits.size(); ++r) {
    const double* z = logits.data() + r * classes;
    const double m = *std::max_element(z, z + classes);
    double denom = 0;
    for (std::size_t j = 0; j < classes; ++j) denom += std::exp(z[j] - m);
    for (std::size_t j = 0; j < classes; ++j) p[r * classes + j] = std::exp(z[j] - m) / denom;
  }
  return p;
}

Tensor weighted_softmax_ce(Graph& g, const Tensor& logits, std::span<const int> targets,
                           std::span<const double> weights) {
  expect_rank(logits, 2, "weighted_softmax_ce", "logits");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (targets.size() != B || weights.size() != K || B == 0) {
    shape_error(fmt::format("weighted_softmax_ce: {} targets / {} weights for logits {}", targets.size(),
                            weights.size(), shape_string(logits.shape())));
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= K) {
      throw Error(ErrorKind::kInvalidArgument, fmt::format("class id {} outside [0, {})", t, K));
    }
  }
  const auto z = logits.values();
  double total = 0;
  for (std::size_t r = 0; r < B; ++r) {
    const double* row = z.data() + r * K;
    const double m = *std::max_element(row, row + K);
    double denom = 0;
    for (std::size_t j = 0; j < K; ++j) denom += std::exp(row[j] - m);
    const double log_p = (row[targets[r]] - m) - std::log(denom);
    total += weights[targets[r]] * -log_p;
  }
  Tensor y = g.make_output({}, {&logits});
  y.mutable_values()[0] = total / static_cast<double>(B);

  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  g.record(y, [logits, y, tgt = std::move(tgt), w = std::move(w), B, K]() mutable {
    if (!logits.requires_grad()) return;
    const double upstream = y.grad()[0] / static_cast<double>(B);
    const auto p = softmax_rows(logits.values(), K);
    auto dz = logits.grad_buffer();
    for (std::size_t r = 0; r < B; ++r) {
      const double coef = upstream * w[tgt[r]];
      for (std::size_t j = 0; j < K; ++j) {
        const double indicator = static_cast<std::size_t>(tgt[r]) == j ? 1.0 : 0.0;
        dz[r * K + j] += coef * (p[r * K + j] - indicator);
      }
    }
  });
  return y;
}

Tensor orthogonality_penalty(Graph& g, const Tensor& a) {
  std::size_t B = 1, n = 0;
  if (a.rank() == 2 && a.dim(0) == a.dim(1)) {
    n = a.dim(0);
  } else if (a.rank() == 3 && a.dim(1) == a.dim(2)) {
    B = a.dim(0);
    n = a.dim(1);
  } else {
    shape_error(fmt::format("orthogonality_penalty needs square matrices, got {}", shape_string(a.shape())));
  }
  // E = I - A A^T per batch item, kept for backward.
  std::vector<double> residual(B * n * n);
  double total = 0;
  for (std::size_t s = 0; s < B; ++s) {
    const auto A = cmat(a.values().data() + s * n * n, n, n);
    auto E = mmat(residual.data() + s * n * n, n, n);
    E = RowMat::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) - A * A.transpose();
    total += E.squaredNorm();
  }
  Tensor y = g.make_output({}, {&a});
  y.mutable_values()[0] = total / static_cast<double>(B);
  g.record(y, [a, y, residual = std::move(residual), B, n]() mutable {
    if (!a.requires_grad()) return;
    const double upstream = y.grad()[0] / static_cast<double>(B);
    for (std::size_t s = 0; s < B; ++s) {
      const auto A = cmat(a.values().data() + s * n * n, n, n);
      const auto E = cmat(residual.data() + s * n * n, n, n);
      // d||E||^2 / dA = -2 (E + E^T) A, with E symmetric.
      mmat(a.grad_buffer().data() + s * n * n, n, n).noalias() += (-4.0 * upstream) * (E * A);
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// structural helpers

Tensor batched_matmul(Graph& g, const Tensor& x, const Tensor& t) {
  expect_rank(x, 3, "batched_matmul", "input");
  expect_rank(t, 3, "batched_matmul", "transform");
  const std::size_t B = x.dim(0), N = x.dim(1), K = x.dim(2), M = t.dim(2);
  if (t.dim(0) != B || t.dim(1) != K) {
    shape_error(fmt::format("batched_matmul: {} x {}", shape_string(x.shape()), shape_string(t.shape())));
  }
  Tensor y = g.make_output({B, N, M}, {&x, &t});
  for (std::size_t s = 0; s < B; ++s) {
    mmat(y.mutable_values().data() + s * N * M, N, M).noalias() =
        cmat(x.values().data() + s * N * K, N, K) * cmat(t.values().data() + s * K * M, K, M);
  }
  g.record(y, [x, t, y, B, N, K, M]() mutable {
    for (std::size_t s = 0; s < B; ++s) {
      const auto dY = cmat(y.grad().data() + s * N * M, N, M);
      if (x.requires_grad()) {
        mmat(x.grad_buffer().data() + s * N * K, N, K).noalias() +=
            dY * cmat(t.values().data() + s * K * M, K, M).transpose();
      }
      if (t.requires_grad()) {
        mmat(t.grad_buffer().data() + s * K * M, K, M).noalias() +=
            cmat(x.values().data() + s * N * K, N, K).transpose() * dY;
      }
    }
  });
  return y;
}

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    shape_error(fmt::format("reshape {} -> {}", shape_string(x.shape()), shape_string(shape)));
  }
  Tensor y = g.make_output(std::move(shape), {&x});
  std::copy(x.values().begin(), x.values().end(), y.mutable_values().begin());
  g.record(y, [x, y]() mutable {
    if (!x.requires_grad()) return;
    auto dx = x.grad_buffer();
    const auto dy = y.grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
  return y;
}

Tensor concat_columns(Graph& g, const Tensor& a, const Tensor& b) {
  expect_rank(a, 2, "concat_columns", "left");
  expect_rank(b, 2, "concat_columns", "right");
  if (a.dim(0) != b.dim(0)) {
    shape_error(fmt::format("concat_columns: {} vs {}", shape_string(a.shape()), shape_string(b.shape())));
  }
  const std::size_t R = a.dim(0), P = a.dim(1), Q = b.dim(1);
  Tensor y = g.make_output({R, P + Q}, {&a, &b});
  auto Y = mmat(y.mutable_values().data(), R, P + Q);
  Y.leftCols(static_cast<Eigen::Index>(P)) = cmat(a.values().data(), R, P);
  Y.rightCols(static_cast<Eigen::Index>(Q)) = cmat(b.values().data(), R, Q);
  g.record(y, [a, b, y, R, P, Q]() mutable {
    const auto dY = cmat(y.grad().data(), R, P + Q);
    if (a.requires_grad()) mmat(a.grad_buffer().data(), R, P) += dY.leftCols(static_cast<Eigen::Index>(P));
    if (b.requires_grad()) mmat(b.grad_buffer().data(), R, Q) += dY.rightCols(static_cast<Eigen::Index>(Q));
  });
  return y;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_error(fmt::format("add: {} vs {}", shape_string(a.shape()), shape_string(b.shape())));
  }
  Tensor y = g.make_output(a.shape(), {&a, &b});
  auto yv = y.mutable_values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = a.values()[i] + b.values()[i];
  g.record(y, [a, b, y]() mutable {
    const auto dy = y.grad();
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto d = t->grad_buffer();
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
  });
  return y;
}

Tensor scale(Graph& g, const Tensor& x, double factor) {
  Tensor y = g.make_output(x.shape(), {&x});
  auto yv = y.mutable_values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = factor * x.values()[i];
  g.record(y, [x, y, factor]() mutable {
    if (!x.requires_grad()) return;
    auto dx = x.grad_buffer();
    const auto dy = y.grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += factor * dy[i];
  });
  return y;
}

Tensor sum(Graph& g, const Tensor& x) {
  Tensor y = g.make_output({}, {&x});
  y.mutable_values()[0] = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  g.record(y, [x, y]() mutable {
    if (!x.requires_grad()) return;
    const double dy = y.grad()[0];
    for (auto& d : x.grad_buffer()) d += dy;
  });
  return y;
}

// ---------------------------------------------------------------------------
// finite differences

double finite_difference_check(const ScalarFn& f, std::span<Tensor> wrt, const FdOptions& options) {
  if (!(options.h > 0)) throw Error(ErrorKind::kInvalidArgument, "finite-difference step must be positive");
  std::vector<bool> old_flags;
  for (auto& t : wrt) {
    old_flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Graph g;
    const Tensor root = f(g);
    if (root.size() != 1) shape_error("finite_difference_check needs a scalar function");
    g.backward(root);
  }
  auto evaluate = [&] {
    Graph g(Graph::Mode::kInference);
    return f(g).item();
  };

  std::mt19937_64 rng(options.seed);
  double worst = 0;
  for (auto& t : wrt) {
    std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                : std::vector<double>(t.size(), 0.0);
    std::vector<std::size_t> coords(t.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
    }
    auto vals = t.mutable_values();
    for (auto i : coords) {
      const double orig = vals[i];
      vals[i] = orig + options.h;
      const double up = evaluate();
      vals[i] = orig - options.h;
      const double down = evaluate();
      vals[i] = orig;
      const double numeric = (up - down) / (2 * options.h);
      const double a = analytic[i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    wrt[i].set_requires_grad(old_flags[i]);
    wrt[i].release_grad();
  }
  return worst;
}

double finite_difference_check(const std::function<Tensor(Graph&, const Tensor&)>& f, const Tensor& x,
                               double h) {
  Tensor probe = x.clone(true);
  std::vector<Tensor> wrt{probe};
  FdOptions options;
  options.h = h;
  return finite_difference_check([&](Graph& g) { return f(g, probe); }, wrt, options);
}

}  // namespace lidarvoice::ad
