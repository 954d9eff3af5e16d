#include "lidarvoice/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "lidarvoice/error.hpp"

namespace lidarvoice {

using ad::Graph;
using ad::Tensor;

std::string_view to_string(FusionMode mode) noexcept {
  return mode == FusionMode::kFused ? "fused" : "lidar_only";
}

FusionMode fusion_mode_from_string(std::string_view text) {
  if (text == "fused") return FusionMode::kFused;
  if (text == "lidar_only") return FusionMode::kLidarOnly;
  throw Error(ErrorKind::kConfig, fmt::format("unknown model mode '{}' (fused|lidar_only)", text));
}

std::size_t ModelDims::rgb_pooled_side() const {
  std::size_t side = image_size;
  for (std::size_t i = 0; i < rgb_conv.size(); ++i) side = (side + 1) / 2;
  return side;
}

std::size_t ModelDims::rgb_flat_width() const {
  const std::size_t side = rgb_pooled_side();
  return side * side * rgb_conv.back();
}

void ModelConfig::validate() const {
  if (!(dropout_rate >= 0.0) || dropout_rate >= 1.0) {
    throw Error(ErrorKind::kConfig, fmt::format("dropout rate {} outside [0, 1)", dropout_rate));
  }
  if (!(ortho_weight >= 0.0)) throw Error(ErrorKind::kConfig, "ortho_weight must be non-negative");
  if (dims.tnet_point.empty() || dims.tnet_dense.empty() || dims.lidar_point.empty() || dims.rgb_conv.empty() ||
      dims.head_dense.empty() || dims.num_points == 0 || dims.image_size == 0) {
    throw Error(ErrorKind::kConfig, "model dimensions must be non-empty");
  }
}

// ---------------------------------------------------------------------------
// ModelParams

void ModelParams::add(std::string name, Tensor tensor) {
  if (tensors_.count(name)) throw Error(ErrorKind::kInvalidArgument, fmt::format("duplicate parameter '{}'", name));
  names_.push_back(name);
  tensors_.emplace(std::move(name), std::move(tensor));
}

Tensor& ModelParams::at(std::string_view name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error(ErrorKind::kInvalidArgument, fmt::format("no parameter '{}'", name));
  return it->second;
}

const Tensor& ModelParams::at(std::string_view name) const {
  return const_cast<ModelParams*>(this)->at(name);
}

bool ModelParams::contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& name : names_) out.add(name, at(name).clone(at(name).requires_grad()));
  return out;
}

void ModelParams::assign_values(const ModelParams& other) {
  if (other.names_ != names_) throw Error(ErrorKind::kInvalidArgument, "parameter sets differ");
  for (const auto& name : names_) {
    Tensor& dst = at(name);
    const Tensor& src = other.at(name);
    if (dst.shape() != src.shape()) {
      throw Error(ErrorKind::kShape, fmt::format("parameter '{}' shape mismatch", name));
    }
    std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
  }
}

void ModelParams::zero_grad() {
  for (auto& [_, t] : tensors_) t.zero_grad();
}

// ---------------------------------------------------------------------------
// initialization

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor glorot(ad::Shape shape, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    std::vector<double> v(ad::shape_size(shape));
    for (auto& x : v) x = u(rng_);
    return Tensor(std::move(shape), std::move(v), true);
  }

 private:
  std::mt19937_64 rng_;
};

void add_dense(ModelParams& p, Initializer& init, const std::string& name, std::size_t in, std::size_t out) {
  p.add(name + ".w", init.glorot({in, out}, in, out));
  p.add(name + ".b", Tensor::zeros({out}, true));
}

std::string layer(const char* prefix, std::size_t i) { return fmt::format("{}{}", prefix, i + 1); }

}  // namespace

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  const ModelDims& d = config.dims;
  Initializer init(config.seed);
  ModelParams p;

  std::size_t width = 3;
  for (std::size_t i = 0; i < d.tnet_point.size(); ++i) {
    add_dense(p, init, "tnet." + layer("pd", i), width, d.tnet_point[i]);
    width = d.tnet_point[i];
  }
  for (std::size_t i = 0; i < d.tnet_dense.size(); ++i) {
    add_dense(p, init, "tnet." + layer("fc", i), width, d.tnet_dense[i]);
    width = d.tnet_dense[i];
  }
  // Starts as the identity transform.
  p.add("tnet.out.w", Tensor::zeros({width, 9}, true));
  p.add("tnet.out.b", Tensor({9}, {1, 0, 0, 0, 1, 0, 0, 0, 1}, true));

  width = 3;
  for (std::size_t i = 0; i < d.lidar_point.size(); ++i) {
    add_dense(p, init, "lidar." + layer("pd", i), width, d.lidar_point[i]);
    width = d.lidar_point[i];
  }

  std::size_t channels = 3;
  for (std::size_t i = 0; i < d.rgb_conv.size(); ++i) {
    const std::size_t out = d.rgb_conv[i];
    const std::string name = "rgb." + layer("conv", i);
    p.add(name + ".w", init.glorot({3, 3, channels, out}, 9 * channels, 9 * out));
    p.add(name + ".b", Tensor::zeros({out}, true));
    channels = out;
  }
  add_dense(p, init, "rgb.fc", d.rgb_flat_width(), d.rgb_feature);

  width = d.fused_width();
  for (std::size_t i = 0; i < d.head_dense.size(); ++i) {
    add_dense(p, init, "head." + layer("fc", i), width, d.head_dense[i]);
    width = d.head_dense[i];
  }
  add_dense(p, init, "head.out", width, kNumClasses);
  return p;
}

// ---------------------------------------------------------------------------
// forward passes

namespace {

void expect_points(const Tensor& points) {
  if (points.rank() != 3 || points.dim(2) != 3) {
    throw Error(ErrorKind::kShape, fmt::format("points must be [B,N,3], got {}", ad::shape_string(points.shape())));
  }
}

Tensor point_stack(Graph& g, const ModelParams& p, const std::string& prefix, std::size_t layers, Tensor x) {
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string name = prefix + layer("pd", i);
    x = ad::shared_point_dense(g, x, p.at(name + ".w"), p.at(name + ".b"), ad::Activation::kRelu);
  }
  return x;
}

Tensor dense_relu(Graph& g, const ModelParams& p, const std::string& name, const Tensor& x) {
  return ad::matmul_bias(g, x, p.at(name + ".w"), p.at(name + ".b"), ad::Activation::kRelu);
}

std::size_t count_layers(const ModelParams& p, const std::string& prefix) {
  std::size_t n = 0;
  while (p.contains(prefix + layer("", n) + ".w")) ++n;
  return n;
}

}  // namespace

TnetOutput tnet_forward(Graph& g, const ModelParams& params, const Tensor& points) {
  expect_points(points);
  const std::size_t B = points.dim(0);
  Tensor x = point_stack(g, params, "tnet.", count_layers(params, "tnet.pd"), points);
  x = ad::global_max_pool(g, x);
  const std::size_t fc_layers = count_layers(params, "tnet.fc");
  for (std::size_t i = 0; i < fc_layers; ++i) x = dense_relu(g, params, "tnet." + layer("fc", i), x);
  Tensor flat = ad::matmul_bias(g, x, params.at("tnet.out.w"), params.at("tnet.out.b"));
  TnetOutput out;
  out.transform = ad::reshape(g, flat, {B, 3, 3});
  out.penalty = ad::orthogonality_penalty(g, out.transform);
  return out;
}

LidarOutput lidar_branch_forward(Graph& g, const ModelParams& params, const Tensor& points) {
  TnetOutput t = tnet_forward(g, params, points);
  Tensor aligned = ad::batched_matmul(g, points, t.transform);
  Tensor x = point_stack(g, params, "lidar.", count_layers(params, "lidar.pd"), aligned);
  return {ad::global_max_pool(g, x), t.penalty};
}

Tensor rgb_branch_forward(Graph& g, const ModelParams& params, const Tensor& images) {
  if (images.rank() != 4 || images.dim(3) != 3) {
    throw Error(ErrorKind::kShape, fmt::format("images must be [B,H,W,3], got {}", ad::shape_string(images.shape())));
  }
  Tensor x = images;
  const std::size_t convs = count_layers(params, "rgb.conv");
  for (std::size_t i = 0; i < convs; ++i) {
    const std::string name = "rgb." + layer("conv", i);
    x = ad::maxpool2d(g, ad::conv2d(g, x, params.at(name + ".w"), params.at(name + ".b"), ad::Activation::kRelu));
  }
  const std::size_t B = x.dim(0);
  const std::size_t flat = x.size() / B;
  x = ad::reshape(g, x, {B, flat});
  return dense_relu(g, params, "rgb.fc", x);
}

ForwardOutput model_forward(Graph& g, const ModelParams& params, const ModelConfig& config, const Tensor& points,
                            const Tensor& images, std::span<const int> targets, bool training,
                            std::uint64_t dropout_seed, std::span<const double> class_weights) {
  expect_points(points);
  const std::size_t B = points.dim(0);
  if (config.mode == FusionMode::kFused && (images.rank() != 4 || images.dim(0) != B)) {
    throw Error(ErrorKind::kShape, "point and image batch sizes differ");
  }
  if (!targets.empty() && targets.size() != B) throw Error(ErrorKind::kShape, "target count differs from batch size");

  LidarOutput lidar = lidar_branch_forward(g, params, points);
  const std::size_t rgb_width = params.at("rgb.fc.b").size();
  Tensor rgb = config.mode == FusionMode::kFused ? rgb_branch_forward(g, params, images)
                                                 : Tensor::zeros({B, rgb_width});
  Tensor x = ad::concat_columns(g, lidar.feature, rgb);

  const std::size_t head_layers = count_layers(params, "head.fc");
  for (std::size_t i = 0; i < head_layers; ++i) {
    x = dense_relu(g, params, "head." + layer("fc", i), x);
    x = ad::dropout(g, x, config.dropout_rate, training, dropout_seed * 0x9E3779B97F4A7C15ull + i + 1);
  }
  ForwardOutput out;
  out.logits = ad::matmul_bias(g, x, params.at("head.out.w"), params.at("head.out.b"));
  if (!targets.empty()) {
    Tensor ce = ad::weighted_softmax_ce(g, out.logits, targets, class_weights);
    out.loss = ad::add(g, ce, ad::scale(g, lidar.penalty, config.ortho_weight));
  }
  return out;
}

// ---------------------------------------------------------------------------
// batching and inference

BatchInputs make_batch(std::span<const ProcessedSample* const> samples) {
  if (samples.empty()) throw Error(ErrorKind::kEmptyInput, "cannot batch zero samples");
  const std::size_t B = samples.size();
  const std::size_t N = static_cast<std::size_t>(samples[0]->points.coords.rows());
  const std::size_t H = samples[0]->image.height;
  const std::size_t W = samples[0]->image.width;
  std::vector<double> pts(B * N * 3);
  std::vector<double> img(B * H * W * 3);
  BatchInputs out;
  for (std::size_t s = 0; s < B; ++s) {
    const ProcessedSample& smp = *samples[s];
    if (static_cast<std::size_t>(smp.points.coords.rows()) != N || smp.image.height != H || smp.image.width != W) {
      throw Error(ErrorKind::kShape, "samples in a batch must share input shapes");
    }
    std::copy(smp.points.coords.data(), smp.points.coords.data() + N * 3, pts.begin() + static_cast<std::ptrdiff_t>(s * N * 3));
    std::copy(smp.image.data.begin(), smp.image.data.end(), img.begin() + static_cast<std::ptrdiff_t>(s * H * W * 3));
    out.targets.push_back(static_cast<int>(smp.class_id));
  }
  out.points = Tensor({B, N, 3}, std::move(pts));
  out.images = Tensor({B, H, W, 3}, std::move(img));
  return out;
}

BatchInputs make_batch(std::span<const ProcessedSample> samples) {
  std::vector<const ProcessedSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(ptrs);
}

DetectionResult detection_from_logits(std::span<const double> logits) {
  if (logits.size() != kNumClasses) throw Error(ErrorKind::kShape, "detection needs 4 logits");
  const auto p = ad::softmax_rows(logits, kNumClasses);
  DetectionResult r;
  std::size_t best = 0;
  for (std::size_t j = 0; j < kNumClasses; ++j) {
    r.probabilities[j] = p[j];
    if (p[j] > p[best]) best = j;
  }
  r.class_id = static_cast<ClassId>(best);
  r.confidence = p[best];
  return r;
}

std::vector<std::array<double, kNumClasses>> predict_logits(const ModelParams& params, const ModelConfig& config,
                                                            std::span<const ProcessedSample> samples,
                                                            std::size_t batch_size) {
  std::vector<std::array<double, kNumClasses>> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto chunk = samples.subspan(start, std::min(batch_size, samples.size() - start));
    BatchInputs batch = make_batch(chunk);
    Graph g(Graph::Mode::kInference);
    const ForwardOutput f = model_forward(g, params, config, batch.points, batch.images, {}, false);
    const auto z = f.logits.values();
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      std::array<double, kNumClasses> row{};
      std::copy(z.begin() + static_cast<std::ptrdiff_t>(r * kNumClasses),
                z.begin() + static_cast<std::ptrdiff_t>((r + 1) * kNumClasses), row.begin());
      out.push_back(row);
    }
  }
  return out;
}

DetectionResult predict(const ModelParams& params, const ModelConfig& config, const ProcessedSample& sample) {
  const auto logits = predict_logits(params, config, std::span<const ProcessedSample>(&sample, 1));
  DetectionResult r = detection_from_logits(logits[0]);
  if (std::isfinite(sample.distance_m)) r.distance_m = sample.distance_m;
  return r;
}

}  // namespace lidarvoice
