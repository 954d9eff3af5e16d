#pragma once

// Minimal reverse-mode differentiation over dense 64-bit tensors.
//
// A Graph records, in execution order, the backward closure of every op whose
// output depends on a tensor flagged requires_grad. Graph::backward seeds the
// scalar root with 1 and replays the closures in reverse order exactly once,
// accumulating into each input's grad buffer. Leaf gradients accumulate across
// graphs until zero_grad() is called; intermediate gradients are released as
// soon as their producer has run.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lidarvoice::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t size() const { return s_->values.size(); }

  std::span<const double> values() const { return s_->values; }
  std::span<double> mutable_values() { return s_->values; }
  double item() const;

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool flag) { s_->requires_grad = flag; }

  bool has_grad() const { return !s_->grad.empty(); }
  /// Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const { return s_->grad; }
  /// Gradient buffer, allocated (zeroed) on first use.
  std::span<double> grad_buffer() const;
  void zero_grad() const;
  void release_grad() const;

  /// Deep copy of the values; the copy has no gradient and no graph history.
  Tensor clone(bool requires_grad = false) const;
  bool same_storage(const Tensor& other) const noexcept { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

class Graph {
 public:
  enum class Mode { kRecord, kInference };

  explicit Graph(Mode mode = Mode::kRecord) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const noexcept { return mode_ == Mode::kRecord; }

  /// Allocates an op output; it requires grad iff recording and any input does.
  Tensor make_output(Shape shape, std::initializer_list<const Tensor*> inputs);
  void record(const Tensor& output, std::function<void()> backward);

  /// Seeds `root` (one element) with 1 and runs recorded closures in reverse.
  void backward(const Tensor& root);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor output;
    std::function<void()> backward;
  };
  Mode mode_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

// ---- operators ------------------------------------------------------------

/// Optional nonlinearity folded into the affine ops; kRelu gives the same
/// values and gradients as relu() applied to the identity result.
enum class Activation { kIdentity, kRelu };

/// x[B,in] * w[in,out] + b[out]
Tensor matmul_bias(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b,
                   Activation act = Activation::kIdentity);
Tensor relu(Graph& g, const Tensor& x);
/// Shared affine map applied to every point: x[B,N,cin] -> [B,N,cout].
Tensor shared_point_dense(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b,
                          Activation act = Activation::kIdentity);
/// 3x3, stride 1, zero padding 1, cross-correlation. x[B,H,W,cin], k[3,3,cin,cout].
Tensor conv2d(Graph& g, const Tensor& x, const Tensor& k, const Tensor& b, Activation act = Activation::kIdentity);
/// 2x2 / stride 2 max; odd edges behave as if replicated. Ties go to the first element.
Tensor maxpool2d(Graph& g, const Tensor& x);
/// Max over the point axis: x[B,N,c] -> [B,c]. Ties go to the lowest index.
Tensor global_max_pool(Graph& g, const Tensor& x);
/// Inverted dropout; identity when not training or rate == 0.
Tensor dropout(Graph& g, const Tensor& x, double rate, bool training, std::uint64_t seed);
/// Batch mean of weights[t] * -log softmax(logits)[t]; logits[B,K].
Tensor weighted_softmax_ce(Graph& g, const Tensor& logits, std::span<const int> targets,
                           std::span<const double> weights);
/// ||I - A A^T||_F^2 for a[n,n]; batch mean for a[B,n,n].
Tensor orthogonality_penalty(Graph& g, const Tensor& a);

/// Batched product x[B,N,k] * t[B,k,m] -> [B,N,m].
Tensor batched_matmul(Graph& g, const Tensor& x, const Tensor& t);
Tensor reshape(Graph& g, const Tensor& x, Shape shape);
/// Concatenate two rank-2 tensors along columns.
Tensor concat_columns(Graph& g, const Tensor& a, const Tensor& b);
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& x, double factor);
Tensor sum(Graph& g, const Tensor& x);

/// Row-wise softmax with max subtraction; not differentiated.
std::vector<double> softmax_rows(std::span<const double> logits, std::size_t classes);

// ---- verification ---------------------------------------------------------

using ScalarFn = std::function<Tensor(Graph&)>;

struct FdOptions {
  double h = 1e-5;
  /// Coordinates probed per tensor (0 = all); chosen by a seeded shuffle.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

/// Max over probed coordinates of |a - n| / max(1e-8, |a| + |n|), where a is
/// the reverse-mode gradient and n the central difference.
double finite_difference_check(const ScalarFn& f, std::span<Tensor> wrt, const FdOptions& options = {});
double finite_difference_check(const std::function<Tensor(Graph&, const Tensor&)>& f, const Tensor& x,
                               double h = 1e-5);

}  // namespace lidarvoice::ad
