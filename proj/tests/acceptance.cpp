// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Arguments select criteria by number (default: all).

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <thread>

#include "lidarvoice/autodiff.hpp"
#include "lidarvoice/error.hpp"
#include "lidarvoice/pipeline.hpp"
#include "lidarvoice/preprocess.hpp"
#include "lidarvoice/synthetic.hpp"
#include "lidarvoice/training.hpp"
#include "lidarvoice/voice.hpp"
#include "phrase_golden.hpp"
#include "support.hpp"

using namespace lidarvoice;
using namespace lidarvoice::testing;
using ad::Graph;
using ad::Tensor;
using Clock = std::chrono::steady_clock;

namespace {

// Point noise for the generalization split. Strong enough that geometry alone
// stays ambiguous between the smaller classes while the image still is not.
constexpr double kGeneralizationSigma = 1.0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failed checks so a criterion reports everything it saw.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& what) { notes_.push_back(what); }
  Outcome outcome() const {
    Outcome o;
    o.pass = failures_.empty();
    std::vector<std::string> parts = failures_;
    parts.insert(parts.end(), notes_.begin(), notes_.end());
    o.detail = fmt::format("{}", fmt::join(parts, "; "));
    return o;
  }

 private:
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---- 1: gradients -------------------------------------------------------------

Tensor rand_tensor(Gen& gen, ad::Shape shape, double lo = -1, double hi = 1) {
  const std::size_t n = ad::shape_size(shape);
  return Tensor(std::move(shape), gen.values(n, lo, hi));
}

Tensor away_from_zero(Gen& gen, ad::Shape shape) {
  Tensor t = rand_tensor(gen, std::move(shape));
  for (auto& v : t.mutable_values()) v += v < 0 ? -0.05 : 0.05;
  return t;
}

Tensor distinct(Gen& gen, ad::Shape shape) {
  const std::size_t n = ad::shape_size(shape);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 0.01 * static_cast<double>(i) + gen.uniform(0, 0.001);
  std::shuffle(v.begin(), v.end(), gen.engine());
  return Tensor(std::move(shape), std::move(v));
}

Tensor project(Graph& g, const Tensor& y, const Tensor& weights) {
  Tensor flat = ad::reshape(g, y, {1, y.size()});
  Tensor w = ad::reshape(g, weights, {weights.size(), 1});
  return ad::sum(g, ad::matmul_bias(g, flat, w, Tensor::zeros({1})));
}

struct OpCase {
  std::string name;
  std::function<ad::ScalarFn(Gen&, std::vector<Tensor>&, std::uint64_t)> build;
};

std::vector<OpCase> op_cases() {
  using ad::Activation;
  std::vector<OpCase> ops;
  ops.push_back({"matmul_bias", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {rand_tensor(gen, {4, 5}), rand_tensor(gen, {5, 3}), rand_tensor(gen, {3})};
                   auto p = std::make_shared<Tensor>(rand_tensor(gen, {12}));
                   return [&in, p](Graph& g) { return project(g, ad::matmul_bias(g, in[0], in[1], in[2]), *p); };
                 }});
  ops.push_back({"matmul_bias+relu", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {rand_tensor(gen, {4, 5}), rand_tensor(gen, {5, 3}), rand_tensor(gen, {3})};
                   auto p = std::make_shared<Tensor>(rand_tensor(gen, {12}));
                   return [&in, p](Graph& g) {
                     return project(g, ad::matmul_bias(g, in[0], in[1], in[2], Activation::kRelu), *p);
                   };
                 }});
  ops.push_back({"relu", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {away_from_zero(gen, {3, 4})};
                   auto p = std::make_shared<Tensor>(rand_tensor(gen, {12}));
                   return [&in, p](Graph& g) { return project(g, ad::relu(g, in[0]), *p); };
                 }});
  ops.push_back({"shared_point_dense", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {rand_tensor(gen, {2, 6, 3}), rand_tensor(gen, {3, 4}), rand_tensor(gen, {4})};
                   auto p = std::make_shared<Tensor>(rand_tensor(gen, {48}));
                   return [&in, p](Graph& g) {
                     return project(g, ad::shared_point_dense(g, in[0], in[1], in[2], Activation::kRelu), *p);
                   };
                 }});
  ops.push_back({"conv2d", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {rand_tensor(gen, {2, 5, 4, 2}), rand_tensor(gen, {3, 3, 2, 3}), rand_tensor(gen, {3})};
                   auto p = std::make_shared<Tensor>(rand_tensor(gen, {120}));
                   return [&in, p](Graph& g) { return project(g, ad::conv2d(g, in[0], in[1], in[2]), *p); };
                 }});
  ops.push_back({"conv2d+relu", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {rand_tensor(gen, {1, 4, 4, 2}), rand_tensor(gen, {3, 3, 2, 2}), rand_tensor(gen, {2})};
                   auto p = std::make_shared<Tensor>(rand_tensor(gen, {32}));
                   return [&in, p](Graph& g) {
                     return project(g, ad::conv2d(g, in[0], in[1], in[2], Activation::kRelu), *p);
                   };
                 }});
  ops.push_back({"maxpool2d", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {distinct(gen, {2, 5, 3, 2})};
                   auto p = std::make_shared<Tensor>(rand_tensor(gen, {24}));
                   return [&in, p](Graph& g) { return project(g, ad::maxpool2d(g, in[0]), *p); };
                 }});
  ops.push_back({"global_max_pool", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {distinct(gen, {2, 7, 3})};
                   auto p = std::make_shared<Tensor>(rand_tensor(gen, {6}));
                   return [&in, p](Graph& g) { return project(g, ad::global_max_pool(g, in[0]), *p); };
                 }});
  ops.push_back({"dropout", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t seed) -> ad::ScalarFn {
                   in = {rand_tensor(gen, {4, 6})};
                   auto p = std::make_shared<Tensor>(rand_tensor(gen, {24}));
                   return [&in, p, seed](Graph& g) { return project(g, ad::dropout(g, in[0], 0.4, true, seed), *p); };
                 }});
  ops.push_back({"weighted_softmax_ce", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {rand_tensor(gen, {5, 4}, -3, 3)};
                   auto t = std::make_shared<std::vector<int>>();
                   for (int i = 0; i < 5; ++i) t->push_back(static_cast<int>(gen.index(0, 3)));
                   return [&in, t](Graph& g) { return ad::weighted_softmax_ce(g, in[0], *t, kDefaultClassWeights); };
                 }});
  ops.push_back({"orthogonality_penalty", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {rand_tensor(gen, {2, 3, 3})};
                   return [&in](Graph& g) { return ad::orthogonality_penalty(g, in[0]); };
                 }});
  ops.push_back({"batched_matmul", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {rand_tensor(gen, {2, 4, 3}), rand_tensor(gen, {2, 3, 3})};
                   auto p = std::make_shared<Tensor>(rand_tensor(gen, {24}));
                   return [&in, p](Graph& g) { return project(g, ad::batched_matmul(g, in[0], in[1]), *p); };
                 }});
  ops.push_back({"concat_columns", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {rand_tensor(gen, {3, 2}), rand_tensor(gen, {3, 4})};
                   auto p = std::make_shared<Tensor>(rand_tensor(gen, {18}));
                   return [&in, p](Graph& g) { return project(g, ad::concat_columns(g, in[0], in[1]), *p); };
                 }});
  ops.push_back({"add+scale", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {rand_tensor(gen, {3, 4}), rand_tensor(gen, {3, 4})};
                   auto p = std::make_shared<Tensor>(rand_tensor(gen, {12}));
                   return [&in, p](Graph& g) { return project(g, ad::scale(g, ad::add(g, in[0], in[1]), -1.7), *p); };
                 }});
  ops.push_back({"reshape+sum", [](Gen& gen, std::vector<Tensor>& in, std::uint64_t) -> ad::ScalarFn {
                   in = {rand_tensor(gen, {2, 3, 2}), rand_tensor(gen, {4, 2})};
                   return [&in](Graph& g) {
                     Tensor r = ad::reshape(g, in[0], {3, 4});
                     return ad::sum(g, ad::matmul_bias(g, r, in[1], Tensor::zeros({2})));
                   };
                 }});
  return ops;
}

Outcome criterion_gradients() {
  Checks c;
  const auto t0 = Clock::now();
  constexpr int kSeeds = 5;
  constexpr double kTol = 1e-4;
  double worst_op = 0;
  for (const auto& op : op_cases()) {
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
      Gen gen(1000 + seed);
      std::vector<Tensor> in;
      const ad::ScalarFn f = op.build(gen, in, seed);
      for (auto& t : in) t = t.clone(true);
      const double err = ad::finite_difference_check(f, in);
      worst_op = std::max(worst_op, err);
      c.expect(err < kTol, fmt::format("{} seed {} rel err {:.3g}", op.name, seed, err));
    }
  }

  double worst_model = 0;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    ModelConfig cfg;
    cfg.mode = FusionMode::kFused;
    cfg.dims = tiny_dims();
    cfg.seed = seed;
    ModelParams p = init_params(cfg);
    Gen gen(seed);
    jitter_params(p, gen);
    std::vector<ProcessedSample> batch;
    for (int i = 0; i < 2; ++i) batch.push_back(random_processed(gen, cfg.dims, static_cast<ClassId>((i + seed) % 4)));
    const BatchInputs in = make_batch(batch);
    std::vector<Tensor> wrt;
    for (const auto& name : p.names()) wrt.push_back(p.at(name));
    const double err = ad::finite_difference_check(
        [&](Graph& g) { return model_forward(g, p, cfg, in.points, in.images, in.targets, true, seed + 11).loss; },
        wrt);
    worst_model = std::max(worst_model, err);
    c.expect(err < kTol, fmt::format("fused model seed {} rel err {:.3g}", seed, err));
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 120, fmt::format("runtime {:.1f}s >= 120s", secs));
  c.note(fmt::format("max rel err ops {:.2e}, model {:.2e}; {:.1f}s", worst_op, worst_model, secs));
  return c.outcome();
}

// ---- 2: permutation invariance ----------------------------------------------

Outcome criterion_permutation() {
  Checks c;
  Gen gen(2);
  ModelConfig cfg;  // full width, 1024 points
  constexpr int kParamDraws = 10, kSetsPerDraw = 10;
  int changed = 0;
  for (int draw = 0; draw < kParamDraws; ++draw) {
    cfg.seed = 500 + static_cast<std::uint64_t>(draw);
    const ModelParams p = init_params(cfg);
    for (int set = 0; set < kSetsPerDraw; ++set) {
      ProcessedSample s = random_processed(gen, cfg.dims, ClassId::kCar);
      ProcessedSample t = s;
      std::vector<Eigen::Index> perm(cfg.dims.num_points);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), gen.engine());
      for (std::size_t i = 0; i < perm.size(); ++i) {
        t.points.coords.row(static_cast<Eigen::Index>(i)) = s.points.coords.row(perm[i]);
      }
      const std::vector<ProcessedSample> pair{s, t};
      const auto logits = predict_logits(p, cfg, pair, 2);
      if (logits[0] != logits[1]) ++changed;
    }
  }
  c.expect(changed == 0, fmt::format("{} of 100 shuffled sets changed a logit", changed));
  c.note(fmt::format("100 sets x {} points", cfg.dims.num_points));
  return c.outcome();
}

// ---- 3: normalization ----------------------------------------------------------

Outcome criterion_normalization() {
  Checks c;
  Gen gen(3);
  double worst_centroid = 0, worst_norm = 0;
  int degenerate = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    PointCloud cloud;
    const bool degenerate_case = trial % 50 == 0;
    if (degenerate_case) {
      cloud.points.assign(gen.index(1, 3000), Eigen::Vector3d(gen.uniform(-80, 80), gen.uniform(-80, 80), 1.0));
    } else {
      cloud = gen.cloud(gen.index(2, 4000));
    }
    const PointCloud sampled = downsample_points(cloud, kNumPoints, static_cast<std::uint64_t>(trial));
    const ProcessedPoints p = normalize_points(sampled, kNumPoints);
    if (degenerate_case) {
      ++degenerate;
      c.expect(p.coords.isZero(0), fmt::format("degenerate cloud {} not all zeros", trial));
      continue;
    }
    for (int axis = 0; axis < 3; ++axis) {
      double mean = 0;
      for (Eigen::Index i = 0; i < p.coords.rows(); ++i) mean += p.coords(i, axis);
      mean /= static_cast<double>(p.coords.rows());
      worst_centroid = std::max(worst_centroid, std::abs(mean));
    }
    double max_norm = 0;
    for (Eigen::Index i = 0; i < p.coords.rows(); ++i) {
      const double x = p.coords(i, 0), y = p.coords(i, 1), z = p.coords(i, 2);
      max_norm = std::max(max_norm, std::sqrt(x * x + y * y + z * z));
    }
    worst_norm = std::max(worst_norm, std::abs(max_norm - 1.0));
  }
  c.expect(worst_centroid <= 1e-6, fmt::format("centroid {:.3g} > 1e-6", worst_centroid));
  c.expect(worst_norm <= 1e-6, fmt::format("|max norm - 1| {:.3g} > 1e-6", worst_norm));
  c.note(fmt::format("1000 clouds ({} degenerate), worst centroid {:.2e}, worst norm dev {:.2e}", degenerate,
                     worst_centroid, worst_norm));
  return c.outcome();
}

// ---- 4: overfit ------------------------------------------------------------------

Outcome criterion_overfit() {
  Checks c;
  const auto t0 = Clock::now();
  SyntheticSpec spec;
  spec.counts = {8, 8, 8, 8};
  spec.seed = 0;
  const auto train = preprocess_all(generate_synthetic_dataset(spec), 0);
  ModelConfig mc;
  FitConfig fc;
  fc.max_epochs = 300;
  // No validation data: the schedule watches the training slice, and the run
  // ends as soon as the target is met.
  FitCallbacks cb;
  cb.should_stop = [](const EpochReport& r) { return r.train_acc == 1.0 && r.train_loss < 0.05; };
  cb.on_epoch = [](const EpochReport& r) { fmt::print(stderr, "  [4] {}\n", format_epoch_report(r)); };
  const FitResult r = fit(train, {}, mc, fc, cb);
  const EpochReport& last = r.reports.back();
  const double secs = seconds_since(t0);
  c.expect(last.train_acc == 1.0, fmt::format("train acc {:.4f}", last.train_acc));
  c.expect(last.train_loss < 0.05, fmt::format("train loss {:.4f}", last.train_loss));
  c.expect(secs < 300, fmt::format("runtime {:.0f}s >= 300s", secs));
  c.note(fmt::format("epoch {}: acc {:.4f}, loss {:.4f}; {:.0f}s", last.epoch, last.train_acc, last.train_loss, secs));
  return c.outcome();
}

// ---- 5: generalization -----------------------------------------------------------

Outcome criterion_generalization() {
  Checks c;
  const auto t0 = Clock::now();
  SyntheticSpec train_spec, val_spec;
  train_spec.counts = {100, 100, 100, 100};
  train_spec.noise_sigma = kGeneralizationSigma;
  train_spec.seed = 0;
  val_spec.counts = {25, 25, 25, 25};
  val_spec.noise_sigma = kGeneralizationSigma;
  val_spec.seed = 1;
  const auto train = preprocess_all(generate_synthetic_dataset(train_spec), 0);
  const auto val = preprocess_all(generate_synthetic_dataset(val_spec), 100000);

  auto run = [&](FusionMode mode) {
    ModelConfig mc;
    mc.mode = mode;
    FitConfig fc;
    fc.evaluate_train = false;
    FitCallbacks cb;
    cb.on_epoch = [mode](const EpochReport& r) {
      fmt::print(stderr, "  [5 {}] {}\n", to_string(mode), format_epoch_report(r));
    };
    const FitResult r = fit(train, val, mc, fc, cb);
    return std::pair{evaluate_metrics(r.best_params, mc, val).accuracy, r.reports.size()};
  };
  const auto [fused_acc, fused_epochs] = run(FusionMode::kFused);
  const auto [lidar_acc, lidar_epochs] = run(FusionMode::kLidarOnly);
  const double secs = seconds_since(t0);
  c.expect(fused_acc >= 0.9, fmt::format("fused val acc {:.2f} < 0.90", fused_acc));
  c.expect(fused_acc > lidar_acc, fmt::format("fused {:.2f} not above lidar_only {:.2f}", fused_acc, lidar_acc));
  c.expect(secs < 1800, fmt::format("runtime {:.0f}s >= 1800s", secs));
  c.note(fmt::format("sigma {}: fused {:.2f} ({} epochs), lidar_only {:.2f} ({} epochs); {:.0f}s",
                     kGeneralizationSigma, fused_acc, fused_epochs, lidar_acc, lidar_epochs, secs));
  return c.outcome();
}

// ---- 6: weighted loss -----------------------------------------------------------

/// Textbook mean cross-entropy with a max shift, no weights.
double plain_cross_entropy(std::span<const double> z, std::span<const int> targets, std::size_t k) {
  double total = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const double* row = z.data() + r * k;
    const double m = *std::max_element(row, row + k);
    double denom = 0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - m);
    total += -((row[targets[r]] - m) - std::log(denom));
  }
  return total / static_cast<double>(targets.size());
}

Outcome criterion_weighted_loss() {
  Checks c;
  Gen gen(6);
  ModelConfig cfg;
  cfg.dims = small_dims();
  const ModelParams p = init_params(cfg);
  double worst = 0;
  int not_bitwise = 0;
  const double ones[kNumClasses] = {1, 1, 1, 1};
  for (int trial = 0; trial < 20; ++trial) {
    // Model logits for a Cyclist-only batch, then raw random logits.
    std::vector<double> z;
    const std::size_t batch = gen.index(1, 8);
    if (trial < 5) {
      std::vector<ProcessedSample> samples;
      for (std::size_t i = 0; i < batch; ++i) samples.push_back(random_processed(gen, cfg.dims, ClassId::kCyclist));
      for (const auto& row : predict_logits(p, cfg, samples)) z.insert(z.end(), row.begin(), row.end());
    } else {
      z = gen.values(batch * kNumClasses, -6, 6);
    }
    const Tensor logits({batch, kNumClasses}, z);
    const std::vector<int> cyclists(batch, static_cast<int>(ClassId::kCyclist));
    Graph g(Graph::Mode::kInference);
    const double weighted = ad::weighted_softmax_ce(g, logits, cyclists, kDefaultClassWeights).item();
    const double unit = ad::weighted_softmax_ce(g, logits, cyclists, ones).item();
    const double plain = plain_cross_entropy(z, cyclists, kNumClasses);
    worst = std::max(worst, std::abs(weighted - 20.0 * plain) / (20.0 * plain));
    if (unit != plain) ++not_bitwise;

    std::vector<int> mixed(batch);
    for (auto& t : mixed) t = static_cast<int>(gen.index(0, 3));
    if (ad::weighted_softmax_ce(g, logits, mixed, ones).item() != plain_cross_entropy(z, mixed, kNumClasses)) {
      ++not_bitwise;
    }
  }
  c.expect(worst < 1e-12, fmt::format("Cyclist-only rel err {:.3g}", worst));
  c.expect(not_bitwise == 0, fmt::format("{} all-ones losses differ from unweighted", not_bitwise));
  c.note(fmt::format("20 batches, max rel err vs 20x {:.2e}", worst));
  return c.outcome();
}

// ---- 7: Adam ----------------------------------------------------------------------

Outcome criterion_adam() {
  Checks c;
  Gen gen(7);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t t = gen.index(1, 10000);
    const ScalarAdam s{gen.uniform(-10, 10), gen.uniform(-2, 2), gen.uniform(0, 4)};
    const double g = gen.uniform(-20, 20);
    const double lr = std::pow(10.0, gen.uniform(-5, -1));
    double theta = s.theta, m = s.m, v = s.v;
    adam_update(std::span(&theta, 1), std::span(&g, 1), std::span(&m, 1), std::span(&v, 1), t, lr);
    const ScalarAdam want = scalar_adam(s, g, t, lr);
    const double rel = std::abs(theta - want.theta) / std::max(std::abs(want.theta), 1e-300);
    worst = std::max(worst, rel);
  }
  c.expect(worst < 1e-12, fmt::format("max rel err {:.3g}", worst));

  double theta = 0.25, m = 0, v = 0;
  const double g = 1.0;
  adam_update(std::span(&theta, 1), std::span(&g, 1), std::span(&m, 1), std::span(&v, 1), 1, 0.0005);
  const double first = std::abs(theta - (0.25 - 0.0005));
  c.expect(first < 1e-9, fmt::format("first step off by {:.3g}", first));
  c.note(fmt::format("100 cases max rel err {:.2e}; first step |err| {:.2e}", worst, first));
  return c.outcome();
}

// ---- 8: schedule replay -----------------------------------------------------------

/// Recorded-style val-loss curve: improving stretches separated by flat ones,
/// with sub-threshold wiggles inside the flat stretches.
std::vector<double> recorded_losses(Gen& gen) {
  std::vector<double> out;
  double level = gen.uniform(1, 3);
  while (out.size() < 80) {
    const std::size_t improve = gen.index(0, 4), flat = gen.index(0, 22);
    for (std::size_t i = 0; i < improve; ++i) out.push_back(level -= gen.uniform(0.001, 0.2));
    for (std::size_t i = 0; i < flat; ++i) out.push_back(level + gen.uniform(-0.9e-4, 0.5));
  }
  return out;
}

Outcome criterion_schedule() {
  Checks c;
  Gen gen(8);
  const FitConfig fc;
  std::size_t halvings = 0, stops = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto losses = recorded_losses(gen);
    PlateauScheduler sched(fc.lr0, fc.plateau_patience, fc.plateau_factor, fc.min_lr, fc.min_delta);
    EarlyStopping stop(fc.early_stop_patience, fc.min_delta);
    // Reference: count epochs since the last real improvement.
    double best = std::numeric_limits<double>::infinity();
    std::size_t since = 0;
    double lr = fc.lr0;
    bool stopped = false;
    for (std::size_t e = 0; e < losses.size() && !stopped; ++e) {
      if (losses[e] < best - fc.min_delta) {
        best = losses[e];
        since = 0;
      } else {
        ++since;
      }
      const bool halve = since > 0 && since % 5 == 0;
      if (halve) {
        lr = std::max(lr * 0.5, fc.min_lr);
        ++halvings;
      }
      const double got = sched.update(losses[e]);
      const bool want_stop = since == 15;
      const bool got_stop = stop.update(losses[e]) == StopDecision::kStop;
      if (got != lr) {
        c.expect(false, fmt::format("trial {} epoch {}: lr {} want {}", trial, e + 1, got, lr));
        break;
      }
      if (got_stop != want_stop) {
        c.expect(false, fmt::format("trial {} epoch {}: stop {} want {}", trial, e + 1, got_stop, want_stop));
        break;
      }
      stopped = want_stop;
      stops += stopped;
    }
  }
  c.expect(halvings > 100 && stops > 100, "replays did not exercise the schedule");
  c.note(fmt::format("200 replays, {} halvings, {} stops", halvings, stops));
  return c.outcome();
}

// ---- 9: round trips ------------------------------------------------------------

Outcome criterion_round_trips() {
  Checks c;
  Gen gen(9);
  for (int trial = 0; trial < 20; ++trial) {
    PointCloud cloud;
    std::vector<double> intensity;
    for (std::size_t i = 0, n = gen.index(0, 5000); i < n; ++i) {
      cloud.points.emplace_back(static_cast<float>(gen.uniform(-80, 80)), static_cast<float>(gen.uniform(-80, 80)),
                                static_cast<float>(gen.uniform(-3, 3)));
      intensity.push_back(static_cast<float>(gen.uniform(0, 1)));
    }
    cloud.intensities = intensity;
    const auto bytes = write_velodyne_bin(cloud);
    const PointCloud back = read_velodyne_bin(std::span<const std::uint8_t>(bytes));
    c.expect(back.points == cloud.points && back.intensities == cloud.intensities,
             fmt::format("velodyne cloud {} changed", trial));
    c.expect(write_velodyne_bin(back) == bytes, fmt::format("velodyne bytes {} changed", trial));
  }

  TempDir dir("acceptance");
  SyntheticSpec spec;
  spec.counts = {5, 5, 5, 5};
  spec.seed = 9;
  write_synthetic_dataset(spec, dir / "synth");
  const Dataset ds = build_dataset(DatasetLayout::under(dir / "synth"), 1000);
  const auto mem = generate_synthetic_dataset(spec);
  bool same = ds.samples.size() == mem.size();
  for (std::size_t i = 0; same && i < mem.size(); ++i) {
    same = ds.samples[i].points.points == mem[i].points.points &&
           ds.samples[i].points.intensities == mem[i].points.intensities &&
           ds.samples[i].image.pixels == mem[i].image.pixels && ds.samples[i].class_id == mem[i].class_id &&
           ds.samples[i].distance_m == mem[i].distance_m;
  }
  c.expect(same, "synthetic write -> ingest differs");

  ModelConfig cfg;
  cfg.dims = small_dims();
  cfg.seed = 99;
  const ModelParams p = init_params(cfg);
  const auto processed = preprocess_all(mem, 1, {cfg.dims.num_points, cfg.dims.image_size});
  const auto ckpt = dir / "model.ckpt";
  save_checkpoint(ckpt, p, cfg);
  const Checkpoint loaded = load_checkpoint(ckpt);
  c.expect(predict_logits(p, cfg, processed) == predict_logits(loaded.params, loaded.config, processed),
           "reloaded checkpoint predicts differently");

  const auto bytes = read_file_bytes(ckpt);
  const std::size_t payload = p.parameter_count() * 8;
  int undetected = 0;
  for (int trial = 0; trial < 25; ++trial) {
    auto bad = bytes;
    bad[bad.size() - payload + gen.index(0, payload - 1)] ^= static_cast<std::uint8_t>(1u << gen.index(0, 7));
    write_file_bytes(dir / "bad.ckpt", bad);
    try {
      load_checkpoint(dir / "bad.ckpt");
      ++undetected;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kCheckpoint) ++undetected;
    }
  }
  c.expect(undetected == 0, fmt::format("{} of 25 payload bit flips went unnoticed", undetected));
  c.note("20 velodyne clouds, 20 synthetic frames, 25 payload bit flips");
  return c.outcome();
}

// ---- 10: phrases ------------------------------------------------------------------

Outcome criterion_phrases() {
  Checks c;
  std::size_t n = 0;
  for (const auto& g : kPhraseGolden) {
    DetectionResult d;
    d.class_id = g.class_id;
    d.confidence = g.confidence;
    if (!std::isnan(g.distance_m)) d.distance_m = g.distance_m;
    const std::string got = format_phrase(d).text;
    c.expect(got == g.expected, fmt::format("got \"{}\" want \"{}\"", got, g.expected));
    ++n;
  }
  DetectionResult exemplar;
  exemplar.class_id = ClassId::kPedestrian;
  exemplar.distance_m = 3.0;
  exemplar.confidence = 0.90;
  c.expect(format_phrase(exemplar).text == "Pedestrian detected, 3 meters away, 90% confidence", "exemplar differs");

  Gen gen(10);
  int spoken = 0;
  for (int i = 0; i < 1000; ++i) {
    DetectionResult d;
    d.class_id = ClassId::kDontCare;
    d.confidence = gen.uniform(0, 1);
    if (gen.coin(0.8)) d.distance_m = gen.uniform(0, 150);
    spoken += !format_phrase(d).suppressed();
  }
  c.expect(spoken == 0, fmt::format("{} DontCare phrases not suppressed", spoken));
  c.note(fmt::format("{} golden cases, 1000 DontCare draws", n));
  return c.outcome();
}

// ---- 11: latency ------------------------------------------------------------------

Outcome criterion_latency() {
  using namespace std::chrono_literals;
  Checks c;
  Gen gen(11);
  for (int i = 0; i < 10000; ++i) {
    std::int64_t s[4];
    for (auto& v : s) v = static_cast<std::int64_t>(gen.index(0, 300));
    const LatencyReport r = latency_report(s[0], s[1], s[2], s[3]);
    const std::int64_t sum = s[0] + s[1] + s[2] + s[3];
    if (r.total_ms != sum || r.over_budget != (sum > 500)) {
      c.expect(false, fmt::format("stages {} {} {} {}: total {} over {}", s[0], s[1], s[2], s[3], r.total_ms,
                                  r.over_budget));
      break;
    }
  }
  c.expect(!latency_report(100, 300, 50, 50).over_budget, "500 ms flagged");
  c.expect(latency_report(100, 300, 50, 51).over_budget, "501 ms not flagged");

  // Frame 1's phrase goes to a speech command that hangs; frame 2 must run
  // right away while the command is still being waited on.
  ModelConfig cfg;
  cfg.dims = small_dims();
  const ModelParams p = init_params(cfg);
  const Sample frame1 = generate_synthetic_sample(ClassId::kCar, 1);
  const Sample frame2 = generate_synthetic_sample(ClassId::kPedestrian, 2);
  ExternalCommandBackend hung("sleep 30", 300ms);
  std::atomic<int> timeouts{0};
  std::atomic<bool> speech_done{false};
  AnnounceDispatcher dispatcher(hung, [&](const VoicePhrase&, AnnounceStatus s) {
    timeouts += s == AnnounceStatus::kTimeout;
    speech_done = true;
  });
  PipelineResult r1 = run_pipeline(frame1, p, cfg, nullptr);
  VoicePhrase phrase = r1.phrase;
  if (phrase.suppressed()) phrase = format_phrase(DetectionResult{ClassId::kCar, 0.9, 4.0, {}});
  const auto t0 = Clock::now();
  dispatcher.submit(phrase);
  const double submit_ms = seconds_since(t0) * 1000;
  const PipelineResult r2 = run_pipeline(frame2, p, cfg, nullptr);
  const double frame2_ms = seconds_since(t0) * 1000;
  const bool frame2_before_timeout = !speech_done;
  dispatcher.drain();
  const double drained_ms = seconds_since(t0) * 1000;
  c.expect(submit_ms < 20, fmt::format("submit blocked {:.1f} ms", submit_ms));
  c.expect(frame2_before_timeout, fmt::format("frame 2 finished only after the speech timeout ({:.0f} ms)", frame2_ms));
  c.expect(r2.latency.total_ms == r2.latency.preprocess_ms + r2.latency.inference_ms + r2.latency.phrase_ms +
                                      r2.latency.tts_ms,
           "pipeline stages do not sum");
  c.expect(timeouts == 1, "hung command did not time out");
  c.expect(drained_ms < 3000, fmt::format("timeout took {:.0f} ms", drained_ms));

  const auto t1 = Clock::now();
  const AnnounceStatus direct = announce(phrase, hung);
  const double direct_ms = seconds_since(t1) * 1000;
  c.expect(direct == AnnounceStatus::kTimeout, fmt::format("direct announce gave {}", to_string(direct)));
  c.note(fmt::format("submit {:.2f} ms, frame 2 done at {:.0f} ms, speech timed out by {:.0f} ms, direct {:.0f} ms",
                     submit_ms, frame2_ms, drained_ms, direct_ms));
  return c.outcome();
}

// ---- 12: DBSCAN ---------------------------------------------------------------------

Outcome criterion_dbscan() {
  Checks c;
  Gen gen(12);
  std::size_t clustered = 0, points = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const PointCloud cloud = dbscan_cloud(gen, 200);
    const auto got = cluster_dbscan(cloud, 0.5, 5);
    const auto want = brute_force_dbscan(cloud, 0.5, 5);
    c.expect(same_partition(got, want), fmt::format("cloud {} ({} points) differs", trial, cloud.size()));
    points += cloud.size();
    clustered += static_cast<std::size_t>(std::count_if(want.begin(), want.end(), [](int l) { return l >= 0; }));
  }
  c.note(fmt::format("50 clouds, {} points, {} clustered", points, clustered));
  return c.outcome();
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator_for_training();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", criterion_gradients},
      {"permutation invariance", criterion_permutation},
      {"normalization invariants", criterion_normalization},
      {"overfit sanity", criterion_overfit},
      {"synthetic generalization", criterion_generalization},
      {"weighted loss exactness", criterion_weighted_loss},
      {"Adam oracle", criterion_adam},
      {"schedule replay", criterion_schedule},
      {"parser round trips", criterion_round_trips},
      {"phrase golden table", criterion_phrases},
      {"latency accounting", criterion_latency},
      {"DBSCAN oracle", criterion_dbscan},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    failed += !o.pass;
    fmt::print("{} {:2d} {}: {}\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
