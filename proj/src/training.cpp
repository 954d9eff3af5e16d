#include "lidarvoice/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include <fmt/format.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "lidarvoice/error.hpp"

namespace lidarvoice {

void FitConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::kConfig, what);
  };
  require(lr0 > 0, "lr0 must be positive");
  require(beta1 > 0 && beta1 < 1, "beta1 must lie in (0, 1)");
  require(beta2 > 0 && beta2 < 1, "beta2 must lie in (0, 1)");
  require(eps > 0, "eps must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(max_epochs > 0, "max_epochs must be positive");
  require(early_stop_patience > 0, "early_stop_patience must be positive");
  require(plateau_patience > 0, "plateau_patience must be positive");
  require(plateau_factor > 0 && plateau_factor < 1, "plateau_factor must lie in (0, 1)");
  require(min_lr > 0, "min_lr must be positive");
  require(min_delta >= 0, "min_delta must be non-negative");
  require(grad_clip_norm >= 0, "grad_clip_norm must be non-negative");
  for (double w : class_weights) require(w > 0, "class weights must be positive");
}

// ---------------------------------------------------------------------------
// Adam

void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t t, double lr, const AdamHyper& hyper) {
  if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size()) {
    throw Error(ErrorKind::kShape, "adam: parameter, gradient and moment sizes differ");
  }
  if (t == 0) throw Error(ErrorKind::kInvalidArgument, "adam step count starts at 1");
  const double b1 = hyper.beta1;
  const double b2 = hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    theta[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

void adam_step(ModelParams& params, OptimizerState& state, const AdamHyper& hyper) {
  ++state.t;
  for (const auto& name : params.names()) {
    ad::Tensor& p = params.at(name);
    if (!p.has_grad()) continue;
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    adam_update(p.mutable_values(), p.grad(), m, v, state.t, state.lr, hyper);
  }
}

// ---------------------------------------------------------------------------
// schedule controllers

bool ImprovementTracker::observe(double loss) {
  ++epochs_;
  if (loss < best_ - min_delta_) {
    best_ = loss;
    best_epoch_ = epochs_;
    return true;
  }
  return false;
}

PlateauScheduler::PlateauScheduler(double lr0, std::size_t patience, double factor, double min_lr, double min_delta)
    : tracker_(min_delta), patience_(patience), factor_(factor), min_lr_(min_lr), lr_(lr0) {}

double PlateauScheduler::update(double val_loss) {
  if (tracker_.observe(val_loss)) {
    wait_ = 0;
  } else if (++wait_ >= patience_) {
    lr_ = std::max(lr_ * factor_, min_lr_);
    wait_ = 0;
  }
  return lr_;
}

EarlyStopping::EarlyStopping(std::size_t patience, double min_delta) : tracker_(min_delta), patience_(patience) {}

StopDecision EarlyStopping::update(double val_loss) {
  last_improved_ = tracker_.observe(val_loss);
  if (last_improved_) {
    wait_ = 0;
    return StopDecision::kContinue;
  }
  return ++wait_ >= patience_ ? StopDecision::kStop : StopDecision::kContinue;
}

std::string format_epoch_report(const EpochReport& r) {
  return fmt::format(
      "epoch={} train_acc={:.6f} train_loss={:.6f} val_acc={:.6f} val_loss={:.6f} lr={:.8g} wall_ms={:.1f}", r.epoch,
      r.train_acc, r.train_loss, r.val_acc, r.val_loss, r.lr, r.wall_ms);
}

// ---------------------------------------------------------------------------
// metrics

ClassMetrics metrics_from_confusion(const std::array<std::array<std::size_t, kNumClasses>, kNumClasses>& confusion) {
  ClassMetrics m;
  m.confusion = confusion;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      m.support[i] += confusion[i][j];
      m.count += confusion[i][j];
    }
    correct += confusion[i][i];
  }
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    std::size_t predicted = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) predicted += confusion[i][k];
    const double tp = static_cast<double>(confusion[k][k]);
    m.precision[k] = predicted == 0 ? 0.0 : tp / static_cast<double>(predicted);
    m.recall[k] = m.support[k] == 0 ? 0.0 : tp / static_cast<double>(m.support[k]);
    const double pr = m.precision[k] + m.recall[k];
    m.f1[k] = pr > 0 ? 2 * m.precision[k] * m.recall[k] / pr : 0.0;
  }
  m.accuracy = m.count == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(m.count);
  return m;
}

namespace {

std::size_t argmax_row(std::span<const double> z) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < z.size(); ++j)
    if (z[j] > z[best]) best = j;
  return best;
}

void clip_gradients(ModelParams& params, double max_norm) {
  double sq = 0;
  for (const auto& name : params.names()) {
    for (double g : params.at(name).grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0) return;
  const double s = max_norm / norm;
  for (const auto& name : params.names()) {
    ad::Tensor& p = params.at(name);
    if (!p.has_grad()) continue;
    for (double& g : p.grad_buffer()) g *= s;
  }
}

}  // namespace

EpochStats train_epoch(ModelParams& params, OptimizerState& state, std::span<const ProcessedSample> data,
                       const ModelConfig& model_config, const FitConfig& fit_config, std::size_t epoch) {
  if (data.empty()) throw Error(ErrorKind::kEmptyDataset, "training slice is empty");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(fit_config.seed + epoch);
  std::shuffle(order.begin(), order.end(), rng);

  EpochStats stats;
  double loss_sum = 0;
  std::size_t correct = 0;
  std::vector<const ProcessedSample*> batch_ptrs;
  for (std::size_t start = 0; start < order.size(); start += fit_config.batch_size) {
    const std::size_t end = std::min(start + fit_config.batch_size, order.size());
    batch_ptrs.clear();
    for (std::size_t i = start; i < end; ++i) batch_ptrs.push_back(&data[order[i]]);
    BatchInputs batch = make_batch(batch_ptrs);

    params.zero_grad();
    const std::uint64_t dropout_seed = (fit_config.seed + epoch) * 1000003ull + stats.batches;
    double batch_loss = 0;
    {
      ad::Graph g;
      ForwardOutput out = model_forward(g, params, model_config, batch.points, batch.images, batch.targets, true,
                                        dropout_seed, fit_config.class_weights);
      batch_loss = out.loss.item();
      const auto z = out.logits.values();
      for (std::size_t r = 0; r < batch.targets.size(); ++r) {
        if (static_cast<int>(argmax_row(z.subspan(r * kNumClasses, kNumClasses))) == batch.targets[r]) ++correct;
      }
      g.backward(out.loss);
    }
    if (fit_config.grad_clip_norm > 0) clip_gradients(params, fit_config.grad_clip_norm);
    adam_step(params, state, {fit_config.beta1, fit_config.beta2, fit_config.eps});
    loss_sum += batch_loss * static_cast<double>(end - start);
    ++stats.batches;
  }
  stats.loss = loss_sum / static_cast<double>(data.size());
  stats.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return stats;
}

ClassMetrics evaluate_metrics(const ModelParams& params, const ModelConfig& model_config,
                              std::span<const ProcessedSample> data, std::span<const double> class_weights,
                              std::size_t batch_size) {
  if (data.empty()) throw Error(ErrorKind::kEmptyDataset, "evaluation slice is empty");
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};
  double loss_sum = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const auto chunk = data.subspan(start, std::min(batch_size, data.size() - start));
    BatchInputs batch = make_batch(chunk);
    ad::Graph g(ad::Graph::Mode::kInference);
    ForwardOutput out = model_forward(g, params, model_config, batch.points, batch.images, batch.targets, false, 0,
                                      class_weights);
    loss_sum += out.loss.item() * static_cast<double>(chunk.size());
    const auto z = out.logits.values();
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      const std::size_t pred = argmax_row(z.subspan(r * kNumClasses, kNumClasses));
      ++confusion[static_cast<std::size_t>(batch.targets[r])][pred];
    }
  }
  ClassMetrics m = metrics_from_confusion(confusion);
  m.mean_loss = loss_sum / static_cast<double>(data.size());
  return m;
}

FitResult fit(std::span<const ProcessedSample> train, std::span<const ProcessedSample> val,
              const ModelConfig& model_config, const FitConfig& fit_config, const FitCallbacks& callbacks) {
  fit_config.validate();
  model_config.validate();
  if (train.empty()) throw Error(ErrorKind::kEmptyDataset, "training slice is empty");

  ModelParams params = init_params(model_config);
  OptimizerState state;
  state.lr = fit_config.lr0;
  PlateauScheduler plateau(fit_config.lr0, fit_config.plateau_patience, fit_config.plateau_factor,
                           fit_config.min_lr, fit_config.min_delta);
  EarlyStopping stopper(fit_config.early_stop_patience, fit_config.min_delta);

  FitResult result;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= fit_config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochReport r;
    r.epoch = epoch;
    r.lr = state.lr;
    const EpochStats stats = train_epoch(params, state, train, model_config, fit_config, epoch);
    r.train_acc = stats.accuracy;
    r.train_loss = stats.loss;
    std::optional<ClassMetrics> train_metrics;
    if (fit_config.evaluate_train || val.empty()) {
      train_metrics = evaluate_metrics(params, model_config, train, fit_config.class_weights, fit_config.batch_size);
      if (fit_config.evaluate_train) {
        r.train_acc = train_metrics->accuracy;
        r.train_loss = train_metrics->mean_loss;
      }
    }
    // Without validation data the training slice is monitored.
    const ClassMetrics vm = val.empty() ? *train_metrics
                                        : evaluate_metrics(params, model_config, val, fit_config.class_weights,
                                                           fit_config.batch_size);
    r.val_acc = vm.accuracy;
    r.val_loss = vm.mean_loss;
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    state.lr = plateau.update(r.val_loss);
    const StopDecision decision = stopper.update(r.val_loss);
    if (stopper.last_improved()) {
      if (!have_best) {
        result.best_params = params.clone();
        have_best = true;
      } else {
        result.best_params.assign_values(params);
      }
      result.best_epoch = epoch;
      if (callbacks.on_improvement) callbacks.on_improvement(params, r);
    }
    result.reports.push_back(r);
    if (callbacks.on_epoch) callbacks.on_epoch(r);
    if (decision == StopDecision::kStop) {
      result.early_stopped = true;
      break;
    }
    if (callbacks.should_stop && callbacks.should_stop(r)) break;
  }
  if (!have_best) result.best_params = std::move(params);
  return result;
}

SplitIndices split_train_val(std::size_t count, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0) || val_fraction >= 1) {
    throw Error(ErrorKind::kConfig, "validation fraction must lie in [0, 1)");
  }
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(count)));
  SplitIndices s;
  s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

void tune_allocator_for_training() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace lidarvoice
