#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lidarvoice/model.hpp"

namespace lidarvoice {

struct FitConfig {
  double lr0 = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t max_epochs = 50;
  std::size_t early_stop_patience = 15;
  std::size_t plateau_patience = 5;
  double plateau_factor = 0.5;
  double min_lr = 1e-6;
  /// Absolute val-loss decrease that counts as an improvement.
  double min_delta = 1e-4;
  std::array<double, kNumClasses> class_weights = kDefaultClassWeights;
  /// Global-norm clipping; 0 disables.
  double grad_clip_norm = 0;
  /// Re-evaluate the training slice in inference mode after every epoch for
  /// the reported train metrics. Off: report the optimization-pass means.
  /// Either way the parameter trajectory is the same.
  bool evaluate_train = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  std::map<std::string, std::vector<double>, std::less<>> m;
  std::map<std::string, std::vector<double>, std::less<>> v;
  std::uint64_t t = 0;
  double lr = 0.0005;
};

/// Increments state.t, then applies one bias-corrected Adam update at
/// state.lr to every parameter holding a gradient.
void adam_step(ModelParams& params, OptimizerState& state, const AdamHyper& hyper = {});

/// Adam on a flat vector at step t (t >= 1); the building block of adam_step.
void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t t, double lr, const AdamHyper& hyper = {});

/// Shared "has val loss improved" bookkeeping.
class ImprovementTracker {
 public:
  explicit ImprovementTracker(double min_delta = 1e-4) : min_delta_(min_delta) {}
  /// Returns true when `loss` beats the best so far by more than min_delta.
  bool observe(double loss);
  double best() const noexcept { return best_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  std::size_t epochs_seen() const noexcept { return epochs_; }

 private:
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t epochs_ = 0;
};

/// Halves the learning rate after `patience` epochs without improvement.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr0, std::size_t patience, double factor, double min_lr, double min_delta);
  double update(double val_loss);
  double lr() const noexcept { return lr_; }

 private:
  ImprovementTracker tracker_;
  std::size_t patience_;
  double factor_;
  double min_lr_;
  double lr_;
  std::size_t wait_ = 0;
};

enum class StopDecision { kContinue, kStop };

class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta);
  StopDecision update(double val_loss);
  std::size_t best_epoch() const noexcept { return tracker_.best_epoch(); }
  bool last_improved() const noexcept { return last_improved_; }

 private:
  ImprovementTracker tracker_;
  std::size_t patience_;
  std::size_t wait_ = 0;
  bool last_improved_ = false;
};

struct EpochReport {
  std::size_t epoch = 0;
  /// Inference mode over the training slice, or the dropout-active pass
  /// means when FitConfig::evaluate_train is off.
  double train_acc = 0;
  double train_loss = 0;
  /// Inference mode; the training slice stands in when there is no validation data.
  double val_acc = 0;
  double val_loss = 0;
  /// Learning rate used during this epoch.
  double lr = 0;
  double wall_ms = 0;
};

/// "epoch=3 train_acc=... " single line.
std::string format_epoch_report(const EpochReport& r);

struct ClassMetrics {
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};
  std::array<double, kNumClasses> precision{};
  std::array<double, kNumClasses> recall{};
  std::array<double, kNumClasses> f1{};
  std::array<std::size_t, kNumClasses> support{};
  double accuracy = 0;
  double mean_loss = 0;
  std::size_t count = 0;
};

/// Precision/recall/F1, support and accuracy from a confusion matrix (rows = truth).
ClassMetrics metrics_from_confusion(const std::array<std::array<std::size_t, kNumClasses>, kNumClasses>& confusion);

struct EpochStats {
  double loss = 0;
  double accuracy = 0;
  std::size_t batches = 0;
};

/// One optimization pass: shuffle with seed + epoch, batch, forward, backward, Adam.
EpochStats train_epoch(ModelParams& params, OptimizerState& state, std::span<const ProcessedSample> data,
                       const ModelConfig& model_config, const FitConfig& fit_config, std::size_t epoch);

/// Inference-mode predictions, loss and per-class metrics.
ClassMetrics evaluate_metrics(const ModelParams& params, const ModelConfig& model_config,
                              std::span<const ProcessedSample> data,
                              std::span<const double> class_weights = kDefaultClassWeights,
                              std::size_t batch_size = 8);

struct FitResult {
  ModelParams best_params;
  std::vector<EpochReport> reports;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

struct FitCallbacks {
  std::function<void(const EpochReport&)> on_epoch;
  /// Called with the params each time val loss improves.
  std::function<void(const ModelParams&, const EpochReport&)> on_improvement;
  /// Optional extra stopping rule, checked after the schedule updates.
  std::function<bool(const EpochReport&)> should_stop;
};

FitResult fit(std::span<const ProcessedSample> train, std::span<const ProcessedSample> val,
              const ModelConfig& model_config, const FitConfig& fit_config, const FitCallbacks& callbacks = {});

/// Seeded split; `val_fraction` of indices go to validation.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
SplitIndices split_train_val(std::size_t count, double val_fraction, std::uint64_t seed);

/// Process-wide allocator tuning (glibc only, no-op elsewhere): keeps large
/// freed blocks for reuse instead of unmapping them, which saves page faults
/// on the per-batch activation buffers. Call once at startup.
void tune_allocator_for_training();

}  // namespace lidarvoice
