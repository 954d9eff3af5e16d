#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lidarvoice/autodiff.hpp"
#include "lidarvoice/kitti_io.hpp"
#include "lidarvoice/preprocess.hpp"

namespace lidarvoice {

enum class FusionMode { kFused, kLidarOnly };

std::string_view to_string(FusionMode mode) noexcept;
FusionMode fusion_mode_from_string(std::string_view text);

/// Layer widths. The defaults are the full-size network; tests shrink them
/// while keeping the topology.
struct ModelDims {
  std::size_t num_points = kNumPoints;
  std::size_t image_size = kImageSize;
  std::vector<std::size_t> tnet_point{64, 128, 1024};
  std::vector<std::size_t> tnet_dense{512, 256};
  std::vector<std::size_t> lidar_point{64, 64, 128, 1024};
  std::vector<std::size_t> rgb_conv{32, 64, 128};
  std::size_t rgb_feature = 512;
  std::vector<std::size_t> head_dense{512, 256};

  std::size_t lidar_feature() const { return lidar_point.back(); }
  std::size_t fused_width() const { return lidar_feature() + rgb_feature; }
  /// Spatial side after the three 2x2 pools.
  std::size_t rgb_pooled_side() const;
  std::size_t rgb_flat_width() const;

  bool operator==(const ModelDims&) const = default;
};

struct ModelConfig {
  double dropout_rate = 0.4;
  double ortho_weight = 0.001;
  FusionMode mode = FusionMode::kFused;
  std::uint64_t seed = 0;
  ModelDims dims;

  void validate() const;
};

inline constexpr std::array<double, kNumClasses> kDefaultClassWeights{1.0, 5.0, 20.0, 5.0};

/// Named trainable tensors, kept in creation order.
class ModelParams {
 public:
  void add(std::string name, ad::Tensor tensor);
  ad::Tensor& at(std::string_view name);
  const ad::Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  std::size_t parameter_count() const;

  /// Deep copy of every tensor's values.
  ModelParams clone() const;
  /// Copies values from `other`, which must have identical names and shapes.
  void assign_values(const ModelParams& other);
  void zero_grad();

 private:
  std::vector<std::string> names_;
  std::map<std::string, ad::Tensor, std::less<>> tensors_;
};

ModelParams init_params(const ModelConfig& config);

struct TnetOutput {
  ad::Tensor transform;  // [B,3,3]
  ad::Tensor penalty;    // scalar
};

struct LidarOutput {
  ad::Tensor feature;  // [B, lidar_feature]
  ad::Tensor penalty;
};

struct ForwardOutput {
  ad::Tensor logits;  // [B,4]
  ad::Tensor loss;    // undefined when no targets were given
};

TnetOutput tnet_forward(ad::Graph& g, const ModelParams& params, const ad::Tensor& points);
LidarOutput lidar_branch_forward(ad::Graph& g, const ModelParams& params, const ad::Tensor& points);
ad::Tensor rgb_branch_forward(ad::Graph& g, const ModelParams& params, const ad::Tensor& images);

ForwardOutput model_forward(ad::Graph& g, const ModelParams& params, const ModelConfig& config,
                            const ad::Tensor& points, const ad::Tensor& images,
                            std::span<const int> targets, bool training,
                            std::uint64_t dropout_seed = 0,
                            std::span<const double> class_weights = kDefaultClassWeights);

/// Stacks samples into network inputs: points [B,N,3], images [B,S,S,3].
struct BatchInputs {
  ad::Tensor points;
  ad::Tensor images;
  std::vector<int> targets;
};
BatchInputs make_batch(std::span<const ProcessedSample* const> samples);
BatchInputs make_batch(std::span<const ProcessedSample> samples);

struct DetectionResult {
  ClassId class_id = ClassId::kDontCare;
  double confidence = 0;
  std::optional<double> distance_m;
  std::array<double, kNumClasses> probabilities{};
};

/// Argmax with lowest-index tie break over a 4-way softmax.
DetectionResult detection_from_logits(std::span<const double> logits);
DetectionResult predict(const ModelParams& params, const ModelConfig& config, const ProcessedSample& sample);
/// Inference-mode logits for many samples, batched internally.
std::vector<std::array<double, kNumClasses>> predict_logits(const ModelParams& params, const ModelConfig& config,
                                                            std::span<const ProcessedSample> samples,
                                                            std::size_t batch_size = 8);

// ---- checkpoints ----------------------------------------------------------

struct Checkpoint {
  ModelParams params;
  ModelConfig config;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const ModelConfig& config);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lidarvoice
