#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "lidarvoice/kitti_io.hpp"

namespace lidarvoice {

inline constexpr double kDefaultNoiseSigma = 0.02;
inline constexpr std::size_t kSyntheticImageSize = 224;

struct SyntheticSpec {
  std::array<std::size_t, kNumClasses> counts{};
  /// Per-axis Gaussian point noise, meters.
  double noise_sigma = kDefaultNoiseSigma;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One self-contained frame: the scan holds only the object's points, the
/// calibration is the identity and the 2D box covers the whole image.
struct SyntheticFrame {
  PointCloud cloud;
  RgbImage image;
  ObjectLabel label;
  CalibData calib;
};

SyntheticFrame generate_synthetic_frame(ClassId class_id, std::uint64_t seed,
                                        double noise_sigma = kDefaultNoiseSigma);

/// The sample kitti_io would extract from generate_synthetic_frame(...).
Sample generate_synthetic_sample(ClassId class_id, std::uint64_t seed, double noise_sigma = kDefaultNoiseSigma);

/// Class of every frame, in frame order (a seeded shuffle of the per-class blocks).
std::vector<ClassId> synthetic_class_order(const SyntheticSpec& spec);
std::uint64_t synthetic_frame_seed(std::uint64_t dataset_seed, std::size_t index);

std::vector<Sample> generate_synthetic_dataset(const SyntheticSpec& spec);

/// Writes velodyne/, image_2/ (PPM), label_2/ and calib/ under root; returns the class histogram.
std::array<std::size_t, kNumClasses> write_synthetic_dataset(const SyntheticSpec& spec,
                                                             const std::filesystem::path& root);

/// Splits `total` in the 2224:380:75:321 KITTI class proportions (largest remainder).
std::array<std::size_t, kNumClasses> kitti_ratio_counts(std::size_t total);

}  // namespace lidarvoice
