#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "lidarvoice/kitti_io.hpp"

namespace lidarvoice {

inline constexpr std::size_t kNumPoints = 1024;
inline constexpr std::size_t kImageSize = 224;
inline constexpr double kDbscanEps = 0.5;
inline constexpr std::size_t kDbscanMinSamples = 5;

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct ProcessedPoints {
  PointMatrix coords;  // N x 3, centered and unit max-norm
  std::size_t source_count = 0;
};

/// Dense H x W x 3 real image, row-major, channel last.
struct ImageTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  double at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * 3 + c]; }
};

struct ProcessedSample {
  ProcessedPoints points;
  ImageTensor image;  // values in [0, 1]
  ClassId class_id = ClassId::kDontCare;
  double distance_m = 0;
};

/// Drops points whose centroid distance exceeds mean + 2 population std.
PointCloud remove_statistical_outliers(const PointCloud& cloud);

/// Density clustering; -1 marks noise. Neighborhoods are inclusive and count the point itself.
std::vector<int> cluster_dbscan(const PointCloud& cloud, double eps, std::size_t min_samples);

/// Fixed-size resampling: without replacement when shrinking, topped up with replacement when growing.
PointCloud downsample_points(const PointCloud& cloud, std::size_t target, std::uint64_t seed);

ProcessedPoints normalize_points(const PointCloud& cloud, std::size_t expected_points = kNumPoints);

/// Bilinear resize with pixel-center alignment, output in source units (0..255).
ImageTensor resize_bilinear(const RgbImage& image, std::size_t out_w, std::size_t out_h);

/// Min-max scaling of the whole tensor to [0, 1]; constant inputs map to zeros.
ImageTensor scale_unit_range(ImageTensor image);

struct PreprocessOptions {
  std::size_t target_points = kNumPoints;
  std::size_t image_size = kImageSize;
};

ProcessedSample preprocess_sample(const Sample& sample, std::uint64_t seed,
                                  const PreprocessOptions& options = {});

/// Per-sample seeds are global_seed + index.
std::vector<ProcessedSample> preprocess_all(const std::vector<Sample>& samples, std::uint64_t global_seed,
                                            const PreprocessOptions& options = {});

}  // namespace lidarvoice
