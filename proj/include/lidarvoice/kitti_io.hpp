#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace lidarvoice {

/// Class ids shared by every module. Order follows the loss weight map.
enum class ClassId : int { kCar = 0, kPedestrian = 1, kCyclist = 2, kDontCare = 3 };

inline constexpr int kNumClasses = 4;

std::string_view class_name(ClassId id) noexcept;
/// KITTI type string to class id; anything outside Car/Pedestrian/Cyclist is DontCare.
ClassId class_from_kitti_name(std::string_view name) noexcept;

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  /// Reflectance, same length as points when present.
  std::optional<std::vector<double>> intensities;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
};

struct BBox2d {
  double left = 0, top = 0, right = 0, bottom = 0;
};

struct ObjectLabel {
  std::string kitti_type;  // original type string, e.g. "Van"
  ClassId class_id = ClassId::kDontCare;
  double truncation = 0;
  int occlusion = 0;
  double alpha = 0;
  BBox2d bbox2d;
  /// (h, w, l) in meters.
  Eigen::Vector3d dims = Eigen::Vector3d::Zero();
  /// Bottom-center of the box, camera frame.
  Eigen::Vector3d location = Eigen::Vector3d::Zero();
  double rotation_y = 0;
};

struct CalibData {
  Eigen::Matrix<double, 3, 4> tr_velo_to_cam;
  Eigen::Matrix3d r0_rect;

  static CalibData identity();
  /// velodyne -> rectified camera frame
  Eigen::Vector3d velo_to_cam(const Eigen::Vector3d& p) const;
  Eigen::Vector3d cam_to_velo(const Eigen::Vector3d& p) const;
};

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  bool empty() const noexcept { return width == 0 || height == 0; }
  const std::uint8_t* at(std::size_t x, std::size_t y) const {
    return pixels.data() + (y * width + x) * 3;
  }
  std::uint8_t* at(std::size_t x, std::size_t y) {
    return pixels.data() + (y * width + x) * 3;
  }
};

struct Sample {
  PointCloud points;
  RgbImage image;
  ClassId class_id = ClassId::kDontCare;
  /// Object box center to sensor origin, velodyne frame. NaN when unknown.
  double distance_m = 0;
  std::string frame_id;
};

// ---- velodyne scans -------------------------------------------------------

PointCloud read_velodyne_bin(std::span<const std::byte> bytes);
PointCloud read_velodyne_bin(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_velodyne_bin(const PointCloud& cloud);

// ---- labels and calibration -----------------------------------------------

std::vector<ObjectLabel> parse_label_file(std::string_view text);
/// Inverse of parse_label_file, one KITTI line per label.
std::string format_label_file(std::span<const ObjectLabel> labels);

CalibData parse_calib_file(std::string_view text);
std::string format_calib_file(const CalibData& calib);

// ---- images ---------------------------------------------------------------

enum class ImageFormat { kPpmP6, kPng };

using ImageDecoder = std::function<RgbImage(std::span<const std::uint8_t>)>;

/// Installs a decoder for a format. PPM P6 is built in; PNG needs one.
void register_image_decoder(ImageFormat format, ImageDecoder decoder);
bool has_image_decoder(ImageFormat format);

RgbImage load_image(std::span<const std::uint8_t> bytes, ImageFormat format);
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);

std::optional<ImageFormat> image_format_from_extension(const std::filesystem::path& path);

// ---- object extraction ----------------------------------------------------

struct ExtractOptions {
  /// Relative inflation applied to every box extent.
  double box_margin = 0.10;
  /// Treat label geometry as already expressed in the velodyne frame.
  bool use_calib = true;
};

inline constexpr double kBoxMargin = 0.10;

/// Points of `cloud` inside the (inflated) oriented label box; indices into cloud.
std::vector<std::size_t> points_in_label_box(const PointCloud& cloud, const ObjectLabel& label,
                                             const CalibData& calib,
                                             const ExtractOptions& options = {});

Sample extract_object_sample(const PointCloud& cloud, const RgbImage& image,
                             const ObjectLabel& label, const CalibData& calib,
                             const ExtractOptions& options = {});

RgbImage crop_image(const RgbImage& image, const BBox2d& box);

// ---- dataset directories --------------------------------------------------

struct DatasetLayout {
  std::filesystem::path velodyne_dir;
  std::filesystem::path image_dir;
  std::filesystem::path label_dir;
  std::filesystem::path calib_dir;

  /// KITTI object layout under one root: velodyne/, image_2/, label_2/, calib/.
  static DatasetLayout under(const std::filesystem::path& root);
};

struct Dataset {
  std::vector<Sample> samples;
  std::array<std::size_t, kNumClasses> histogram{};
  std::vector<std::string> warnings;
};

/// Deterministic ingestion: frames in lexicographic stem order, labels in file order.
Dataset build_dataset(const DatasetLayout& layout, std::size_t limit,
                      const ExtractOptions& options = {});

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_text(const std::filesystem::path& path, std::string_view text);

}  // namespace lidarvoice
