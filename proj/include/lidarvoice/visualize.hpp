#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lidarvoice/kitti_io.hpp"

namespace lidarvoice {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kUnlabeledColor{128, 128, 128};
Rgb class_color(ClassId id) noexcept;

/// Per-point colors: the class color of the first label box containing the
/// point, gray otherwise.
std::vector<Rgb> color_by_labels(const PointCloud& cloud, std::span<const ObjectLabel> labels, const CalibData& calib,
                                 const ExtractOptions& options = {});

/// ASCII PLY with x y z (float) and red green blue (uchar) per vertex.
std::string export_ply(const PointCloud& cloud, std::span<const Rgb> colors);

/// Top-down (x/y) orthographic scatter: one 1x1 rect per point inside an axis box.
std::string export_svg(const PointCloud& cloud, std::span<const Rgb> colors, int canvas_px = 512);

}  // namespace lidarvoice
