#include "lidarvoice/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>

#include <fmt/format.h>

#include "lidarvoice/error.hpp"

namespace lidarvoice {

Rgb class_color(ClassId id) noexcept {
  switch (id) {
    case ClassId::kCar: return {230, 57, 70};
    case ClassId::kPedestrian: return {42, 157, 143};
    case ClassId::kCyclist: return {244, 162, 97};
    case ClassId::kDontCare: return {69, 123, 157};
  }
  return kUnlabeledColor;
}

std::vector<Rgb> color_by_labels(const PointCloud& cloud, std::span<const ObjectLabel> labels, const CalibData& calib,
                                 const ExtractOptions& options) {
  std::vector<Rgb> colors(cloud.size(), kUnlabeledColor);
  std::vector<bool> assigned(cloud.size(), false);
  for (const auto& label : labels) {
    if (!(label.dims[0] > 0 && label.dims[1] > 0 && label.dims[2] > 0)) continue;
    for (auto i : points_in_label_box(cloud, label, calib, options)) {
      if (assigned[i]) continue;
      colors[i] = class_color(label.class_id);
      assigned[i] = true;
    }
  }
  return colors;
}

namespace {

void check_colors(const PointCloud& cloud, std::span<const Rgb> colors) {
  if (colors.size() != cloud.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("{} colors given for {} points", colors.size(), cloud.size()));
  }
}

}  // namespace

std::string export_ply(const PointCloud& cloud, std::span<const Rgb> colors) {
  check_colors(cloud, colors);
  std::string out = fmt::format(
      "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n"
      "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
      cloud.size());
  auto it = std::back_inserter(out);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    fmt::format_to(it, "{} {} {} {} {} {}\n", static_cast<float>(p.x()), static_cast<float>(p.y()),
                   static_cast<float>(p.z()), colors[i][0], colors[i][1], colors[i][2]);
  }
  return out;
}

std::string export_svg(const PointCloud& cloud, std::span<const Rgb> colors, int canvas_px) {
  check_colors(cloud, colors);
  if (canvas_px < 16) throw Error(ErrorKind::kInvalidArgument, "SVG canvas must be at least 16 px");
  constexpr int kMargin = 8;
  const int inner = canvas_px - 2 * kMargin;

  double min_x = -1, max_x = 1, min_y = -1, max_y = 1;
  if (!cloud.empty()) {
    min_x = min_y = std::numeric_limits<double>::infinity();
    max_x = max_y = -std::numeric_limits<double>::infinity();
    for (const auto& p : cloud.points) {
      min_x = std::min(min_x, p.x());
      max_x = std::max(max_x, p.x());
      min_y = std::min(min_y, p.y());
      max_y = std::max(max_y, p.y());
    }
  }
  // Same scale on both axes; forward (+x) points up, left (+y) points left.
  const double span = std::max({max_x - min_x, max_y - min_y, 1e-9});
  const double scale = (inner - 1) / span;

  std::string out = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0}\" height=\"{0}\" "
      "viewBox=\"0 0 {0} {0}\">\n"
      "<rect class=\"axes\" x=\"{1}\" y=\"{1}\" width=\"{2}\" height=\"{2}\" fill=\"white\" stroke=\"black\"/>\n"
      "<text x=\"{1}\" y=\"{3}\" font-size=\"6\">x [{4:.2f}, {5:.2f}] m  y [{6:.2f}, {7:.2f}] m</text>\n",
      canvas_px, kMargin, inner, canvas_px - 1, min_x, max_x, min_y, max_y);
  auto it = std::back_inserter(out);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    const long px = kMargin + std::lround((max_y - p.y()) * scale);
    const long py = kMargin + std::lround((max_x - p.x()) * scale);
    fmt::format_to(it, "<rect class=\"pt\" x=\"{}\" y=\"{}\" width=\"1\" height=\"1\" fill=\"#{:02x}{:02x}{:02x}\"/>\n",
                   px, py, colors[i][0], colors[i][1], colors[i][2]);
  }
  out += "</svg>\n";
  return out;
}

}  // namespace lidarvoice
