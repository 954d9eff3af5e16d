#include "lidarvoice/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "lidarvoice/error.hpp"

namespace lidarvoice {

namespace fs = std::filesystem;

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Every label uses the same region box (h, w, l), large enough for any
// class, so the crop itself carries no class information. The object's local
// frame has x along l, y along h (down) and z along w.
const Eigen::Vector3d kRegionDims{3.0, 3.0, 4.0};

std::string_view kitti_type(ClassId id) {
  switch (id) {
    case ClassId::kCar: return "Car";
    case ClassId::kPedestrian: return "Pedestrian";
    case ClassId::kCyclist: return "Cyclist";
    case ClassId::kDontCare: return "DontCare";
  }
  return "DontCare";
}

Eigen::Vector3d sphere_direction(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Eigen::Vector3d v(n(rng), n(rng), n(rng));
    const double len = v.norm();
    if (len > 1e-12) return v / len;
  }
}

Eigen::Vector3d box_shell_point(Rng& rng, double l, double h, double w) {
  // Face pairs chosen by area.
  const double a_x = h * w, a_y = l * w, a_z = l * h;
  const double pick = uniform(rng, 0.0, a_x + a_y + a_z);
  const double sign = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  Eigen::Vector3d p(uniform(rng, -l / 2, l / 2), uniform(rng, -h / 2, h / 2), uniform(rng, -w / 2, w / 2));
  if (pick < a_x) {
    p.x() = sign * l / 2;
  } else if (pick < a_x + a_y) {
    p.y() = sign * h / 2;
  } else {
    p.z() = sign * w / 2;
  }
  return p;
}

Eigen::Vector3d ellipsoid_point(Rng& rng) {
  const Eigen::Vector3d d = sphere_direction(rng);
  return {0.25 * d.x(), 0.85 * d.y(), 0.25 * d.z()};
}

Eigen::Vector3d wheel_point(Rng& rng) {
  const double theta = uniform(rng, 0.0, 2 * std::numbers::pi);
  const double cx = uniform(rng, 0.0, 1.0) < 0.5 ? -0.5 : 0.5;
  return {cx + 0.35 * std::cos(theta), 0.5 + 0.35 * std::sin(theta), 0.0};
}

Eigen::Vector3d local_point(ClassId id, Rng& rng) {
  switch (id) {
    case ClassId::kCar: return box_shell_point(rng, 4.0, 1.5, 1.7);
    case ClassId::kPedestrian: return ellipsoid_point(rng);
    case ClassId::kCyclist: return uniform(rng, 0.0, 1.0) < 0.6 ? ellipsoid_point(rng) : wheel_point(rng);
    case ClassId::kDontCare:
      return {uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5)};
  }
  return Eigen::Vector3d::Zero();
}

double to_float_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

// ---- painting ---------------------------------------------------------------

struct Color {
  std::uint8_t r, g, b;
};

Color random_color(Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  return {static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng))};
}

void put(RgbImage& img, long x, long y, Color c) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) return;
  std::uint8_t* px = img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
  px[0] = c.r;
  px[1] = c.g;
  px[2] = c.b;
}

void fill_rect(RgbImage& img, double cx, double cy, double hw, double hh, Color c) {
  for (long y = std::lround(cy - hh); y <= std::lround(cy + hh); ++y)
    for (long x = std::lround(cx - hw); x <= std::lround(cx + hw); ++x) put(img, x, y, c);
}

void fill_ellipse(RgbImage& img, double cx, double cy, double rx, double ry, Color c) {
  for (long y = std::lround(cy - ry); y <= std::lround(cy + ry); ++y) {
    for (long x = std::lround(cx - rx); x <= std::lround(cx + rx); ++x) {
      const double u = (static_cast<double>(x) - cx) / rx;
      const double v = (static_cast<double>(y) - cy) / ry;
      if (u * u + v * v <= 1.0) put(img, x, y, c);
    }
  }
}

void ring(RgbImage& img, double cx, double cy, double r, double thickness, Color c) {
  for (long y = std::lround(cy - r - thickness); y <= std::lround(cy + r + thickness); ++y) {
    for (long x = std::lround(cx - r - thickness); x <= std::lround(cx + r + thickness); ++x) {
      const double d = std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy);
      if (std::abs(d - r) <= thickness) put(img, x, y, c);
    }
  }
}

RgbImage paint_silhouette(ClassId id, Rng& rng) {
  const std::size_t n = kSyntheticImageSize;
  RgbImage img;
  img.width = img.height = n;
  img.pixels.resize(n * n * 3);

  // Dark-on-light or light-on-dark, so the shape always stands out.
  const bool light_bg = uniform(rng, 0.0, 1.0) < 0.5;
  const Color bg = light_bg ? random_color(rng, 150, 255) : random_color(rng, 0, 90);
  const Color fg = light_bg ? random_color(rng, 0, 90) : random_color(rng, 150, 255);
  for (std::size_t i = 0; i < n * n; ++i) {
    img.pixels[i * 3] = bg.r;
    img.pixels[i * 3 + 1] = bg.g;
    img.pixels[i * 3 + 2] = bg.b;
  }
  const double cx = 112 + uniform(rng, -20, 20);
  const double cy = 112 + uniform(rng, -20, 20);
  const double s = uniform(rng, 0.8, 1.2);
  switch (id) {
    case ClassId::kCar:
      fill_rect(img, cx, cy, 70 * s, 30 * s, fg);
      break;
    case ClassId::kPedestrian:
      fill_ellipse(img, cx, cy, 22 * s, 80 * s, fg);
      break;
    case ClassId::kCyclist:
      fill_ellipse(img, cx, cy - 25 * s, 18 * s, 50 * s, fg);
      ring(img, cx - 40 * s, cy + 45 * s, 28 * s, 5 * s, fg);
      ring(img, cx + 40 * s, cy + 45 * s, 28 * s, 5 * s, fg);
      break;
    case ClassId::kDontCare: {
      std::uniform_int_distribution<int> byte(0, 255);
      const long half = std::lround(60 * s);
      for (long y = std::lround(cy) - half; y <= std::lround(cy) + half; ++y) {
        for (long x = std::lround(cx) - half; x <= std::lround(cx) + half; ++x) {
          put(img, x, y,
              {static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
               static_cast<std::uint8_t>(byte(rng))});
        }
      }
      break;
    }
  }
  return img;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (!(noise_sigma >= 0) || !std::isfinite(noise_sigma)) {
    throw Error(ErrorKind::kConfig, fmt::format("noise sigma must be a finite value >= 0, got {}", noise_sigma));
  }
}

SyntheticFrame generate_synthetic_frame(ClassId class_id, std::uint64_t seed, double noise_sigma) {
  if (!(noise_sigma >= 0)) throw Error(ErrorKind::kInvalidArgument, "noise sigma must be >= 0");
  Rng rng(seed);
  const double range = uniform(rng, 3.0, 30.0);
  const double bearing = uniform(rng, -std::numbers::pi, std::numbers::pi);
  const double yaw = uniform(rng, -std::numbers::pi, std::numbers::pi);
  const Eigen::Vector3d center(range * std::cos(bearing), 0.0, range * std::sin(bearing));
  const Eigen::Vector3d dims = kRegionDims;

  SyntheticFrame f;
  f.calib = CalibData::identity();
  f.label.kitti_type = std::string(kitti_type(class_id));
  f.label.class_id = class_id;
  f.label.bbox2d = {0.0, 0.0, static_cast<double>(kSyntheticImageSize), static_cast<double>(kSyntheticImageSize)};
  f.label.dims = dims;
  f.label.location = center + Eigen::Vector3d(0.0, dims[0] / 2.0, 0.0);
  f.label.rotation_y = yaw;
  f.label.alpha = std::remainder(yaw - std::atan2(center.x(), center.z()), 2 * std::numbers::pi);

  const auto count = std::uniform_int_distribution<std::size_t>(400, 2000)(rng);
  const double c = std::cos(yaw), s = std::sin(yaw);
  std::normal_distribution<double> noise(0.0, 1.0);
  PointCloud raw;
  std::vector<double> intensity;
  raw.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::Vector3d p = local_point(class_id, rng);
    Eigen::Vector3d q(c * p.x() + s * p.z(), p.y(), -s * p.x() + c * p.z());
    q += center;
    for (int k = 0; k < 3; ++k) q[k] = to_float_precision(q[k] + noise_sigma * noise(rng));
    raw.points.push_back(q);
    intensity.push_back(to_float_precision(uniform(rng, 0.0, 1.0)));
  }
  raw.intensities = std::move(intensity);

  // Keep only what extraction would keep, so write -> ingest is lossless.
  const auto keep = points_in_label_box(raw, f.label, f.calib);
  f.cloud.points.reserve(keep.size());
  std::vector<double> kept_intensity;
  for (auto i : keep) {
    f.cloud.points.push_back(raw.points[i]);
    kept_intensity.push_back((*raw.intensities)[i]);
  }
  f.cloud.intensities = std::move(kept_intensity);
  f.image = paint_silhouette(class_id, rng);
  return f;
}

Sample generate_synthetic_sample(ClassId class_id, std::uint64_t seed, double noise_sigma) {
  const SyntheticFrame f = generate_synthetic_frame(class_id, seed, noise_sigma);
  return extract_object_sample(f.cloud, f.image, f.label, f.calib);
}

std::uint64_t synthetic_frame_seed(std::uint64_t dataset_seed, std::size_t index) {
  // splitmix64 finalizer over (seed, index)
  std::uint64_t z = dataset_seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::vector<ClassId> synthetic_class_order(const SyntheticSpec& spec) {
  std::vector<ClassId> order;
  for (int k = 0; k < kNumClasses; ++k) order.insert(order.end(), spec.counts[k], static_cast<ClassId>(k));
  Rng rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<Sample> generate_synthetic_dataset(const SyntheticSpec& spec) {
  spec.validate();
  const auto order = synthetic_class_order(spec);
  std::vector<Sample> samples;
  samples.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    samples.push_back(generate_synthetic_sample(order[i], synthetic_frame_seed(spec.seed, i), spec.noise_sigma));
    samples.back().frame_id = fmt::format("{:06}", i);
  }
  return samples;
}

std::array<std::size_t, kNumClasses> write_synthetic_dataset(const SyntheticSpec& spec, const fs::path& root) {
  spec.validate();
  const DatasetLayout layout = DatasetLayout::under(root);
  for (const auto& dir : {layout.velodyne_dir, layout.image_dir, layout.label_dir, layout.calib_dir}) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::kIo, fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  }
  const auto order = synthetic_class_order(spec);
  std::array<std::size_t, kNumClasses> histogram{};
  const std::string calib_text = format_calib_file(CalibData::identity());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const SyntheticFrame f = generate_synthetic_frame(order[i], synthetic_frame_seed(spec.seed, i), spec.noise_sigma);
    const std::string stem = fmt::format("{:06}", i);
    write_file_bytes(layout.velodyne_dir / (stem + ".bin"), write_velodyne_bin(f.cloud));
    write_file_bytes(layout.image_dir / (stem + ".ppm"), encode_ppm(f.image));
    write_file_text(layout.label_dir / (stem + ".txt"), format_label_file(std::span(&f.label, 1)));
    write_file_text(layout.calib_dir / (stem + ".txt"), calib_text);
    ++histogram[static_cast<std::size_t>(order[i])];
  }
  return histogram;
}

std::array<std::size_t, kNumClasses> kitti_ratio_counts(std::size_t total) {
  constexpr std::array<std::size_t, kNumClasses> kRatio{2224, 380, 75, 321};
  constexpr std::size_t kRatioSum = 2224 + 380 + 75 + 321;
  std::array<std::size_t, kNumClasses> counts{};
  std::array<std::size_t, kNumClasses> remainder{};
  std::size_t assigned = 0;
  for (int k = 0; k < kNumClasses; ++k) {
    counts[k] = total * kRatio[k] / kRatioSum;
    remainder[k] = total * kRatio[k] % kRatioSum;
    assigned += counts[k];
  }
  std::array<int, kNumClasses> rank{0, 1, 2, 3};
  std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[rank[i % kNumClasses]];
  return counts;
}

}  // namespace lidarvoice
