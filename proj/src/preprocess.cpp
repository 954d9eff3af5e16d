#include "lidarvoice/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include <fmt/format.h>

#include "lidarvoice/error.hpp"

namespace lidarvoice {

namespace {

PointCloud select(const PointCloud& cloud, const std::vector<std::size_t>& idx) {
  PointCloud out;
  out.points.reserve(idx.size());
  for (auto i : idx) out.points.push_back(cloud.points[i]);
  if (cloud.intensities) {
    std::vector<double> inten;
    inten.reserve(idx.size());
    for (auto i : idx) inten.push_back((*cloud.intensities)[i]);
    out.intensities = std::move(inten);
  }
  return out;
}

Eigen::Vector3d centroid_of(const std::vector<Eigen::Vector3d>& pts) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

}  // namespace

PointCloud remove_statistical_outliers(const PointCloud& cloud) {
  if (cloud.empty()) throw Error(ErrorKind::kEmptyInput, "outlier removal needs at least one point");
  const Eigen::Vector3d c = centroid_of(cloud.points);
  const auto n = static_cast<double>(cloud.size());
  std::vector<double> d(cloud.size());
  double mean = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    d[i] = (cloud.points[i] - c).norm();
    mean += d[i];
  }
  mean /= n;
  double var = 0;
  for (double v : d) var += (v - mean) * (v - mean);
  const double threshold = mean + 2.0 * std::sqrt(var / n);

  std::vector<std::size_t> keep;
  keep.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (d[i] <= threshold) keep.push_back(i);
  }
  return select(cloud, keep);
}

// ---------------------------------------------------------------------------

namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

class NeighborGrid {
 public:
  NeighborGrid(const std::vector<Eigen::Vector3d>& pts, double eps) : pts_(pts), eps_(eps) {
    for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(pts[i])].push_back(i);
  }

  /// Indices within eps (inclusive) in ascending order, including `i` itself.
  void query(std::size_t i, std::vector<std::size_t>& out) const {
    out.clear();
    const CellKey k = key(pts_[i]);
    const double eps2 = eps_ * eps_;
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find({k.x + dx, k.y + dy, k.z + dz});
          if (it == cells_.end()) continue;
          for (auto j : it->second) {
            if ((pts_[j] - pts_[i]).squaredNorm() <= eps2) out.push_back(j);
          }
        }
    std::sort(out.begin(), out.end());
  }

 private:
  CellKey key(const Eigen::Vector3d& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / eps_)),
            static_cast<std::int64_t>(std::floor(p.y() / eps_)),
            static_cast<std::int64_t>(std::floor(p.z() / eps_))};
  }

  const std::vector<Eigen::Vector3d>& pts_;
  double eps_;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells_;
};

}  // namespace

std::vector<int> cluster_dbscan(const PointCloud& cloud, double eps, std::size_t min_samples) {
  if (!(eps > 0) || min_samples < 1) {
    throw Error(ErrorKind::kInvalidArgument, "dbscan needs eps > 0 and min_samples >= 1");
  }
  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> label(cloud.size(), kUnvisited);
  NeighborGrid grid(cloud.points, eps);
  std::vector<std::size_t> nbrs;
  std::vector<std::size_t> frontier;
  int next_id = 0;

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (label[i] != kUnvisited) continue;
    grid.query(i, nbrs);
    if (nbrs.size() < min_samples) {
      label[i] = kNoise;
      continue;
    }
    const int id = next_id++;
    label[i] = id;
    frontier.assign(nbrs.begin(), nbrs.end());
    for (std::size_t f = 0; f < frontier.size(); ++f) {
      const std::size_t q = frontier[f];
      if (label[q] == kNoise) label[q] = id;  // border point
      if (label[q] != kUnvisited) continue;
      label[q] = id;
      grid.query(q, nbrs);
      if (nbrs.size() >= min_samples) frontier.insert(frontier.end(), nbrs.begin(), nbrs.end());
    }
  }
  return label;
}

// ---------------------------------------------------------------------------

PointCloud downsample_points(const PointCloud& cloud, std::size_t target, std::uint64_t seed) {
  if (cloud.empty()) throw Error(ErrorKind::kEmptyInput, "cannot resample an empty cloud");
  if (target == 0) throw Error(ErrorKind::kInvalidArgument, "resample target must be positive");
  const std::size_t n = cloud.size();
  if (n == target) return cloud;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx;
  if (n > target) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    idx.reserve(target);
    std::sample(all.begin(), all.end(), std::back_inserter(idx), target, rng);
  } else {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t k = n; k < target; ++k) idx.push_back(pick(rng));
  }
  return select(cloud, idx);
}

ProcessedPoints normalize_points(const PointCloud& cloud, std::size_t expected_points) {
  if (cloud.size() != expected_points) {
    throw Error(ErrorKind::kShape,
                fmt::format("normalization expects {} points, got {}", expected_points, cloud.size()));
  }
  ProcessedPoints out;
  out.source_count = cloud.size();
  out.coords.resize(static_cast<Eigen::Index>(cloud.size()), 3);
  if (cloud.empty()) return out;
  // Offsets from the first point keep the centroid exact for coincident
  // points far from the origin, so those still come out as zeros.
  const Eigen::Vector3d origin = cloud.points.front();
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : cloud.points) c += p - origin;
  c /= static_cast<double>(cloud.size());
  double max_norm = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d d = (cloud.points[i] - origin) - c;
    out.coords.row(static_cast<Eigen::Index>(i)) = d.transpose();
    max_norm = std::max(max_norm, d.norm());
  }
  if (max_norm < 1e-12) {
    out.coords.setZero();
  } else {
    out.coords /= max_norm;
  }
  return out;
}

ImageTensor resize_bilinear(const RgbImage& image, std::size_t out_w, std::size_t out_h) {
  if (image.empty() || out_w == 0 || out_h == 0) {
    throw Error(ErrorKind::kShape, "bilinear resize needs non-empty source and target");
  }
  ImageTensor out;
  out.width = out_w;
  out.height = out_h;
  out.data.resize(out_w * out_h * 3);
  const double sx = static_cast<double>(image.width) / static_cast<double>(out_w);
  const double sy = static_cast<double>(image.height) / static_cast<double>(out_h);
  const double max_x = static_cast<double>(image.width - 1);
  const double max_y = static_cast<double>(image.height - 1);

  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double top = (1 - tx) * image.at(x0, y0)[ch] + tx * image.at(x1, y0)[ch];
        const double bot = (1 - tx) * image.at(x0, y1)[ch] + tx * image.at(x1, y1)[ch];
        out.data[(oy * out_w + ox) * 3 + ch] = (1 - ty) * top + ty * bot;
      }
    }
  }
  return out;
}

ImageTensor scale_unit_range(ImageTensor image) {
  if (image.data.empty()) return image;
  const auto [lo_it, hi_it] = std::minmax_element(image.data.begin(), image.data.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  if (range == 0) {
    std::fill(image.data.begin(), image.data.end(), 0.0);
  } else {
    for (auto& v : image.data) v = (v - lo) / range;
  }
  return image;
}

ProcessedSample preprocess_sample(const Sample& sample, std::uint64_t seed, const PreprocessOptions& options) {
  ProcessedSample out;
  const PointCloud filtered = remove_statistical_outliers(sample.points);
  out.points = normalize_points(downsample_points(filtered, options.target_points, seed), options.target_points);
  out.points.source_count = sample.points.size();
  out.image = scale_unit_range(resize_bilinear(sample.image, options.image_size, options.image_size));
  out.class_id = sample.class_id;
  out.distance_m = sample.distance_m;
  return out;
}

std::vector<ProcessedSample> preprocess_all(const std::vector<Sample>& samples, std::uint64_t global_seed,
                                            const PreprocessOptions& options) {
  std::vector<ProcessedSample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back(preprocess_sample(samples[i], global_seed + i, options));
  }
  return out;
}

}  // namespace lidarvoice
