#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "lidarvoice/kitti_io.hpp"
#include "lidarvoice/model.hpp"
#include "lidarvoice/preprocess.hpp"

namespace lidarvoice::testing {

// Hand-rolled generators for the property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double mean = 0, double sd = 1) { return std::normal_distribution<double>(mean, sd)(rng_); }
  std::size_t index(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return uniform(0, 1) < p; }
  std::mt19937_64& engine() { return rng_; }

  std::vector<double> values(std::size_t n, double lo = -1, double hi = 1) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }

  /// Anisotropic Gaussian blob with a random offset and scale.
  PointCloud cloud(std::size_t n) {
    PointCloud c;
    const Eigen::Vector3d center(uniform(-50, 50), uniform(-50, 50), uniform(-3, 3));
    const Eigen::Vector3d spread(uniform(0.01, 5), uniform(0.01, 5), uniform(0.01, 5));
    for (std::size_t i = 0; i < n; ++i) {
      c.points.emplace_back(center.x() + normal() * spread.x(), center.y() + normal() * spread.y(),
                            center.z() + normal() * spread.z());
    }
    return c;
  }

  RgbImage image(std::size_t w, std::size_t h) {
    RgbImage img{w, h, std::vector<std::uint8_t>(w * h * 3)};
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(index(0, 255));
    return img;
  }

 private:
  std::mt19937_64 rng_;
};

/// Same topology as the full network, narrow enough for finite differences.
inline ModelDims tiny_dims() {
  ModelDims d;
  d.num_points = 16;
  d.image_size = 8;
  d.tnet_point = {4, 6, 8};
  d.tnet_dense = {6, 5};
  d.lidar_point = {4, 5, 6, 8};
  d.rgb_conv = {2, 3, 4};
  d.rgb_feature = 5;
  d.head_dense = {6, 5};
  return d;
}

/// Small but trainable widths used by the quicker end-to-end tests.
inline ModelDims small_dims() {
  ModelDims d;
  d.num_points = 128;
  d.image_size = 32;
  d.tnet_point = {16, 32, 64};
  d.tnet_dense = {32, 16};
  d.lidar_point = {16, 16, 32, 64};
  d.rgb_conv = {8, 16, 32};
  d.rgb_feature = 32;
  d.head_dense = {32, 16};
  return d;
}

inline ProcessedSample random_processed(Gen& gen, const ModelDims& d, ClassId cls) {
  ProcessedSample s;
  s.points.coords.resize(static_cast<Eigen::Index>(d.num_points), 3);
  for (Eigen::Index i = 0; i < s.points.coords.size(); ++i) s.points.coords.data()[i] = gen.uniform(-1, 1);
  s.points.source_count = d.num_points;
  s.image.height = s.image.width = d.image_size;
  s.image.data = gen.values(d.image_size * d.image_size * 3, 0, 1);
  s.class_id = cls;
  s.distance_m = gen.uniform(1, 40);
  return s;
}

/// Moves every parameter off its initial value. Zero biases and the zero
/// T-net output layer otherwise leave rows exactly on ReLU kinks and whole
/// sub-networks without gradient, which a gradient check cannot probe. The
/// default amount is on the order of the Glorot range of the tiny layers.
inline void jitter_params(ModelParams& params, Gen& gen, double amount = 0.5) {
  for (const auto& name : params.names()) {
    for (auto& v : params.at(name).mutable_values()) v += gen.uniform(-amount, amount);
  }
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("lidarvoice-" + tag + "-" + std::to_string((static_cast<std::uint64_t>(rd()) << 32) | rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// ---- independent oracles ----------------------------------------------------

/// Textbook scalar Adam step (t >= 1), written without the library's helpers.
struct ScalarAdam {
  double theta, m, v;
};
inline ScalarAdam scalar_adam(ScalarAdam s, double g, std::uint64_t t, double lr, double b1 = 0.9, double b2 = 0.999,
                              double eps = 1e-8) {
  s.m = b1 * s.m + (1 - b1) * g;
  s.v = b2 * s.v + (1 - b2) * g * g;
  const double mhat = s.m / (1 - std::pow(b1, static_cast<double>(t)));
  const double vhat = s.v / (1 - std::pow(b2, static_cast<double>(t)));
  s.theta = s.theta - lr * mhat / (std::sqrt(vhat) + eps);
  return s;
}

/// O(N^2) DBSCAN reference: core points from all-pairs distances, clusters as
/// connected components of core points (union-find), numbered by their lowest
/// core index; a border point joins the earliest such cluster among its core
/// neighbors.
inline std::vector<int> brute_force_dbscan(const PointCloud& cloud, double eps, std::size_t min_samples) {
  const std::size_t n = cloud.size();
  std::vector<std::vector<std::size_t>> nbr(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if ((cloud.points[i] - cloud.points[j]).norm() <= eps) nbr[i].push_back(j);
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) core[i] = nbr[i].size() >= min_samples;

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i]) continue;
    for (auto j : nbr[i]) {
      if (!core[j]) continue;
      const auto a = find(i), b = find(j);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<int> root_id(n, -1);
  int next = 0;
  std::vector<int> label(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i]) continue;
    const auto r = find(i);
    if (root_id[r] < 0) root_id[r] = next++;
    label[i] = root_id[r];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    int best = -1;
    for (auto j : nbr[i]) {
      if (core[j] && (best < 0 || label[j] < best)) best = label[j];
    }
    label[i] = best;
  }
  return label;
}

/// True when two labelings are equal up to a bijective renaming of cluster ids (-1 fixed).
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::vector<std::pair<int, int>> fwd, back;
  auto lookup = [](std::vector<std::pair<int, int>>& m, int k, int v) {
    for (auto& [kk, vv] : m)
      if (kk == k) return vv == v;
    m.emplace_back(k, v);
    return true;
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] < 0) != (b[i] < 0)) return false;
    if (a[i] < 0) continue;
    if (!lookup(fwd, a[i], b[i]) || !lookup(back, b[i], a[i])) return false;
  }
  return true;
}

/// Points clustered around a few centers plus uniform clutter, at most max_n points.
inline PointCloud dbscan_cloud(Gen& gen, std::size_t max_n) {
  const std::size_t n = gen.index(1, max_n);
  const std::size_t centers = gen.index(1, 5);
  std::vector<Eigen::Vector3d> c;
  for (std::size_t k = 0; k < centers; ++k) c.emplace_back(gen.uniform(-4, 4), gen.uniform(-4, 4), gen.uniform(-1, 1));
  PointCloud cloud;
  for (std::size_t i = 0; i < n; ++i) {
    if (gen.coin(0.2)) {
      cloud.points.emplace_back(gen.uniform(-5, 5), gen.uniform(-5, 5), gen.uniform(-2, 2));
    } else {
      const auto& m = c[gen.index(0, centers - 1)];
      const double s = gen.uniform(0.1, 0.5);
      cloud.points.emplace_back(m.x() + gen.normal(0, s), m.y() + gen.normal(0, s), m.z() + gen.normal(0, s));
    }
  }
  return cloud;
}

}  // namespace lidarvoice::testing
