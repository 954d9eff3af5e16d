#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <span>

#include "lidarvoice/error.hpp"
#include "lidarvoice/kitti_io.hpp"
#include "lidarvoice/model.hpp"
#include "lidarvoice/preprocess.hpp"
#include "lidarvoice/synthetic.hpp"
#include "lidarvoice/voice.hpp"

namespace py = pybind11;
using namespace lidarvoice;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using ImageArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

PointCloud to_cloud(const Points& pts) {
  PointCloud c;
  c.points.reserve(static_cast<std::size_t>(pts.rows()));
  for (Eigen::Index i = 0; i < pts.rows(); ++i) c.points.emplace_back(pts.row(i).transpose());
  return c;
}

Points to_points(const PointCloud& c) {
  Points out(static_cast<Eigen::Index>(c.size()), 3);
  for (std::size_t i = 0; i < c.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = c.points[i].transpose();
  return out;
}

RgbImage to_image(const ImageArray& arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3) throw Error(ErrorKind::kShape, "image must be an H x W x 3 uint8 array");
  RgbImage img;
  img.height = static_cast<std::size_t>(arr.shape(0));
  img.width = static_cast<std::size_t>(arr.shape(1));
  img.pixels.assign(arr.data(), arr.data() + arr.size());
  return img;
}

ImageArray from_image(const RgbImage& img) {
  ImageArray out({img.height, img.width, std::size_t{3}});
  std::memcpy(out.mutable_data(), img.pixels.data(), img.pixels.size());
  return out;
}

ClassId class_from_int(int id) {
  if (id < 0 || id >= kNumClasses) throw Error(ErrorKind::kInvalidArgument, "class id must be in 0..3");
  return static_cast<ClassId>(id);
}

py::object optional_float(const std::optional<double>& v) {
  return v ? py::object(py::float_(*v)) : py::object(py::none());
}

py::dict label_dict(const ObjectLabel& l) {
  py::dict d;
  d["type"] = l.kitti_type;
  d["class_id"] = static_cast<int>(l.class_id);
  d["truncation"] = l.truncation;
  d["occlusion"] = l.occlusion;
  d["alpha"] = l.alpha;
  d["bbox"] = py::make_tuple(l.bbox2d.left, l.bbox2d.top, l.bbox2d.right, l.bbox2d.bottom);
  d["dimensions"] = py::make_tuple(l.dims.x(), l.dims.y(), l.dims.z());
  d["location"] = py::make_tuple(l.location.x(), l.location.y(), l.location.z());
  d["rotation_y"] = l.rotation_y;
  return d;
}

py::dict detection_dict(const DetectionResult& r) {
  py::dict d;
  d["class_id"] = static_cast<int>(r.class_id);
  d["class_name"] = std::string(class_name(r.class_id));
  d["confidence"] = r.confidence;
  d["probabilities"] = std::vector<double>(r.probabilities.begin(), r.probabilities.end());
  d["distance_m"] = optional_float(r.distance_m);
  d["phrase"] = format_phrase(r).text;
  return d;
}

void read_widths(const py::dict& d, const char* key, std::vector<std::size_t>& out) {
  if (d.contains(key)) out = d[key].cast<std::vector<std::size_t>>();
}

void read_count(const py::dict& d, const char* key, std::size_t& out) {
  if (d.contains(key)) out = d[key].cast<std::size_t>();
}

ModelDims dims_from_dict(const py::dict& d) {
  static const char* known[] = {"num_points", "tnet_point", "tnet_dense", "lidar_point", "image_size",
                                "rgb_conv",   "rgb_feature", "head_dense"};
  for (const auto& item : d) {
    const auto key = item.first.cast<std::string>();
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
        std::end(known)) {
      throw Error(ErrorKind::kConfig, "unknown dims key '" + key + "'");
    }
  }
  ModelDims dims;
  read_count(d, "num_points", dims.num_points);
  read_count(d, "image_size", dims.image_size);
  read_widths(d, "tnet_point", dims.tnet_point);
  read_widths(d, "tnet_dense", dims.tnet_dense);
  read_widths(d, "lidar_point", dims.lidar_point);
  read_widths(d, "rgb_conv", dims.rgb_conv);
  read_count(d, "rgb_feature", dims.rgb_feature);
  read_widths(d, "head_dense", dims.head_dense);
  return dims;
}

Sample make_sample(const Points& points, const ImageArray& image, std::optional<double> distance) {
  Sample s;
  s.points = to_cloud(points);
  s.image = to_image(image);
  s.distance_m = distance.value_or(std::numeric_limits<double>::quiet_NaN());
  return s;
}

struct PyModel {
  ModelConfig config;
  ModelParams params;

  py::dict predict(const Points& points, const ImageArray& image, std::optional<double> distance,
                   std::uint64_t seed) const {
    const Sample s = make_sample(points, image, distance);
    const ProcessedSample p = preprocess_sample(s, seed, {config.dims.num_points, config.dims.image_size});
    DetectionResult r = lidarvoice::predict(params, config, p);
    r.distance_m = estimate_distance(s);
    return detection_dict(r);
  }
};

}  // namespace

PYBIND11_MODULE(_lidarvoice, m) {
  m.doc() = "LiDAR + camera object classification with spoken announcements";

  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  py::list names;
  for (int k = 0; k < kNumClasses; ++k) names.append(std::string(class_name(static_cast<ClassId>(k))));
  m.attr("CLASS_NAMES") = py::tuple(names);

  m.def("class_name", [](int id) { return std::string(class_name(class_from_int(id))); }, py::arg("class_id"));

  m.def(
      "read_velodyne_bin",
      [](py::bytes data) {
        const std::string raw = data;
        const PointCloud c = read_velodyne_bin(
            std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
        Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor> out(static_cast<Eigen::Index>(c.size()), 4);
        for (std::size_t i = 0; i < c.size(); ++i) {
          const auto r = static_cast<Eigen::Index>(i);
          out.block<1, 3>(r, 0) = c.points[i].transpose();
          out(r, 3) = c.intensities ? (*c.intensities)[i] : 0.0;
        }
        return out;
      },
      py::arg("data"), "Decode a float32 x, y, z, reflectance scan into an N x 4 array.");

  m.def(
      "write_velodyne_bin",
      [](const Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor>& scan) {
        PointCloud c;
        std::vector<double> inten;
        for (Eigen::Index i = 0; i < scan.rows(); ++i) {
          c.points.emplace_back(scan(i, 0), scan(i, 1), scan(i, 2));
          inten.push_back(scan(i, 3));
        }
        c.intensities = std::move(inten);
        const auto bytes = write_velodyne_bin(c);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("scan"));

  m.def("parse_label_file", [](const std::string& text) {
    py::list out;
    for (const auto& l : parse_label_file(text)) out.append(label_dict(l));
    return out;
  });

  m.def(
      "remove_statistical_outliers",
      [](const Points& pts) { return to_points(remove_statistical_outliers(to_cloud(pts))); }, py::arg("points"));
  m.def(
      "cluster_dbscan",
      [](const Points& pts, double eps, std::size_t min_samples) {
        const auto labels = cluster_dbscan(to_cloud(pts), eps, min_samples);
        return py::array_t<int>(static_cast<py::ssize_t>(labels.size()), labels.data());
      },
      py::arg("points"), py::arg("eps") = kDbscanEps, py::arg("min_samples") = kDbscanMinSamples);
  m.def(
      "downsample_points",
      [](const Points& pts, std::size_t target, std::uint64_t seed) {
        return to_points(downsample_points(to_cloud(pts), target, seed));
      },
      py::arg("points"), py::arg("target") = kNumPoints, py::arg("seed") = 0);
  m.def(
      "normalize_points",
      [](const Points& pts) {
        return Points(normalize_points(to_cloud(pts), static_cast<std::size_t>(pts.rows())).coords);
      },
      py::arg("points"));
  m.def(
      "preprocess",
      [](const Points& pts, const ImageArray& image, std::uint64_t seed, std::size_t num_points,
         std::size_t image_size) {
        const ProcessedSample p = preprocess_sample(make_sample(pts, image, std::nullopt), seed,
                                                    {num_points, image_size});
        py::array_t<double> img({p.image.height, p.image.width, std::size_t{3}});
        std::memcpy(img.mutable_data(), p.image.data.data(), p.image.data.size() * sizeof(double));
        return py::make_tuple(Points(p.points.coords), img);
      },
      py::arg("points"), py::arg("image"), py::arg("seed") = 0, py::arg("num_points") = kNumPoints,
      py::arg("image_size") = kImageSize,
      "Outlier removal, resampling and normalization of the points; resize and [0, 1] scaling of the image.");

  m.def("round_half_up", &round_half_up, py::arg("value"), py::arg("decimals"));
  m.def(
      "format_phrase",
      [](int class_id, double confidence, std::optional<double> distance_m) {
        DetectionResult r;
        r.class_id = class_from_int(class_id);
        r.confidence = confidence;
        r.distance_m = distance_m;
        return format_phrase(r).text;
      },
      py::arg("class_id"), py::arg("confidence"), py::arg("distance_m") = py::none());

  m.def(
      "synthetic_sample",
      [](int class_id, std::uint64_t seed, double noise_sigma) {
        const Sample s = generate_synthetic_sample(class_from_int(class_id), seed, noise_sigma);
        py::dict d;
        d["points"] = to_points(s.points);
        d["image"] = from_image(s.image);
        d["class_id"] = static_cast<int>(s.class_id);
        d["distance_m"] = s.distance_m;
        return d;
      },
      py::arg("class_id"), py::arg("seed"), py::arg("noise_sigma") = kDefaultNoiseSigma);
  m.def("kitti_ratio_counts", [](std::size_t total) {
    const auto c = kitti_ratio_counts(total);
    return std::vector<std::size_t>(c.begin(), c.end());
  });

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const std::string& mode, std::uint64_t seed, std::optional<py::dict> dims) {
             auto model = std::make_unique<PyModel>();
             model->config.mode = fusion_mode_from_string(mode);
             model->config.seed = seed;
             if (dims) model->config.dims = dims_from_dict(*dims);
             model->config.validate();
             model->params = init_params(model->config);
             return model;
           }),
           py::arg("mode") = "fused", py::arg("seed") = 0, py::arg("dims") = py::none())
      .def_static(
          "load",
          [](const std::filesystem::path& path) {
            Checkpoint ck = load_checkpoint(path);
            auto model = std::make_unique<PyModel>();
            model->config = ck.config;
            model->params = std::move(ck.params);
            return model;
          },
          py::arg("path"))
      .def("save", [](const PyModel& self, const std::filesystem::path& path) {
        save_checkpoint(path, self.params, self.config);
      })
      .def_property_readonly("mode", [](const PyModel& self) { return std::string(to_string(self.config.mode)); })
      .def_property_readonly("parameter_count", [](const PyModel& self) { return self.params.parameter_count(); })
      .def("predict", &PyModel::predict, py::arg("points"), py::arg("image"), py::arg("distance_m") = py::none(),
           py::arg("seed") = 0, "Classify one raw object crop: N x 3 points and an H x W x 3 uint8 image.");
}
