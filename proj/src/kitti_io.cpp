#include "lidarvoice/kitti_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include <Eigen/LU>
#include <fmt/format.h>

#include "lidarvoice/error.hpp"

namespace lidarvoice {

namespace fs = std::filesystem;

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kMalformedFile: return "malformed-file";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kEmptyInput: return "empty-input";
    case ErrorKind::kInvalidLabel: return "invalid-label";
    case ErrorKind::kEmptyObject: return "empty-object";
    case ErrorKind::kIngestion: return "ingestion";
    case ErrorKind::kCheckpoint: return "checkpoint";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kEmptyDataset: return "empty-dataset";
    case ErrorKind::kInvalidArgument: return "invalid-argument";
  }
  return "unknown";
}

std::string_view class_name(ClassId id) noexcept {
  switch (id) {
    case ClassId::kCar: return "Car";
    case ClassId::kPedestrian: return "Pedestrian";
    case ClassId::kCyclist: return "Cyclist";
    case ClassId::kDontCare: return "DontCare";
  }
  return "DontCare";
}

ClassId class_from_kitti_name(std::string_view name) noexcept {
  if (name == "Car") return ClassId::kCar;
  if (name == "Pedestrian") return ClassId::kPedestrian;
  if (name == "Cyclist") return ClassId::kCyclist;
  return ClassId::kDontCare;
}

// ---------------------------------------------------------------------------
// velodyne

namespace {

float load_le_float(const std::uint8_t* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

void store_le_float(float v, std::uint8_t* p) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  p[0] = static_cast<std::uint8_t>(bits);
  p[1] = static_cast<std::uint8_t>(bits >> 8);
  p[2] = static_cast<std::uint8_t>(bits >> 16);
  p[3] = static_cast<std::uint8_t>(bits >> 24);
}

}  // namespace

PointCloud read_velodyne_bin(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kRecord = 16;
  if (bytes.size() % kRecord != 0) {
    throw Error(ErrorKind::kMalformedFile,
                fmt::format("velodyne scan length {} is not a multiple of 16", bytes.size()));
  }
  const std::size_t n = bytes.size() / kRecord;
  PointCloud cloud;
  cloud.points.reserve(n);
  std::vector<double> intensity;
  intensity.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kRecord;
    std::array<float, 4> v{};
    for (int k = 0; k < 4; ++k) {
      v[k] = load_le_float(rec + 4 * k);
      if (!std::isfinite(v[k])) {
        throw Error(ErrorKind::kMalformedFile,
                    fmt::format("velodyne record {} holds a non-finite value", i));
      }
    }
    cloud.points.emplace_back(v[0], v[1], v[2]);
    intensity.push_back(v[3]);
  }
  cloud.intensities = std::move(intensity);
  return cloud;
}

PointCloud read_velodyne_bin(std::span<const std::byte> bytes) {
  return read_velodyne_bin(
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

std::vector<std::uint8_t> write_velodyne_bin(const PointCloud& cloud) {
  std::vector<std::uint8_t> out(cloud.size() * 16);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    const double inten = cloud.intensities ? (*cloud.intensities)[i] : 0.0;
    std::uint8_t* rec = out.data() + i * 16;
    store_le_float(static_cast<float>(p.x()), rec);
    store_le_float(static_cast<float>(p.y()), rec + 4);
    store_le_float(static_cast<float>(p.z()), rec + 8);
    store_le_float(static_cast<float>(inten), rec + 12);
  }
  return out;
}

// ---------------------------------------------------------------------------
// text parsing helpers

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view tok, std::size_t line_no, std::string_view field) {
  T value{};
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError(line_no, fmt::format("cannot parse {} from '{}'", field, tok));
  }
  return value;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    fn(line_no, line);
    if (end == text.size()) break;
    pos = end + 1;
  }
}

}  // namespace

std::vector<ObjectLabel> parse_label_file(std::string_view text) {
  std::vector<ObjectLabel> labels;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto f = split_ws(line);
    if (f.empty()) return;
    if (f.size() != 15) {
      throw ParseError(line_no, fmt::format("expected 15 label fields, got {}", f.size()));
    }
    ObjectLabel l;
    l.kitti_type = std::string(f[0]);
    l.class_id = class_from_kitti_name(f[0]);
    l.truncation = parse_number<double>(f[1], line_no, "truncation");
    l.occlusion = parse_number<int>(f[2], line_no, "occlusion");
    l.alpha = parse_number<double>(f[3], line_no, "alpha");
    l.bbox2d = {parse_number<double>(f[4], line_no, "bbox left"),
                parse_number<double>(f[5], line_no, "bbox top"),
                parse_number<double>(f[6], line_no, "bbox right"),
                parse_number<double>(f[7], line_no, "bbox bottom")};
    for (int k = 0; k < 3; ++k) l.dims[k] = parse_number<double>(f[8 + k], line_no, "dimension");
    for (int k = 0; k < 3; ++k) l.location[k] = parse_number<double>(f[11 + k], line_no, "location");
    l.rotation_y = parse_number<double>(f[14], line_no, "rotation_y");
    if (l.class_id != ClassId::kDontCare &&
        (l.bbox2d.right < l.bbox2d.left || l.bbox2d.bottom < l.bbox2d.top)) {
      throw ParseError(line_no, "2D box has right < left or bottom < top");
    }
    labels.push_back(std::move(l));
  });
  return labels;
}

std::string format_label_file(std::span<const ObjectLabel> labels) {
  std::string out;
  for (const auto& l : labels) {
    const std::string type = l.kitti_type.empty() ? std::string(class_name(l.class_id)) : l.kitti_type;
    out += fmt::format("{} {} {} {} {} {} {} {} {} {} {} {} {} {} {}\n", type, l.truncation,
                       l.occlusion, l.alpha, l.bbox2d.left, l.bbox2d.top, l.bbox2d.right,
                       l.bbox2d.bottom, l.dims[0], l.dims[1], l.dims[2], l.location[0],
                       l.location[1], l.location[2], l.rotation_y);
  }
  return out;
}

// ---------------------------------------------------------------------------
// calibration

CalibData CalibData::identity() {
  CalibData c;
  c.tr_velo_to_cam.setZero();
  c.tr_velo_to_cam.leftCols<3>().setIdentity();
  c.r0_rect.setIdentity();
  return c;
}

Eigen::Vector3d CalibData::velo_to_cam(const Eigen::Vector3d& p) const {
  return r0_rect * (tr_velo_to_cam.leftCols<3>() * p + tr_velo_to_cam.col(3));
}

Eigen::Vector3d CalibData::cam_to_velo(const Eigen::Vector3d& p) const {
  const Eigen::Vector3d unrect = r0_rect.inverse() * p;
  return tr_velo_to_cam.leftCols<3>().inverse() * (unrect - tr_velo_to_cam.col(3));
}

CalibData parse_calib_file(std::string_view text) {
  std::map<std::string, std::pair<std::size_t, std::vector<double>>> entries;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) return;
    const auto key_tokens = split_ws(line.substr(0, colon));
    if (key_tokens.size() != 1) return;
    std::vector<double> values;
    for (auto tok : split_ws(line.substr(colon + 1))) {
      values.push_back(parse_number<double>(tok, line_no, key_tokens[0]));
    }
    entries[std::string(key_tokens[0])] = {line_no, std::move(values)};
  });

  auto take = [&](const char* key, std::size_t count) -> const std::vector<double>& {
    auto it = entries.find(key);
    if (it == entries.end()) throw ParseError(0, fmt::format("calibration is missing '{}'", key));
    if (it->second.second.size() != count) {
      throw ParseError(it->second.first, fmt::format("'{}' needs {} values, got {}", key, count,
                                                     it->second.second.size()));
    }
    return it->second.second;
  };

  CalibData c;
  const auto& tr = take("Tr_velo_to_cam", 12);
  const auto& r0 = take("R0_rect", 9);
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 4; ++k) c.tr_velo_to_cam(r, k) = tr[r * 4 + k];
    for (int k = 0; k < 3; ++k) c.r0_rect(r, k) = r0[r * 3 + k];
  }
  const double det_tr = c.tr_velo_to_cam.leftCols<3>().determinant();
  const double det_r0 = c.r0_rect.determinant();
  if (std::abs(det_tr - 1.0) > 1e-3 || std::abs(det_r0 - 1.0) > 1e-3) {
    throw ParseError(0, fmt::format("calibration rotations are not proper (det {} / {})", det_tr, det_r0));
  }
  return c;
}

std::string format_calib_file(const CalibData& c) {
  std::string out = "Tr_velo_to_cam:";
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 4; ++k) out += fmt::format(" {}", c.tr_velo_to_cam(r, k));
  out += "\nR0_rect:";
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) out += fmt::format(" {}", c.r0_rect(r, k));
  out += "\n";
  return out;
}

// ---------------------------------------------------------------------------
// images

namespace {

std::mutex g_decoder_mutex;
std::map<ImageFormat, ImageDecoder>& decoder_registry() {
  static std::map<ImageFormat, ImageDecoder> registry;
  return registry;
}

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) -> std::size_t {
    skip_space_and_comments();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (std::size_t{1} << 32)) throw Error(ErrorKind::kMalformedFile, "PPM header value overflow");
      ++pos;
    }
    if (pos == start) throw Error(ErrorKind::kMalformedFile, fmt::format("PPM header lacks {}", what));
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw Error(ErrorKind::kMalformedFile, "bad PPM magic (expected P6)");
  }
  pos = 2;
  RgbImage img;
  img.width = read_uint("width");
  img.height = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (maxval == 0 || maxval > 255) {
    throw Error(ErrorKind::kMalformedFile, fmt::format("unsupported PPM bit depth (maxval {})", maxval));
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw Error(ErrorKind::kMalformedFile, "PPM header not terminated by whitespace");
  }
  ++pos;
  const std::size_t need = img.width * img.height * 3;
  if (bytes.size() - pos < need) {
    throw Error(ErrorKind::kMalformedFile,
                fmt::format("truncated PPM payload: {} of {} bytes", bytes.size() - pos, need));
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  if (maxval != 255) {
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
  }
  return img;
}

}  // namespace

void register_image_decoder(ImageFormat format, ImageDecoder decoder) {
  std::lock_guard lock(g_decoder_mutex);
  decoder_registry()[format] = std::move(decoder);
}

bool has_image_decoder(ImageFormat format) {
  if (format == ImageFormat::kPpmP6) return true;
  std::lock_guard lock(g_decoder_mutex);
  return decoder_registry().count(format) > 0;
}

RgbImage load_image(std::span<const std::uint8_t> bytes, ImageFormat format) {
  if (format == ImageFormat::kPpmP6) return decode_ppm(bytes);
  ImageDecoder decoder;
  {
    std::lock_guard lock(g_decoder_mutex);
    auto it = decoder_registry().find(format);
    if (it == decoder_registry().end()) {
      throw Error(ErrorKind::kMalformedFile, "no decoder registered for PNG images");
    }
    decoder = it->second;
  }
  RgbImage img = decoder(bytes);
  if (img.pixels.size() != img.width * img.height * 3) {
    throw Error(ErrorKind::kMalformedFile, "image decoder returned an inconsistent raster");
  }
  return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  const std::string header = fmt::format("P6\n{} {}\n255\n", image.width, image.height);
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

std::optional<ImageFormat> image_format_from_extension(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ppm") return ImageFormat::kPpmP6;
  if (ext == ".png") return ImageFormat::kPng;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// object extraction

namespace {

// Nominal KITTI left-color intrinsics; used only to project DontCare regions
// that carry no 3D box.
constexpr double kFocal = 721.5377;
constexpr double kCx = 609.5593;
constexpr double kCy = 172.854;

bool has_box_geometry(const ObjectLabel& l) {
  return l.dims[0] > 0 && l.dims[1] > 0 && l.dims[2] > 0;
}

bool degenerate(const BBox2d& b) { return !(b.right > b.left) || !(b.bottom > b.top); }

Eigen::Vector3d box_center_cam(const ObjectLabel& l) {
  return l.location - Eigen::Vector3d(0.0, l.dims[0] / 2.0, 0.0);
}

Eigen::Vector3d to_label_frame(const Eigen::Vector3d& p, const CalibData& calib,
                               const ExtractOptions& options) {
  return options.use_calib ? calib.velo_to_cam(p) : p;
}

Eigen::Vector3d from_label_frame(const Eigen::Vector3d& p, const CalibData& calib,
                                 const ExtractOptions& options) {
  return options.use_calib ? calib.cam_to_velo(p) : p;
}

std::vector<std::size_t> points_in_frustum(const PointCloud& cloud, const BBox2d& box,
                                           const CalibData& calib, const ExtractOptions& options) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d c = to_label_frame(cloud.points[i], calib, options);
    if (c.z() <= 0) continue;
    const double u = kFocal * c.x() / c.z() + kCx;
    const double v = kFocal * c.y() / c.z() + kCy;
    if (u >= box.left && u <= box.right && v >= box.top && v <= box.bottom) idx.push_back(i);
  }
  return idx;
}

}  // namespace

std::vector<std::size_t> points_in_label_box(const PointCloud& cloud, const ObjectLabel& label,
                                             const CalibData& calib, const ExtractOptions& options) {
  constexpr double kFaceTolerance = 1e-9;
  const Eigen::Vector3d center = box_center_cam(label);
  const double scale = 1.0 + options.box_margin;
  const double half_l = scale * label.dims[2] / 2.0 + kFaceTolerance;
  const double half_h = scale * label.dims[0] / 2.0 + kFaceTolerance;
  const double half_w = scale * label.dims[1] / 2.0 + kFaceTolerance;
  const double c = std::cos(label.rotation_y);
  const double s = std::sin(label.rotation_y);

  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d d = to_label_frame(cloud.points[i], calib, options) - center;
    // Inverse of the yaw rotation about the camera y axis.
    const double ox = c * d.x() - s * d.z();
    const double oz = s * d.x() + c * d.z();
    if (std::abs(ox) <= half_l && std::abs(d.y()) <= half_h && std::abs(oz) <= half_w) {
      idx.push_back(i);
    }
  }
  return idx;
}

RgbImage crop_image(const RgbImage& image, const BBox2d& box) {
  if (degenerate(box)) throw Error(ErrorKind::kInvalidLabel, "2D box has zero area");
  auto clamp_to = [](double v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(hi)));
  };
  const std::size_t x0 = clamp_to(std::floor(box.left), image.width);
  const std::size_t x1 = clamp_to(std::ceil(box.right), image.width);
  const std::size_t y0 = clamp_to(std::floor(box.top), image.height);
  const std::size_t y1 = clamp_to(std::ceil(box.bottom), image.height);
  if (x1 <= x0 || y1 <= y0) throw Error(ErrorKind::kInvalidLabel, "2D box lies outside the image");

  RgbImage out;
  out.width = x1 - x0;
  out.height = y1 - y0;
  out.pixels.resize(out.width * out.height * 3);
  for (std::size_t y = y0; y < y1; ++y) {
    std::memcpy(out.at(0, y - y0), image.at(x0, y), out.width * 3);
  }
  return out;
}

Sample extract_object_sample(const PointCloud& cloud, const RgbImage& image,
                             const ObjectLabel& label, const CalibData& calib,
                             const ExtractOptions& options) {
  if (degenerate(label.bbox2d)) throw Error(ErrorKind::kInvalidLabel, "2D box has zero area");

  const bool box_mode = has_box_geometry(label);
  if (!box_mode && label.class_id != ClassId::kDontCare) {
    throw Error(ErrorKind::kInvalidLabel, "object label has non-positive dimensions");
  }
  const auto idx = box_mode ? points_in_label_box(cloud, label, calib, options)
                            : points_in_frustum(cloud, label.bbox2d, calib, options);
  if (idx.empty()) throw Error(ErrorKind::kEmptyObject, "no points inside the object region");

  Sample s;
  s.class_id = label.class_id;
  s.points.points.reserve(idx.size());
  std::vector<double> inten;
  for (auto i : idx) {
    s.points.points.push_back(cloud.points[i]);
    if (cloud.intensities) inten.push_back((*cloud.intensities)[i]);
  }
  if (cloud.intensities) s.points.intensities = std::move(inten);
  s.image = crop_image(image, label.bbox2d);

  if (box_mode) {
    s.distance_m = from_label_frame(box_center_cam(label), calib, options).norm();
  } else {
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& p : s.points.points) centroid += p;
    s.distance_m = (centroid / static_cast<double>(s.points.size())).norm();
  }
  return s;
}

// ---------------------------------------------------------------------------
// dataset ingestion

DatasetLayout DatasetLayout::under(const fs::path& root) {
  return {root / "velodyne", root / "image_2", root / "label_2", root / "calib"};
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open '{}'", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

std::string read_file_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, fmt::format("short write to '{}'", path.string()));
}

void write_file_text(const fs::path& path, std::string_view text) {
  write_file_bytes(path, std::span<const std::uint8_t>(
                             reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Dataset build_dataset(const DatasetLayout& layout, std::size_t limit, const ExtractOptions& options) {
  Dataset ds;
  if (limit == 0) return ds;
  if (!fs::is_directory(layout.label_dir)) {
    throw Error(ErrorKind::kIngestion,
                fmt::format("label directory '{}' does not exist", layout.label_dir.string()));
  }
  std::vector<std::string> frames;
  for (const auto& entry : fs::directory_iterator(layout.label_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      frames.push_back(entry.path().stem().string());
    }
  }
  std::sort(frames.begin(), frames.end());

  for (const auto& frame : frames) {
    const fs::path velo = layout.velodyne_dir / (frame + ".bin");
    if (!fs::exists(velo)) {
      throw Error(ErrorKind::kIngestion, fmt::format("frame {}: missing velodyne scan", frame));
    }
    fs::path image_path;
    for (const char* ext : {".png", ".ppm"}) {
      if (fs::exists(layout.image_dir / (frame + ext))) {
        image_path = layout.image_dir / (frame + ext);
        break;
      }
    }
    if (image_path.empty()) {
      throw Error(ErrorKind::kIngestion, fmt::format("frame {}: missing image", frame));
    }
    CalibData calib = CalibData::identity();
    if (options.use_calib) {
      const fs::path calib_path = layout.calib_dir / (frame + ".txt");
      if (!fs::exists(calib_path)) {
        throw Error(ErrorKind::kIngestion, fmt::format("frame {}: missing calibration", frame));
      }
      calib = parse_calib_file(read_file_text(calib_path));
    }

    const auto labels = parse_label_file(read_file_text(layout.label_dir / (frame + ".txt")));
    const PointCloud cloud = read_velodyne_bin(read_file_bytes(velo));
    const RgbImage image = load_image(read_file_bytes(image_path), *image_format_from_extension(image_path));

    for (std::size_t li = 0; li < labels.size(); ++li) {
      try {
        Sample s = extract_object_sample(cloud, image, labels[li], calib, options);
        s.frame_id = frame;
        ++ds.histogram[static_cast<int>(s.class_id)];
        ds.samples.push_back(std::move(s));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kEmptyObject) throw;
        ds.warnings.push_back(fmt::format("frame {} label {}: {}", frame, li, e.what()));
      }
      if (ds.samples.size() >= limit) return ds;
    }
  }
  return ds;
}

}  // namespace lidarvoice
