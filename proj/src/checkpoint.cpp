#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>
#include <zlib.h>

#include "lidarvoice/error.hpp"
#include "lidarvoice/model.hpp"

// File layout:
//   "LIDARVOICE-CKPT\n"
//   "<header byte count>\n"
//   <JSON header: version, config, tensor directory, payload size and crc32>
//   <payload: packed little-endian float64 values in directory order>

namespace lidarvoice {

namespace {

constexpr std::string_view kMagic = "LIDARVOICE-CKPT\n";

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorKind::kCheckpoint, what); }

nlohmann::json dims_to_json(const ModelDims& d) {
  return {{"num_points", d.num_points}, {"image_size", d.image_size}, {"tnet_point", d.tnet_point},
          {"tnet_dense", d.tnet_dense}, {"lidar_point", d.lidar_point}, {"rgb_conv", d.rgb_conv},
          {"rgb_feature", d.rgb_feature}, {"head_dense", d.head_dense}};
}

ModelDims dims_from_json(const nlohmann::json& j) {
  ModelDims d;
  j.at("num_points").get_to(d.num_points);
  j.at("image_size").get_to(d.image_size);
  j.at("tnet_point").get_to(d.tnet_point);
  j.at("tnet_dense").get_to(d.tnet_dense);
  j.at("lidar_point").get_to(d.lidar_point);
  j.at("rgb_conv").get_to(d.rgb_conv);
  j.at("rgb_feature").get_to(d.rgb_feature);
  j.at("head_dense").get_to(d.head_dense);
  return d;
}

std::uint32_t crc_of(const std::vector<unsigned char>& bytes) {
  return static_cast<std::uint32_t>(crc32_z(0L, bytes.data(), bytes.size()));
}

void append_le(std::span<const double> values, std::vector<unsigned char>& out) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 8);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data() + start, values.data(), values.size() * 8);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(values[i]);
      for (int b = 0; b < 8; ++b) out[start + i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
  }
}

void read_le(const unsigned char* src, std::span<double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(values.data(), src, values.size() * 8);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(src[i * 8 + b]) << (8 * b);
      values[i] = std::bit_cast<double>(bits);
    }
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const ModelConfig& config) {
  std::vector<unsigned char> payload;
  payload.reserve(params.parameter_count() * 8);
  nlohmann::json directory = nlohmann::json::array();
  for (const auto& name : params.names()) {
    const ad::Tensor& t = params.at(name);
    directory.push_back({{"name", name}, {"shape", t.shape()}, {"offset", payload.size()}, {"count", t.size()}});
    append_le(t.values(), payload);
  }
  const nlohmann::json header = {
      {"format_version", kCheckpointVersion},
      {"config",
       {{"dropout_rate", config.dropout_rate},
        {"ortho_weight", config.ortho_weight},
        {"mode", std::string(to_string(config.mode))},
        {"seed", config.seed},
        {"dims", dims_to_json(config.dims)}}},
      {"tensors", directory},
      {"payload_bytes", payload.size()},
      {"payload_crc32", crc_of(payload)},
  };
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write checkpoint '{}'", path.string()));
  out << kMagic << header_text.size() << '\n' << header_text;
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error(ErrorKind::kIo, fmt::format("short write to checkpoint '{}'", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open checkpoint '{}'", path.string()));

  std::string magic(kMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kMagic) fail("not a checkpoint file (bad magic)");
  std::string len_line;
  if (!std::getline(in, len_line)) fail("truncated checkpoint header");
  std::size_t header_len = 0;
  try {
    header_len = std::stoull(len_line);
  } catch (const std::exception&) {
    fail("corrupt checkpoint header length");
  }
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::size_t>(in.gcount()) != header_len) fail("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    fail(fmt::format("unreadable checkpoint header: {}", e.what()));
  }

  Checkpoint ck;
  std::size_t payload_bytes = 0;
  std::uint32_t expected_crc = 0;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      fail(fmt::format("checkpoint format version {} is not supported (expected {})", version, kCheckpointVersion));
    }
    const auto& c = header.at("config");
    c.at("dropout_rate").get_to(ck.config.dropout_rate);
    c.at("ortho_weight").get_to(ck.config.ortho_weight);
    ck.config.mode = fusion_mode_from_string(c.at("mode").get<std::string>());
    c.at("seed").get_to(ck.config.seed);
    ck.config.dims = dims_from_json(c.at("dims"));
    header.at("payload_bytes").get_to(payload_bytes);
    header.at("payload_crc32").get_to(expected_crc);
  } catch (const nlohmann::json::exception& e) {
    fail(fmt::format("incomplete checkpoint header: {}", e.what()));
  }

  std::vector<unsigned char> payload(payload_bytes);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload_bytes));
  if (static_cast<std::size_t>(in.gcount()) != payload_bytes) {
    fail(fmt::format("truncated checkpoint payload: {} of {} bytes", in.gcount(), payload_bytes));
  }
  if (in.peek() != std::char_traits<char>::eof()) fail("trailing bytes after checkpoint payload");
  if (crc_of(payload) != expected_crc) fail("checkpoint payload checksum mismatch");

  // The directory must describe exactly the parameter set the config implies.
  ck.params = init_params(ck.config);
  const auto& directory = header.at("tensors");
  if (directory.size() != ck.params.size()) {
    fail(fmt::format("checkpoint lists {} tensors, model needs {}", directory.size(), ck.params.size()));
  }
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < directory.size(); ++i) {
    const auto& entry = directory[i];
    const auto name = entry.at("name").get<std::string>();
    if (name != ck.params.names()[i]) fail(fmt::format("unexpected tensor '{}' in checkpoint directory", name));
    ad::Tensor& t = ck.params.at(name);
    const auto shape = entry.at("shape").get<ad::Shape>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto count = entry.at("count").get<std::size_t>();
    if (shape != t.shape() || count != t.size()) {
      fail(fmt::format("tensor '{}' has shape {} in checkpoint, model needs {}", name, ad::shape_string(shape),
                       ad::shape_string(t.shape())));
    }
    if (offset != expected_offset || offset + count * 8 > payload.size()) {
      fail(fmt::format("tensor '{}' directory offset disagrees with payload", name));
    }
    read_le(payload.data() + offset, t.mutable_values());
    expected_offset += count * 8;
  }
  if (expected_offset != payload.size()) fail("checkpoint directory does not cover the payload");
  return ck;
}

}  // namespace lidarvoice
