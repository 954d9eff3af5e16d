#include "lidarvoice/png_decoder.hpp"

#include <png.h>

#include <fmt/format.h>

#include "lidarvoice/error.hpp"

namespace lidarvoice {

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(ErrorKind::kMalformedFile, fmt::format("PNG header rejected: {}", img.message));
  }
  img.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = img.width;
  out.height = img.height;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw Error(ErrorKind::kMalformedFile, fmt::format("PNG decode failed: {}", msg));
  }
  if (out.empty()) throw Error(ErrorKind::kMalformedFile, "PNG has zero size");
  return out;
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  if (image.empty()) throw Error(ErrorKind::kInvalidArgument, "cannot encode an empty image");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(ErrorKind::kIo, fmt::format("PNG encode failed: {}", img.message));
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(ErrorKind::kIo, fmt::format("PNG encode failed: {}", img.message));
  }
  out.resize(size);
  return out;
}

void register_png_decoder() { register_image_decoder(ImageFormat::kPng, decode_png); }

}  // namespace lidarvoice
