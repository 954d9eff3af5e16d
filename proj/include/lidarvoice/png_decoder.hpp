#pragma once

#include <cstdint>
#include <span>

#include "lidarvoice/kitti_io.hpp"

namespace lidarvoice {

/// 8-bit RGB decode of any PNG libpng understands (palette, gray, alpha and
/// 16-bit inputs are converted).
RgbImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RgbImage& image);

/// Registers decode_png for ImageFormat::kPng.
void register_png_decoder();

}  // namespace lidarvoice
