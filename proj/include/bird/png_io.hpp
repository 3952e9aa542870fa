#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bird/tensor.hpp"

namespace bird::png_io {

// 16-bit grayscale. Values are expected in [0,1] and are mapped onto the
// 0..65535 integer grid; frames quantized to that grid round-trip exactly.
void write_gray16(const std::string& path, const Tensor& img);
Tensor read_gray16(const std::string& path);

// 8-bit RGB, row-major, 3 bytes per pixel (for plots).
void write_rgb8(const std::string& path, int h, int w, const std::vector<std::uint8_t>& rgb);

// Snaps a value in [0,1] to the 16-bit grid the PNG writer uses.
inline double quantize16(double v) {
    const long q = std::lround(v * 65535.0);
    return static_cast<double>(q) / 65535.0;
}

}  // namespace bird::png_io
