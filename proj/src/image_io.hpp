#pragma once

#include "image.hpp"

#include <string>

namespace glma {

// Lossless 8-bit RGB PNG round trip. Values map linearly: [-1, 1] <-> [0, 255]
// with round-to-nearest on write, so write(read(p)) preserves bytes.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

uint8_t pixel_to_u8(double v);
double u8_to_pixel(uint8_t b);

} // namespace glma
