#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace glamap::io {

/// 8-bit RGB PNG, zlib-compressed. `rgb` is row-major, 3 bytes per pixel.
void write_png_rgb(const std::string& path, const uint8_t* rgb, int width, int height);

}  // namespace glamap::io
