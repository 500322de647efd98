#pragma once

#include <string>

#include "core/image.hpp"

namespace chromo {

// 8-bit grayscale PNG I/O. The writer clamps to [0,1], quantizes with
// round-half-up, and always emits the same byte stream for the same pixels
// (fixed zlib level, filter type 0), so outputs can be compared bytewise.
void write_png_gray8(const std::string& path, const Image& im);

// Reads an 8-bit grayscale PNG (any of the five standard row filters) and
// returns pixels scaled to [0,1].
Image read_png_gray8(const std::string& path);

}  // namespace chromo
