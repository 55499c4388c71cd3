#pragma once

#include <string>

#include "dipstop/image.hpp"

namespace dipstop {

// Reads an 8- or 16-bit PNG. Grayscale maps to 1 channel, RGB to 3; palette
// images are expanded, alpha is dropped. Values are scaled to [0,1] by the
// bit-depth maximum (255 or 65535), no gamma handling.
Image load_image(const std::string& path);

// Writes an 8-bit PNG (grayscale for 1 channel, RGB for 3). The quantization
// rule is round(clamp(v, 0, 1) * 255).
void save_image(const Image& img, const std::string& path);

// Reads a mask PNG: byte 0 marks a missing pixel, 255 a known one; any other
// value is a decode error. Multi-channel masks must agree across channels.
Mask load_mask(const std::string& path);

void save_mask(const Mask& m, const std::string& path);

}  // namespace dipstop
