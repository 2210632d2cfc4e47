#pragma once

#include <string>

#include "fgsr/tensor.hpp"

namespace fgsr {

// Reads an 8/16-bit PNG into a {C,H,W} tensor scaled to [0,1]. Palette and
// gray images are expanded; alpha is stripped. Anything that is not a PNG is
// rejected (HR ground truth must be lossless).
Tensor load_png(const std::string& path);

// Writes a {C,H,W} tensor (C = 1 or 3) as an 8-bit PNG, clamping to [0,1].
void save_png(const std::string& path, const Tensor& img);

bool is_png_file(const std::string& path);

}  // namespace fgsr
