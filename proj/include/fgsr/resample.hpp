#pragma once

#include "fgsr/tensor.hpp"

namespace fgsr {

// Catmull-Rom-style cubic kernel, a = -0.5.
double cubic_kernel(double x);

// Bicubic downscale by an integer factor with antialias prefiltering (the
// kernel is stretched by the scale). The input is center-cropped to the
// largest scale-divisible region first; output values are clamped to [0,1].
// img is {C,H,W}.
Tensor bicubic_downscale(const Tensor& img, int scale);

// The 8 dihedral transforms: k = rot + 4*flip with rot in 0..3. rot=1 maps
// in[i,j] to out[j, H-1-i]; flip mirrors horizontally before rotating.
Tensor dihedral_transform(const Tensor& img, int k);
int dihedral_inverse(int k);

Tensor center_crop_to_multiple(const Tensor& img, int multiple);

}  // namespace fgsr
