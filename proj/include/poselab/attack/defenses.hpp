#pragma once

#include "poselab/tensor.hpp"
#include "poselab/util/rng.hpp"

namespace poselab::attack {

// Test-time input purification: 8x8 block DCT per channel, standard
// luminance quantization table scaled by quality in [1,100], dequantize,
// inverse DCT, clamp to [0,255]. Sizes not divisible by 8 are reflect-padded
// and cropped back.
Tensor jpeg_defense(const Tensor& image255, int quality);

// n random pixels replaced by random neighbors within an odd window, then
// 3x3 median smoothing per channel (replicated borders).
Tensor pixel_deflection(const Tensor& image255, int n_deflections, int window,
                        Rng& rng);

double psnr(const Tensor& a, const Tensor& b, double peak = 255.0);

}  // namespace poselab::attack
