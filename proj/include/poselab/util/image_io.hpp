#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "poselab/tensor.hpp"

namespace poselab {

// 8-bit image, interleaved rows, channels = 1 (gray) or 3 (RGB).
struct Image8 {
    int w = 0, h = 0, channels = 0;
    std::vector<uint8_t> pixels;

    uint8_t& at(int y, int x, int c) {
        return pixels[(std::size_t(y) * w + x) * channels + c];
    }
    uint8_t at(int y, int x, int c) const {
        return pixels[(std::size_t(y) * w + x) * channels + c];
    }
};

void write_png(const std::string& path, const Image8& img);
Image8 read_png(const std::string& path);

// [3,H,W] tensor in the 0-255 domain <-> RGB image. Values are rounded to
// nearest and clamped on the way out.
Image8 tensor_to_rgb8(const Tensor& t);
Tensor rgb8_to_tensor(const Image8& img);

Image8 mask_to_gray8(const std::vector<uint8_t>& mask, int h, int w);

}  // namespace poselab
