#pragma once

#include <string>

#include "poselab/cam/cam.hpp"
#include "poselab/util/image_io.hpp"

namespace poselab::cam {

// Attention map bilinearly upsampled to the image size, jet-style color
// ramp, alpha-0.5 blend over the image.
Image8 render_overlay(const Tensor& image255, const AttentionMap& map);
void save_overlay_png(const std::string& path, const Tensor& image255,
                      const AttentionMap& map);

}  // namespace poselab::cam
