#pragma once

#include <array>
#include <optional>
#include <vector>

#include "poselab/geom/geom.hpp"
#include "poselab/tensor.hpp"

namespace poselab::geom {

struct RenderedObject {
    int model_idx = 0;
    Pose pose;
    std::array<Vec2, 9> keypoints;  // exact projections, pre-rasterization
};

struct SceneSample {
    Tensor image;               // [3,H,W], integer values in 0..255
    std::vector<uint8_t> mask;  // H*W class indices, 0 = background
    Tensor coords;              // [3,H,W] bbox-normalized model coordinates
    std::vector<RenderedObject> objects;
    CameraIntrinsics camera;
};

struct RenderOptions {
    int width = 128, height = 96;
    double yaw_range = 70 * M_PI / 180;    // about y
    double pitch_range = 45 * M_PI / 180;  // about x
    double roll_range = 45 * M_PI / 180;   // about z
    double z_lo = 0.62, z_hi = 0.95;
    double center_margin = 0.30;  // projected center kept in the middle band
    double distractor_prob = 0.0;
    int max_pose_draws = 100;
};

CameraIntrinsics default_camera();

Pose sample_visible_pose(const ObjectModel& model, const CameraIntrinsics& cam,
                         const RenderOptions& opt, Rng& rng);

// Flat-shaded z-buffered rasterization of the primary object (and optionally
// a non-overlapping distractor of another class) over a random smooth
// background. Pixels are quantized to 8-bit values before return so the PNG
// round trip is lossless.
SceneSample render_sample(const std::vector<ObjectModel>& models,
                          int primary_idx, const CameraIntrinsics& cam,
                          const RenderOptions& opt, Rng& rng);

struct ObjectMaps {
    std::vector<uint8_t> mask;  // H*W, 1 on object pixels
    Tensor coords;              // [3,H,W] bbox-normalized coordinates
};

// Rasterizes one object in isolation: the supervision maps for the dense
// coordinate victim and the render-consistency oracles.
ObjectMaps render_object_maps(const ObjectModel& model, const Pose& pose,
                              const CameraIntrinsics& cam, int width,
                              int height);

}  // namespace poselab::geom
