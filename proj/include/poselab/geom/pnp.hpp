#pragma once

#include <optional>
#include <vector>

#include "poselab/geom/geom.hpp"

namespace poselab::geom {

struct Correspondence {
    Vec3 p3d;
    Vec2 p2d;
};

// u = fx*X/Z + cx, v = fy*Y/Z + cy after pose transform. Throws when any
// transformed point has non-positive depth (the message lists the indices).
std::vector<Vec2> project_points(const std::vector<Vec3>& points,
                                 const Pose& pose,
                                 const CameraIntrinsics& cam);
Vec2 project_point(const Vec3& p, const Pose& pose,
                   const CameraIntrinsics& cam);

struct RefineResult {
    Pose pose;
    bool degenerate = false;  // singular normal equations, pose0 returned
    double final_rms = 0;
};

// Gauss-Newton on reprojection residuals over axis-angle + translation with
// a multiplicative damping fallback; accepted steps never increk the cost.
RefineResult refine_gn(const Pose& pose0,
                       const std::vector<Correspondence>& corr,
                       const CameraIntrinsics& cam, int iters = 10);

// Linear DLT from >= 6 non-degenerate correspondences, rotation projected to
// SO(3), then refined by refine_gn.
Pose pnp_dlt(const std::vector<Correspondence>& corr,
             const CameraIntrinsics& cam);

struct RansacResult {
    Pose pose;
    std::vector<int> inliers;
};

// Minimal-set (6) consensus with final refinement on the inlier set.
// Deterministic given the rng stream. Throws "pose not found" when no
// hypothesis reaches 6 inliers.
RansacResult ransac_pnp(const std::vector<Correspondence>& corr,
                        const CameraIntrinsics& cam, Rng& rng,
                        int iters = 256, double inlier_px = 3.0);

}  // namespace poselab::geom
