#pragma once

#include <optional>
#include <vector>

#include "poselab/geom/geom.hpp"
#include "poselab/util/csv.hpp"

namespace poselab::metrics {

using geom::CameraIntrinsics;
using geom::ObjectModel;
using geom::Pose;
using geom::Quat;

// A failed estimate ("object not found") scores as an incorrect pose.
using PoseEstimate = std::optional<Pose>;

// Mean distance between model surface points under the two poses. Symmetric
// models use the nearest-neighbor (ADD-S) variant.
double add_distance(const Pose& est, const Pose& gt, const ObjectModel& model);

// Forced variants, exposed for the brute-force oracle tests.
double add_distance_plain(const Pose& est, const Pose& gt,
                          const ObjectModel& model);
double add_s_distance(const Pose& est, const Pose& gt,
                      const ObjectModel& model);

// Geodesic rotation error, minimized over the model's finite symmetry group.
double rotation_error(const Quat& est, const Quat& gt,
                      const ObjectModel& model);

double add_accuracy(const std::vector<PoseEstimate>& estimates,
                    const std::vector<Pose>& gts, const ObjectModel& model,
                    double threshold_frac = 0.1);

double proj2d_accuracy(const std::vector<PoseEstimate>& estimates,
                       const std::vector<Pose>& gts, const ObjectModel& model,
                       const CameraIntrinsics& cam, double px = 5.0);

double deg_cm_accuracy(const std::vector<PoseEstimate>& estimates,
                       const std::vector<Pose>& gts, const ObjectModel& model,
                       double deg = 5.0, double cm = 5.0);

double binary_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

// Fraction of images whose foreground IoU exceeds 0.7.
double mask_ap70(const std::vector<std::vector<uint8_t>>& pred,
                 const std::vector<std::vector<uint8_t>>& gt);

struct MetricRow {
    std::string object;
    double add = 0, proj2d = 0, deg_cm = 0, mask_ap = 0;
    int samples = 0;
};

}  // namespace poselab::metrics
