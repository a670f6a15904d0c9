#include "poselab/metrics/metrics.hpp"

#include <cmath>
#include <functional>

#include "poselab/geom/pnp.hpp"

namespace poselab::metrics {

using geom::Mat3;
using geom::Vec3;

double add_distance_plain(const Pose& est, const Pose& gt,
                          const ObjectModel& model) {
    require(!model.surface_points.empty(), "add: model has no surface points");
    Mat3 re = est.q.to_matrix(), rg = gt.q.to_matrix();
    double acc = 0;
    for (const auto& p : model.surface_points)
        acc += ((re * p + est.t) - (rg * p + gt.t)).norm();
    return acc / double(model.surface_points.size());
}

double add_s_distance(const Pose& est, const Pose& gt,
                      const ObjectModel& model) {
    require(!model.surface_points.empty(), "add-s: model has no surface points");
    Mat3 re = est.q.to_matrix(), rg = gt.q.to_matrix();
    std::vector<Vec3> gt_pts;
    gt_pts.reserve(model.surface_points.size());
    for (const auto& p : model.surface_points) gt_pts.push_back(rg * p + gt.t);
    double acc = 0;
    for (const auto& p : model.surface_points) {
        Vec3 e = re * p + est.t;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& g : gt_pts) {
            double dx = e.x - g.x, dy = e.y - g.y, dz = e.z - g.z;
            best = std::min(best, dx * dx + dy * dy + dz * dz);
        }
        acc += std::sqrt(best);
    }
    return acc / double(model.surface_points.size());
}

double add_distance(const Pose& est, const Pose& gt, const ObjectModel& model) {
    return model.symmetric ? add_s_distance(est, gt, model)
                           : add_distance_plain(est, gt, model);
}

double rotation_error(const Quat& est, const Quat& gt,
                      const ObjectModel& model) {
    double best = M_PI;
    for (const auto& s : model.symmetry_rotations)
        best = std::min(best, est.angle_to(gt * s));
    return best;
}

namespace {
double accuracy_over(const std::vector<PoseEstimate>& estimates,
                     const std::vector<Pose>& gts,
                     const std::function<bool(const Pose&, const Pose&)>& ok) {
    require(estimates.size() == gts.size(), "metrics: ", estimates.size(),
            " estimates vs ", gts.size(), " ground truths");
    require(!estimates.empty(), "metrics: empty estimate list");
    int correct = 0;
    for (std::size_t i = 0; i < estimates.size(); ++i)
        if (estimates[i].has_value() && ok(*estimates[i], gts[i])) ++correct;
    return double(correct) / double(estimates.size());
}
}  // namespace

double add_accuracy(const std::vector<PoseEstimate>& estimates,
                    const std::vector<Pose>& gts, const ObjectModel& model,
                    double threshold_frac) {
    double thr = threshold_frac * model.diameter;
    return accuracy_over(estimates, gts, [&](const Pose& e, const Pose& g) {
        return add_distance(e, g, model) < thr;
    });
}

double proj2d_accuracy(const std::vector<PoseEstimate>& estimates,
                       const std::vector<Pose>& gts, const ObjectModel& model,
                       const CameraIntrinsics& cam, double px) {
    return accuracy_over(estimates, gts, [&](const Pose& e, const Pose& g) {
        Mat3 re = e.q.to_matrix(), rg = g.q.to_matrix();
        double acc = 0;
        for (const auto& p : model.surface_points) {
            Vec3 pe = re * p + e.t;
            Vec3 pg = rg * p + g.t;
            if (pe.z <= 1e-9 || pg.z <= 1e-9) return false;
            double du = cam.fx * pe.x / pe.z - cam.fx * pg.x / pg.z;
            double dv = cam.fy * pe.y / pe.z - cam.fy * pg.y / pg.z;
            acc += std::hypot(du, dv);
        }
        return acc / double(model.surface_points.size()) < px;
    });
}

double deg_cm_accuracy(const std::vector<PoseEstimate>& estimates,
                       const std::vector<Pose>& gts, const ObjectModel& model,
                       double deg, double cm) {
    double rad = deg * M_PI / 180.0;
    double m = cm / 100.0;
    return accuracy_over(estimates, gts, [&](const Pose& e, const Pose& g) {
        return rotation_error(e.q, g.q, model) < rad && (e.t - g.t).norm() < m;
    });
}

double binary_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    require(a.size() == b.size(), "iou: mask size mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        bool pa = a[i] != 0, pb = b[i] != 0;
        inter += std::size_t(pa && pb);
        uni += std::size_t(pa || pb);
    }
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

double mask_ap70(const std::vector<std::vector<uint8_t>>& pred,
                 const std::vector<std::vector<uint8_t>>& gt) {
    require(pred.size() == gt.size(), "mask-ap: list size mismatch");
    require(!pred.empty(), "mask-ap: empty list");
    int hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (binary_iou(pred[i], gt[i]) > 0.7) ++hits;
    return double(hits) / double(pred.size());
}

}  // namespace poselab::metrics
