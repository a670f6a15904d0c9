#include "poselab/geom/pnp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace poselab::geom {

Vec2 project_point(const Vec3& p, const Pose& pose,
                   const CameraIntrinsics& cam) {
    Vec3 c = pose.apply(p);
    require(c.z > 0, "project: non-positive depth ", c.z);
    return {cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy};
}

std::vector<Vec2> project_points(const std::vector<Vec3>& points,
                                 const Pose& pose,
                                 const CameraIntrinsics& cam) {
    Mat3 r = pose.q.to_matrix();
    std::vector<Vec2> out(points.size());
    std::string bad;
    for (std::size_t i = 0; i < points.size(); ++i) {
        Vec3 c = r * points[i] + pose.t;
        if (c.z <= 0) {
            if (!bad.empty()) bad += ",";
            bad += std::to_string(i);
            continue;
        }
        out[i] = {cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy};
    }
    require(bad.empty(), "project: non-positive depth at indices [", bad, "]");
    return out;
}

namespace {

Mat3 skew_rodrigues(const Vec3& w) {
    // exp([w]x) via Rodrigues.
    double th = w.norm();
    Mat3 r;
    if (th < 1e-14) {
        r.m = {1, -w.z, w.y, w.z, 1, -w.x, -w.y, w.x, 1};
        return r;
    }
    Vec3 a = w * (1.0 / th);
    double c = std::cos(th), s = std::sin(th), t = 1 - c;
    r.m = {c + a.x * a.x * t,         a.x * a.y * t - a.z * s,  a.x * a.z * t + a.y * s,
           a.x * a.y * t + a.z * s,   c + a.y * a.y * t,        a.y * a.z * t - a.x * s,
           a.x * a.z * t - a.y * s,   a.y * a.z * t + a.x * s,  c + a.z * a.z * t};
    return r;
}

double reproj_cost(const Pose& pose, const std::vector<Correspondence>& corr,
                   const CameraIntrinsics& cam) {
    Mat3 r = pose.q.to_matrix();
    double cost = 0;
    for (const auto& c : corr) {
        Vec3 pc = r * c.p3d + pose.t;
        if (pc.z <= 1e-9) return std::numeric_limits<double>::infinity();
        double du = cam.fx * pc.x / pc.z + cam.cx - c.p2d.u;
        double dv = cam.fy * pc.y / pc.z + cam.cy - c.p2d.v;
        cost += du * du + dv * dv;
    }
    return cost;
}

}  // namespace

RefineResult refine_gn(const Pose& pose0,
                       const std::vector<Correspondence>& corr,
                       const CameraIntrinsics& cam, int iters) {
    RefineResult out;
    out.pose = pose0;
    double cost = reproj_cost(pose0, corr, cam);
    if (!std::isfinite(cost)) {
        out.degenerate = true;
        return out;
    }
    for (int it = 0; it < iters; ++it) {
        Mat3 r = out.pose.q.to_matrix();
        Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
        for (const auto& c : corr) {
            Vec3 pr = r * c.p3d;  // rotated point, before translation
            Vec3 pc = pr + out.pose.t;
            double iz = 1.0 / pc.z;
            double ru = cam.fx * pc.x * iz + cam.cx - c.p2d.u;
            double rv = cam.fy * pc.y * iz + cam.cy - c.p2d.v;
            // d(proj)/d(pc)
            double ju[3] = {cam.fx * iz, 0, -cam.fx * pc.x * iz * iz};
            double jv[3] = {0, cam.fy * iz, -cam.fy * pc.y * iz * iz};
            // d(pc)/d(omega) = -[pr]x ; d(pc)/d(t) = I
            double dpdw[3][3] = {{0, pr.z, -pr.y},
                                 {-pr.z, 0, pr.x},
                                 {pr.y, -pr.x, 0}};
            Eigen::Matrix<double, 2, 6> J;
            for (int j = 0; j < 3; ++j) {
                double au = 0, av = 0;
                for (int k = 0; k < 3; ++k) {
                    au += ju[k] * dpdw[k][j];
                    av += jv[k] * dpdw[k][j];
                }
                J(0, j) = au;
                J(1, j) = av;
                J(0, 3 + j) = ju[j];
                J(1, 3 + j) = jv[j];
            }
            Eigen::Vector2d res(ru, rv);
            jtj += J.transpose() * J;
            jtr += J.transpose() * res;
        }

        bool accepted = false;
        double lambda = 0.0;
        for (int attempt = 0; attempt < 8; ++attempt) {
            Eigen::Matrix<double, 6, 6> a = jtj;
            for (int d = 0; d < 6; ++d) a(d, d) += lambda;
            Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(a);
            if (ldlt.info() != Eigen::Success) {
                out.degenerate = true;
                out.final_rms = std::sqrt(cost / double(corr.size()) / 2.0);
                return out;
            }
            Eigen::Matrix<double, 6, 1> delta = ldlt.solve(-jtr);
            if (!delta.allFinite()) {
                out.degenerate = true;
                out.final_rms = std::sqrt(cost / double(corr.size()) / 2.0);
                return out;
            }
            Pose cand;
            Mat3 dr = skew_rodrigues({delta(0), delta(1), delta(2)});
            cand.q = Quat::from_matrix(dr * r);
            cand.t = out.pose.t + Vec3{delta(3), delta(4), delta(5)};
            double cand_cost = reproj_cost(cand, corr, cam);
            if (cand_cost <= cost) {
                out.pose = cand;
                cost = cand_cost;
                accepted = true;
                break;
            }
            lambda = (lambda == 0.0) ? 1e-6 : lambda * 100.0;
        }
        if (!accepted) break;  // keep the best pose found so far
        if (cost < 1e-24) break;
    }
    out.final_rms = std::sqrt(cost / double(corr.size()) / 2.0);
    return out;
}

Pose pnp_dlt(const std::vector<Correspondence>& corr,
             const CameraIntrinsics& cam) {
    require(corr.size() >= 6, "pnp: need >= 6 correspondences, got ",
            corr.size());
    const int n = int(corr.size());

    // Hartley-style conditioning: centered, scaled 3D points and normalized
    // image coordinates.
    Vec3 centroid{};
    for (const auto& c : corr) centroid = centroid + c.p3d;
    centroid = centroid * (1.0 / n);
    double avg = 0;
    for (const auto& c : corr) avg += (c.p3d - centroid).norm();
    avg /= n;
    double s3 = avg > 1e-12 ? std::sqrt(3.0) / avg : 1.0;

    Eigen::MatrixXd a(2 * n, 12);
    for (int i = 0; i < n; ++i) {
        Vec3 p = (corr[std::size_t(i)].p3d - centroid) * s3;
        double xn = (corr[std::size_t(i)].p2d.u - cam.cx) / cam.fx;
        double yn = (corr[std::size_t(i)].p2d.v - cam.cy) / cam.fy;
        a.row(2 * i) << p.x, p.y, p.z, 1, 0, 0, 0, 0, -xn * p.x, -xn * p.y,
            -xn * p.z, -xn;
        a.row(2 * i + 1) << 0, 0, 0, 0, p.x, p.y, p.z, 1, -yn * p.x, -yn * p.y,
            -yn * p.z, -yn;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    require(sv(10) > 1e-10 * sv(0), "pnp: degenerate configuration");
    Eigen::VectorXd h = svd.matrixV().col(11);

    // P maps conditioned 3D to normalized image coords; undo conditioning.
    Eigen::Matrix3d mcond;
    mcond << h(0), h(1), h(2), h(4), h(5), h(6), h(8), h(9), h(10);
    Eigen::Vector3d p4(h(3), h(7), h(11));
    Eigen::Matrix3d morig = mcond * s3;
    Eigen::Vector3d c(centroid.x, centroid.y, centroid.z);
    Eigen::Vector3d torig = p4 - morig * c;

    // Fix the global sign so depths come out positive.
    double mean_depth = 0;
    for (const auto& cr : corr) {
        Eigen::Vector3d p(cr.p3d.x, cr.p3d.y, cr.p3d.z);
        mean_depth += (morig.row(2) * p + torig.row(2))(0);
    }
    if (mean_depth < 0) {
        morig = -morig;
        torig = -torig;
    }

    Eigen::JacobiSVD<Eigen::Matrix3d> msvd(
        morig, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = msvd.matrixU(), v = msvd.matrixV();
    Eigen::Matrix3d rot = u * v.transpose();
    if (rot.determinant() < 0) {
        u.col(2) *= -1;
        rot = u * v.transpose();
    }
    double sigma = msvd.singularValues().mean();
    require(sigma > 1e-12 && std::isfinite(sigma),
            "pnp: degenerate configuration");
    Eigen::Vector3d t = torig / sigma;

    Pose pose;
    Mat3 rm;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rm.m[std::size_t(i * 3 + j)] = rot(i, j);
    pose.q = Quat::from_matrix(rm);
    pose.t = {t(0), t(1), t(2)};
    return refine_gn(pose, corr, cam).pose;
}

RansacResult ransac_pnp(const std::vector<Correspondence>& corr,
                        const CameraIntrinsics& cam, Rng& rng, int iters,
                        double inlier_px) {
    require(corr.size() >= 6, "ransac-pnp: need >= 6 correspondences, got ",
            corr.size());
    const int n = int(corr.size());

    auto count_inliers = [&](const Pose& pose, std::vector<int>& idx) {
        idx.clear();
        Mat3 r = pose.q.to_matrix();
        for (int i = 0; i < n; ++i) {
            Vec3 pc = r * corr[std::size_t(i)].p3d + pose.t;
            if (pc.z <= 1e-9) continue;
            double du = cam.fx * pc.x / pc.z + cam.cx - corr[std::size_t(i)].p2d.u;
            double dv = cam.fy * pc.y / pc.z + cam.cy - corr[std::size_t(i)].p2d.v;
            if (du * du + dv * dv < inlier_px * inlier_px) idx.push_back(i);
        }
        return int(idx.size());
    };

    std::vector<int> best_inliers, scratch;
    for (int it = 0; it < iters; ++it) {
        // 6 distinct indices
        std::vector<int> pick;
        while (int(pick.size()) < 6) {
            int c = int(rng.uniform_int(uint64_t(n)));
            if (std::find(pick.begin(), pick.end(), c) == pick.end())
                pick.push_back(c);
        }
        std::vector<Correspondence> sub;
        for (int i : pick) sub.push_back(corr[std::size_t(i)]);
        Pose hyp;
        try {
            hyp = pnp_dlt(sub, cam);
        } catch (const Error&) {
            continue;  // degenerate minimal set
        }
        if (count_inliers(hyp, scratch) > int(best_inliers.size()))
            best_inliers = scratch;
        if (int(best_inliers.size()) == n) break;
    }
    require(int(best_inliers.size()) >= 6, "ransac-pnp: pose not found");

    std::vector<Correspondence> in;
    for (int i : best_inliers) in.push_back(corr[std::size_t(i)]);
    RansacResult out;
    out.pose = pnp_dlt(in, cam);  // includes refinement
    out.inliers = best_inliers;
    return out;
}

}  // namespace poselab::geom
