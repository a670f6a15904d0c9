#include "poselab/geom/render.hpp"

#include "poselab/geom/pnp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace poselab::geom {

CameraIntrinsics default_camera() { return {125.0, 125.0, 64.0, 48.0}; }

namespace {

struct RasterTarget {
    int w = 0, h = 0;
    std::vector<double> zbuf;
    std::vector<uint8_t>* cls = nullptr;
    Tensor* color = nullptr;   // shaded object color
    Tensor* coords = nullptr;  // normalized model coordinates
};

void rasterize_object(const ObjectModel& m, const Pose& pose,
                      const CameraIntrinsics& cam, const Vec3& base_color,
                      RasterTarget& tgt) {
    Mat3 rot = pose.q.to_matrix();
    std::vector<Vec3> cam_pts(m.vertices.size());
    std::vector<Vec2> scr(m.vertices.size());
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
        cam_pts[i] = rot * m.vertices[i] + pose.t;
        require(cam_pts[i].z > 1e-6, "render: vertex behind camera");
        scr[i] = {cam.fx * cam_pts[i].x / cam_pts[i].z + cam.cx,
                  cam.fy * cam_pts[i].y / cam_pts[i].z + cam.cy};
    }
    const Vec3 light = Vec3{-0.35, -0.5, -0.79}.normalized();
    Vec3 span = m.bbox_hi - m.bbox_lo;
    span.x = std::max(span.x, 1e-12);
    span.y = std::max(span.y, 1e-12);
    span.z = std::max(span.z, 1e-12);

    for (const auto& f : m.faces) {
        const Vec2& a = scr[std::size_t(f[0])];
        const Vec2& b = scr[std::size_t(f[1])];
        const Vec2& c = scr[std::size_t(f[2])];
        double area = (b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u);
        if (std::fabs(area) < 1e-12) continue;

        // Flat shading from the camera-frame face normal, flipped toward the
        // camera so winding does not matter.
        Vec3 n = (cam_pts[std::size_t(f[1])] - cam_pts[std::size_t(f[0])])
                     .cross(cam_pts[std::size_t(f[2])] - cam_pts[std::size_t(f[0])])
                     .normalized();
        if (n.z > 0) n = n * -1.0;
        double intensity = 0.35 + 0.60 * std::max(0.0, n.dot(light));

        int x0 = std::max(0, int(std::floor(std::min({a.u, b.u, c.u}) - 0.5)));
        int x1 = std::min(tgt.w - 1, int(std::ceil(std::max({a.u, b.u, c.u}))));
        int y0 = std::max(0, int(std::floor(std::min({a.v, b.v, c.v}) - 0.5)));
        int y1 = std::min(tgt.h - 1, int(std::ceil(std::max({a.v, b.v, c.v}))));

        double inv_area = 1.0 / area;
        const double iz0 = 1.0 / cam_pts[std::size_t(f[0])].z;
        const double iz1 = 1.0 / cam_pts[std::size_t(f[1])].z;
        const double iz2 = 1.0 / cam_pts[std::size_t(f[2])].z;
        const Vec3& m0 = m.vertices[std::size_t(f[0])];
        const Vec3& m1 = m.vertices[std::size_t(f[1])];
        const Vec3& m2 = m.vertices[std::size_t(f[2])];

        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                double px = x + 0.5, py = y + 0.5;
                double w0 = ((b.u - px) * (c.v - py) - (b.v - py) * (c.u - px)) * inv_area;
                double w1 = ((c.u - px) * (a.v - py) - (c.v - py) * (a.u - px)) * inv_area;
                double w2 = 1.0 - w0 - w1;
                if (w0 < 0 || w1 < 0 || w2 < 0) continue;
                // Perspective-correct interpolation via 1/z.
                double iz = w0 * iz0 + w1 * iz1 + w2 * iz2;
                double z = 1.0 / iz;
                std::size_t pi = std::size_t(y) * tgt.w + x;
                if (z >= tgt.zbuf[pi]) continue;
                tgt.zbuf[pi] = z;
                if (tgt.cls) (*tgt.cls)[pi] = uint8_t(m.cls);
                if (tgt.coords) {
                    Vec3 mp = (m0 * (w0 * iz0) + m1 * (w1 * iz1) +
                               m2 * (w2 * iz2)) *
                              z;
                    tgt.coords->at3(0, y, x) = (mp.x - m.bbox_lo.x) / span.x;
                    tgt.coords->at3(1, y, x) = (mp.y - m.bbox_lo.y) / span.y;
                    tgt.coords->at3(2, y, x) = (mp.z - m.bbox_lo.z) / span.z;
                }
                if (tgt.color) {
                    tgt.color->at3(0, y, x) = base_color.x * intensity;
                    tgt.color->at3(1, y, x) = base_color.y * intensity;
                    tgt.color->at3(2, y, x) = base_color.z * intensity;
                }
            }
        }
    }
}

bool fully_visible(const ObjectModel& m, const Pose& pose,
                   const CameraIntrinsics& cam, int w, int h, double margin,
                   Vec2* lo = nullptr, Vec2* hi = nullptr) {
    Mat3 rot = pose.q.to_matrix();
    Vec2 mn{1e18, 1e18}, mx{-1e18, -1e18};
    for (const auto& v : m.vertices) {
        Vec3 c = rot * v + pose.t;
        if (c.z < 0.1) return false;
        double u = cam.fx * c.x / c.z + cam.cx;
        double vv = cam.fy * c.y / c.z + cam.cy;
        mn.u = std::min(mn.u, u);
        mn.v = std::min(mn.v, vv);
        mx.u = std::max(mx.u, u);
        mx.v = std::max(mx.v, vv);
    }
    if (lo) *lo = mn;
    if (hi) *hi = mx;
    return mn.u >= margin && mn.v >= margin && mx.u < w - margin &&
           mx.v < h - margin;
}

Quat sample_rotation(const RenderOptions& opt, Rng& rng) {
    double yaw = rng.uniform(-opt.yaw_range, opt.yaw_range);
    double pitch = rng.uniform(-opt.pitch_range, opt.pitch_range);
    double roll = rng.uniform(-opt.roll_range, opt.roll_range);
    Quat qy = Quat::from_axis_angle({0, 1, 0}, yaw);
    Quat qx = Quat::from_axis_angle({1, 0, 0}, pitch);
    Quat qz = Quat::from_axis_angle({0, 0, 1}, roll);
    return (qx * qy * qz).normalized();
}

Vec3 class_base_color(int cls, Rng& rng) {
    auto jitter = [&rng](double base, double amp) {
        return std::clamp(base + rng.uniform(-amp, amp), 25.0, 240.0);
    };
    switch (cls) {
        case 1: return {jitter(200, 25), jitter(70, 25), jitter(60, 25)};
        case 2: return {jitter(70, 25), jitter(190, 25), jitter(80, 25)};
        default: return {jitter(70, 25), jitter(95, 25), jitter(205, 25)};
    }
}

void paint_background(Tensor& image, Rng& rng) {
    const int h = image.dim(1), w = image.dim(2);
    // Bilinear ramp over a coarse random color grid plus per-pixel noise.
    const int gw = 4, gh = 3;
    double grid[3][gh][gw];
    for (int c = 0; c < 3; ++c)
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx)
                grid[c][gy][gx] = rng.uniform(25, 230);
    for (int y = 0; y < h; ++y) {
        double fy = double(y) / (h - 1) * (gh - 1);
        int y0 = std::min(gh - 2, int(fy));
        double ty = fy - y0;
        for (int x = 0; x < w; ++x) {
            double fx = double(x) / (w - 1) * (gw - 1);
            int x0 = std::min(gw - 2, int(fx));
            double tx = fx - x0;
            double noise = rng.uniform(-6, 6);
            for (int c = 0; c < 3; ++c) {
                double v00 = grid[c][y0][x0], v01 = grid[c][y0][x0 + 1];
                double v10 = grid[c][y0 + 1][x0], v11 = grid[c][y0 + 1][x0 + 1];
                double v = (1 - ty) * ((1 - tx) * v00 + tx * v01) +
                           ty * ((1 - tx) * v10 + tx * v11);
                image.at3(c, y, x) = v + noise;
            }
        }
    }
}

}  // namespace

Pose sample_visible_pose(const ObjectModel& model, const CameraIntrinsics& cam,
                         const RenderOptions& opt, Rng& rng) {
    for (int attempt = 0; attempt < opt.max_pose_draws; ++attempt) {
        Pose pose;
        pose.q = sample_rotation(opt, rng);
        double z = rng.uniform(opt.z_lo, opt.z_hi);
        double u = rng.uniform(opt.center_margin * opt.width,
                               (1 - opt.center_margin) * opt.width);
        double v = rng.uniform(opt.center_margin * opt.height,
                               (1 - opt.center_margin) * opt.height);
        pose.t = {z * (u - cam.cx) / cam.fx, z * (v - cam.cy) / cam.fy, z};
        if (fully_visible(model, pose, cam, opt.width, opt.height, 2.0))
            return pose;
    }
    fail("render: no fully visible pose found in ", opt.max_pose_draws,
         " draws for ", model.name);
}

SceneSample render_sample(const std::vector<ObjectModel>& models,
                          int primary_idx, const CameraIntrinsics& cam,
                          const RenderOptions& opt, Rng& rng) {
    cam.validate(opt.width, opt.height);
    SceneSample s;
    s.camera = cam;
    s.image = Tensor::zeros({3, opt.height, opt.width});
    s.coords = Tensor::zeros({3, opt.height, opt.width});
    s.mask.assign(std::size_t(opt.height) * opt.width, 0);
    paint_background(s.image, rng);

    RasterTarget tgt;
    tgt.w = opt.width;
    tgt.h = opt.height;
    tgt.zbuf.assign(s.mask.size(), std::numeric_limits<double>::infinity());
    tgt.cls = &s.mask;
    tgt.color = &s.image;
    tgt.coords = &s.coords;

    auto add_object = [&](int idx, const Pose& pose) {
        const ObjectModel& m = models[std::size_t(idx)];
        RenderedObject ro;
        ro.model_idx = idx;
        ro.pose = pose;
        auto k3 = m.keypoints3d();
        for (int i = 0; i < 9; ++i)
            ro.keypoints[std::size_t(i)] = project_point(k3[std::size_t(i)], pose, cam);
        rasterize_object(m, pose, cam, class_base_color(m.cls, rng), tgt);
        s.objects.push_back(ro);
    };

    if (!models.empty() && primary_idx >= 0) {
        Pose pose = sample_visible_pose(models[std::size_t(primary_idx)], cam,
                                        opt, rng);
        add_object(primary_idx, pose);

        if (models.size() > 1 && rng.uniform() < opt.distractor_prob) {
            int other = int(rng.uniform_int(models.size() - 1));
            if (other >= primary_idx) ++other;
            // The distractor must be fully visible and must not overlap the
            // primary silhouette; give up silently after the draw budget.
            Vec2 plo, phi;
            fully_visible(models[std::size_t(primary_idx)], pose, cam,
                          opt.width, opt.height, 2.0, &plo, &phi);
            for (int attempt = 0; attempt < opt.max_pose_draws; ++attempt) {
                Pose dp;
                dp.q = sample_rotation(opt, rng);
                double z = rng.uniform(opt.z_lo, opt.z_hi);
                double u = rng.uniform(0.1 * opt.width, 0.9 * opt.width);
                double v = rng.uniform(0.1 * opt.height, 0.9 * opt.height);
                dp.t = {z * (u - cam.cx) / cam.fx, z * (v - cam.cy) / cam.fy, z};
                Vec2 dlo, dhi;
                if (!fully_visible(models[std::size_t(other)], dp, cam,
                                   opt.width, opt.height, 2.0, &dlo, &dhi))
                    continue;
                bool overlap = dlo.u < phi.u + 2 && dhi.u > plo.u - 2 &&
                               dlo.v < phi.v + 2 && dhi.v > plo.v - 2;
                if (overlap) continue;
                add_object(other, dp);
                break;
            }
        }
    }

    // Quantize so saved PNGs reload bit-exactly.
    for (double& v : s.image.data)
        v = std::clamp(std::round(v), 0.0, 255.0);
    return s;
}

ObjectMaps render_object_maps(const ObjectModel& model, const Pose& pose,
                              const CameraIntrinsics& cam, int width,
                              int height) {
    ObjectMaps om;
    om.mask.assign(std::size_t(width) * height, 0);
    om.coords = Tensor::zeros({3, height, width});
    RasterTarget tgt;
    tgt.w = width;
    tgt.h = height;
    tgt.zbuf.assign(om.mask.size(), std::numeric_limits<double>::infinity());
    std::vector<uint8_t> cls(om.mask.size(), 0);
    tgt.cls = &cls;
    tgt.coords = &om.coords;
    rasterize_object(model, pose, cam, {0, 0, 0}, tgt);
    for (std::size_t i = 0; i < cls.size(); ++i) om.mask[i] = cls[i] ? 1 : 0;
    return om;
}

}  // namespace poselab::geom
