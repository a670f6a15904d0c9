#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "poselab/util/error.hpp"
#include "poselab/util/rng.hpp"

namespace poselab::geom {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{};
    }
};

struct Vec2 {
    double u = 0, v = 0;
    double dist(const Vec2& o) const {
        return std::hypot(u - o.u, v - o.v);
    }
};

struct Mat3 {
    // Row-major.
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * o.m[k * 3 + j];
                r.m[i * 3 + j] = s;
            }
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i * 3 + j] = m[j * 3 + i];
        return r;
    }
    double trace() const { return m[0] + m[4] + m[8]; }
};

// Unit quaternion (w, x, y, z).
struct Quat {
    double w = 1, x = 0, y = 0, z = 0;

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    Quat normalized() const {
        double n = norm();
        require(n > 0, "quat: zero norm");
        return {w / n, x / n, y / n, z / n};
    }
    Quat conjugate() const { return {w, -x, -y, -z}; }
    Quat operator*(const Quat& o) const {
        return {w * o.w - x * o.x - y * o.y - z * o.z,
                w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x,
                w * o.z + x * o.y - y * o.x + z * o.w};
    }
    Mat3 to_matrix() const;
    static Quat from_matrix(const Mat3& r);
    static Quat from_axis_angle(const Vec3& axis, double angle);
    Vec3 rotate(const Vec3& v) const { return to_matrix() * v; }

    // Geodesic angle between the rotations (radians, in [0, pi]).
    double angle_to(const Quat& o) const;
};

struct Pose {
    Quat q;
    Vec3 t;

    Vec3 apply(const Vec3& p) const { return q.to_matrix() * p + t; }
    Pose compose(const Pose& inner) const {
        // this ∘ inner: first inner, then this.
        return {(q * inner.q).normalized(), q.rotate(inner.t) + t};
    }
    Pose inverse() const {
        Quat qi = q.conjugate();
        return {qi, qi.rotate(t) * -1.0};
    }
};

struct CameraIntrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    void validate(int w, int h) const {
        require(fx > 0 && fy > 0, "camera: focal lengths must be positive");
        require(cx > 0 && cx < w && cy > 0 && cy < h,
                "camera: principal point outside image");
    }
};

struct ObjectModel {
    int cls = 0;  // class id; 0 is background
    std::string name;
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<Vec3> surface_points;  // fixed 512 area-weighted samples
    double diameter = 0;
    bool symmetric = false;
    std::vector<Quat> symmetry_rotations;  // finite group, identity included
    Vec3 bbox_lo, bbox_hi;

    // 8 bounding-box corners + box center, the PnP keypoints.
    std::array<Vec3, 9> keypoints3d() const;
    Vec3 centroid() const {
        return (bbox_lo + bbox_hi) * 0.5;
    }
};

// The three desk objects: cuboid, tetrahedron, and a square prism with
// 4-fold symmetry about its long axis. Surface points are sampled with the
// model-specific fixed seed so every evaluation sees identical points.
std::vector<ObjectModel> default_objects();

ObjectModel make_cuboid(int cls, const std::string& name, double sx, double sy,
                        double sz);
ObjectModel make_tetrahedron(int cls, const std::string& name, double edge);
ObjectModel make_square_prism(int cls, const std::string& name, double side,
                              double height);

void finalize_model(ObjectModel& m, uint64_t sample_seed, int n_points = 512);

}  // namespace poselab::geom
