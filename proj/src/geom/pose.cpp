#include <algorithm>

#include "poselab/geom/geom.hpp"

namespace poselab::geom {

Mat3 Quat::to_matrix() const {
    Mat3 r;
    double xx = x * x, yy = y * y, zz = z * z;
    double xy = x * y, xz = x * z, yz = y * z;
    double wx = w * x, wy = w * y, wz = w * z;
    r.m = {1 - 2 * (yy + zz), 2 * (xy - wz),     2 * (xz + wy),
           2 * (xy + wz),     1 - 2 * (xx + zz), 2 * (yz - wx),
           2 * (xz - wy),     2 * (yz + wx),     1 - 2 * (xx + yy)};
    return r;
}

Quat Quat::from_matrix(const Mat3& r) {
    // Shepperd's method: pick the largest diagonal combination.
    const auto& m = r.m;
    double tr = r.trace();
    Quat q;
    if (tr > 0) {
        double s = std::sqrt(tr + 1.0) * 2;
        q.w = 0.25 * s;
        q.x = (m[7] - m[5]) / s;
        q.y = (m[2] - m[6]) / s;
        q.z = (m[3] - m[1]) / s;
    } else if (m[0] > m[4] && m[0] > m[8]) {
        double s = std::sqrt(1.0 + m[0] - m[4] - m[8]) * 2;
        q.w = (m[7] - m[5]) / s;
        q.x = 0.25 * s;
        q.y = (m[1] + m[3]) / s;
        q.z = (m[2] + m[6]) / s;
    } else if (m[4] > m[8]) {
        double s = std::sqrt(1.0 + m[4] - m[0] - m[8]) * 2;
        q.w = (m[2] - m[6]) / s;
        q.x = (m[1] + m[3]) / s;
        q.y = 0.25 * s;
        q.z = (m[5] + m[7]) / s;
    } else {
        double s = std::sqrt(1.0 + m[8] - m[0] - m[4]) * 2;
        q.w = (m[3] - m[1]) / s;
        q.x = (m[2] + m[6]) / s;
        q.y = (m[5] + m[7]) / s;
        q.z = 0.25 * s;
    }
    return q.normalized();
}

Quat Quat::from_axis_angle(const Vec3& axis, double angle) {
    Vec3 a = axis.normalized();
    double s = std::sin(angle / 2);
    return Quat{std::cos(angle / 2), a.x * s, a.y * s, a.z * s};
}

double Quat::angle_to(const Quat& o) const {
    double d = std::fabs(w * o.w + x * o.x + y * o.y + z * o.z);
    d = std::min(1.0, d);
    return 2.0 * std::acos(d);
}

std::array<Vec3, 9> ObjectModel::keypoints3d() const {
    std::array<Vec3, 9> k;
    const Vec3& lo = bbox_lo;
    const Vec3& hi = bbox_hi;
    int i = 0;
    for (double zc : {lo.z, hi.z})
        for (double yc : {lo.y, hi.y})
            for (double xc : {lo.x, hi.x}) k[std::size_t(i++)] = {xc, yc, zc};
    k[8] = centroid();
    return k;
}

namespace {

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

void compute_bounds_and_diameter(ObjectModel& m) {
    require(!m.vertices.empty(), "model: no vertices");
    m.bbox_lo = m.bbox_hi = m.vertices[0];
    for (const auto& v : m.vertices) {
        m.bbox_lo.x = std::min(m.bbox_lo.x, v.x);
        m.bbox_lo.y = std::min(m.bbox_lo.y, v.y);
        m.bbox_lo.z = std::min(m.bbox_lo.z, v.z);
        m.bbox_hi.x = std::max(m.bbox_hi.x, v.x);
        m.bbox_hi.y = std::max(m.bbox_hi.y, v.y);
        m.bbox_hi.z = std::max(m.bbox_hi.z, v.z);
    }
    double d = 0;
    for (std::size_t i = 0; i < m.vertices.size(); ++i)
        for (std::size_t j = i + 1; j < m.vertices.size(); ++j)
            d = std::max(d, (m.vertices[i] - m.vertices[j]).norm());
    m.diameter = d;
    require(m.diameter > 0, "model ", m.name, ": zero diameter");
}

}  // namespace

void finalize_model(ObjectModel& m, uint64_t sample_seed, int n_points) {
    compute_bounds_and_diameter(m);
    if (m.symmetry_rotations.empty()) m.symmetry_rotations = {Quat{}};
    // Area-weighted triangle sampling with a fixed per-model seed. The set
    // is closed under the symmetry group (base points replicated through
    // every group rotation), so ADD-S is exactly zero for symmetry-
    // equivalent poses.
    Rng rng(sample_seed);
    std::vector<double> cum;
    double total = 0;
    for (const auto& f : m.faces) {
        total += triangle_area(m.vertices[std::size_t(f[0])],
                               m.vertices[std::size_t(f[1])],
                               m.vertices[std::size_t(f[2])]);
        cum.push_back(total);
    }
    require(total > 0, "model ", m.name, ": degenerate faces");
    int group = int(m.symmetry_rotations.size());
    int n_base = std::max(1, n_points / group);
    m.surface_points.clear();
    m.surface_points.reserve(std::size_t(n_base * group));
    for (int i = 0; i < n_base; ++i) {
        double r = rng.uniform(0, total);
        std::size_t fi =
            std::size_t(std::lower_bound(cum.begin(), cum.end(), r) - cum.begin());
        if (fi >= m.faces.size()) fi = m.faces.size() - 1;
        const auto& f = m.faces[fi];
        double u = rng.uniform(), v = rng.uniform();
        if (u + v > 1) {
            u = 1 - u;
            v = 1 - v;
        }
        const Vec3& a = m.vertices[std::size_t(f[0])];
        const Vec3& b = m.vertices[std::size_t(f[1])];
        const Vec3& c = m.vertices[std::size_t(f[2])];
        Vec3 base = a + (b - a) * u + (c - a) * v;
        for (const auto& s : m.symmetry_rotations)
            m.surface_points.push_back(s.rotate(base));
    }
}

ObjectModel make_cuboid(int cls, const std::string& name, double sx, double sy,
                        double sz) {
    ObjectModel m;
    m.cls = cls;
    m.name = name;
    double hx = sx / 2, hy = sy / 2, hz = sz / 2;
    for (double zc : {-hz, hz})
        for (double yc : {-hy, hy})
            for (double xc : {-hx, hx}) m.vertices.push_back({xc, yc, zc});
    // 12 triangles, outward winding not required by the flat-shaded renderer.
    m.faces = {{0, 1, 3}, {0, 3, 2}, {4, 6, 7}, {4, 7, 5},
               {0, 4, 5}, {0, 5, 1}, {2, 3, 7}, {2, 7, 6},
               {0, 2, 6}, {0, 6, 4}, {1, 5, 7}, {1, 7, 3}};
    m.symmetry_rotations = {Quat{}};
    return m;
}

ObjectModel make_tetrahedron(int cls, const std::string& name, double edge) {
    ObjectModel m;
    m.cls = cls;
    m.name = name;
    double s = edge / (2.0 * std::sqrt(2.0));
    m.vertices = {{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}};
    m.faces = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
    m.symmetry_rotations = {Quat{}};
    return m;
}

ObjectModel make_square_prism(int cls, const std::string& name, double side,
                              double height) {
    ObjectModel m = make_cuboid(cls, name, side, side, height);
    m.symmetric = true;
    m.symmetry_rotations.clear();
    for (int i = 0; i < 4; ++i)
        m.symmetry_rotations.push_back(
            Quat::from_axis_angle({0, 0, 1}, i * M_PI / 2));
    return m;
}

std::vector<ObjectModel> default_objects() {
    std::vector<ObjectModel> out;
    out.push_back(make_cuboid(1, "cuboid", 0.20, 0.14, 0.10));
    out.push_back(make_tetrahedron(2, "tetra", 0.24));
    out.push_back(make_square_prism(3, "prism", 0.10, 0.22));
    for (std::size_t i = 0; i < out.size(); ++i)
        finalize_model(out[i], 0xC0FFEE00ull + i);
    return out;
}

}  // namespace poselab::geom
