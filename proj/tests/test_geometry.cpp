#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "poselab/geom/dataset.hpp"
#include "poselab/geom/pnp.hpp"
#include "poselab/geom/render.hpp"
#include "poselab/util/rng.hpp"

using namespace poselab;
using namespace poselab::geom;

namespace {

Quat random_quat(Rng& rng) {
    // Uniform over SO(3) via four normals.
    Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    return q.normalized();
}

Pose random_pose(Rng& rng) {
    Pose p;
    p.q = random_quat(rng);
    p.t = {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0.6, 1.4)};
    return p;
}

double mat_max_diff(const Mat3& a, const Mat3& b) {
    double m = 0;
    for (int i = 0; i < 9; ++i)
        m = std::max(m, std::fabs(a.m[std::size_t(i)] - b.m[std::size_t(i)]));
    return m;
}

}  // namespace

TEST_CASE("quaternion-matrix round trip within 1e-12") {
    Rng rng(100);
    for (int i = 0; i < 1000; ++i) {
        Quat q = random_quat(rng);
        Quat q2 = Quat::from_matrix(q.to_matrix());
        CHECK(mat_max_diff(q.to_matrix(), q2.to_matrix()) < 1e-12);
        CHECK(std::fabs(q2.norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("composed pose equals sequential application") {
    Rng rng(101);
    for (int i = 0; i < 200; ++i) {
        Pose a = random_pose(rng), b = random_pose(rng);
        Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        Vec3 seq = a.apply(b.apply(p));
        Vec3 comp = a.compose(b).apply(p);
        CHECK((seq - comp).norm() < 1e-12);
    }
}

TEST_CASE("projection basics") {
    CameraIntrinsics cam{125, 125, 64, 48};

    SUBCASE("identity pose projects (0,0,1) to the principal point") {
        Vec2 p = project_point({0, 0, 1}, Pose{}, cam);
        CHECK(p.u == doctest::Approx(64));
        CHECK(p.v == doctest::Approx(48));
    }
    SUBCASE("doubling fx doubles u - cx") {
        Vec3 pt{0.1, 0.05, 0.8};
        Vec2 a = project_point(pt, Pose{}, cam);
        CameraIntrinsics cam2 = cam;
        cam2.fx *= 2;
        Vec2 b = project_point(pt, Pose{}, cam2);
        CHECK(b.u - cam.cx == doctest::Approx(2 * (a.u - cam.cx)));
    }
    SUBCASE("non-positive depth error names the offending indices") {
        std::vector<Vec3> pts = {{0, 0, 1}, {0, 0, -1}};
        try {
            project_points(pts, Pose{}, cam);
            FAIL("expected depth error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("[1]") != std::string::npos);
        }
    }
}

TEST_CASE("pnp recovers 1000 random poses from exact cube keypoints") {
    auto models = default_objects();
    auto kp3 = models[0].keypoints3d();
    std::vector<Vec3> pts(kp3.begin(), kp3.end());
    CameraIntrinsics cam = default_camera();
    Rng rng(200);
    double worst_rot = 0, worst_t = 0;
    for (int i = 0; i < 1000; ++i) {
        Pose gt = random_pose(rng);
        auto proj = project_points(pts, gt, cam);
        std::vector<Correspondence> corr;
        for (std::size_t j = 0; j < pts.size(); ++j)
            corr.push_back({pts[j], proj[j]});
        Pose est = pnp_dlt(corr, cam);
        worst_rot = std::max(worst_rot, est.q.angle_to(gt.q));
        worst_t = std::max(worst_t, (est.t - gt.t).norm());
    }
    CHECK(worst_rot < 1e-6);
    CHECK(worst_t < 1e-6);
}

TEST_CASE("pnp under 0.5 px noise keeps translation error below 2% of depth") {
    auto models = default_objects();
    auto kp3 = models[0].keypoints3d();
    std::vector<Vec3> pts(kp3.begin(), kp3.end());
    CameraIntrinsics cam = default_camera();
    Rng rng(201);
    double total_rel = 0;
    const int trials = 100;
    for (int i = 0; i < trials; ++i) {
        Pose gt = random_pose(rng);
        auto proj = project_points(pts, gt, cam);
        std::vector<Correspondence> corr;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            Vec2 noisy{proj[j].u + 0.5 * rng.normal(),
                       proj[j].v + 0.5 * rng.normal()};
            corr.push_back({pts[j], noisy});
        }
        Pose est = pnp_dlt(corr, cam);
        total_rel += (est.t - gt.t).norm() / gt.t.z;
    }
    CHECK(total_rel / trials < 0.02);
}

TEST_CASE("pnp rejects fewer than 6 correspondences") {
    CameraIntrinsics cam = default_camera();
    std::vector<Correspondence> corr(5, Correspondence{{0, 0, 1}, {64, 48}});
    CHECK_THROWS_AS((void)pnp_dlt(corr, cam), Error);
}

TEST_CASE("refine_gn") {
    auto models = default_objects();
    auto kp3 = models[0].keypoints3d();
    std::vector<Vec3> pts(kp3.begin(), kp3.end());
    CameraIntrinsics cam = default_camera();
    Rng rng(202);
    Pose gt = random_pose(rng);
    auto proj = project_points(pts, gt, cam);
    std::vector<Correspondence> corr;
    for (std::size_t j = 0; j < pts.size(); ++j) corr.push_back({pts[j], proj[j]});

    SUBCASE("ground-truth start stays put with zero residual") {
        RefineResult r = refine_gn(gt, corr, cam);
        CHECK(!r.degenerate);
        CHECK(r.final_rms < 1e-10);
        CHECK(r.pose.q.angle_to(gt.q) < 1e-10);
    }
    SUBCASE("perturbed start (5 deg / 5% depth) converges below 1e-6") {
        Pose start = gt;
        start.q = (Quat::from_axis_angle({1, 2, 3}, 5 * M_PI / 180) * gt.q)
                      .normalized();
        start.t.z *= 1.05;
        RefineResult r = refine_gn(start, corr, cam, 20);
        CHECK(r.pose.q.angle_to(gt.q) < 1e-6);
        CHECK((r.pose.t - gt.t).norm() < 1e-6);
    }
}

TEST_CASE("ransac pnp") {
    auto models = default_objects();
    CameraIntrinsics cam = default_camera();
    Rng rng(203);
    // Dense correspondences from surface points.
    const auto& pts = models[0].surface_points;
    Pose gt = random_pose(rng);
    auto proj = project_points(pts, gt, cam);
    std::vector<Correspondence> corr;
    for (std::size_t j = 0; j < 60; ++j) corr.push_back({pts[j], proj[j]});

    SUBCASE("recovers under 30% gross outliers") {
        Rng noise(1);
        auto bad = corr;
        for (std::size_t j = 0; j < 18; ++j)
            bad[j].p2d = {noise.uniform(0, 128), noise.uniform(0, 96)};
        Rng r1(7);
        RansacResult res = ransac_pnp(bad, cam, r1);
        CHECK(res.pose.q.angle_to(gt.q) < 1e-3);
        CHECK((res.pose.t - gt.t).norm() < 1e-3);
        CHECK(res.inliers.size() >= 42);
    }
    SUBCASE("all-inlier input matches pnp_dlt + refine") {
        Rng r1(7);
        RansacResult res = ransac_pnp(corr, cam, r1);
        Pose direct = pnp_dlt(corr, cam);
        CHECK(res.pose.q.angle_to(direct.q) < 1e-12);
        CHECK((res.pose.t - direct.t).norm() < 1e-12);
        CHECK(res.inliers.size() == corr.size());
    }
    SUBCASE("seeded runs are identical") {
        Rng ra(42), rb(42);
        RansacResult a = ransac_pnp(corr, cam, ra);
        RansacResult b = ransac_pnp(corr, cam, rb);
        CHECK(a.pose.q.w == b.pose.q.w);
        CHECK(a.pose.t.x == b.pose.t.x);
        CHECK(a.inliers == b.inliers);
    }
    SUBCASE("hopeless correspondences raise pose-not-found") {
        Rng noise(2);
        auto junk = corr;
        for (auto& c : junk)
            c.p2d = {noise.uniform(0, 128), noise.uniform(0, 96)};
        Rng r1(7);
        CHECK_THROWS_WITH_AS((void)ransac_pnp(junk, cam, r1, 64),
                             doctest::Contains("pose not found"), Error);
    }
}

TEST_CASE("render: mask centroid matches projected centroid within 2 px") {
    auto models = default_objects();
    const auto& m = models[0];
    CameraIntrinsics cam = default_camera();
    Pose pose;
    pose.q = Quat::from_axis_angle({1, 1, 0}, 0.4);
    pose.t = {0, 0, 5 * m.diameter};
    auto maps = render_object_maps(m, pose, cam, 128, 96);
    double sy = 0, sx = 0, n = 0;
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 128; ++x)
            if (maps.mask[std::size_t(y) * 128 + x]) {
                sy += y + 0.5;
                sx += x + 0.5;
                ++n;
            }
    REQUIRE(n > 0);
    Vec2 pc = project_point(m.centroid(), pose, cam);
    CHECK(std::fabs(sx / n - pc.u) < 2.0);
    CHECK(std::fabs(sy / n - pc.v) < 2.0);
}

TEST_CASE("render: empty object list gives pure background, zero mask") {
    Rng rng(5);
    RenderOptions opt;
    SceneSample s = render_sample({}, -1, default_camera(), opt, rng);
    for (uint8_t v : s.mask) CHECK(v == 0);
    CHECK(s.objects.empty());
    // image quantized to integers
    for (double v : s.image.data) CHECK(v == std::round(v));
}

TEST_CASE("render: dense coordinates reproject onto their pixel within 1 px") {
    auto models = default_objects();
    CameraIntrinsics cam = default_camera();
    Rng rng(6);
    RenderOptions opt;
    for (int mi = 0; mi < 3; ++mi) {
        const auto& m = models[std::size_t(mi)];
        Pose pose = sample_visible_pose(m, cam, opt, rng);
        auto maps = render_object_maps(m, pose, cam, opt.width, opt.height);
        Vec3 span = m.bbox_hi - m.bbox_lo;
        double worst = 0;
        for (int y = 0; y < opt.height; ++y)
            for (int x = 0; x < opt.width; ++x) {
                if (!maps.mask[std::size_t(y) * opt.width + x]) continue;
                Vec3 mp{m.bbox_lo.x + maps.coords.at3(0, y, x) * span.x,
                        m.bbox_lo.y + maps.coords.at3(1, y, x) * span.y,
                        m.bbox_lo.z + maps.coords.at3(2, y, x) * span.z};
                Vec2 p = project_point(mp, pose, cam);
                worst = std::max(worst, p.dist({x + 0.5, y + 0.5}));
            }
        CHECK(worst < 1.0);
    }
}

TEST_CASE("dataset: generation, reload, determinism") {
    namespace fs = std::filesystem;
    fs::path root = fs::temp_directory_path() / "poselab_ds_test";
    fs::remove_all(root);
    DatasetGenSpec spec;
    spec.n_train = 6;
    spec.n_test = 4;
    spec.seed = 9;
    make_dataset(root.string(), spec);

    SUBCASE("file counts match the spec") {
        int n = 0;
        for (auto& e : fs::directory_iterator(root / "train" / "images")) {
            (void)e;
            ++n;
        }
        CHECK(n == 6);
    }
    SUBCASE("reload returns bit-exact poses and keypoints") {
        Dataset ds = load_dataset(root.string(), "test");
        CHECK(ds.size() == 4);
        CHECK(ds.width == 128);
        CHECK(ds.height == 96);
        // Re-render from the stored pose: identical mask.
        const auto& ann = ds.ann[0].primary();
        const auto& model = ds.model_for_class(ann.cls);
        auto maps =
            render_object_maps(model, ann.pose, ds.ann[0].camera, 128, 96);
        for (std::size_t i = 0; i < maps.mask.size(); ++i) {
            bool gt_obj = ds.masks[0][i] == uint8_t(ann.cls);
            bool re_obj = maps.mask[i] != 0;
            CHECK(gt_obj == re_obj);
        }
    }
    SUBCASE("same seed regenerates identical bytes") {
        fs::path root2 = fs::temp_directory_path() / "poselab_ds_test2";
        fs::remove_all(root2);
        make_dataset(root2.string(), spec);
        for (const char* rel : {"train/annotations.json", "models.json",
                                "train/images/000000.png",
                                "test/masks/000001.png"}) {
            std::ifstream a(root / rel, std::ios::binary);
            std::ifstream b(root2 / rel, std::ios::binary);
            std::string sa((std::istreambuf_iterator<char>(a)),
                           std::istreambuf_iterator<char>());
            std::string sb((std::istreambuf_iterator<char>(b)),
                           std::istreambuf_iterator<char>());
            CHECK(sa == sb);
            CHECK(!sa.empty());
        }
        fs::remove_all(root2);
    }
    SUBCASE("refuses to overwrite a non-empty directory") {
        CHECK_THROWS_AS(make_dataset(root.string(), spec), Error);
        DatasetGenSpec forced = spec;
        forced.force = true;
        forced.n_train = 2;
        forced.n_test = 1;
        make_dataset(root.string(), forced);  // allowed with force
    }
    fs::remove_all(root);
}
