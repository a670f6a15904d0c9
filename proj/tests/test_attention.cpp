#include <doctest.h>

#include <cmath>

#include "poselab/cam/cam.hpp"
#include "test_util.hpp"

using namespace poselab;
using namespace poselab::cam;
using namespace poselab::testutil;

namespace {

// Toy classifier: tap = input [K,H,W]; logits = dense(gap(tap)) so each
// logit is an exact linear functional of the tap.
ClassifierForward linear_classifier(const Tensor& dense_w) {
    return [dense_w](Tape& t, NodeId input) {
        ClassifierTaps taps;
        taps.tap = input;
        NodeId g = t.global_avg_pool(input);
        taps.class_logits =
            t.dense(g, t.leaf(dense_w),
                    t.leaf(Tensor::zeros({dense_w.dim(0)})));
        return taps;
    };
}

seg::SegModel small_seg(uint64_t seed, seg::ArchKind kind = seg::ArchKind::unet_lite) {
    seg::SegArchitecture arch;
    arch.kind = kind;
    arch.widths = {4, 6, 8};
    arch.classes = 3;
    arch.height = 32;
    arch.width = 32;
    return seg::SegModel::build(arch, seed);
}

}  // namespace

TEST_CASE("grad-cam: single-channel linear logit gives alpha=1, M=relu(A)") {
    Rng rng(1);
    const int n = 6 * 6;
    Tensor img = random_tensor({1, 6, 6}, rng);
    // y = sum(A) = N * gap(A); dense weight = N.
    Tensor w({1, 1}, {double(n)});
    CamResult r = grad_cam(linear_classifier(w), img, 0);
    CHECK(r.weights.alpha.size() == 1);
    CHECK(r.weights.alpha[0] == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < n; ++i)
        CHECK(r.map.v[std::size_t(i)] ==
              doctest::Approx(std::max(0.0, img.data[std::size_t(i)])));
}

TEST_CASE("grad-cam: y = 2*sum(A1) - sum(A2) gives alpha=(2,-1) exactly") {
    Rng rng(2);
    const int n = 5 * 7;
    Tensor img = random_tensor({2, 5, 7}, rng);
    Tensor w({2, 2}, {2.0 * n, -1.0 * n, 0.0, 1.0 * n});
    CamResult r = grad_cam(linear_classifier(w), img, 0);
    REQUIRE(r.weights.alpha.size() == 2);
    CHECK(r.weights.alpha[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.weights.alpha[1] == doctest::Approx(-1.0).epsilon(1e-12));
    for (int i = 0; i < n; ++i) {
        double expect = std::max(
            0.0, 2 * img.data[std::size_t(i)] - img.data[std::size_t(n + i)]);
        CHECK(r.map.v[std::size_t(i)] == doctest::Approx(expect));
        CHECK(r.map.v[std::size_t(i)] >= 0.0);
    }
}

TEST_CASE("grad-cam on a toy conv net matches a finite-difference oracle") {
    Rng rng(3);
    // Encoder: tap = relu(conv(x)); head: logits = dense(gap(tap)).
    Tensor img = random_tensor({2, 8, 8}, rng, 0.0, 1.0);
    Tensor cw = random_tensor({3, 2, 3, 3}, rng);
    Tensor cb = random_tensor({3}, rng);
    Tensor dw = random_tensor({2, 3}, rng);
    Tensor db = random_tensor({2}, rng);
    const int cls = 1;

    auto fwd = [&](Tape& t, NodeId input) {
        ClassifierTaps taps;
        taps.tap = t.relu(t.conv2d(input, t.leaf(cw), t.leaf(cb)));
        taps.class_logits =
            t.dense(t.global_avg_pool(taps.tap), t.leaf(dw), t.leaf(db));
        return taps;
    };
    CamResult r = grad_cam(fwd, img, cls);

    // Oracle: evaluate the head numerically as a function of the tap.
    auto head_yc = [&](const Tensor& tapv) {
        Tape t;
        NodeId tp = t.leaf(tapv);
        NodeId lg = t.dense(t.global_avg_pool(tp), t.leaf(dw), t.leaf(db));
        return t.val(lg).data[cls];
    };
    Tape enc;
    NodeId ti = enc.leaf(img);
    Tensor tapv = enc.val(enc.relu(enc.conv2d(ti, enc.leaf(cw), enc.leaf(cb))));

    int k = tapv.dim(0);
    std::size_t plane = std::size_t(tapv.dim(1)) * tapv.dim(2);
    const double h = 1e-5;
    std::vector<double> alpha_fd(std::size_t(k), 0.0);
    for (int c = 0; c < k; ++c) {
        double acc = 0;
        for (std::size_t i = 0; i < plane; ++i) {
            Tensor tp = tapv, tm = tapv;
            tp.data[std::size_t(c) * plane + i] += h;
            tm.data[std::size_t(c) * plane + i] -= h;
            acc += (head_yc(tp) - head_yc(tm)) / (2 * h);
        }
        alpha_fd[std::size_t(c)] = acc / double(plane);
    }
    double worst = 0;
    for (std::size_t i = 0; i < plane; ++i) {
        double pre = 0;
        for (int c = 0; c < k; ++c)
            pre += alpha_fd[std::size_t(c)] * tapv.data[std::size_t(c) * plane + i];
        worst = std::max(worst,
                         std::fabs(std::max(0.0, pre) - r.map.v[i]));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("grad-cam rejects a zero-channel tap") {
    auto fwd = [&](Tape& t, NodeId input) {
        ClassifierTaps taps;
        taps.tap = t.leaf(Tensor::zeros({0, 4, 4}));
        taps.class_logits = t.global_avg_pool(
            t.relu(t.conv2d(input, t.leaf(Tensor::full({2, 1, 1, 1}, 1.0)),
                            t.leaf(Tensor::zeros({2})))));
        return taps;
    };
    CHECK_THROWS_AS((void)grad_cam(fwd, Tensor::full({1, 4, 4}, 1.0), 0),
                    Error);
}

TEST_CASE("seg-grad-cam: determinism, fallback, union linearity") {
    Rng rng(4);
    auto model = small_seg(7);
    Tensor img = random_tensor({3, 32, 32}, rng, 0.0, 255.0);

    SUBCASE("fixed pixel set is deterministic") {
        PixelSet ps;
        ps.h = ps.w = 32;
        ps.flat = {5, 80, 555};
        CamResult a = seg_grad_cam(model, img, 1, ps);
        CamResult b = seg_grad_cam(model, img, 1, ps);
        CHECK(a.weights.alpha == b.weights.alpha);
        CHECK(a.map.v == b.map.v);
    }
    SUBCASE("every map entry is nonnegative") {
        CamResult r = seg_grad_cam(model, img, 1, PixelSet::all(32, 32));
        for (double v : r.map.v) CHECK(v >= 0.0);
    }
    SUBCASE("empty pixel set falls back to all pixels with a flag") {
        PixelSet empty;
        empty.h = empty.w = 32;
        CamResult fb = seg_grad_cam(model, img, 2, empty);
        CamResult all = seg_grad_cam(model, img, 2, PixelSet::all(32, 32));
        CHECK(fb.map.pixelset_fallback);
        CHECK(!all.map.pixelset_fallback);
        CHECK(fb.map.v == all.map.v);
    }
    SUBCASE("pre-relu map of a pixel union is the sum of the parts") {
        PixelSet a, b, u;
        a.h = b.h = u.h = 32;
        a.w = b.w = u.w = 32;
        a.flat = {100};
        b.flat = {600, 731};
        u.flat = {100, 600, 731};
        CamResult ra = seg_grad_cam(model, img, 1, a);
        CamResult rb = seg_grad_cam(model, img, 1, b);
        CamResult ru = seg_grad_cam(model, img, 1, u);
        for (std::size_t i = 0; i < ru.map.pre_relu.size(); ++i)
            CHECK(ru.map.pre_relu[i] ==
                  doctest::Approx(ra.map.pre_relu[i] + rb.map.pre_relu[i])
                      .epsilon(1e-9));
    }
}

TEST_CASE("cam linearity: scaling all logits scales weights and pre-relu map") {
    Rng rng(5);
    auto model = small_seg(8);
    Tensor img = random_tensor({3, 32, 32}, rng, 0.0, 255.0);
    PixelSet ps = PixelSet::all(32, 32);
    CamResult base = seg_grad_cam(model, img, 1, ps);

    const double lambda = 3.5;
    auto scaled = model;
    for (const char* name : {"head.w", "head.b"}) {
        int idx = scaled.params().index_of(name);
        REQUIRE(idx >= 0);
        for (double& v : scaled.params().at(idx).value.data) v *= lambda;
    }
    CamResult r = seg_grad_cam(scaled, img, 1, ps);
    for (std::size_t i = 0; i < base.weights.alpha.size(); ++i)
        CHECK(r.weights.alpha[i] ==
              doctest::Approx(lambda * base.weights.alpha[i]).epsilon(1e-9));
    std::size_t argmax_base = 0, argmax_scaled = 0;
    for (std::size_t i = 0; i < base.map.v.size(); ++i) {
        if (base.map.v[i] > base.map.v[argmax_base]) argmax_base = i;
        if (r.map.v[i] > r.map.v[argmax_scaled]) argmax_scaled = i;
        CHECK(r.map.pre_relu[i] ==
              doctest::Approx(lambda * base.map.pre_relu[i]).epsilon(1e-9));
    }
    CHECK(argmax_base == argmax_scaled);
}

TEST_CASE("shift_map") {
    SUBCASE("zero map stays zero") {
        AttentionMap m;
        m.h = 4;
        m.w = 5;
        m.v.assign(20, 0.0);
        m.pre_relu.assign(20, 0.0);
        AttentionMap s = shift_map(m, 2, -1);
        for (double v : s.v) CHECK(v == 0.0);
    }
    SUBCASE("hot pixel lands at (r+dr, c+dc)") {
        AttentionMap m;
        m.h = 6;
        m.w = 7;
        m.v.assign(42, 0.0);
        m.pre_relu.assign(42, 0.0);
        m.v[std::size_t(2) * 7 + 3] = 5.0;
        AttentionMap s = shift_map(m, 3, -2);
        CHECK(s.at(5, 1) == 5.0);
        CHECK(s.mass() == 5.0);
    }
    SUBCASE("centroid moves by exactly the shift when no mass exits") {
        Rng rng(6);
        AttentionMap m;
        m.h = 10;
        m.w = 12;
        m.v.assign(120, 0.0);
        m.pre_relu.assign(120, 0.0);
        for (int r = 3; r < 6; ++r)
            for (int c = 4; c < 8; ++c)
                m.v[std::size_t(r) * 12 + c] = rng.uniform(0.1, 1.0);
        auto c0 = centroid(m);
        AttentionMap s = shift_map(m, 2, -3);
        auto c1 = centroid(s);
        CHECK(c1.first == doctest::Approx(c0.first + 2).epsilon(1e-12));
        CHECK(c1.second == doctest::Approx(c0.second - 3).epsilon(1e-12));
    }
    SUBCASE("out-of-bound shift is rejected") {
        AttentionMap m;
        m.h = 4;
        m.w = 4;
        m.v.assign(16, 1.0);
        m.pre_relu.assign(16, 1.0);
        CHECK_THROWS_AS((void)shift_map(m, 4, 0), Error);
    }
}

TEST_CASE("sample_shift") {
    ShiftSpec spec;  // defaults: the 110-160 band mapped to fractions

    SUBCASE("mode C never shifts rows; mode R never shifts columns") {
        Rng rng(7);
        spec.mode = ShiftSpec::Mode::C;
        for (int i = 0; i < 200; ++i) CHECK(sample_shift(spec, 128, 96, rng).dr == 0.0);
        spec.mode = ShiftSpec::Mode::R;
        for (int i = 0; i < 200; ++i) CHECK(sample_shift(spec, 128, 96, rng).dc == 0.0);
    }
    SUBCASE("1e5 draws stay inside the declared magnitude bounds") {
        Rng rng(8);
        spec.mode = ShiftSpec::Mode::RC;
        spec.row_lo = 0.17;
        spec.row_hi = 0.25;
        spec.col_lo = 0.17;
        spec.col_hi = 0.25;
        double rmin = 1e9, rmax = 0, cmin = 1e9, cmax = 0;
        for (int i = 0; i < 100000; ++i) {
            ShiftSample s = sample_shift(spec, 128, 96, rng);
            rmin = std::min(rmin, std::fabs(s.dr));
            rmax = std::max(rmax, std::fabs(s.dr));
            cmin = std::min(cmin, std::fabs(s.dc));
            cmax = std::max(cmax, std::fabs(s.dc));
        }
        CHECK(rmin >= 0.17 * 96);
        CHECK(rmax <= 0.25 * 96);
        CHECK(cmin >= 0.17 * 128);
        CHECK(cmax <= 0.25 * 128);
    }
    SUBCASE("default fractions map the reference band to 22..32 px on 128x96") {
        Rng rng(9);
        for (int i = 0; i < 5000; ++i) {
            ShiftSample s = sample_shift(spec, 128, 96, rng);
            CHECK(std::fabs(s.dc) >= doctest::Approx(22.0));
            CHECK(std::fabs(s.dc) <= doctest::Approx(32.0));
            CHECK(std::fabs(s.dr) >= doctest::Approx(22.0));
            CHECK(std::fabs(s.dr) <= doctest::Approx(32.0));
        }
    }
    SUBCASE("invalid ranges are rejected") {
        spec.row_lo = 0.0;
        Rng rng(1);
        CHECK_THROWS_AS((void)sample_shift(spec, 128, 96, rng), Error);
    }
}
