// Scalar vs AVX2 kernel equivalence. Map-style kernels must match bitwise;
// reduction-style kernels (weight gradients) to 1e-12 relative error.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "poselab/kernels/kernels.hpp"
#include "poselab/util/rng.hpp"

using namespace poselab;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -2.0,
                               double hi = 2.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), 1e-6});
        m = std::max(m, std::fabs(a[i] - b[i]) / denom);
    }
    return m;
}

struct ConvCase {
    int cin, cout, k, h, w;
};

}  // namespace

#if defined(POSELAB_HAVE_AVX2_KERNELS)

TEST_CASE("conv2d forward: avx2 bitwise-identical to scalar") {
    if (!kernels::cpu_has_avx2()) return;
    Rng rng(11);
    const ConvCase cases[] = {
        {1, 1, 1, 5, 7}, {3, 8, 3, 12, 16}, {4, 6, 5, 9, 13},
        {2, 3, 3, 6, 5}, {8, 16, 3, 24, 32}};
    for (auto [cin, cout, k, h, w] : cases) {
        auto x = random_vec(std::size_t(cin) * h * w, rng);
        auto wt = random_vec(std::size_t(cout) * cin * k * k, rng);
        auto b = random_vec(std::size_t(cout), rng);
        std::vector<double> ys(std::size_t(cout) * h * w, 0.0), yv = ys;
        kernels::scalar::conv2d_fwd(x.data(), cin, h, w, wt.data(), cout, k,
                                    b.data(), ys.data());
        kernels::avx2::conv2d_fwd(x.data(), cin, h, w, wt.data(), cout, k,
                                  b.data(), yv.data());
        CHECK(bitwise_equal(ys, yv));
    }
}

TEST_CASE("conv2d input gradient: avx2 bitwise-identical to scalar") {
    if (!kernels::cpu_has_avx2()) return;
    Rng rng(12);
    const ConvCase cases[] = {{3, 8, 3, 12, 16}, {4, 6, 5, 9, 13}, {1, 2, 1, 7, 7}};
    for (auto [cin, cout, k, h, w] : cases) {
        auto gy = random_vec(std::size_t(cout) * h * w, rng);
        auto wt = random_vec(std::size_t(cout) * cin * k * k, rng);
        auto seed = random_vec(std::size_t(cin) * h * w, rng);
        auto gs = seed, gv = seed;  // accumulation into non-zero buffers
        kernels::scalar::conv2d_bwd_input(gy.data(), cout, h, w, wt.data(),
                                          cin, k, gs.data());
        kernels::avx2::conv2d_bwd_input(gy.data(), cout, h, w, wt.data(), cin,
                                        k, gv.data());
        CHECK(bitwise_equal(gs, gv));
    }
}

TEST_CASE("conv2d weight gradient: avx2 matches scalar within 1e-12") {
    if (!kernels::cpu_has_avx2()) return;
    Rng rng(13);
    const ConvCase cases[] = {{3, 8, 3, 12, 16}, {4, 6, 5, 9, 13}};
    for (auto [cin, cout, k, h, w] : cases) {
        auto x = random_vec(std::size_t(cin) * h * w, rng);
        auto gy = random_vec(std::size_t(cout) * h * w, rng);
        std::vector<double> gws(std::size_t(cout) * cin * k * k, 0.0), gwv = gws;
        std::vector<double> gbs(std::size_t(cout), 0.0), gbv = gbs;
        kernels::scalar::conv2d_bwd_weights(x.data(), cin, h, w, gy.data(),
                                            cout, k, gws.data(), gbs.data());
        kernels::avx2::conv2d_bwd_weights(x.data(), cin, h, w, gy.data(), cout,
                                          k, gwv.data(), gbv.data());
        CHECK(max_rel_diff(gws, gwv) < 1e-12);
        CHECK(max_rel_diff(gbs, gbv) < 1e-12);
    }
}

TEST_CASE("elementwise kernels: avx2 bitwise-identical to scalar") {
    if (!kernels::cpu_has_avx2()) return;
    Rng rng(14);
    for (std::size_t n : {1u, 3u, 4u, 17u, 1024u, 1027u}) {
        auto a = random_vec(n, rng), b = random_vec(n, rng);
        std::vector<double> ys(n), yv(n);

        kernels::scalar::relu_fwd(a.data(), ys.data(), n);
        kernels::avx2::relu_fwd(a.data(), yv.data(), n);
        CHECK(bitwise_equal(ys, yv));

        auto gs = random_vec(n, rng);
        auto gv = gs;
        kernels::scalar::relu_bwd(a.data(), b.data(), gs.data(), n);
        kernels::avx2::relu_bwd(a.data(), b.data(), gv.data(), n);
        CHECK(bitwise_equal(gs, gv));

        auto ys2 = random_vec(n, rng);
        auto yv2 = ys2;
        kernels::scalar::axpy(0.37, a.data(), ys2.data(), n);
        kernels::avx2::axpy(0.37, a.data(), yv2.data(), n);
        CHECK(bitwise_equal(ys2, yv2));

        kernels::scalar::add(a.data(), b.data(), ys.data(), n);
        kernels::avx2::add(a.data(), b.data(), yv.data(), n);
        CHECK(bitwise_equal(ys, yv));

        kernels::scalar::mul(a.data(), b.data(), ys.data(), n);
        kernels::avx2::mul(a.data(), b.data(), yv.data(), n);
        CHECK(bitwise_equal(ys, yv));

        kernels::scalar::scale(-1.25, a.data(), ys.data(), n);
        kernels::avx2::scale(-1.25, a.data(), yv.data(), n);
        CHECK(bitwise_equal(ys, yv));
    }
}

#endif  // POSELAB_HAVE_AVX2_KERNELS

TEST_CASE("runtime dispatch reports a consistent backend") {
    auto b = kernels::active_backend();
    CHECK(kernels::backend_available(b));
    kernels::select(kernels::Backend::scalar);
    CHECK(kernels::active_backend() == kernels::Backend::scalar);
    kernels::select_best();
    CHECK(kernels::backend_available(kernels::active_backend()));
}

TEST_CASE("maxpool argmax prefers the first maximal element") {
    // 2x2 block with a tie: index 0 wins.
    std::vector<double> x = {5.0, 5.0, 1.0, 2.0};
    std::vector<double> y(1);
    unsigned char am[1];
    kernels::scalar::maxpool2x2_fwd(x.data(), 1, 2, 2, y.data(), am);
    CHECK(y[0] == 5.0);
    CHECK(am[0] == 0);
}
