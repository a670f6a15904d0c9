#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "poselab/params.hpp"
#include "poselab/tape.hpp"
#include "poselab/tensor.hpp"
#include "test_util.hpp"

using namespace poselab;
using namespace poselab::testutil;

TEST_CASE("conv2d: 1x1 kernel of value 2 doubles an all-ones image") {
    Tape t;
    NodeId x = t.leaf(Tensor::full({1, 3, 3}, 1.0));
    NodeId w = t.leaf(Tensor({1, 1, 1, 1}, {2.0}));
    NodeId b = t.leaf(Tensor::zeros({1}));
    NodeId y = t.conv2d(x, w, b);
    for (double v : t.val(y).data) CHECK(v == doctest::Approx(2.0));
}

TEST_CASE("conv2d valid: 2x2 sliding-window sum oracle") {
    // [[1,2],[3,4]] against kernel [[1,0],[0,1]] -> single output 1+4 = 5.
    Tape t;
    NodeId x = t.leaf(Tensor({1, 2, 2}, {1, 2, 3, 4}));
    NodeId w = t.leaf(Tensor({1, 1, 2, 2}, {1, 0, 0, 1}));
    NodeId b = t.leaf(Tensor::zeros({1}));
    NodeId y = t.conv2d_valid(x, w, b);
    CHECK(t.val(y).shape == std::vector<int>{1, 1, 1});
    CHECK(t.val(y).data[0] == doctest::Approx(5.0));
}

TEST_CASE("relu clamps negatives") {
    Tape t;
    NodeId x = t.leaf(Tensor({3}, {-1, 0, 2}));
    NodeId y = t.relu(x);
    CHECK(t.val(y).data == std::vector<double>{0, 0, 2});
}

TEST_CASE("backward of sum is all ones") {
    Rng rng(1);
    Tape t;
    NodeId x = t.leaf(random_tensor({2, 4, 4}, rng), true);
    NodeId s = t.sum(x);
    Tensor g = t.backward(s, {x}).at(x);
    for (double v : g.data) CHECK(v == 1.0);
}

TEST_CASE("backward of relu-sum routes only positive inputs") {
    Tape t;
    NodeId x = t.leaf(Tensor({2}, {-1, 2}), true);
    NodeId s = t.sum(t.relu(x));
    Tensor g = t.backward(s, {x}).at(x);
    CHECK(g.data == std::vector<double>{0, 1});
}

TEST_CASE("backward rejects non-scalar roots and unknown nodes") {
    Tape t;
    NodeId x = t.leaf(Tensor({2}, {1, 2}), true);
    CHECK_THROWS_AS((void)t.backward(x, {x}), Error);
    NodeId s = t.sum(x);
    CHECK_THROWS_AS((void)t.backward(s, {NodeId(99)}), Error);
}

TEST_CASE("shape errors name the op and shapes") {
    Tape t;
    NodeId a = t.leaf(Tensor::zeros({2, 4, 4}));
    NodeId b = t.leaf(Tensor::zeros({2, 3, 4}));
    try {
        t.add(a, b);
        FAIL("expected shape error");
    } catch (const Error& e) {
        std::string msg = e.what();
        CHECK(msg.find("add") != std::string::npos);
        CHECK(msg.find("[2,4,4]") != std::string::npos);
    }
}

// Finite-difference gradient checks for every differentiable primitive.
// Inputs are kept away from relu/l1/maxpool kinks so the central-difference
// oracle is valid.
TEST_CASE("gradcheck: every primitive matches central finite differences") {
    Rng rng(7);
    const double tol = 1e-4;

    SUBCASE("conv2d same-padding") {
        Tensor x = random_tensor({3, 6, 8}, rng);
        Tensor w = random_tensor({4, 3, 3, 3}, rng);
        Tensor b = random_tensor({4}, rng);
        Tensor m = random_tensor({4, 6, 8}, rng);
        CHECK(gradcheck_full(x, [&](Tape& t, NodeId xi) {
                  return t.sum(t.mul(t.conv2d(xi, t.leaf(w), t.leaf(b)),
                                     t.leaf(m)));
              }) < tol);
        // weight and bias gradients via leaf swap
        CHECK(gradcheck_full(w, [&](Tape& t, NodeId wi) {
                  return t.sum(t.conv2d(t.leaf(x), wi, t.leaf(b)));
              }) < tol);
        CHECK(gradcheck_full(b, [&](Tape& t, NodeId bi) {
                  return t.sum(t.conv2d(t.leaf(x), t.leaf(w), bi));
              }) < tol);
    }
    SUBCASE("conv2d valid") {
        Tensor x = random_tensor({2, 5, 5}, rng);
        Tensor w = random_tensor({3, 2, 3, 3}, rng);
        Tensor b = random_tensor({3}, rng);
        CHECK(gradcheck_full(x, [&](Tape& t, NodeId xi) {
                  return t.sum(t.conv2d_valid(xi, t.leaf(w), t.leaf(b)));
              }) < tol);
        CHECK(gradcheck_full(w, [&](Tape& t, NodeId wi) {
                  return t.sum(t.conv2d_valid(t.leaf(x), wi, t.leaf(b)));
              }) < tol);
    }
    SUBCASE("transposed conv stride 2") {
        Tensor x = random_tensor({3, 4, 5}, rng);
        Tensor w = random_tensor({2, 3, 2, 2}, rng);
        Tensor b = random_tensor({2}, rng);
        Tensor m = random_tensor({2, 8, 10}, rng);
        CHECK(gradcheck_full(x, [&](Tape& t, NodeId xi) {
                  return t.sum(t.mul(t.tconv2x2(xi, t.leaf(w), t.leaf(b)),
                                     t.leaf(m)));
              }) < tol);
        CHECK(gradcheck_full(w, [&](Tape& t, NodeId wi) {
                  return t.sum(t.mul(t.tconv2x2(t.leaf(x), wi, t.leaf(b)),
                                     t.leaf(m)));
              }) < tol);
    }
    SUBCASE("relu away from kink") {
        Tensor x = random_tensor({24}, rng);
        for (double& v : x.data)
            if (std::fabs(v) < 0.05) v += 0.1;
        Tensor m = random_tensor({24}, rng);
        CHECK(gradcheck_full(x, [&](Tape& t, NodeId xi) {
                  return t.sum(t.mul(t.relu(xi), t.leaf(m)));
              }) < tol);
    }
    SUBCASE("maxpool with distinct entries") {
        Tensor x = Tensor::zeros({2, 4, 4});
        for (std::size_t i = 0; i < x.data.size(); ++i)
            x.data[i] = double(i) * 0.37 + rng.uniform(-0.05, 0.05);
        Tensor m = random_tensor({2, 2, 2}, rng);
        CHECK(gradcheck_full(x, [&](Tape& t, NodeId xi) {
                  return t.sum(t.mul(t.maxpool2x2(xi), t.leaf(m)));
              }) < tol);
    }
    SUBCASE("concat, upsample, global-avg-pool, dense chain") {
        Tensor x = random_tensor({2, 4, 4}, rng);
        Tensor other = random_tensor({1, 4, 4}, rng);
        Tensor dw = random_tensor({3, 3}, rng);
        Tensor db = random_tensor({3}, rng);
        Tensor dw2 = random_tensor({1, 3}, rng);
        CHECK(gradcheck_full(x, [&](Tape& t, NodeId xi) {
                  NodeId c = t.concat_channels(xi, t.leaf(other));
                  NodeId u = t.upsample2x(c);
                  NodeId g = t.global_avg_pool(u);
                  NodeId d = t.dense(g, t.leaf(dw), t.leaf(db));
                  NodeId d2 = t.dense(d, t.leaf(dw2), t.leaf(Tensor::zeros({1})));
                  return t.sum(d2);
              }) < tol);
    }
    SUBCASE("add, mul, scale") {
        Tensor x = random_tensor({10}, rng);
        Tensor o = random_tensor({10}, rng);
        CHECK(gradcheck_full(x, [&](Tape& t, NodeId xi) {
                  return t.sum(t.mul(t.add(xi, t.leaf(o)), t.scale(xi, 0.5)));
              }) < tol);
    }
    SUBCASE("pixelwise cross-entropy") {
        Tensor x = random_tensor({3, 4, 4}, rng);
        std::vector<int> target(16);
        for (auto& v : target) v = int(rng.uniform_int(3));
        CHECK(gradcheck_full(x, [&](Tape& t, NodeId xi) {
                  return t.pixelwise_cross_entropy(xi, target);
              }) < tol);
    }
    SUBCASE("sigmoid bce") {
        Tensor x = random_tensor({4, 4}, rng, -2, 2);
        Tensor tgt = Tensor::zeros({4, 4});
        Tensor wgt = Tensor::zeros({4, 4});
        for (std::size_t i = 0; i < 16; ++i) {
            tgt.data[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
            wgt.data[i] = rng.uniform() < 0.3 ? 0.0 : 1.0;
        }
        CHECK(gradcheck_full(x, [&](Tape& t, NodeId xi) {
                  return t.sigmoid_bce(xi, tgt, wgt);
              }) < tol);
    }
    SUBCASE("l1 distance away from kink") {
        Tensor x = random_tensor({12}, rng, 1.0, 2.0);
        Tensor o = random_tensor({12}, rng, -2.0, -1.0);
        CHECK(gradcheck_full(x, [&](Tape& t, NodeId xi) {
                  return t.l1_distance(xi, t.leaf(o));
              }) < tol);
    }
    SUBCASE("sum over pixel set") {
        Tensor x = random_tensor({3, 4, 5}, rng);
        std::vector<int> pixels = {0, 7, 13, 19};
        CHECK(gradcheck_full(x, [&](Tape& t, NodeId xi) {
                  return t.sum_over_pixelset(xi, 1, pixels);
              }) < tol);
    }
    SUBCASE("stddev") {
        Tensor x = random_tensor({20}, rng, 0.5, 3.0);
        CHECK(gradcheck_full(x, [&](Tape& t, NodeId xi) {
                  return t.stddev(xi);
              }) < tol);
    }
    SUBCASE("channel weighted sum") {
        Tensor x = random_tensor({3, 4, 4}, rng);
        std::vector<double> wts = {2.0, -1.0, 0.5};
        Tensor m = random_tensor({4, 4}, rng);
        CHECK(gradcheck_full(x, [&](Tape& t, NodeId xi) {
                  return t.sum(t.mul(t.channel_weighted_sum(xi, wts), t.leaf(m)));
              }) < tol);
    }
}

TEST_CASE("concat backward splits gradients exactly") {
    Rng rng(21);
    Tensor a = random_tensor({2, 3, 3}, rng);
    Tensor b = random_tensor({3, 3, 3}, rng);
    Tensor m = random_tensor({5, 3, 3}, rng);

    Tape t;
    NodeId na = t.leaf(a, true);
    NodeId nb = t.leaf(b, true);
    NodeId c = t.concat_channels(na, nb);
    NodeId s = t.sum(t.mul(c, t.leaf(m)));
    auto grads = t.backward(s, {na, nb, c});

    const Tensor& gc = grads.at(c);
    const Tensor& ga = grads.at(na);
    const Tensor& gb = grads.at(nb);
    for (std::size_t i = 0; i < ga.data.size(); ++i)
        CHECK(ga.data[i] == gc.data[i]);
    for (std::size_t i = 0; i < gb.data.size(); ++i)
        CHECK(gb.data[i] == gc.data[i + ga.data.size()]);
}

TEST_CASE("backward is deterministic: same tape twice, bit-identical grads") {
    auto run = [] {
        Rng rng(33);
        Tape t;
        NodeId x = t.leaf(random_tensor({3, 8, 8}, rng), true);
        NodeId w = t.leaf(random_tensor({4, 3, 3, 3}, rng), true);
        NodeId b = t.leaf(random_tensor({4}, rng), true);
        NodeId y = t.relu(t.conv2d(x, w, b));
        NodeId s = t.stddev(y);
        return t.backward(s, {x, w, b});
    };
    auto g1 = run();
    auto g2 = run();
    for (auto& [k, v] : g1) {
        const Tensor& o = g2.at(k);
        for (std::size_t i = 0; i < v.data.size(); ++i)
            CHECK(v.data[i] == o.data[i]);
    }
}

TEST_CASE("optimizer: sgd basics") {
    ParamSet ps;
    ps.add("p", Tensor({1}, {1.0}));

    SUBCASE("zero gradient leaves parameters unchanged") {
        ps.step(0.1, OptScheme::sgd);
        CHECK(ps.at(0).value.data[0] == 1.0);
    }
    SUBCASE("p=1, g=2, lr=0.1 -> 0.8") {
        ps.at(0).grad.data[0] = 2.0;
        ps.step(0.1, OptScheme::sgd);
        CHECK(ps.at(0).value.data[0] == doctest::Approx(0.8));
        CHECK(ps.at(0).grad.data[0] == 0.0);  // gradients zeroed
    }
}

TEST_CASE("optimizer: adam single step matches hand computation") {
    ParamSet ps;
    ps.add("p", Tensor({1}, {1.0}));
    ps.at(0).grad.data[0] = 0.5;
    ps.step(0.1, OptScheme::adam);

    // Hand-computed: m=0.05, v=0.00025 -> mhat=0.5, vhat=0.25
    double mhat = (0.1 * 0.5) / (1.0 - 0.9);
    double vhat = (0.001 * 0.25) / (1.0 - 0.999);
    double expect = 1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(ps.at(0).value.data[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("optimizer aborts on NaN gradient") {
    ParamSet ps;
    ps.add("p", Tensor({1}, {1.0}));
    ps.at(0).grad.data[0] = std::nan("");
    CHECK_THROWS_AS(ps.step(0.1, OptScheme::sgd), Error);
}

TEST_CASE("checkpoint round trip preserves names, shapes and bits") {
    Rng rng(5);
    ParamSet ps;
    ps.add("enc.conv1.w", random_tensor({4, 3, 3, 3}, rng));
    ps.add("enc.conv1.b", random_tensor({4}, rng));
    auto path = std::filesystem::temp_directory_path() / "poselab_ck_test.bin";
    ps.save(path.string());

    ParamSet ps2;
    ps2.add("enc.conv1.w", Tensor::zeros({4, 3, 3, 3}));
    ps2.add("enc.conv1.b", Tensor::zeros({4}));
    ps2.load(path.string());
    for (std::size_t i = 0; i < ps.at(0).value.data.size(); ++i)
        CHECK(ps.at(0).value.data[i] == ps2.at(0).value.data[i]);

    ParamSet bad;
    bad.add("other.w", Tensor::zeros({4, 3, 3, 3}));
    bad.add("other.b", Tensor::zeros({4}));
    CHECK_THROWS_AS(bad.load(path.string()), Error);
    std::filesystem::remove(path);
}

TEST_CASE("finiteness is enforced after every op") {
    Tape t;
    NodeId x = t.leaf(Tensor({2}, {1.0, 0.5}));
    NodeId big = t.scale(x, 1e308);
    CHECK_THROWS_AS(t.add(big, big), Error);  // overflows to inf
}
