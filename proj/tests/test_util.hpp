#pragma once

// Shared oracles for the test suites. The finite-difference gradient check
// is independent of the backward pass: it only calls forward evaluation.

#include <cmath>
#include <functional>

#include "poselab/tape.hpp"
#include "poselab/tensor.hpp"
#include "poselab/util/rng.hpp"

namespace poselab::testutil {

// build(tape, leaf_id) must append ops and return a scalar node id.
using GraphBuilder = std::function<NodeId(Tape&, NodeId)>;

inline double eval_scalar(const Tensor& x, const GraphBuilder& build) {
    Tape tape;
    NodeId leaf = tape.leaf(x, true);
    NodeId out = build(tape, leaf);
    return tape.val(out).data[0];
}

// Max relative error between analytic input gradient and central finite
// differences with step h. Checks every element of x.
inline double gradcheck_full(const Tensor& x, const GraphBuilder& build,
                             double h = 1e-5) {
    Tape tape;
    NodeId leaf = tape.leaf(x, true);
    NodeId out = build(tape, leaf);
    Tensor analytic = tape.backward(out, {leaf}).at(leaf);

    double max_rel = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        Tensor xp = x, xm = x;
        xp.data[i] += h;
        xm.data[i] -= h;
        double num = (eval_scalar(xp, build) - eval_scalar(xm, build)) / (2 * h);
        double a = analytic.data[i];
        double denom = std::max({std::fabs(a), std::fabs(num), 1e-3});
        max_rel = std::max(max_rel, std::fabs(a - num) / denom);
    }
    return max_rel;
}

// Same check on a random sample of elements (for large inputs).
inline double gradcheck_sampled(const Tensor& x, const GraphBuilder& build,
                                int samples, Rng& rng, double h = 1e-5) {
    Tape tape;
    NodeId leaf = tape.leaf(x, true);
    NodeId out = build(tape, leaf);
    Tensor analytic = tape.backward(out, {leaf}).at(leaf);

    double max_rel = 0.0;
    for (int s = 0; s < samples; ++s) {
        std::size_t i = std::size_t(rng.uniform_int(uint64_t(x.data.size())));
        Tensor xp = x, xm = x;
        xp.data[i] += h;
        xm.data[i] -= h;
        double num = (eval_scalar(xp, build) - eval_scalar(xm, build)) / (2 * h);
        double a = analytic.data[i];
        double denom = std::max({std::fabs(a), std::fabs(num), 1e-3});
        max_rel = std::max(max_rel, std::fabs(a - num) / denom);
    }
    return max_rel;
}

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace poselab::testutil
