#include "poselab/attack/attack.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "poselab/kernels/kernels.hpp"

namespace poselab::attack {

Tensor project_budget(const Tensor& candidate, const Tensor& original,
                      double eps) {
    require(candidate.same_shape(original), "project-budget: shape mismatch ",
            candidate.shape_str(), " vs ", original.shape_str());
    require(eps >= 0, "project-budget: negative epsilon");
    Tensor out = candidate;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        double lo = std::max(0.0, original.data[i] - eps);
        double hi = std::min(255.0, original.data[i] + eps);
        out.data[i] = std::clamp(out.data[i], lo, hi);
    }
    return out;
}

namespace {

// Momentum-iterative sign attack shared by all three methods.
// direction = -1 descends the loss, +1 ascends. Asserts the budget
// invariant inside the loop, not only at the end.
Tensor momentum_sign_attack(
    const Tensor& image, const AttackConfig& cfg, int direction,
    const std::function<std::pair<double, Tensor>(const Tensor&)>& loss_grad,
    AttackDiagnostics* diag) {
    const double eps = cfg.epsilon;
    const double alpha = cfg.step_size();
    Tensor adv = image;
    Tensor g = Tensor::zeros(image.shape);
    for (int it = 0; it < cfg.steps; ++it) {
        auto [loss, grad] = loss_grad(adv);
        if (diag) diag->loss_per_step.push_back(loss);
        double l1 = 0;
        for (double v : grad.data) l1 += std::fabs(v);
        // mu*g + grad/|grad|_1; a zero gradient skips the normalization and
        // keeps the accumulated direction.
        kernels::active().scale(cfg.momentum, g.data.data(), g.data.data(),
                                g.data.size());
        if (l1 > 0)
            kernels::active().axpy(1.0 / l1, grad.data.data(), g.data.data(),
                                   g.data.size());
        Tensor cand = adv;
        for (std::size_t i = 0; i < cand.data.size(); ++i) {
            double s = g.data[i] > 0 ? 1.0 : (g.data[i] < 0 ? -1.0 : 0.0);
            cand.data[i] += direction * alpha * s;
        }
        adv = project_budget(cand, image, eps);
        double dev = 0;
        for (std::size_t i = 0; i < adv.data.size(); ++i)
            dev = std::max(dev, std::fabs(adv.data[i] - image.data[i]));
        require(dev <= eps, "attack: budget invariant violated: ", dev, " > ",
                eps);
        if (diag) diag->max_dev = std::max(diag->max_dev, dev);
    }
    return adv;
}

double dist2d(std::pair<double, double> a, std::pair<double, double> b) {
    return std::hypot(a.first - b.first, a.second - b.second);
}

}  // namespace

Tensor u6da(const std::vector<const seg::SegModel*>& surrogates,
            const Tensor& image255, int cls, const AttackConfig& cfg, Rng& rng,
            AttackDiagnostics* diag) {
    require(!surrogates.empty(), "u6da: no surrogate models");
    const int img_h = image255.dim(1), img_w = image255.dim(2);

    // Frozen pixel sets from the clean predictions (one per surrogate).
    std::vector<cam::PixelSet> pixelsets;
    bool fallback = false;
    for (const auto* m : surrogates) {
        auto pred = m->predict(image255);
        cam::PixelSet ps = cam::PixelSet::from_mask(
            pred.mask, m->arch().height, m->arch().width, cls);
        if (ps.empty()) fallback = true;
        pixelsets.push_back(std::move(ps));
    }

    // One shift draw per image, applied to every surrogate's map at its own
    // tap resolution.
    cam::ShiftSample sh = cam::sample_shift(cfg.shift, img_w, img_h, rng);

    std::vector<cam::AttentionMap> targets;
    std::vector<Tensor> target_tensors;
    int cells_r = 0, cells_c = 0;
    for (std::size_t mi = 0; mi < surrogates.size(); ++mi) {
        cam::CamResult ori =
            cam::seg_grad_cam(*surrogates[mi], image255, cls, pixelsets[mi]);
        int dr = int(std::lround(sh.dr * double(ori.map.h) / img_h));
        int dc = int(std::lround(sh.dc * double(ori.map.w) / img_w));
        dr = std::clamp(dr, -(ori.map.h - 1), ori.map.h - 1);
        dc = std::clamp(dc, -(ori.map.w - 1), ori.map.w - 1);
        if (mi == 0) {
            cells_r = dr;
            cells_c = dc;
            if (diag) {
                diag->shift_px = sh;
                diag->shift_cells_r = dr;
                diag->shift_cells_c = dc;
            }
        }
        cam::AttentionMap shifted = cam::shift_map(ori.map, dr, dc);
        if (diag && mi == 0)
            diag->centroid_dist_before =
                dist2d(cam::centroid(ori.map), cam::centroid(shifted));
        target_tensors.push_back(
            Tensor({shifted.h, shifted.w}, shifted.v));
        targets.push_back(std::move(shifted));
    }
    if (diag) diag->pixelset_fallback = fallback;

    auto loss_grad = [&](const Tensor& current) {
        double total = 0;
        Tensor grad = Tensor::zeros(current.shape);
        for (std::size_t mi = 0; mi < surrogates.size(); ++mi) {
            Tape tape;
            cam::SegCamGraph g = cam::build_seg_cam_graph(
                *surrogates[mi], tape, current, cls, pixelsets[mi], true);
            NodeId target = tape.leaf(target_tensors[mi]);
            NodeId loss = tape.l1_distance(g.map, target);
            total += tape.val(loss).data[0];
            auto grads = tape.backward(loss, {g.fwd.input});
            kernels::active().axpy(1.0, grads.at(g.fwd.input).data.data(),
                                   grad.data.data(), grad.data.size());
        }
        return std::make_pair(total, std::move(grad));
    };

    Tensor adv = momentum_sign_attack(image255, cfg, -1, loss_grad, diag);

    if (diag) {
        cam::CamResult fin =
            cam::seg_grad_cam(*surrogates[0], adv, cls, pixelsets[0]);
        diag->centroid_dist_after =
            dist2d(cam::centroid(fin.map), cam::centroid(targets[0]));
    }
    return adv;
}

Tensor mi_fgsm(const seg::SegModel& surrogate, const Tensor& image255,
               const AttackConfig& cfg, AttackDiagnostics* diag) {
    auto pred = surrogate.predict(image255);
    std::vector<int> clean_mask(pred.mask.begin(), pred.mask.end());

    auto loss_grad = [&](const Tensor& current) {
        Tape tape;
        seg::SegForward f = surrogate.forward(tape, current, false, true);
        NodeId loss = tape.pixelwise_cross_entropy(f.logits, clean_mask);
        double v = tape.val(loss).data[0];
        auto grads = tape.backward(loss, {f.input});
        return std::make_pair(v, std::move(grads.at(f.input)));
    };
    return momentum_sign_attack(image255, cfg, +1, loss_grad, diag);
}

Tensor dr_attack(const seg::SegModel& surrogate, const Tensor& image255,
                 const AttackConfig& cfg, AttackDiagnostics* diag) {
    auto loss_grad = [&](const Tensor& current) {
        Tape tape;
        seg::SegForward f = surrogate.forward(tape, current, false, true);
        NodeId loss = tape.stddev(f.tap);
        double v = tape.val(loss).data[0];
        auto grads = tape.backward(loss, {f.input});
        return std::make_pair(v, std::move(grads.at(f.input)));
    };
    return momentum_sign_attack(image255, cfg, -1, loss_grad, diag);
}

}  // namespace poselab::attack
