#pragma once

#include "poselab/cam/cam.hpp"
#include "poselab/seg/seg.hpp"

namespace poselab::attack {

struct AttackConfig {
    double epsilon = 16.0;  // L-inf budget in 0-255 pixel units
    int steps = 5;          // M
    double momentum = 1.0;  // mu
    cam::ShiftSpec shift;

    double step_size() const {  // alpha = epsilon / M
        require(steps >= 1, "attack: steps must be >= 1");
        require(epsilon >= 0, "attack: epsilon must be >= 0");
        return epsilon / steps;
    }
};

struct AttackDiagnostics {
    std::vector<double> loss_per_step;
    cam::ShiftSample shift_px;  // sampled shift in image pixels
    int shift_cells_r = 0, shift_cells_c = 0;
    bool pixelset_fallback = false;
    double centroid_dist_before = 0;  // |centroid(M_ori) - centroid(M_sh)|
    double centroid_dist_after = 0;   // |centroid(M_adv)  - centroid(M_sh)|
    double max_dev = 0;               // max over iterations of |I_i - I|_inf
};

// Per-pixel clamp of candidate to [original - eps, original + eps] and then
// to the 0-255 range.
Tensor project_budget(const Tensor& candidate, const Tensor& original,
                      double eps);

// Shifted-attention transfer attack. The pixel set (class-t pixels of the
// clean prediction) and the shifted target map are frozen before the loop;
// each iteration minimizes sum over surrogates of |M_adv - M_sh|_1 via
// momentum sign descent under the L-inf budget.
Tensor u6da(const std::vector<const seg::SegModel*>& surrogates,
            const Tensor& image255, int cls, const AttackConfig& cfg, Rng& rng,
            AttackDiagnostics* diag = nullptr);

// Untargeted momentum-iterative baseline: maximizes the mean per-pixel
// cross-entropy against the clean argmax mask.
Tensor mi_fgsm(const seg::SegModel& surrogate, const Tensor& image255,
               const AttackConfig& cfg, AttackDiagnostics* diag = nullptr);

// Dispersion-reduction baseline: minimizes the standard deviation of the
// tapped feature map.
Tensor dr_attack(const seg::SegModel& surrogate, const Tensor& image255,
                 const AttackConfig& cfg, AttackDiagnostics* diag = nullptr);

}  // namespace poselab::attack
