#pragma once

#include <functional>
#include <string>

#include "poselab/geom/dataset.hpp"
#include "poselab/params.hpp"
#include "poselab/tape.hpp"

namespace poselab::seg {

enum class ArchKind { unet_lite, fpn_lite };

ArchKind arch_kind_from_string(const std::string& s);
std::string to_string(ArchKind k);

struct SegArchitecture {
    ArchKind kind = ArchKind::unet_lite;
    std::array<int, 3> widths = {8, 16, 32};
    int classes = 4;
    int height = 96, width = 128;
    // Activation used as the CAM feature stack {A^k}. "bottleneck" is the
    // deepest encoder activation; fpn-lite also accepts "p3".
    std::string tap = "bottleneck";
};

struct SegForward {
    NodeId input = -1;   // 0-255 image leaf (gradients are w.r.t. this domain)
    NodeId logits = -1;  // [C,H,W]
    NodeId tap = -1;     // [K,H',W']
    std::vector<NodeId> param_ids;
};

class SegModel {
public:
    SegModel() = default;
    static SegModel build(const SegArchitecture& arch, uint64_t seed);

    const SegArchitecture& arch() const { return arch_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    // Builds the forward graph on the tape. The input image stays in the
    // 0-255 domain; scaling to 0-1 happens inside the graph so input
    // gradients include the 1/255 factor.
    SegForward forward(Tape& tape, const Tensor& image255,
                       bool trainable_params = false,
                       bool image_grad = false) const;

    // Same graph over leaves the caller already registered (training path).
    SegForward forward_from(Tape& tape, NodeId input_leaf,
                            const std::vector<NodeId>& param_ids) const;

    struct Prediction {
        Tensor logits;
        std::vector<uint8_t> mask;
        Tensor tap;
    };
    Prediction predict(const Tensor& image255) const;

    void save(const std::string& path) const { params_.save(path); }
    void load(const std::string& path) { params_.load(path); }

    // Architecture header travels next to the weights so checkpoints are
    // self-describing.
    void save_with_meta(const std::string& path) const;
    static SegModel load_with_meta(const std::string& path);

private:
    SegArchitecture arch_;
    ParamSet params_;
};

struct SegTrainConfig {
    int max_epochs = 30;
    double lr = 1e-3;
    double lr_drop_factor = 0.1;
    int lr_drop_epoch = 24;  // paper-style late LR drop, scaled down
    int batch = 2;
    uint64_t seed = 1;
    double gate_iou = 0.85;
    double early_stop_iou = 0.92;
    int eval_every = 2;
    int threads = 0;
    bool verbose = false;
};

struct EpochLog {
    int epoch = 0;
    double loss = 0;
    double iou = 0;  // held-out mean foreground IoU (-1 when skipped)
};

struct SegTrainLog {
    std::vector<EpochLog> epochs;
    double final_iou = 0;
    std::string csv() const;
};

// Adam on per-pixel cross-entropy. Stops early once early_stop_iou is
// reached; throws if the gate IoU is not reached by max_epochs.
SegTrainLog train_segmentation(SegModel& model, const geom::Dataset& train,
                               const geom::Dataset& val,
                               const SegTrainConfig& cfg);

// Aggregate foreground IoU (per class over all pixels, averaged over
// foreground classes).
double mean_foreground_iou(const SegModel& model, const geom::Dataset& ds,
                           int threads = 0);

}  // namespace poselab::seg
