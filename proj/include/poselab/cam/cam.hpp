#pragma once

#include <functional>
#include <utility>

#include "poselab/seg/seg.hpp"

namespace poselab::cam {

struct AttentionMap {
    int h = 0, w = 0;
    std::vector<double> v;         // ReLU'd map, all entries >= 0
    std::vector<double> pre_relu;  // linear combination before the ReLU
    int cls = -1;
    bool pixelset_fallback = false;

    double at(int r, int c) const { return v[std::size_t(r) * w + c]; }
    double mass() const {
        double s = 0;
        for (double x : v) s += x;
        return s;
    }
};

// Intensity-weighted mean position (row, col) in map cells. Returns the map
// center when the map is identically zero.
std::pair<double, double> centroid(const AttentionMap& m);

struct CamWeights {
    std::vector<double> alpha;  // one weight per tap channel
};

struct CamResult {
    AttentionMap map;
    CamWeights weights;
};

// Pixel indices of interest in the output mask (row-major flat indices).
struct PixelSet {
    int h = 0, w = 0;
    std::vector<int> flat;

    bool empty() const { return flat.empty(); }
    static PixelSet all(int h, int w);
    static PixelSet from_mask(const std::vector<uint8_t>& mask, int h, int w,
                              int cls);
};

// Channel weights alpha_k = mean over tap pixels of d(scalar)/d(tap_k),
// gradient-stopped: the attack treats them as constants.
std::vector<double> cam_weights(const Tape& tape, NodeId scalar, NodeId tap);

// Classification-style Grad-CAM (used by tests and toy classifiers). The
// closure builds the model graph and reports the tap and the class-logit
// vector node.
struct ClassifierTaps {
    NodeId tap = -1;
    NodeId class_logits = -1;  // 1-D vector of logits
};
using ClassifierForward = std::function<ClassifierTaps(Tape&, NodeId)>;

CamResult grad_cam(const ClassifierForward& fwd, const Tensor& image, int cls);

// Seg-Grad-CAM: the class score is the sum of pre-softmax class-t logits
// over the pixel set. An empty pixel set falls back to all pixels and sets
// the fallback flag in the result.
CamResult seg_grad_cam(const seg::SegModel& model, const Tensor& image255,
                       int cls, const PixelSet& pixels);

// Tape-resident CAM graph: forward pass, detached weights, and the map node
// ready for further loss composition (the attack extends it with the L1
// objective and differentiates to the input).
struct SegCamGraph {
    seg::SegForward fwd;
    std::vector<double> alpha;
    NodeId map = -1;  // relu(channel_weighted_sum(tap, alpha))
    bool pixelset_fallback = false;
};
SegCamGraph build_seg_cam_graph(const seg::SegModel& model, Tape& tape,
                                const Tensor& image255, int cls,
                                const PixelSet& pixels, bool image_grad);

AttentionMap map_from_tape(const Tape& tape, const SegCamGraph& g, int cls);

// Integer translation with zero fill; mass that leaves the frame is dropped.
AttentionMap shift_map(const AttentionMap& m, int dr, int dc);

struct ShiftSpec {
    enum class Mode { R, C, RC };
    Mode mode = Mode::RC;
    // Distance ranges as fractions of the shifted dimension. Defaults map
    // the 110-160 pixel band on 640x480 to any image size.
    double row_lo = 110.0 / 480, row_hi = 160.0 / 480;
    double col_lo = 110.0 / 640, col_hi = 160.0 / 640;

    void validate() const;
    static Mode mode_from_string(const std::string& s);
    static std::string to_string(Mode m);
};

struct ShiftSample {
    double dr = 0, dc = 0;  // signed image-pixel offsets
};

// Uniform sign, magnitude uniform in [lo*dim, hi*dim] of the image.
ShiftSample sample_shift(const ShiftSpec& spec, int image_w, int image_h,
                         Rng& rng);

}  // namespace poselab::cam
