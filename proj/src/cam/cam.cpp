#include "poselab/cam/cam.hpp"

#include <algorithm>
#include <cmath>

namespace poselab::cam {

std::pair<double, double> centroid(const AttentionMap& m) {
    double mass = 0, sr = 0, sc = 0;
    for (int r = 0; r < m.h; ++r)
        for (int c = 0; c < m.w; ++c) {
            double v = m.at(r, c);
            mass += v;
            sr += v * (r + 0.5);
            sc += v * (c + 0.5);
        }
    if (mass <= 0) return {m.h / 2.0, m.w / 2.0};
    return {sr / mass, sc / mass};
}

PixelSet PixelSet::all(int h, int w) {
    PixelSet p;
    p.h = h;
    p.w = w;
    p.flat.resize(std::size_t(h) * w);
    for (std::size_t i = 0; i < p.flat.size(); ++i) p.flat[i] = int(i);
    return p;
}

PixelSet PixelSet::from_mask(const std::vector<uint8_t>& mask, int h, int w,
                             int cls) {
    require(mask.size() == std::size_t(h) * w, "pixelset: mask size mismatch");
    PixelSet p;
    p.h = h;
    p.w = w;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] == uint8_t(cls)) p.flat.push_back(int(i));
    return p;
}

std::vector<double> cam_weights(const Tape& tape, NodeId scalar, NodeId tap) {
    const Tensor& tv = tape.val(tap);
    require(tv.ndim() == 3, "cam: tap must be [K,H,W], got ", tv.shape_str());
    require(tv.dim(0) > 0, "cam: tap has zero channels");
    auto grads = tape.backward(scalar, {tap});
    const Tensor& g = grads.at(tap);
    int k = tv.dim(0);
    std::size_t plane = std::size_t(tv.dim(1)) * tv.dim(2);
    std::vector<double> alpha(std::size_t(k), 0.0);
    for (int c = 0; c < k; ++c) {
        double acc = 0;
        for (std::size_t i = 0; i < plane; ++i)
            acc += g.data[std::size_t(c) * plane + i];
        alpha[std::size_t(c)] = acc / double(plane);
    }
    return alpha;
}

namespace {

AttentionMap combine(const Tensor& tap, const std::vector<double>& alpha,
                     int cls) {
    AttentionMap m;
    m.h = tap.dim(1);
    m.w = tap.dim(2);
    m.cls = cls;
    std::size_t plane = std::size_t(m.h) * m.w;
    m.pre_relu.assign(plane, 0.0);
    for (int c = 0; c < tap.dim(0); ++c)
        for (std::size_t i = 0; i < plane; ++i)
            m.pre_relu[i] += alpha[std::size_t(c)] *
                             tap.data[std::size_t(c) * plane + i];
    m.v.resize(plane);
    for (std::size_t i = 0; i < plane; ++i)
        m.v[i] = std::max(0.0, m.pre_relu[i]);
    return m;
}

}  // namespace

CamResult grad_cam(const ClassifierForward& fwd, const Tensor& image, int cls) {
    Tape tape;
    NodeId input = tape.leaf(image, false);
    ClassifierTaps taps = fwd(tape, input);
    const Tensor& logits = tape.val(taps.class_logits);
    require(logits.ndim() == 1, "grad-cam: class logits must be a vector, got ",
            logits.shape_str());
    require(cls >= 0 && cls < logits.dim(0), "grad-cam: class ", cls,
            " out of range");
    // y^c as a scalar node: dot with the one-hot selector.
    Tensor sel = Tensor::zeros({logits.dim(0)});
    sel.data[std::size_t(cls)] = 1.0;
    NodeId scalar = tape.sum(tape.mul(taps.class_logits, tape.leaf(sel)));
    CamResult out;
    out.weights.alpha = cam_weights(tape, scalar, taps.tap);
    out.map = combine(tape.val(taps.tap), out.weights.alpha, cls);
    return out;
}

SegCamGraph build_seg_cam_graph(const seg::SegModel& model, Tape& tape,
                                const Tensor& image255, int cls,
                                const PixelSet& pixels, bool image_grad) {
    SegCamGraph g;
    g.fwd = model.forward(tape, image255, false, image_grad);
    const PixelSet* use = &pixels;
    PixelSet fallback;
    if (pixels.empty()) {
        fallback = PixelSet::all(model.arch().height, model.arch().width);
        use = &fallback;
        g.pixelset_fallback = true;
    }
    NodeId scalar = tape.sum_over_pixelset(g.fwd.logits, cls, use->flat);
    g.alpha = cam_weights(tape, scalar, g.fwd.tap);
    g.map = tape.relu(tape.channel_weighted_sum(g.fwd.tap, g.alpha));
    return g;
}

AttentionMap map_from_tape(const Tape& tape, const SegCamGraph& g, int cls) {
    AttentionMap m = combine(tape.val(g.fwd.tap), g.alpha, cls);
    m.pixelset_fallback = g.pixelset_fallback;
    return m;
}

CamResult seg_grad_cam(const seg::SegModel& model, const Tensor& image255,
                       int cls, const PixelSet& pixels) {
    require(cls >= 0 && cls < model.arch().classes, "seg-grad-cam: class ",
            cls, " out of range");
    Tape tape;
    SegCamGraph g = build_seg_cam_graph(model, tape, image255, cls, pixels,
                                        false);
    CamResult out;
    out.weights.alpha = g.alpha;
    out.map = map_from_tape(tape, g, cls);
    return out;
}

AttentionMap shift_map(const AttentionMap& m, int dr, int dc) {
    require(std::abs(dr) < m.h && std::abs(dc) < m.w,
            "shift: offset (", dr, ",", dc, ") out of bounds for ", m.h, "x",
            m.w, " map");
    AttentionMap out;
    out.h = m.h;
    out.w = m.w;
    out.cls = m.cls;
    out.pixelset_fallback = m.pixelset_fallback;
    out.v.assign(m.v.size(), 0.0);
    out.pre_relu.assign(m.v.size(), 0.0);
    for (int r = 0; r < m.h; ++r) {
        int nr = r + dr;
        if (nr < 0 || nr >= m.h) continue;
        for (int c = 0; c < m.w; ++c) {
            int nc = c + dc;
            if (nc < 0 || nc >= m.w) continue;
            out.v[std::size_t(nr) * m.w + nc] = m.at(r, c);
            out.pre_relu[std::size_t(nr) * m.w + nc] =
                m.pre_relu[std::size_t(r) * m.w + c];
        }
    }
    return out;
}

void ShiftSpec::validate() const {
    require(row_lo > 0 && row_lo <= row_hi && row_hi <= 0.5,
            "shift-spec: row range [", row_lo, ",", row_hi,
            "] must satisfy 0 < lo <= hi <= 0.5");
    require(col_lo > 0 && col_lo <= col_hi && col_hi <= 0.5,
            "shift-spec: col range [", col_lo, ",", col_hi,
            "] must satisfy 0 < lo <= hi <= 0.5");
}

ShiftSpec::Mode ShiftSpec::mode_from_string(const std::string& s) {
    if (s == "r" || s == "R") return Mode::R;
    if (s == "c" || s == "C") return Mode::C;
    if (s == "rc" || s == "RC") return Mode::RC;
    fail("shift-spec: unknown mode '", s, "' (r|c|rc)");
}

std::string ShiftSpec::to_string(Mode m) {
    switch (m) {
        case Mode::R: return "r";
        case Mode::C: return "c";
        default: return "rc";
    }
}

ShiftSample sample_shift(const ShiftSpec& spec, int image_w, int image_h,
                         Rng& rng) {
    spec.validate();
    ShiftSample s;
    if (spec.mode != ShiftSpec::Mode::C) {
        double mag = rng.uniform(spec.row_lo * image_h, spec.row_hi * image_h);
        s.dr = rng.sign() * mag;
    }
    if (spec.mode != ShiftSpec::Mode::R) {
        double mag = rng.uniform(spec.col_lo * image_w, spec.col_hi * image_w);
        s.dc = rng.sign() * mag;
    }
    return s;
}

}  // namespace poselab::cam
