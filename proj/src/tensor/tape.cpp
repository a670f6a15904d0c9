#include "poselab/tape.hpp"

#include <algorithm>
#include <cmath>

#include "poselab/kernels/kernels.hpp"

namespace poselab {

bool Tape::check_finite = true;

const char* op_name(Op op) {
    switch (op) {
        case Op::kLeaf: return "leaf";
        case Op::kConv2d: return "conv2d";
        case Op::kConv2dValid: return "conv2d-valid";
        case Op::kTConv2x2: return "transposed-conv2d-stride2";
        case Op::kRelu: return "relu";
        case Op::kMaxPool2x2: return "maxpool2x2";
        case Op::kConcatCh: return "concat-channels";
        case Op::kUpsample2x: return "upsample2x-nearest";
        case Op::kGlobalAvgPool: return "global-avg-pool";
        case Op::kDense: return "dense";
        case Op::kAdd: return "add";
        case Op::kMul: return "mul";
        case Op::kScale: return "scale";
        case Op::kSum: return "sum";
        case Op::kPixelwiseCe: return "pixelwise-cross-entropy";
        case Op::kSigmoidBce: return "sigmoid-bce";
        case Op::kL1Distance: return "l1-distance";
        case Op::kSumPixelSet: return "sum-over-pixelset";
        case Op::kStdDev: return "stddev";
        case Op::kChannelWeightedSum: return "channel-weighted-sum";
    }
    return "?";
}

namespace {

void require_chw(const Tensor& t, const char* op) {
    require(t.ndim() == 3, op, ": expected [C,H,W] input, got ", t.shape_str());
}

}  // namespace

NodeId Tape::push(Node n) {
    if (check_finite)
        require(n.val.all_finite(), op_name(n.op),
                ": non-finite values in output of shape ", n.val.shape_str());
    nodes_.push_back(std::move(n));
    return NodeId(nodes_.size() - 1);
}

void Tape::check_id(NodeId id) const {
    require(id >= 0 && std::size_t(id) < nodes_.size(), "tape: node ", id,
            " is not on the tape (size ", nodes_.size(), ")");
}

const Node& Tape::node(NodeId id) const {
    check_id(id);
    return nodes_[std::size_t(id)];
}

const Tensor& Tape::val(NodeId id) const { return node(id).val; }

bool Tape::node_needs_grad(NodeId id) const { return node(id).needs_grad; }

NodeId Tape::leaf(Tensor v, bool needs_grad) {
    Node n;
    n.op = Op::kLeaf;
    n.val = std::move(v);
    n.needs_grad = needs_grad;
    return push(std::move(n));
}

NodeId Tape::conv2d(NodeId x, NodeId w, NodeId b) {
    const Tensor& xv = val(x);
    const Tensor& wv = val(w);
    const Tensor& bv = val(b);
    require_chw(xv, "conv2d");
    require(wv.ndim() == 4, "conv2d: weights must be [Cout,Cin,K,K], got ",
            wv.shape_str());
    int cout = wv.dim(0), cin = wv.dim(1), k = wv.dim(2);
    require(wv.dim(3) == k && k % 2 == 1, "conv2d: kernel must be odd square, got ",
            wv.shape_str());
    require(cin == xv.dim(0), "conv2d: input channels ", xv.shape_str(),
            " vs weights ", wv.shape_str());
    require(bv.ndim() == 1 && bv.dim(0) == cout, "conv2d: bias shape ",
            bv.shape_str(), " does not match Cout=", cout);
    int h = xv.dim(1), wd = xv.dim(2);
    Tensor out = Tensor::zeros({cout, h, wd});
    kernels::active().conv2d_fwd(xv.data.data(), cin, h, wd, wv.data.data(),
                                 cout, k, bv.data.data(), out.data.data());
    Node n;
    n.op = Op::kConv2d;
    n.nin = 3;
    n.in = {x, w, b};
    n.val = std::move(out);
    n.needs_grad = node(x).needs_grad || node(w).needs_grad || node(b).needs_grad;
    n.meta = std::make_unique<NodeMeta>();
    n.meta->k = k;
    return push(std::move(n));
}

NodeId Tape::conv2d_valid(NodeId x, NodeId w, NodeId b) {
    const Tensor& xv = val(x);
    const Tensor& wv = val(w);
    const Tensor& bv = val(b);
    require_chw(xv, "conv2d-valid");
    require(wv.ndim() == 4 && wv.dim(2) == wv.dim(3),
            "conv2d-valid: weights must be [Cout,Cin,K,K], got ", wv.shape_str());
    int cout = wv.dim(0), cin = wv.dim(1), k = wv.dim(2);
    require(cin == xv.dim(0), "conv2d-valid: input channels ", xv.shape_str(),
            " vs weights ", wv.shape_str());
    require(bv.ndim() == 1 && bv.dim(0) == cout, "conv2d-valid: bias shape ",
            bv.shape_str());
    int h = xv.dim(1), wd = xv.dim(2);
    require(h >= k && wd >= k, "conv2d-valid: input ", xv.shape_str(),
            " smaller than kernel ", k);
    Tensor out = Tensor::zeros({cout, h - k + 1, wd - k + 1});
    kernels::scalar::conv2d_valid_fwd(xv.data.data(), cin, h, wd,
                                      wv.data.data(), cout, k, bv.data.data(),
                                      out.data.data());
    Node n;
    n.op = Op::kConv2dValid;
    n.nin = 3;
    n.in = {x, w, b};
    n.val = std::move(out);
    n.needs_grad = node(x).needs_grad || node(w).needs_grad || node(b).needs_grad;
    n.meta = std::make_unique<NodeMeta>();
    n.meta->k = k;
    return push(std::move(n));
}

NodeId Tape::tconv2x2(NodeId x, NodeId w, NodeId b) {
    const Tensor& xv = val(x);
    const Tensor& wv = val(w);
    const Tensor& bv = val(b);
    require_chw(xv, "transposed-conv2d-stride2");
    require(wv.ndim() == 4 && wv.dim(2) == 2 && wv.dim(3) == 2,
            "transposed-conv2d-stride2: weights must be [Cout,Cin,2,2], got ",
            wv.shape_str());
    int cout = wv.dim(0), cin = wv.dim(1);
    require(cin == xv.dim(0), "transposed-conv2d-stride2: input channels ",
            xv.shape_str(), " vs weights ", wv.shape_str());
    require(bv.ndim() == 1 && bv.dim(0) == cout,
            "transposed-conv2d-stride2: bias shape ", bv.shape_str());
    int h = xv.dim(1), wd = xv.dim(2);
    Tensor out = Tensor::zeros({cout, 2 * h, 2 * wd});
    kernels::scalar::tconv2x2_fwd(xv.data.data(), cin, h, wd, wv.data.data(),
                                  cout, bv.data.data(), out.data.data());
    Node n;
    n.op = Op::kTConv2x2;
    n.nin = 3;
    n.in = {x, w, b};
    n.val = std::move(out);
    n.needs_grad = node(x).needs_grad || node(w).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
    const Tensor& xv = val(x);
    Tensor out = Tensor::zeros(xv.shape);
    kernels::active().relu_fwd(xv.data.data(), out.data.data(),
                               xv.data.size());
    Node n;
    n.op = Op::kRelu;
    n.nin = 1;
    n.in = {x, -1, -1};
    n.val = std::move(out);
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

NodeId Tape::maxpool2x2(NodeId x) {
    const Tensor& xv = val(x);
    require_chw(xv, "maxpool2x2");
    int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    require(h % 2 == 0 && w % 2 == 0, "maxpool2x2: H,W must be even, got ",
            xv.shape_str());
    Tensor out = Tensor::zeros({c, h / 2, w / 2});
    Node n;
    n.meta = std::make_unique<NodeMeta>();
    n.meta->argmax.resize(out.data.size());
    kernels::scalar::maxpool2x2_fwd(xv.data.data(), c, h, w, out.data.data(),
                                    n.meta->argmax.data());
    n.op = Op::kMaxPool2x2;
    n.nin = 1;
    n.in = {x, -1, -1};
    n.val = std::move(out);
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

NodeId Tape::concat_channels(NodeId a, NodeId b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    require_chw(av, "concat-channels");
    require_chw(bv, "concat-channels");
    require(av.dim(1) == bv.dim(1) && av.dim(2) == bv.dim(2),
            "concat-channels: spatial mismatch ", av.shape_str(), " vs ",
            bv.shape_str());
    Tensor out = Tensor::zeros({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(),
              out.data.begin() + av.data.size());
    Node n;
    n.op = Op::kConcatCh;
    n.nin = 2;
    n.in = {a, b, -1};
    n.val = std::move(out);
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

NodeId Tape::upsample2x(NodeId x) {
    const Tensor& xv = val(x);
    require_chw(xv, "upsample2x-nearest");
    int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensor out = Tensor::zeros({c, 2 * h, 2 * w});
    kernels::scalar::upsample2x_fwd(xv.data.data(), c, h, w, out.data.data());
    Node n;
    n.op = Op::kUpsample2x;
    n.nin = 1;
    n.in = {x, -1, -1};
    n.val = std::move(out);
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

NodeId Tape::global_avg_pool(NodeId x) {
    const Tensor& xv = val(x);
    require_chw(xv, "global-avg-pool");
    int c = xv.dim(0);
    std::size_t plane = std::size_t(xv.dim(1)) * xv.dim(2);
    Tensor out = Tensor::zeros({c});
    for (int ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        const double* p = xv.data.data() + std::size_t(ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        out.data[std::size_t(ci)] = acc / double(plane);
    }
    Node n;
    n.op = Op::kGlobalAvgPool;
    n.nin = 1;
    n.in = {x, -1, -1};
    n.val = std::move(out);
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

NodeId Tape::dense(NodeId x, NodeId w, NodeId b) {
    const Tensor& xv = val(x);
    const Tensor& wv = val(w);
    const Tensor& bv = val(b);
    require(xv.ndim() == 1, "dense: input must be 1-D, got ", xv.shape_str());
    require(wv.ndim() == 2 && wv.dim(1) == xv.dim(0),
            "dense: weights ", wv.shape_str(), " incompatible with input ",
            xv.shape_str());
    int m = wv.dim(0), k = wv.dim(1);
    require(bv.ndim() == 1 && bv.dim(0) == m, "dense: bias shape ",
            bv.shape_str());
    Tensor out = Tensor::zeros({m});
    for (int i = 0; i < m; ++i) {
        double acc = bv.data[std::size_t(i)];
        const double* row = wv.data.data() + std::size_t(i) * k;
        for (int j = 0; j < k; ++j) acc += row[j] * xv.data[std::size_t(j)];
        out.data[std::size_t(i)] = acc;
    }
    Node n;
    n.op = Op::kDense;
    n.nin = 3;
    n.in = {x, w, b};
    n.val = std::move(out);
    n.needs_grad = node(x).needs_grad || node(w).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    require(av.same_shape(bv), "add: shape mismatch ", av.shape_str(), " vs ",
            bv.shape_str());
    Tensor out = Tensor::zeros(av.shape);
    kernels::active().add(av.data.data(), bv.data.data(), out.data.data(),
                          av.data.size());
    Node n;
    n.op = Op::kAdd;
    n.nin = 2;
    n.in = {a, b, -1};
    n.val = std::move(out);
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    require(av.same_shape(bv), "mul: shape mismatch ", av.shape_str(), " vs ",
            bv.shape_str());
    Tensor out = Tensor::zeros(av.shape);
    kernels::active().mul(av.data.data(), bv.data.data(), out.data.data(),
                          av.data.size());
    Node n;
    n.op = Op::kMul;
    n.nin = 2;
    n.in = {a, b, -1};
    n.val = std::move(out);
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double s) {
    const Tensor& xv = val(x);
    Tensor out = Tensor::zeros(xv.shape);
    kernels::active().scale(s, xv.data.data(), out.data.data(),
                            xv.data.size());
    Node n;
    n.op = Op::kScale;
    n.nin = 1;
    n.in = {x, -1, -1};
    n.val = std::move(out);
    n.needs_grad = node(x).needs_grad;
    n.meta = std::make_unique<NodeMeta>();
    n.meta->s = s;
    return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
    const Tensor& xv = val(x);
    double acc = 0.0;
    for (double v : xv.data) acc += v;
    Node n;
    n.op = Op::kSum;
    n.nin = 1;
    n.in = {x, -1, -1};
    n.val = Tensor::scalar(acc);
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

NodeId Tape::pixelwise_cross_entropy(NodeId logits,
                                     const std::vector<int>& target) {
    const Tensor& lv = val(logits);
    require_chw(lv, "pixelwise-cross-entropy");
    int c = lv.dim(0), h = lv.dim(1), w = lv.dim(2);
    std::size_t npix = std::size_t(h) * w;
    require(target.size() == npix, "pixelwise-cross-entropy: target size ",
            target.size(), " vs ", npix, " pixels");
    Tensor probs = Tensor::zeros(lv.shape);
    double loss = 0.0;
    for (std::size_t p = 0; p < npix; ++p) {
        int t = target[p];
        require(t >= 0 && t < c, "pixelwise-cross-entropy: target class ", t,
                " out of range [0,", c, ")");
        double mx = lv.data[p];
        for (int ci = 1; ci < c; ++ci)
            mx = std::max(mx, lv.data[std::size_t(ci) * npix + p]);
        double lse = 0.0;
        for (int ci = 0; ci < c; ++ci)
            lse += std::exp(lv.data[std::size_t(ci) * npix + p] - mx);
        lse = mx + std::log(lse);
        for (int ci = 0; ci < c; ++ci)
            probs.data[std::size_t(ci) * npix + p] =
                std::exp(lv.data[std::size_t(ci) * npix + p] - lse);
        loss += lse - lv.data[std::size_t(t) * npix + p];
    }
    loss /= double(npix);
    Node n;
    n.op = Op::kPixelwiseCe;
    n.nin = 1;
    n.in = {logits, -1, -1};
    n.val = Tensor::scalar(loss);
    n.needs_grad = node(logits).needs_grad;
    n.meta = std::make_unique<NodeMeta>();
    n.meta->itarget = target;
    n.meta->probs = std::move(probs);
    return push(std::move(n));
}

NodeId Tape::sigmoid_bce(NodeId logit, Tensor target, Tensor weight) {
    const Tensor& xv = val(logit);
    require(xv.same_shape(target) && xv.same_shape(weight),
            "sigmoid-bce: shape mismatch logits ", xv.shape_str(), " target ",
            target.shape_str(), " weight ", weight.shape_str());
    double wsum = 0.0;
    for (double v : weight.data) wsum += v;
    double loss = 0.0;
    if (wsum > 0.0) {
        for (std::size_t i = 0; i < xv.data.size(); ++i) {
            double x = xv.data[i], t = target.data[i];
            double li = std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::fabs(x)));
            loss += weight.data[i] * li;
        }
        loss /= wsum;
    }
    Node n;
    n.op = Op::kSigmoidBce;
    n.nin = 1;
    n.in = {logit, -1, -1};
    n.val = Tensor::scalar(loss);
    n.needs_grad = node(logit).needs_grad;
    n.meta = std::make_unique<NodeMeta>();
    n.meta->target = std::move(target);
    n.meta->weight = std::move(weight);
    n.meta->norm = wsum;
    return push(std::move(n));
}

NodeId Tape::l1_distance(NodeId a, NodeId b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    require(av.same_shape(bv), "l1-distance: shape mismatch ", av.shape_str(),
            " vs ", bv.shape_str());
    double acc = 0.0;
    for (std::size_t i = 0; i < av.data.size(); ++i)
        acc += std::fabs(av.data[i] - bv.data[i]);
    Node n;
    n.op = Op::kL1Distance;
    n.nin = 2;
    n.in = {a, b, -1};
    n.val = Tensor::scalar(acc);
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

NodeId Tape::sum_over_pixelset(NodeId logits, int cls,
                               const std::vector<int>& pixels) {
    const Tensor& lv = val(logits);
    require_chw(lv, "sum-over-pixelset");
    int c = lv.dim(0);
    std::size_t npix = std::size_t(lv.dim(1)) * lv.dim(2);
    require(cls >= 0 && cls < c, "sum-over-pixelset: class ", cls,
            " out of range [0,", c, ")");
    require(!pixels.empty(), "sum-over-pixelset: empty pixel set");
    double acc = 0.0;
    for (int p : pixels) {
        require(p >= 0 && std::size_t(p) < npix,
                "sum-over-pixelset: pixel index ", p, " out of range");
        acc += lv.data[std::size_t(cls) * npix + std::size_t(p)];
    }
    Node n;
    n.op = Op::kSumPixelSet;
    n.nin = 1;
    n.in = {logits, -1, -1};
    n.val = Tensor::scalar(acc);
    n.needs_grad = node(logits).needs_grad;
    n.meta = std::make_unique<NodeMeta>();
    n.meta->pixels = pixels;
    n.meta->cls = cls;
    return push(std::move(n));
}

NodeId Tape::stddev(NodeId x) {
    const Tensor& xv = val(x);
    require(xv.numel() > 0, "stddev: empty tensor");
    double n_elems = double(xv.numel());
    double mu = 0.0;
    for (double v : xv.data) mu += v;
    mu /= n_elems;
    double var = 0.0;
    for (double v : xv.data) var += (v - mu) * (v - mu);
    var /= n_elems;
    double sigma = std::sqrt(var);
    Node n;
    n.op = Op::kStdDev;
    n.nin = 1;
    n.in = {x, -1, -1};
    n.val = Tensor::scalar(sigma);
    n.needs_grad = node(x).needs_grad;
    n.meta = std::make_unique<NodeMeta>();
    n.meta->mu = mu;
    n.meta->sigma = sigma;
    return push(std::move(n));
}

NodeId Tape::channel_weighted_sum(NodeId x, const std::vector<double>& weights) {
    const Tensor& xv = val(x);
    require_chw(xv, "channel-weighted-sum");
    int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    require(int(weights.size()) == c, "channel-weighted-sum: ", weights.size(),
            " weights for ", c, " channels");
    std::size_t plane = std::size_t(h) * w;
    Tensor out = Tensor::zeros({h, w});
    for (int ci = 0; ci < c; ++ci)
        kernels::active().axpy(weights[std::size_t(ci)],
                               xv.data.data() + std::size_t(ci) * plane,
                               out.data.data(), plane);
    Node n;
    n.op = Op::kChannelWeightedSum;
    n.nin = 1;
    n.in = {x, -1, -1};
    n.val = std::move(out);
    n.needs_grad = node(x).needs_grad;
    n.meta = std::make_unique<NodeMeta>();
    n.meta->cw = weights;
    return push(std::move(n));
}

std::map<NodeId, Tensor> Tape::backward(NodeId scalar_id,
                                        const std::vector<NodeId>& wanted) const {
    check_id(scalar_id);
    require(node(scalar_id).val.ndim() == 0,
            "backward: node ", scalar_id, " is not a scalar, shape ",
            node(scalar_id).val.shape_str());
    for (NodeId w : wanted) check_id(w);

    // need[i]: gradient flow must reach node i (it is wanted, or some wanted
    // node / grad-enabled leaf lies below it).
    std::vector<char> need(nodes_.size(), 0);
    for (NodeId w : wanted) need[std::size_t(w)] = 1;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.op == Op::kLeaf && n.needs_grad) need[i] = 1;
        for (int j = 0; j < n.nin; ++j)
            if (need[std::size_t(n.in[std::size_t(j)])]) need[i] = 1;
    }

    std::vector<Tensor> grads(nodes_.size());
    std::vector<char> has_grad(nodes_.size(), 0);
    grads[std::size_t(scalar_id)] = Tensor::scalar(1.0);
    has_grad[std::size_t(scalar_id)] = 1;

    auto grad_into = [&](NodeId id) -> Tensor& {
        if (!has_grad[std::size_t(id)]) {
            grads[std::size_t(id)] = Tensor::zeros(nodes_[std::size_t(id)].val.shape);
            has_grad[std::size_t(id)] = 1;
        }
        return grads[std::size_t(id)];
    };
    auto want_input = [&](const Node& n, int j) {
        return need[std::size_t(n.in[std::size_t(j)])];
    };

    const auto& kt = kernels::active();

    for (NodeId id = scalar_id; id >= 0; --id) {
        if (!has_grad[std::size_t(id)]) continue;
        const Node& n = nodes_[std::size_t(id)];
        if (n.op == Op::kLeaf) continue;
        const Tensor& gy = grads[std::size_t(id)];
        const double gys = gy.ndim() == 0 ? gy.data[0] : 0.0;
        switch (n.op) {
            case Op::kConv2d: {
                const Tensor& xv = val(n.in[0]);
                const Tensor& wv = val(n.in[1]);
                int cout = wv.dim(0), cin = wv.dim(1), k = wv.dim(2);
                int h = xv.dim(1), w = xv.dim(2);
                if (want_input(n, 0))
                    kt.conv2d_bwd_input(gy.data.data(), cout, h, w,
                                        wv.data.data(), cin, k,
                                        grad_into(n.in[0]).data.data());
                if (want_input(n, 1) || want_input(n, 2)) {
                    double* gw = want_input(n, 1)
                                     ? grad_into(n.in[1]).data.data()
                                     : nullptr;
                    double* gb = want_input(n, 2)
                                     ? grad_into(n.in[2]).data.data()
                                     : nullptr;
                    if (gw && gb) {
                        kt.conv2d_bwd_weights(xv.data.data(), cin, h, w,
                                              gy.data.data(), cout, k, gw, gb);
                    } else {
                        // Rare split case: fall back to a scratch buffer.
                        Tensor sw = Tensor::zeros(wv.shape);
                        Tensor sb = Tensor::zeros({cout});
                        kt.conv2d_bwd_weights(xv.data.data(), cin, h, w,
                                              gy.data.data(), cout, k,
                                              sw.data.data(), sb.data.data());
                        if (gw)
                            kt.axpy(1.0, sw.data.data(), gw, sw.data.size());
                        if (gb)
                            kt.axpy(1.0, sb.data.data(), gb, sb.data.size());
                    }
                }
                break;
            }
            case Op::kConv2dValid: {
                const Tensor& xv = val(n.in[0]);
                const Tensor& wv = val(n.in[1]);
                int cout = wv.dim(0), cin = wv.dim(1), k = wv.dim(2);
                int h = xv.dim(1), w = xv.dim(2);
                int oh = h - k + 1, ow = w - k + 1;
                // Small op (tests only): direct scalar loops.
                if (want_input(n, 0)) {
                    Tensor& gx = grad_into(n.in[0]);
                    for (int co = 0; co < cout; ++co)
                        for (int oy = 0; oy < oh; ++oy)
                            for (int ox = 0; ox < ow; ++ox) {
                                double g = gy.data[(std::size_t(co) * oh + oy) * ow + ox];
                                for (int ci = 0; ci < cin; ++ci)
                                    for (int ky = 0; ky < k; ++ky)
                                        for (int kx = 0; kx < k; ++kx)
                                            gx.data[(std::size_t(ci) * h + oy + ky) * w + ox + kx] +=
                                                g * wv.data[((std::size_t(co) * cin + ci) * k + ky) * k + kx];
                            }
                }
                if (want_input(n, 1)) {
                    Tensor& gw = grad_into(n.in[1]);
                    const Tensor& x2 = val(n.in[0]);
                    for (int co = 0; co < cout; ++co)
                        for (int oy = 0; oy < oh; ++oy)
                            for (int ox = 0; ox < ow; ++ox) {
                                double g = gy.data[(std::size_t(co) * oh + oy) * ow + ox];
                                for (int ci = 0; ci < cin; ++ci)
                                    for (int ky = 0; ky < k; ++ky)
                                        for (int kx = 0; kx < k; ++kx)
                                            gw.data[((std::size_t(co) * cin + ci) * k + ky) * k + kx] +=
                                                g * x2.data[(std::size_t(ci) * h + oy + ky) * w + ox + kx];
                            }
                }
                if (want_input(n, 2)) {
                    Tensor& gb = grad_into(n.in[2]);
                    for (int co = 0; co < cout; ++co) {
                        double acc = 0.0;
                        for (int i = 0; i < oh * ow; ++i)
                            acc += gy.data[std::size_t(co) * oh * ow + i];
                        gb.data[std::size_t(co)] += acc;
                    }
                }
                break;
            }
            case Op::kTConv2x2: {
                const Tensor& xv = val(n.in[0]);
                const Tensor& wv = val(n.in[1]);
                int cout = wv.dim(0), cin = wv.dim(1);
                int h = xv.dim(1), w = xv.dim(2);
                if (want_input(n, 0))
                    kernels::scalar::tconv2x2_bwd_input(
                        gy.data.data(), cout, h, w, wv.data.data(), cin,
                        grad_into(n.in[0]).data.data());
                if (want_input(n, 1) || want_input(n, 2)) {
                    Tensor sw = Tensor::zeros(wv.shape);
                    Tensor sb = Tensor::zeros({cout});
                    kernels::scalar::tconv2x2_bwd_weights(
                        xv.data.data(), cin, h, w, gy.data.data(), cout,
                        sw.data.data(), sb.data.data());
                    if (want_input(n, 1))
                        kt.axpy(1.0, sw.data.data(),
                                grad_into(n.in[1]).data.data(), sw.data.size());
                    if (want_input(n, 2))
                        kt.axpy(1.0, sb.data.data(),
                                grad_into(n.in[2]).data.data(), sb.data.size());
                }
                break;
            }
            case Op::kRelu: {
                if (want_input(n, 0))
                    kt.relu_bwd(val(n.in[0]).data.data(), gy.data.data(),
                                grad_into(n.in[0]).data.data(), gy.data.size());
                break;
            }
            case Op::kMaxPool2x2: {
                if (want_input(n, 0)) {
                    const Tensor& xv = val(n.in[0]);
                    kernels::scalar::maxpool2x2_bwd(
                        gy.data.data(), xv.dim(0), xv.dim(1), xv.dim(2),
                        n.meta->argmax.data(), grad_into(n.in[0]).data.data());
                }
                break;
            }
            case Op::kConcatCh: {
                const Tensor& av = val(n.in[0]);
                if (want_input(n, 0))
                    kt.axpy(1.0, gy.data.data(),
                            grad_into(n.in[0]).data.data(), av.data.size());
                if (want_input(n, 1))
                    kt.axpy(1.0, gy.data.data() + av.data.size(),
                            grad_into(n.in[1]).data.data(),
                            val(n.in[1]).data.size());
                break;
            }
            case Op::kUpsample2x: {
                if (want_input(n, 0)) {
                    const Tensor& xv = val(n.in[0]);
                    kernels::scalar::upsample2x_bwd(
                        gy.data.data(), xv.dim(0), xv.dim(1), xv.dim(2),
                        grad_into(n.in[0]).data.data());
                }
                break;
            }
            case Op::kGlobalAvgPool: {
                if (want_input(n, 0)) {
                    const Tensor& xv = val(n.in[0]);
                    std::size_t plane = std::size_t(xv.dim(1)) * xv.dim(2);
                    Tensor& gx = grad_into(n.in[0]);
                    for (int c = 0; c < xv.dim(0); ++c) {
                        double g = gy.data[std::size_t(c)] / double(plane);
                        for (std::size_t i = 0; i < plane; ++i)
                            gx.data[std::size_t(c) * plane + i] += g;
                    }
                }
                break;
            }
            case Op::kDense: {
                const Tensor& xv = val(n.in[0]);
                const Tensor& wv = val(n.in[1]);
                int m = wv.dim(0), k = wv.dim(1);
                if (want_input(n, 0)) {
                    Tensor& gx = grad_into(n.in[0]);
                    for (int i = 0; i < m; ++i)
                        kt.axpy(gy.data[std::size_t(i)],
                                wv.data.data() + std::size_t(i) * k,
                                gx.data.data(), std::size_t(k));
                }
                if (want_input(n, 1)) {
                    Tensor& gw = grad_into(n.in[1]);
                    for (int i = 0; i < m; ++i)
                        kt.axpy(gy.data[std::size_t(i)], xv.data.data(),
                                gw.data.data() + std::size_t(i) * k,
                                std::size_t(k));
                }
                if (want_input(n, 2))
                    kt.axpy(1.0, gy.data.data(),
                            grad_into(n.in[2]).data.data(), std::size_t(m));
                break;
            }
            case Op::kAdd: {
                if (want_input(n, 0))
                    kt.axpy(1.0, gy.data.data(),
                            grad_into(n.in[0]).data.data(), gy.data.size());
                if (want_input(n, 1))
                    kt.axpy(1.0, gy.data.data(),
                            grad_into(n.in[1]).data.data(), gy.data.size());
                break;
            }
            case Op::kMul: {
                if (want_input(n, 0)) {
                    Tensor t = Tensor::zeros(gy.shape);
                    kt.mul(gy.data.data(), val(n.in[1]).data.data(),
                           t.data.data(), gy.data.size());
                    kt.axpy(1.0, t.data.data(),
                            grad_into(n.in[0]).data.data(), gy.data.size());
                }
                if (want_input(n, 1)) {
                    Tensor t = Tensor::zeros(gy.shape);
                    kt.mul(gy.data.data(), val(n.in[0]).data.data(),
                           t.data.data(), gy.data.size());
                    kt.axpy(1.0, t.data.data(),
                            grad_into(n.in[1]).data.data(), gy.data.size());
                }
                break;
            }
            case Op::kScale: {
                if (want_input(n, 0))
                    kt.axpy(n.meta->s, gy.data.data(),
                            grad_into(n.in[0]).data.data(), gy.data.size());
                break;
            }
            case Op::kSum: {
                if (want_input(n, 0)) {
                    Tensor& gx = grad_into(n.in[0]);
                    for (double& v : gx.data) v += gys;
                }
                break;
            }
            case Op::kPixelwiseCe: {
                if (want_input(n, 0)) {
                    const Tensor& probs = n.meta->probs;
                    int c = probs.dim(0);
                    std::size_t npix = std::size_t(probs.dim(1)) * probs.dim(2);
                    Tensor& gx = grad_into(n.in[0]);
                    double inv = gys / double(npix);
                    for (int ci = 0; ci < c; ++ci)
                        kt.axpy(inv,
                                probs.data.data() + std::size_t(ci) * npix,
                                gx.data.data() + std::size_t(ci) * npix, npix);
                    for (std::size_t p = 0; p < npix; ++p)
                        gx.data[std::size_t(n.meta->itarget[p]) * npix + p] -= inv;
                }
                break;
            }
            case Op::kSigmoidBce: {
                if (want_input(n, 0) && n.meta->norm > 0.0) {
                    const Tensor& xv = val(n.in[0]);
                    Tensor& gx = grad_into(n.in[0]);
                    double inv = gys / n.meta->norm;
                    for (std::size_t i = 0; i < xv.data.size(); ++i) {
                        double wgt = n.meta->weight.data[i];
                        if (wgt == 0.0) continue;
                        gx.data[i] += inv * wgt *
                                      (sigmoid(xv.data[i]) - n.meta->target.data[i]);
                    }
                }
                break;
            }
            case Op::kL1Distance: {
                const Tensor& av = val(n.in[0]);
                const Tensor& bv = val(n.in[1]);
                for (std::size_t i = 0; i < av.data.size(); ++i) {
                    double d = av.data[i] - bv.data[i];
                    double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                    if (want_input(n, 0)) grad_into(n.in[0]).data[i] += gys * s;
                    if (want_input(n, 1)) grad_into(n.in[1]).data[i] -= gys * s;
                }
                break;
            }
            case Op::kSumPixelSet: {
                if (want_input(n, 0)) {
                    const Tensor& lv = val(n.in[0]);
                    std::size_t npix = std::size_t(lv.dim(1)) * lv.dim(2);
                    Tensor& gx = grad_into(n.in[0]);
                    for (int p : n.meta->pixels)
                        gx.data[std::size_t(n.meta->cls) * npix + std::size_t(p)] += gys;
                }
                break;
            }
            case Op::kStdDev: {
                if (want_input(n, 0) && n.meta->sigma > 1e-300) {
                    const Tensor& xv = val(n.in[0]);
                    Tensor& gx = grad_into(n.in[0]);
                    double inv = gys / (double(xv.numel()) * n.meta->sigma);
                    for (std::size_t i = 0; i < xv.data.size(); ++i)
                        gx.data[i] += inv * (xv.data[i] - n.meta->mu);
                }
                break;
            }
            case Op::kChannelWeightedSum: {
                if (want_input(n, 0)) {
                    const Tensor& xv = val(n.in[0]);
                    std::size_t plane = std::size_t(xv.dim(1)) * xv.dim(2);
                    Tensor& gx = grad_into(n.in[0]);
                    for (int ci = 0; ci < xv.dim(0); ++ci)
                        kt.axpy(n.meta->cw[std::size_t(ci)], gy.data.data(),
                                gx.data.data() + std::size_t(ci) * plane, plane);
                }
                break;
            }
            case Op::kLeaf:
                break;
        }
    }

    std::map<NodeId, Tensor> out;
    for (NodeId w : wanted) {
        if (has_grad[std::size_t(w)])
            out.emplace(w, std::move(grads[std::size_t(w)]));
        else
            out.emplace(w, Tensor::zeros(node(w).val.shape));
    }
    return out;
}

Tensor softmax_channels(const Tensor& logits) {
    require(logits.ndim() == 3, "softmax: expected [C,H,W], got ",
            logits.shape_str());
    int c = logits.dim(0);
    std::size_t npix = std::size_t(logits.dim(1)) * logits.dim(2);
    Tensor out = Tensor::zeros(logits.shape);
    for (std::size_t p = 0; p < npix; ++p) {
        double mx = logits.data[p];
        for (int ci = 1; ci < c; ++ci)
            mx = std::max(mx, logits.data[std::size_t(ci) * npix + p]);
        double z = 0.0;
        for (int ci = 0; ci < c; ++ci)
            z += std::exp(logits.data[std::size_t(ci) * npix + p] - mx);
        for (int ci = 0; ci < c; ++ci)
            out.data[std::size_t(ci) * npix + p] =
                std::exp(logits.data[std::size_t(ci) * npix + p] - mx) / z;
    }
    return out;
}

std::vector<uint8_t> argmax_channels(const Tensor& logits) {
    require(logits.ndim() == 3, "argmax: expected [C,H,W], got ",
            logits.shape_str());
    int c = logits.dim(0);
    std::size_t npix = std::size_t(logits.dim(1)) * logits.dim(2);
    std::vector<uint8_t> out(npix, 0);
    for (std::size_t p = 0; p < npix; ++p) {
        double best = logits.data[p];
        int bi = 0;
        for (int ci = 1; ci < c; ++ci) {
            double v = logits.data[std::size_t(ci) * npix + p];
            if (v > best) {
                best = v;
                bi = ci;
            }
        }
        out[p] = uint8_t(bi);
    }
    return out;
}

}  // namespace poselab
