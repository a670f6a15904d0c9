#pragma once

#include <array>
#include <map>
#include <memory>
#include <vector>

#include "poselab/tensor.hpp"

namespace poselab {

// Reverse-mode autodiff over an append-only op tape. Nodes are appended in
// topological order (inputs precede consumers); backward walks the tape once
// in reverse from the loss node. Node values stay resident until the tape is
// destroyed; attack and training loops build a fresh tape per image.
//
// Gradients flow only into subgraphs that can reach a requested node or a
// grad-enabled leaf, so inference-only weights cost nothing in backward.

using NodeId = int;

enum class Op : uint8_t {
    kLeaf,
    kConv2d,       // (x, w, b), same padding, odd k
    kConv2dValid,  // (x, w, b), valid padding
    kTConv2x2,     // (x, w, b), stride 2
    kRelu,
    kMaxPool2x2,
    kConcatCh,
    kUpsample2x,
    kGlobalAvgPool,
    kDense,  // (x[n], w[m,n], b[m]) -> [m]
    kAdd,
    kMul,
    kScale,
    kSum,
    kPixelwiseCe,        // mean softmax cross-entropy over pixels
    kSigmoidBce,         // weighted mean binary CE, logits input
    kL1Distance,         // sum |a-b|
    kSumPixelSet,        // sum of class-t logits over a pixel set
    kStdDev,             // population standard deviation of all entries
    kChannelWeightedSum  // fixed per-channel weights (CAM combine)
};

const char* op_name(Op op);

struct NodeMeta {
    int k = 0;                            // conv kernel size
    double s = 0.0;                       // scale factor
    std::vector<unsigned char> argmax;    // maxpool routing
    std::vector<int> itarget;             // pixelwise CE target classes
    Tensor probs;                         // saved softmax probabilities
    Tensor target;                        // BCE target
    Tensor weight;                        // BCE per-pixel weights
    double norm = 1.0;                    // BCE weight normalizer
    std::vector<int> pixels;              // flattened pixel indices
    int cls = 0;                          // class channel for sum_pixelset
    std::vector<double> cw;               // channel weights
    double mu = 0.0, sigma = 0.0;         // stddev forward state
};

struct Node {
    Op op = Op::kLeaf;
    int nin = 0;
    std::array<NodeId, 3> in{-1, -1, -1};
    Tensor val;
    bool needs_grad = false;
    std::unique_ptr<NodeMeta> meta;
};

class Tape {
public:
    NodeId leaf(Tensor v, bool needs_grad = false);

    NodeId conv2d(NodeId x, NodeId w, NodeId b);
    NodeId conv2d_valid(NodeId x, NodeId w, NodeId b);
    NodeId tconv2x2(NodeId x, NodeId w, NodeId b);
    NodeId relu(NodeId x);
    NodeId maxpool2x2(NodeId x);
    NodeId concat_channels(NodeId a, NodeId b);
    NodeId upsample2x(NodeId x);
    NodeId global_avg_pool(NodeId x);
    NodeId dense(NodeId x, NodeId w, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId x, double s);
    NodeId sum(NodeId x);
    NodeId pixelwise_cross_entropy(NodeId logits, const std::vector<int>& target);
    // Weighted mean binary cross-entropy with logits. weight has the same
    // shape as logit; when all weights are zero the loss and grads are zero.
    NodeId sigmoid_bce(NodeId logit, Tensor target, Tensor weight);
    NodeId l1_distance(NodeId a, NodeId b);
    NodeId sum_over_pixelset(NodeId logits, int cls, const std::vector<int>& pixels);
    NodeId stddev(NodeId x);
    NodeId channel_weighted_sum(NodeId x, const std::vector<double>& weights);

    const Tensor& val(NodeId id) const;
    std::size_t size() const { return nodes_.size(); }
    bool node_needs_grad(NodeId id) const;

    // d val(scalar_id) / d val(id) for each wanted id. scalar_id must hold a
    // scalar (shape []). Gradients are fresh tensors per call, so backward
    // may run multiple times and the tape may be extended in between.
    std::map<NodeId, Tensor> backward(NodeId scalar_id,
                                      const std::vector<NodeId>& wanted) const;

    // Finiteness enforcement after every forward op (on by default).
    static bool check_finite;

private:
    NodeId push(Node n);
    const Node& node(NodeId id) const;
    void check_id(NodeId id) const;

    std::vector<Node> nodes_;
};

}  // namespace poselab
