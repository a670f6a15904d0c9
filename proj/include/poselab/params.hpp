#pragma once

#include <string>
#include <vector>

#include "poselab/tape.hpp"
#include "poselab/tensor.hpp"
#include "poselab/util/rng.hpp"

namespace poselab {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m, v;  // Adam moments, allocated lazily
};

enum class OptScheme { sgd, adam };

// Named parameter tensors with persistent gradient accumulators and
// optimizer state. Insertion order is the checkpoint order.
class ParamSet {
public:
    int add(const std::string& name, Tensor init);
    int index_of(const std::string& name) const;  // -1 if absent

    Param& at(int idx) { return params_[std::size_t(idx)]; }
    const Param& at(int idx) const { return params_[std::size_t(idx)]; }
    std::size_t size() const { return params_.size(); }

    void zero_grad();
    // Accumulate grads returned by Tape::backward for registered leaves.
    void accumulate(const std::map<NodeId, Tensor>& grads,
                    const std::vector<NodeId>& leaf_ids, double scale = 1.0);

    // Registers every parameter as a tape leaf; returns leaf ids in index
    // order. trainable=false marks leaves grad-free (inference/attack).
    std::vector<NodeId> register_on(Tape& tape, bool trainable) const;

    // One optimizer step; gradients are zeroed afterwards. Aborts on
    // non-finite gradients.
    void step(double lr, OptScheme scheme, double beta1 = 0.9,
              double beta2 = 0.999, double eps = 1e-8);

    int64_t step_count() const { return step_count_; }

    void save(const std::string& path) const;
    void load(const std::string& path);

    // Deterministic He-style fan-in initializers.
    static Tensor he_conv(int cout, int cin, int k, Rng& rng);
    static Tensor he_dense(int out, int in, Rng& rng);
    static Tensor he_tconv(int cout, int cin, Rng& rng);

private:
    std::vector<Param> params_;
    int64_t step_count_ = 0;
};

}  // namespace poselab
