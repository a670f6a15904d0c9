#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "poselab/util/error.hpp"

namespace poselab {

// Dense row-major tensor of 64-bit floats. Feature maps are [C, H, W].
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        require(numel_of(shape) == int64_t(data.size()), "tensor: shape ",
                shape_str(), " does not match data length ", data.size());
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            require(d >= 0, "tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        int64_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(std::size_t(n), 0.0));
    }

    static Tensor full(std::vector<int> s, double v) {
        int64_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(std::size_t(n), v));
    }

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    int64_t numel() const { return int64_t(data.size()); }
    int ndim() const { return int(shape.size()); }
    int dim(int i) const { return shape[std::size_t(i)]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& at3(int c, int y, int x) {
        return data[(std::size_t(c) * shape[1] + y) * shape[2] + x];
    }
    double at3(int c, int y, int x) const {
        return data[(std::size_t(c) * shape[1] + y) * shape[2] + x];
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::fabs(v));
        return m;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

// Channel-wise softmax for [C,H,W] logits (inference-time utility).
Tensor softmax_channels(const Tensor& logits);

// Per-pixel argmax over channels; returns H*W class indices.
std::vector<uint8_t> argmax_channels(const Tensor& logits);

inline double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace poselab
