#include "poselab/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "poselab/kernels/kernels.hpp"

namespace poselab {

namespace {
constexpr char kMagic[8] = {'P', 'L', 'C', 'K', '0', '0', '0', '1'};

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(f.good(), "checkpoint: truncated file");
    return v;
}
}  // namespace

int ParamSet::add(const std::string& name, Tensor init) {
    require(index_of(name) < 0, "params: duplicate parameter name ", name);
    Param p;
    p.name = name;
    p.grad = Tensor::zeros(init.shape);
    p.value = std::move(init);
    params_.push_back(std::move(p));
    return int(params_.size()) - 1;
}

int ParamSet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return int(i);
    return -1;
}

void ParamSet::zero_grad() {
    for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

void ParamSet::accumulate(const std::map<NodeId, Tensor>& grads,
                          const std::vector<NodeId>& leaf_ids, double scale) {
    require(leaf_ids.size() == params_.size(),
            "params: leaf id count mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto it = grads.find(leaf_ids[i]);
        if (it == grads.end()) continue;
        kernels::active().axpy(scale, it->second.data.data(),
                               params_[i].grad.data.data(),
                               params_[i].grad.data.size());
    }
}

std::vector<NodeId> ParamSet::register_on(Tape& tape, bool trainable) const {
    std::vector<NodeId> ids;
    ids.reserve(params_.size());
    for (const auto& p : params_) ids.push_back(tape.leaf(p.value, trainable));
    return ids;
}

void ParamSet::step(double lr, OptScheme scheme, double beta1, double beta2,
                    double eps) {
    for (auto& p : params_)
        require(p.grad.all_finite(), "optimizer: non-finite gradient in ",
                p.name, " — aborting");
    ++step_count_;
    if (scheme == OptScheme::sgd) {
        for (auto& p : params_)
            kernels::active().axpy(-lr, p.grad.data.data(),
                                   p.value.data.data(), p.value.data.size());
    } else {
        double bc1 = 1.0 - std::pow(beta1, double(step_count_));
        double bc2 = 1.0 - std::pow(beta2, double(step_count_));
        for (auto& p : params_) {
            if (p.m.data.empty()) {
                p.m = Tensor::zeros(p.value.shape);
                p.v = Tensor::zeros(p.value.shape);
            }
            for (std::size_t i = 0; i < p.value.data.size(); ++i) {
                double g = p.grad.data[i];
                p.m.data[i] = beta1 * p.m.data[i] + (1.0 - beta1) * g;
                p.v.data[i] = beta2 * p.v.data[i] + (1.0 - beta2) * g * g;
                double mhat = p.m.data[i] / bc1;
                double vhat = p.v.data[i] / bc2;
                p.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
    zero_grad();
}

void ParamSet::save(const std::string& path) const {
    std::filesystem::path fp(path);
    if (fp.has_parent_path()) std::filesystem::create_directories(fp.parent_path());
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "checkpoint: cannot open ", path, " for writing");
    f.write(kMagic, sizeof(kMagic));
    write_pod<uint32_t>(f, uint32_t(params_.size()));
    for (const auto& p : params_) {
        write_pod<uint32_t>(f, uint32_t(p.name.size()));
        f.write(p.name.data(), std::streamsize(p.name.size()));
        write_pod<uint32_t>(f, uint32_t(p.value.shape.size()));
        for (int d : p.value.shape) write_pod<uint32_t>(f, uint32_t(d));
        f.write(reinterpret_cast<const char*>(p.value.data.data()),
                std::streamsize(p.value.data.size() * sizeof(double)));
    }
    require(f.good(), "checkpoint: write failed for ", path);
}

void ParamSet::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "checkpoint: cannot open ", path);
    char magic[8];
    f.read(magic, 8);
    require(f.good() && std::memcmp(magic, kMagic, 8) == 0,
            "checkpoint: bad magic in ", path);
    uint32_t count = read_pod<uint32_t>(f);
    require(count == params_.size(), "checkpoint: ", path, " has ", count,
            " tensors, model expects ", params_.size());
    for (auto& p : params_) {
        uint32_t nlen = read_pod<uint32_t>(f);
        std::string name(nlen, '\0');
        f.read(name.data(), nlen);
        require(name == p.name, "checkpoint: tensor ", name,
                " does not match expected ", p.name);
        uint32_t ndim = read_pod<uint32_t>(f);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = int(read_pod<uint32_t>(f));
        require(shape == p.value.shape, "checkpoint: shape mismatch for ",
                name);
        f.read(reinterpret_cast<char*>(p.value.data.data()),
               std::streamsize(p.value.data.size() * sizeof(double)));
        require(f.good(), "checkpoint: truncated tensor data in ", path);
    }
}

Tensor ParamSet::he_conv(int cout, int cin, int k, Rng& rng) {
    Tensor t = Tensor::zeros({cout, cin, k, k});
    double std = std::sqrt(2.0 / (double(cin) * k * k));
    for (double& v : t.data) v = std * rng.normal();
    return t;
}

Tensor ParamSet::he_dense(int out, int in, Rng& rng) {
    Tensor t = Tensor::zeros({out, in});
    double std = std::sqrt(2.0 / double(in));
    for (double& v : t.data) v = std * rng.normal();
    return t;
}

Tensor ParamSet::he_tconv(int cout, int cin, Rng& rng) {
    Tensor t = Tensor::zeros({cout, cin, 2, 2});
    double std = std::sqrt(2.0 / double(cin));
    for (double& v : t.data) v = std * rng.normal();
    return t;
}

}  // namespace poselab
