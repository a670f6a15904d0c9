#pragma once

#include <cmath>
#include <cstdint>

namespace poselab {

// Counter-free splitmix64 generator. Hand-rolled so that streams are
// bit-identical across platforms and standard-library versions; derived
// per-item streams make parallel and serial runs agree.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    uint64_t uniform_int(uint64_t n) {
        // Rejection-free modulo bias is negligible for desk-scale n; use
        // multiply-shift which is exact enough and deterministic.
        return uint64_t((__uint128_t(next_u64()) * n) >> 64);
    }

    int sign() { return (next_u64() & 1) ? 1 : -1; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Independent child stream keyed by tag. hash(seed, tag) via splitmix
    // scrambles so that child(k) and child(k+1) are uncorrelated.
    Rng child(uint64_t tag) const {
        Rng h(state_ ^ (0x6a09e667f3bcc909ull + tag * 0x9e3779b97f4a7c15ull));
        uint64_t s = h.next_u64();
        return Rng(s);
    }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace poselab
