#include <cstdlib>
#include <cstring>

#include "poselab/kernels/kernels.hpp"
#include "poselab/util/error.hpp"

namespace poselab::kernels {

namespace {

constexpr KernelTable kScalarTable = {
    scalar::conv2d_fwd, scalar::conv2d_bwd_input, scalar::conv2d_bwd_weights,
    scalar::relu_fwd,   scalar::relu_bwd,         scalar::axpy,
    scalar::add,        scalar::mul,              scalar::scale,
};

#if defined(POSELAB_HAVE_AVX2_KERNELS)
constexpr KernelTable kAvx2Table = {
    avx2::conv2d_fwd, avx2::conv2d_bwd_input, avx2::conv2d_bwd_weights,
    avx2::relu_fwd,   avx2::relu_bwd,         avx2::axpy,
    avx2::add,        avx2::mul,              avx2::scale,
};
#endif

struct Dispatch {
    const KernelTable* table = &kScalarTable;
    Backend backend = Backend::scalar;
    Dispatch() {
        // Startup selection; tests may override via select().
        const char* env = std::getenv("POSELAB_KERNELS");
        if (env && std::strcmp(env, "scalar") == 0) return;
#if defined(POSELAB_HAVE_AVX2_KERNELS)
        if (cpu_has_avx2()) {
            table = &kAvx2Table;
            backend = Backend::avx2;
        }
#endif
        if (env && std::strcmp(env, "avx2") == 0 && backend != Backend::avx2)
            fail("kernels: POSELAB_KERNELS=avx2 but AVX2 is unavailable");
    }
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

bool backend_available(Backend b) {
    if (b == Backend::scalar) return true;
#if defined(POSELAB_HAVE_AVX2_KERNELS)
    return cpu_has_avx2();
#else
    return false;
#endif
}

const KernelTable& active() { return *dispatch().table; }

Backend active_backend() { return dispatch().backend; }

void select(Backend b) {
    require(backend_available(b), "kernels: requested backend unavailable");
    if (b == Backend::scalar) {
        dispatch().table = &kScalarTable;
        dispatch().backend = Backend::scalar;
        return;
    }
#if defined(POSELAB_HAVE_AVX2_KERNELS)
    dispatch().table = &kAvx2Table;
    dispatch().backend = Backend::avx2;
#endif
}

void select_best() {
    dispatch() = Dispatch();
}

}  // namespace poselab::kernels
