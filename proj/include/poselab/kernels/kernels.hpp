#pragma once

// Inner-loop kernels for the tensor engine. Every kernel has a scalar
// reference implementation; hot kernels additionally have AVX2 variants
// selected at runtime. Map-style kernels (conv forward, conv input-gradient,
// elementwise) accumulate per output element in the same order in both
// backends and are bitwise identical; reduction-style kernels (weight
// gradients, sums) use lane-partial accumulators under AVX2 and agree with
// the scalar reference to ~1e-12 relative error.
//
// Conventions: tensors are contiguous row-major double arrays. Feature maps
// are [C, H, W]; conv weights are [Cout, Cin, K, K] with odd K and same
// padding (pad = K/2); transposed conv weights are [Cout, Cin, 2, 2] with
// stride 2.

#include <cstddef>

namespace poselab::kernels {

// y[co,oy,ox] = bias[co] + sum_{ci,ky,kx} w[co,ci,ky,kx] * x[ci,oy+ky-r,ox+kx-r]
using Conv2dFwdFn = void (*)(const double* x, int cin, int h, int w,
                             const double* wgt, int cout, int k,
                             const double* bias, double* y);

// gx[ci,iy,ix] += sum_{co,ky,kx} gy[co,iy-ky+r,ix-kx+r] * w[co,ci,ky,kx]
using Conv2dBwdInputFn = void (*)(const double* gy, int cout, int h, int w,
                                  const double* wgt, int cin, int k,
                                  double* gx);

// gw[co,ci,ky,kx] += sum_{oy,ox} gy[co,oy,ox] * x[ci,oy+ky-r,ox+kx-r]
// gb[co]          += sum_{oy,ox} gy[co,oy,ox]
using Conv2dBwdWeightsFn = void (*)(const double* x, int cin, int h, int w,
                                    const double* gy, int cout, int k,
                                    double* gw, double* gb);

using ReluFwdFn = void (*)(const double* x, double* y, std::size_t n);
// gx[i] += gy[i] * (x[i] > 0)
using ReluBwdFn = void (*)(const double* x, const double* gy, double* gx,
                           std::size_t n);
// y[i] += a * x[i]
using AxpyFn = void (*)(double a, const double* x, double* y, std::size_t n);
// y[i] = a[i] + b[i] ; y[i] = a[i] * b[i] ; y[i] = s * x[i]
using BinaryFn = void (*)(const double* a, const double* b, double* y,
                          std::size_t n);
using ScaleFn = void (*)(double s, const double* x, double* y, std::size_t n);

struct KernelTable {
    Conv2dFwdFn conv2d_fwd;
    Conv2dBwdInputFn conv2d_bwd_input;
    Conv2dBwdWeightsFn conv2d_bwd_weights;
    ReluFwdFn relu_fwd;
    ReluBwdFn relu_bwd;
    AxpyFn axpy;
    BinaryFn add;
    BinaryFn mul;
    ScaleFn scale;
};

enum class Backend { scalar, avx2 };

// Scalar-only helpers used by the tensor engine directly (not dispatched;
// they are not hot enough to justify SIMD variants).
namespace scalar {
void conv2d_fwd(const double* x, int cin, int h, int w, const double* wgt,
                int cout, int k, const double* bias, double* y);
void conv2d_bwd_input(const double* gy, int cout, int h, int w,
                      const double* wgt, int cin, int k, double* gx);
void conv2d_bwd_weights(const double* x, int cin, int h, int w,
                        const double* gy, int cout, int k, double* gw,
                        double* gb);
void relu_fwd(const double* x, double* y, std::size_t n);
void relu_bwd(const double* x, const double* gy, double* gx, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void add(const double* a, const double* b, double* y, std::size_t n);
void mul(const double* a, const double* b, double* y, std::size_t n);
void scale(double s, const double* x, double* y, std::size_t n);

// Valid-padding conv used by tests and the generic tape op.
// y is [cout, h-k+1, w-k+1].
void conv2d_valid_fwd(const double* x, int cin, int h, int w,
                      const double* wgt, int cout, int k, const double* bias,
                      double* y);

// Transposed conv, kernel 2x2, stride 2: y is [cout, 2h, 2w].
void tconv2x2_fwd(const double* x, int cin, int h, int w, const double* wgt,
                  int cout, const double* bias, double* y);
void tconv2x2_bwd_input(const double* gy, int cout, int h, int w,
                        const double* wgt, int cin, double* gx);
void tconv2x2_bwd_weights(const double* x, int cin, int h, int w,
                          const double* gy, int cout, double* gw, double* gb);

// 2x2 max pool, stride 2 (h, w even). argmax holds 0..3 = ky*2+kx of the
// first maximal element, for the deterministic backward route.
void maxpool2x2_fwd(const double* x, int c, int h, int w, double* y,
                    unsigned char* argmax);
void maxpool2x2_bwd(const double* gy, int c, int h, int w,
                    const unsigned char* argmax, double* gx);

void upsample2x_fwd(const double* x, int c, int h, int w, double* y);
void upsample2x_bwd(const double* gy, int c, int h, int w, double* gx);
}  // namespace scalar

#if defined(POSELAB_HAVE_AVX2_KERNELS)
namespace avx2 {
void conv2d_fwd(const double* x, int cin, int h, int w, const double* wgt,
                int cout, int k, const double* bias, double* y);
void conv2d_bwd_input(const double* gy, int cout, int h, int w,
                      const double* wgt, int cin, int k, double* gx);
void conv2d_bwd_weights(const double* x, int cin, int h, int w,
                        const double* gy, int cout, int k, double* gw,
                        double* gb);
void relu_fwd(const double* x, double* y, std::size_t n);
void relu_bwd(const double* x, const double* gy, double* gx, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void add(const double* a, const double* b, double* y, std::size_t n);
void mul(const double* a, const double* b, double* y, std::size_t n);
void scale(double s, const double* x, double* y, std::size_t n);
}  // namespace avx2
#endif

// Runtime dispatch. select_best() probes the CPU (and the POSELAB_KERNELS
// env var: "scalar" or "avx2") once at startup; select() forces a backend,
// used by the equivalence tests.
const KernelTable& active();
Backend active_backend();
bool cpu_has_avx2();
bool backend_available(Backend b);
void select(Backend b);
void select_best();

}  // namespace poselab::kernels
