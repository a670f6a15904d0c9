// AVX2 kernel variants. Map-style kernels keep the scalar per-element
// accumulation order (ci, ky, kx ascending), so their outputs are bitwise
// identical to the scalar reference; reduction-style kernels use lane
// partial sums and are checked against scalar at 1e-12 relative tolerance.
// Built with -ffp-contract=off: no FMA contraction, mul and add round
// separately exactly like the scalar code.

#if defined(POSELAB_HAVE_AVX2_KERNELS)

#include <immintrin.h>

#include <algorithm>

#include "poselab/kernels/kernels.hpp"

namespace poselab::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

}  // namespace

void conv2d_fwd(const double* x, int cin, int h, int w, const double* wgt,
                int cout, int k, const double* bias, double* y) {
    const int r = k / 2;
    const std::size_t plane = std::size_t(h) * w;
    for (int co = 0; co < cout; ++co) {
        double* yp = y + std::size_t(co) * plane;
        const double b = bias ? bias[co] : 0.0;
        {
            const __m256d bv = _mm256_set1_pd(b);
            std::size_t i = 0;
            for (; i + 4 <= plane; i += 4) _mm256_storeu_pd(yp + i, bv);
            for (; i < plane; ++i) yp[i] = b;
        }
        const double* wco = wgt + std::size_t(co) * cin * k * k;
        for (int ci = 0; ci < cin; ++ci) {
            const double* xp = x + std::size_t(ci) * plane;
            const double* wci = wco + std::size_t(ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int oy = 0; oy < h; ++oy) {
                    const int iy = oy + ky - r;
                    if (iy < 0 || iy >= h) continue;
                    double* yrow = yp + std::size_t(oy) * w;
                    const double* xrow = xp + std::size_t(iy) * w;
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = wci[ky * k + kx];
                        const int d = kx - r;
                        const int ox0 = std::max(0, -d);
                        const int ox1 = std::min(w, w - d);
                        const __m256d wvec = _mm256_set1_pd(wv);
                        int ox = ox0;
                        for (; ox + 4 <= ox1; ox += 4) {
                            __m256d xv = _mm256_loadu_pd(xrow + ox + d);
                            __m256d yv = _mm256_loadu_pd(yrow + ox);
                            yv = _mm256_add_pd(yv, _mm256_mul_pd(wvec, xv));
                            _mm256_storeu_pd(yrow + ox, yv);
                        }
                        for (; ox < ox1; ++ox) yrow[ox] += wv * xrow[ox + d];
                    }
                }
            }
        }
    }
}

void conv2d_bwd_input(const double* gy, int cout, int h, int w,
                      const double* wgt, int cin, int k, double* gx) {
    const int r = k / 2;
    const std::size_t plane = std::size_t(h) * w;
    for (int ci = 0; ci < cin; ++ci) {
        double* gxp = gx + std::size_t(ci) * plane;
        for (int co = 0; co < cout; ++co) {
            const double* gyp = gy + std::size_t(co) * plane;
            const double* wci = wgt + (std::size_t(co) * cin + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int iy = 0; iy < h; ++iy) {
                    const int oy = iy - ky + r;
                    if (oy < 0 || oy >= h) continue;
                    double* gxrow = gxp + std::size_t(iy) * w;
                    const double* gyrow = gyp + std::size_t(oy) * w;
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = wci[ky * k + kx];
                        const int d = r - kx;  // ox = ix + d
                        const int ix0 = std::max(0, -d);
                        const int ix1 = std::min(w, w - d);
                        const __m256d wvec = _mm256_set1_pd(wv);
                        int ix = ix0;
                        for (; ix + 4 <= ix1; ix += 4) {
                            __m256d gv = _mm256_loadu_pd(gyrow + ix + d);
                            __m256d av = _mm256_loadu_pd(gxrow + ix);
                            av = _mm256_add_pd(av, _mm256_mul_pd(gv, wvec));
                            _mm256_storeu_pd(gxrow + ix, av);
                        }
                        for (; ix < ix1; ++ix) gxrow[ix] += gyrow[ix + d] * wv;
                    }
                }
            }
        }
    }
}

void conv2d_bwd_weights(const double* x, int cin, int h, int w,
                        const double* gy, int cout, int k, double* gw,
                        double* gb) {
    const int r = k / 2;
    const std::size_t plane = std::size_t(h) * w;
    for (int co = 0; co < cout; ++co) {
        const double* gyp = gy + std::size_t(co) * plane;
        if (gb) {
            __m256d acc = _mm256_setzero_pd();
            std::size_t i = 0;
            for (; i + 4 <= plane; i += 4)
                acc = _mm256_add_pd(acc, _mm256_loadu_pd(gyp + i));
            double s = hsum(acc);
            for (; i < plane; ++i) s += gyp[i];
            gb[co] += s;
        }
        for (int ci = 0; ci < cin; ++ci) {
            const double* xp = x + std::size_t(ci) * plane;
            double* gwp = gw + (std::size_t(co) * cin + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const int oy0 = std::max(0, r - ky);
                    const int oy1 = std::min(h, h + r - ky);
                    const int ox0 = std::max(0, r - kx);
                    const int ox1 = std::min(w, w + r - kx);
                    __m256d acc = _mm256_setzero_pd();
                    double tail = 0.0;
                    for (int oy = oy0; oy < oy1; ++oy) {
                        const double* grow = gyp + std::size_t(oy) * w;
                        const double* xrow =
                            xp + std::size_t(oy + ky - r) * w + (kx - r);
                        int ox = ox0;
                        for (; ox + 4 <= ox1; ox += 4)
                            acc = _mm256_add_pd(
                                acc, _mm256_mul_pd(_mm256_loadu_pd(grow + ox),
                                                   _mm256_loadu_pd(xrow + ox)));
                        for (; ox < ox1; ++ox) tail += grow[ox] * xrow[ox];
                    }
                    gwp[ky * k + kx] += hsum(acc) + tail;
                }
            }
        }
    }
}

void relu_fwd(const double* x, double* y, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* x, const double* gy, double* gx, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        __m256d g = _mm256_and_pd(mask, _mm256_loadu_pd(gy + i));
        _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), g));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0) gx[i] += gy[i];
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_add_pd(yv, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void add(const double* a, const double* b, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(
            y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(
            y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

void scale(double s, const double* x, double* y, std::size_t n) {
    const __m256d sv = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_mul_pd(sv, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = s * x[i];
}

}  // namespace poselab::kernels::avx2

#endif  // POSELAB_HAVE_AVX2_KERNELS
