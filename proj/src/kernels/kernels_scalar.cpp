// Scalar reference kernels. These define the semantics the AVX2 variants are
// tested against; keep them straightforward.

#include <algorithm>

#include "poselab/kernels/kernels.hpp"

namespace poselab::kernels::scalar {

void conv2d_fwd(const double* x, int cin, int h, int w, const double* wgt,
                int cout, int k, const double* bias, double* y) {
    const int r = k / 2;
    const int plane = h * w;
    for (int co = 0; co < cout; ++co) {
        double* yp = y + std::size_t(co) * plane;
        const double* wco = wgt + std::size_t(co) * cin * k * k;
        for (int oy = 0; oy < h; ++oy) {
            for (int ox = 0; ox < w; ++ox) {
                double acc = bias ? bias[co] : 0.0;
                for (int ci = 0; ci < cin; ++ci) {
                    const double* xp = x + std::size_t(ci) * plane;
                    const double* wci = wco + std::size_t(ci) * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                        int iy = oy + ky - r;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            int ix = ox + kx - r;
                            if (ix < 0 || ix >= w) continue;
                            acc += wci[ky * k + kx] * xp[iy * w + ix];
                        }
                    }
                }
                yp[oy * w + ox] = acc;
            }
        }
    }
}

void conv2d_bwd_input(const double* gy, int cout, int h, int w,
                      const double* wgt, int cin, int k, double* gx) {
    const int r = k / 2;
    const int plane = h * w;
    for (int ci = 0; ci < cin; ++ci) {
        double* gxp = gx + std::size_t(ci) * plane;
        for (int iy = 0; iy < h; ++iy) {
            for (int ix = 0; ix < w; ++ix) {
                double acc = gxp[iy * w + ix];
                for (int co = 0; co < cout; ++co) {
                    const double* gyp = gy + std::size_t(co) * plane;
                    const double* wci =
                        wgt + (std::size_t(co) * cin + ci) * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                        int oy = iy - ky + r;
                        if (oy < 0 || oy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            int ox = ix - kx + r;
                            if (ox < 0 || ox >= w) continue;
                            acc += gyp[oy * w + ox] * wci[ky * k + kx];
                        }
                    }
                }
                gxp[iy * w + ix] = acc;
            }
        }
    }
}

void conv2d_bwd_weights(const double* x, int cin, int h, int w,
                        const double* gy, int cout, int k, double* gw,
                        double* gb) {
    const int r = k / 2;
    const int plane = h * w;
    for (int co = 0; co < cout; ++co) {
        const double* gyp = gy + std::size_t(co) * plane;
        if (gb) {
            double acc = gb[co];
            for (int i = 0; i < plane; ++i) acc += gyp[i];
            gb[co] = acc;
        }
        for (int ci = 0; ci < cin; ++ci) {
            const double* xp = x + std::size_t(ci) * plane;
            double* gwp = gw + (std::size_t(co) * cin + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    double acc = gwp[ky * k + kx];
                    int oy0 = std::max(0, r - ky);
                    int oy1 = std::min(h, h + r - ky);
                    int ox0 = std::max(0, r - kx);
                    int ox1 = std::min(w, w + r - kx);
                    for (int oy = oy0; oy < oy1; ++oy) {
                        const double* grow = gyp + oy * w;
                        const double* xrow = xp + (oy + ky - r) * w + (kx - r);
                        for (int ox = ox0; ox < ox1; ++ox)
                            acc += grow[ox] * xrow[ox];
                    }
                    gwp[ky * k + kx] = acc;
                }
            }
        }
    }
}

void relu_fwd(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* x, const double* gy, double* gx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > 0.0) gx[i] += gy[i];
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void scale(double s, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = s * x[i];
}

void conv2d_valid_fwd(const double* x, int cin, int h, int w,
                      const double* wgt, int cout, int k, const double* bias,
                      double* y) {
    const int oh = h - k + 1;
    const int ow = w - k + 1;
    const int plane = h * w;
    for (int co = 0; co < cout; ++co) {
        double* yp = y + std::size_t(co) * oh * ow;
        const double* wco = wgt + std::size_t(co) * cin * k * k;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bias ? bias[co] : 0.0;
                for (int ci = 0; ci < cin; ++ci) {
                    const double* xp = x + std::size_t(ci) * plane;
                    const double* wci = wco + std::size_t(ci) * k * k;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            acc += wci[ky * k + kx] *
                                   xp[(oy + ky) * w + (ox + kx)];
                }
                yp[oy * ow + ox] = acc;
            }
        }
    }
}

void tconv2x2_fwd(const double* x, int cin, int h, int w, const double* wgt,
                  int cout, const double* bias, double* y) {
    const int oh = 2 * h, ow = 2 * w;
    for (int co = 0; co < cout; ++co) {
        double* yp = y + std::size_t(co) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            int iy = oy >> 1, ky = oy & 1;
            for (int ox = 0; ox < ow; ++ox) {
                int ix = ox >> 1, kx = ox & 1;
                double acc = bias ? bias[co] : 0.0;
                for (int ci = 0; ci < cin; ++ci)
                    acc += wgt[((std::size_t(co) * cin + ci) * 2 + ky) * 2 + kx] *
                           x[(std::size_t(ci) * h + iy) * w + ix];
                yp[oy * ow + ox] = acc;
            }
        }
    }
}

void tconv2x2_bwd_input(const double* gy, int cout, int h, int w,
                        const double* wgt, int cin, double* gx) {
    const int oh = 2 * h, ow = 2 * w;
    for (int ci = 0; ci < cin; ++ci) {
        for (int iy = 0; iy < h; ++iy) {
            for (int ix = 0; ix < w; ++ix) {
                double acc = gx[(std::size_t(ci) * h + iy) * w + ix];
                for (int co = 0; co < cout; ++co)
                    for (int ky = 0; ky < 2; ++ky)
                        for (int kx = 0; kx < 2; ++kx)
                            acc += wgt[((std::size_t(co) * cin + ci) * 2 + ky) * 2 + kx] *
                                   gy[(std::size_t(co) * oh + 2 * iy + ky) * ow +
                                      2 * ix + kx];
                gx[(std::size_t(ci) * h + iy) * w + ix] = acc;
            }
        }
    }
}

void tconv2x2_bwd_weights(const double* x, int cin, int h, int w,
                          const double* gy, int cout, double* gw, double* gb) {
    const int oh = 2 * h, ow = 2 * w;
    for (int co = 0; co < cout; ++co) {
        const double* gyp = gy + std::size_t(co) * oh * ow;
        if (gb) {
            double acc = gb[co];
            for (int i = 0; i < oh * ow; ++i) acc += gyp[i];
            gb[co] = acc;
        }
        for (int ci = 0; ci < cin; ++ci) {
            const double* xp = x + std::size_t(ci) * h * w;
            for (int ky = 0; ky < 2; ++ky) {
                for (int kx = 0; kx < 2; ++kx) {
                    double acc = 0.0;
                    for (int iy = 0; iy < h; ++iy)
                        for (int ix = 0; ix < w; ++ix)
                            acc += gyp[(2 * iy + ky) * ow + 2 * ix + kx] *
                                   xp[iy * w + ix];
                    gw[((std::size_t(co) * cin + ci) * 2 + ky) * 2 + kx] += acc;
                }
            }
        }
    }
}

void maxpool2x2_fwd(const double* x, int c, int h, int w, double* y,
                    unsigned char* argmax) {
    const int oh = h / 2, ow = w / 2;
    for (int ci = 0; ci < c; ++ci) {
        const double* xp = x + std::size_t(ci) * h * w;
        double* yp = y + std::size_t(ci) * oh * ow;
        unsigned char* ap = argmax + std::size_t(ci) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double best = xp[(2 * oy) * w + 2 * ox];
                unsigned char bi = 0;
                for (unsigned char j = 1; j < 4; ++j) {
                    double v = xp[(2 * oy + (j >> 1)) * w + 2 * ox + (j & 1)];
                    if (v > best) {
                        best = v;
                        bi = j;
                    }
                }
                yp[oy * ow + ox] = best;
                ap[oy * ow + ox] = bi;
            }
        }
    }
}

void maxpool2x2_bwd(const double* gy, int c, int h, int w,
                    const unsigned char* argmax, double* gx) {
    const int oh = h / 2, ow = w / 2;
    for (int ci = 0; ci < c; ++ci) {
        const double* gyp = gy + std::size_t(ci) * oh * ow;
        const unsigned char* ap = argmax + std::size_t(ci) * oh * ow;
        double* gxp = gx + std::size_t(ci) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                unsigned char j = ap[oy * ow + ox];
                gxp[(2 * oy + (j >> 1)) * w + 2 * ox + (j & 1)] +=
                    gyp[oy * ow + ox];
            }
        }
    }
}

void upsample2x_fwd(const double* x, int c, int h, int w, double* y) {
    const int ow = 2 * w;
    for (int ci = 0; ci < c; ++ci) {
        const double* xp = x + std::size_t(ci) * h * w;
        double* yp = y + std::size_t(ci) * 4 * h * w;
        for (int iy = 0; iy < h; ++iy) {
            for (int ix = 0; ix < w; ++ix) {
                double v = xp[iy * w + ix];
                yp[(2 * iy) * ow + 2 * ix] = v;
                yp[(2 * iy) * ow + 2 * ix + 1] = v;
                yp[(2 * iy + 1) * ow + 2 * ix] = v;
                yp[(2 * iy + 1) * ow + 2 * ix + 1] = v;
            }
        }
    }
}

void upsample2x_bwd(const double* gy, int c, int h, int w, double* gx) {
    const int ow = 2 * w;
    for (int ci = 0; ci < c; ++ci) {
        const double* gyp = gy + std::size_t(ci) * 4 * h * w;
        double* gxp = gx + std::size_t(ci) * h * w;
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < w; ++ix)
                gxp[iy * w + ix] += gyp[(2 * iy) * ow + 2 * ix] +
                                    gyp[(2 * iy) * ow + 2 * ix + 1] +
                                    gyp[(2 * iy + 1) * ow + 2 * ix] +
                                    gyp[(2 * iy + 1) * ow + 2 * ix + 1];
    }
}

}  // namespace poselab::kernels::scalar
