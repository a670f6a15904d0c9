#include "poselab/attack/defenses.hpp"

#include <algorithm>
#include <cmath>

namespace poselab::attack {

namespace {

// Annex-K luminance quantization table.
constexpr int kLumaQuant[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

struct DctTables {
    double cosv[8][8];  // cos((2x+1) u pi / 16)
    double cu[8];
    DctTables() {
        for (int u = 0; u < 8; ++u) {
            cu[u] = u == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
            for (int x = 0; x < 8; ++x)
                cosv[x][u] = std::cos((2 * x + 1) * u * M_PI / 16.0);
        }
    }
};
const DctTables kDct;

void dct8x8(const double in[64], double out[64]) {
    double tmp[64];
    for (int y = 0; y < 8; ++y)
        for (int u = 0; u < 8; ++u) {
            double s = 0;
            for (int x = 0; x < 8; ++x) s += in[y * 8 + x] * kDct.cosv[x][u];
            tmp[y * 8 + u] = s;
        }
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double s = 0;
            for (int y = 0; y < 8; ++y) s += tmp[y * 8 + u] * kDct.cosv[y][v];
            out[v * 8 + u] = 0.25 * kDct.cu[u] * kDct.cu[v] * s;
        }
}

void idct8x8(const double in[64], double out[64]) {
    double tmp[64];
    for (int v = 0; v < 8; ++v)
        for (int x = 0; x < 8; ++x) {
            double s = 0;
            for (int u = 0; u < 8; ++u)
                s += kDct.cu[u] * in[v * 8 + u] * kDct.cosv[x][u];
            tmp[v * 8 + x] = s;
        }
    for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y) {
            double s = 0;
            for (int v = 0; v < 8; ++v)
                s += kDct.cu[v] * tmp[v * 8 + x] * kDct.cosv[y][v];
            out[y * 8 + x] = 0.25 * s;
        }
}

int reflect(int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return std::clamp(i, 0, n - 1);
}

}  // namespace

Tensor jpeg_defense(const Tensor& image255, int quality) {
    require(image255.ndim() == 3 && image255.dim(0) == 3,
            "jpeg: expected [3,H,W] image, got ", image255.shape_str());
    require(quality >= 1 && quality <= 100, "jpeg: quality ", quality,
            " outside [1,100]");
    const int h = image255.dim(1), w = image255.dim(2);
    const int ph = (h + 7) / 8 * 8, pw = (w + 7) / 8 * 8;

    int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    int q[64];
    for (int i = 0; i < 64; ++i)
        q[i] = std::clamp((kLumaQuant[i] * scale + 50) / 100, 1, 255);

    Tensor out = Tensor::zeros(image255.shape);
    std::vector<double> padded(std::size_t(ph) * pw);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x)
                padded[std::size_t(y) * pw + x] =
                    image255.at3(c, reflect(y, h), reflect(x, w)) - 128.0;
        for (int by = 0; by < ph; by += 8)
            for (int bx = 0; bx < pw; bx += 8) {
                double blk[64], coef[64];
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        blk[y * 8 + x] = padded[std::size_t(by + y) * pw + bx + x];
                dct8x8(blk, coef);
                for (int i = 0; i < 64; ++i)
                    coef[i] = std::round(coef[i] / q[i]) * q[i];
                idct8x8(coef, blk);
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        padded[std::size_t(by + y) * pw + bx + x] = blk[y * 8 + x];
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at3(c, y, x) = std::clamp(
                    padded[std::size_t(y) * pw + x] + 128.0, 0.0, 255.0);
    }
    return out;
}

Tensor pixel_deflection(const Tensor& image255, int n_deflections, int window,
                        Rng& rng) {
    require(image255.ndim() == 3 && image255.dim(0) == 3,
            "pixel-deflection: expected [3,H,W] image");
    require(window >= 3 && window % 2 == 1, "pixel-deflection: window must be odd >= 3");
    require(n_deflections >= 0, "pixel-deflection: negative count");
    const int h = image255.dim(1), w = image255.dim(2);
    const int r = window / 2;

    Tensor work = image255;
    for (int i = 0; i < n_deflections; ++i) {
        int x = int(rng.uniform_int(uint64_t(w)));
        int y = int(rng.uniform_int(uint64_t(h)));
        int dx = int(rng.uniform_int(uint64_t(window))) - r;
        int dy = int(rng.uniform_int(uint64_t(window))) - r;
        int sx = std::clamp(x + dx, 0, w - 1);
        int sy = std::clamp(y + dy, 0, h - 1);
        for (int c = 0; c < 3; ++c)
            work.at3(c, y, x) = image255.at3(c, sy, sx);
    }

    Tensor out = Tensor::zeros(image255.shape);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double win[9];
                int k = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx)
                        win[k++] = work.at3(c, std::clamp(y + dy, 0, h - 1),
                                            std::clamp(x + dx, 0, w - 1));
                std::nth_element(win, win + 4, win + 9);
                out.at3(c, y, x) = win[4];
            }
    return out;
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
    require(a.same_shape(b), "psnr: shape mismatch");
    double mse = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= double(a.data.size());
    if (mse <= 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace poselab::attack
