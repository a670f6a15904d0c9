#include "poselab/cam/overlay.hpp"

#include <algorithm>
#include <cmath>

namespace poselab::cam {

namespace {

// Jet-style ramp: blue -> cyan -> yellow -> red over [0,1].
void jet(double t, double& r, double& g, double& b) {
    t = std::clamp(t, 0.0, 1.0);
    r = std::clamp(1.5 - std::fabs(4 * t - 3.0), 0.0, 1.0);
    g = std::clamp(1.5 - std::fabs(4 * t - 2.0), 0.0, 1.0);
    b = std::clamp(1.5 - std::fabs(4 * t - 1.0), 0.0, 1.0);
}

double bilinear(const AttentionMap& m, double fy, double fx) {
    // Map cell centers at (+0.5, +0.5).
    double y = fy * m.h - 0.5, x = fx * m.w - 0.5;
    int y0 = int(std::floor(y)), x0 = int(std::floor(x));
    double ty = y - y0, tx = x - x0;
    auto at = [&](int r, int c) {
        r = std::clamp(r, 0, m.h - 1);
        c = std::clamp(c, 0, m.w - 1);
        return m.at(r, c);
    };
    return (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
           ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
}

}  // namespace

Image8 render_overlay(const Tensor& image255, const AttentionMap& map) {
    require(image255.ndim() == 3 && image255.dim(0) == 3,
            "overlay: expected [3,H,W] image");
    int h = image255.dim(1), w = image255.dim(2);
    double peak = 0;
    for (double v : map.v) peak = std::max(peak, v);
    if (peak <= 0) peak = 1;

    Image8 out;
    out.w = w;
    out.h = h;
    out.channels = 3;
    out.pixels.resize(std::size_t(w) * h * 3);
    const double alpha = 0.5;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double t = bilinear(map, (y + 0.5) / h, (x + 0.5) / w) / peak;
            double r, g, b;
            jet(t, r, g, b);
            double src[3] = {image255.at3(0, y, x), image255.at3(1, y, x),
                             image255.at3(2, y, x)};
            double ramp[3] = {255 * r, 255 * g, 255 * b};
            for (int c = 0; c < 3; ++c) {
                double v = (1 - alpha) * src[c] + alpha * ramp[c];
                out.at(y, x, c) =
                    uint8_t(std::clamp(std::lround(v), 0l, 255l));
            }
        }
    return out;
}

void save_overlay_png(const std::string& path, const Tensor& image255,
                      const AttentionMap& map) {
    write_png(path, render_overlay(image255, map));
}

}  // namespace poselab::cam
