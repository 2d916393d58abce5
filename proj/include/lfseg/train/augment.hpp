#pragma once
#include <cmath>

#include "lfseg/core/rng.hpp"
#include "lfseg/core/tensor.hpp"
#include "lfseg/data/types.hpp"
#include "lfseg/loss/losses.hpp"

namespace lfseg {

struct AugmentConfig {
    bool enabled = true;
    double flip_probability = 0.5; // horizontal only
    double rotation_deg = 25.0;    // drawn uniformly in [-rotation_deg, +rotation_deg]
    double scale_min = 0.5;
    double scale_max = 1.5;

    void validate() const {
        if (flip_probability < 0 || flip_probability > 1)
            throw ConfigError("augment: flip_probability outside [0,1]");
        if (rotation_deg < 0) throw ConfigError("augment: rotation_deg must be >= 0");
        if (!(scale_min > 0 && scale_max >= scale_min))
            throw ConfigError("augment: need 0 < scale_min <= scale_max");
    }
};

/// One training element: input stack, target labels and their pixel weights.
struct TrainSample {
    BscanStack stack;
    LabelMap target;
    PixelWeightMap weights;
};

namespace detail {

/// Output-to-input affine map (rotation + isotropic scale about the image
/// center, optional horizontal flip).
struct InverseAffine {
    double m00, m01, m10, m11, cx, cy;
    bool flip;
    int width;

    void map(double xo, double yo, double& xi, double& yi) const {
        const double dx = xo - cx, dy = yo - cy;
        xi = m00 * dx + m01 * dy + cx;
        yi = m10 * dx + m11 * dy + cy;
        if (flip) xi = (width - 1) - xi;
    }
};

template <typename T>
T bilinear_or_zero(const Tensor<T>& img, int channel, double x, double y) {
    const int h = img.height(), w = img.width();
    if (x < 0 || y < 0 || x > w - 1 || y > h - 1) return T(0);
    const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0, fy = y - y0;
    const double v = (1 - fy) * ((1 - fx) * img.at(channel, y0, x0) + fx * img.at(channel, y0, x1)) +
                     fy * ((1 - fx) * img.at(channel, y1, x0) + fx * img.at(channel, y1, x1));
    return static_cast<T>(v);
}

} // namespace detail

/// Apply one random flip/rotation/scale draw to the whole sample: every image
/// channel is warped bilinearly, labels and weights by nearest neighbor.
/// Out-of-canvas pixels become intensity 0 / class 0 / weight 1.
inline TrainSample augment(const TrainSample& sample, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    const bool flip = rng.bernoulli(cfg.flip_probability);
    const double theta = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) * M_PI / 180.0;
    const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);

    const int h = sample.stack.height(), w = sample.stack.width();
    detail::InverseAffine inv{};
    const double c = std::cos(-theta) / scale, s = std::sin(-theta) / scale;
    inv.m00 = c;
    inv.m01 = -s;
    inv.m10 = s;
    inv.m11 = c;
    inv.cx = (w - 1) / 2.0;
    inv.cy = (h - 1) / 2.0;
    inv.flip = flip;
    inv.width = w;

    TrainSample out;
    out.stack = BscanStack(sample.stack.channels(), h, w);
    out.target.scheme = sample.target.scheme;
    out.target.labels = Grid<std::uint8_t>(h, w);
    out.weights = PixelWeightMap(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double xi, yi;
            inv.map(x, y, xi, yi);
            for (int ch = 0; ch < sample.stack.channels(); ++ch)
                out.stack.at(ch, y, x) = detail::bilinear_or_zero(sample.stack, ch, xi, yi);
            const int xn = static_cast<int>(std::lround(xi)), yn = static_cast<int>(std::lround(yi));
            if (xn >= 0 && xn < w && yn >= 0 && yn < h) {
                out.target.labels.at(y, x) = sample.target.labels.at(yn, xn);
                out.weights.at(y, x) = sample.weights.at(yn, xn);
            } else {
                out.target.labels.at(y, x) = 0;
                out.weights.at(y, x) = 1.0f;
            }
        }
    }
    return out;
}

} // namespace lfseg
