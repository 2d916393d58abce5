#pragma once
#include <algorithm>
#include <cmath>
#include <vector>

#include "lfseg/core/error.hpp"
#include "lfseg/core/tensor.hpp"
#include "lfseg/data/types.hpp"

namespace lfseg {

/// Per-pixel normalized retinal depth: 0 on the ILM, 1 on the BM, negative
/// above the retina, greater than 1 below it.
using RelativeDistanceMap = TensorF;

inline constexpr double kDistMapClipLo = -2.0;
inline constexpr double kDistMapClipHi = 3.0;

/// Minimum number of retina-labeled pixels for a column to count as valid.
inline constexpr int kMinRetinaRunPx = 3;

/// Recover the ILM/BM pair from a 3-class stage-1 map. Per column, y1 is the
/// topmost retina row and y2 one past the bottommost. Columns with fewer than
/// kMinRetinaRunPx retina pixels are repaired by linear interpolation between
/// the nearest valid columns (nearest value held beyond the ends).
inline SurfacePair extract_surfaces(const LabelMap& stage1) {
    if (stage1.scheme != &ClassScheme::stage1())
        throw ConfigError("extract_surfaces expects a 3-class map");
    const int h = stage1.height(), w = stage1.width();
    std::vector<double> y1(w), y2(w);
    std::vector<bool> valid(w, false);
    for (int x = 0; x < w; ++x) {
        int top = -1, bottom = -1, count = 0;
        for (int y = 0; y < h; ++y) {
            if (stage1.labels.at(y, x) == 1) {
                if (top < 0) top = y;
                bottom = y;
                ++count;
            }
        }
        if (count >= kMinRetinaRunPx) {
            valid[x] = true;
            y1[x] = top;
            y2[x] = bottom + 1;
        }
    }

    std::vector<int> valid_cols;
    for (int x = 0; x < w; ++x)
        if (valid[x]) valid_cols.push_back(x);
    if (valid_cols.empty()) throw SurfaceExtractionError("no column with a usable retina run");

    for (int x = 0; x < w; ++x) {
        if (valid[x]) continue;
        auto it = std::lower_bound(valid_cols.begin(), valid_cols.end(), x);
        if (it == valid_cols.begin()) {
            y1[x] = y1[*it];
            y2[x] = y2[*it];
        } else if (it == valid_cols.end()) {
            int xl = valid_cols.back();
            y1[x] = y1[xl];
            y2[x] = y2[xl];
        } else {
            int xr = *it, xl = *(it - 1);
            double t = static_cast<double>(x - xl) / (xr - xl);
            y1[x] = y1[xl] + t * (y1[xr] - y1[xl]);
            y2[x] = y2[xl] + t * (y2[xr] - y2[xl]);
        }
    }

    // Keep the pair inside the canvas invariant (a predicted retina run that
    // touches the last row would otherwise put y2 at H).
    for (int x = 0; x < w; ++x) {
        y2[x] = std::min(y2[x], h - 1.0);
        y1[x] = std::max(0.0, std::min(y1[x], y2[x] - 1.0));
    }
    return SurfacePair{std::move(y1), std::move(y2)};
}

/// I(x,y) = (y - y1[x]) / (y2[x] - y1[x]), clipped to [-2, 3].
template <typename T = float>
Tensor<T> compute_distance_map(const SurfacePair& surfaces, int height, int width) {
    if (surfaces.width() != width) throw ShapeError("compute_distance_map: surface width mismatch");
    for (int x = 0; x < width; ++x)
        if (!(surfaces.y1[x] < surfaces.y2[x])) throw DegenerateSurface(x);
    Tensor<T> map(1, height, width);
    for (int x = 0; x < width; ++x) {
        const double top = surfaces.y1[x];
        const double inv_span = 1.0 / (surfaces.y2[x] - top);
        for (int y = 0; y < height; ++y) {
            double v = (static_cast<double>(y) - top) * inv_span;
            map.at(0, y, x) = static_cast<T>(std::clamp(v, kDistMapClipLo, kDistMapClipHi));
        }
    }
    return map;
}

/// Distance channel used when stage-1 surface extraction fails on a B-scan.
template <typename T = float>
Tensor<T> fallback_distance_map(int height, int width) {
    return Tensor<T>(1, height, width, T(0.5));
}

} // namespace lfseg
