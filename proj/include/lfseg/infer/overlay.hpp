#pragma once
#include <array>
#include <cmath>

#include "lfseg/core/png_io.hpp"
#include "lfseg/core/tensor.hpp"
#include "lfseg/data/types.hpp"
#include "lfseg/distmap/distmap.hpp"

namespace lfseg {

/// Fixed 8-class overlay palette (class id -> RGB). Class 0 stays
/// uncolored so the B-scan background remains visible.
inline constexpr std::array<std::array<std::uint8_t, 3>, 8> kOverlayPalette{{
    {0, 0, 0},       // 0 background above ILM (not blended)
    {230, 25, 75},   // 1 ILM-NFL
    {60, 180, 75},   // 2 NFL-IPL
    {255, 225, 25},  // 3 IPL-OPL
    {67, 99, 216},   // 4 OPL-IOS
    {245, 130, 49},  // 5 IOS-BM
    {145, 30, 180},  // 6 background below BM
    {66, 212, 244},  // 7 fluid
}};

/// Grayscale B-scan with the color-coded class overlay blended at `alpha`.
inline RgbImage make_overlay(const OctVolume& vol, int bscan, const LabelMap& labels,
                             double alpha) {
    if (labels.height() != vol.height || labels.width() != vol.width)
        throw ShapeError("make_overlay: label map dims do not match the volume");
    RgbImage img(vol.height, vol.width);
    for (int y = 0; y < vol.height; ++y) {
        for (int x = 0; x < vol.width; ++x) {
            const double gray = 255.0 * vol.at(bscan, y, x);
            const int id = labels.labels.at(y, x);
            const double a = id == 0 ? 0.0 : alpha;
            std::uint8_t* px = img.pixel(y, x);
            for (int c = 0; c < 3; ++c)
                px[c] = static_cast<std::uint8_t>(
                    std::lround((1.0 - a) * gray + a * kOverlayPalette[id][c]));
        }
    }
    return img;
}

/// Affine map used when dumping distance maps to 16-bit PNGs; recorded in the
/// PNG text chunk so the float values can be recovered.
inline constexpr const char* kDistmapMappingKey = "lfseg-distmap-mapping";
inline constexpr const char* kDistmapMappingText = "value = -2 + 5 * sample / 65535";

inline Grid<std::uint16_t> distmap_to_u16(const RelativeDistanceMap& map) {
    Grid<std::uint16_t> out(map.height(), map.width());
    for (int y = 0; y < map.height(); ++y)
        for (int x = 0; x < map.width(); ++x) {
            const double v = std::clamp((map.at(0, y, x) - kDistMapClipLo) /
                                            (kDistMapClipHi - kDistMapClipLo),
                                        0.0, 1.0);
            out.at(y, x) = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        }
    return out;
}

} // namespace lfseg
