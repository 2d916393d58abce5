#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lfseg/core/error.hpp"
#include "lfseg/core/tensor.hpp"

namespace lfseg {

// ---------------------------------------------------------------------------
// Class schemes
// ---------------------------------------------------------------------------

/// Stage-1 partitions a B-scan into 3 regions (above ILM / retina / below BM);
/// stage-2 into the 5 layer regions, the two backgrounds and fluid.
class ClassScheme {
public:
    static const ClassScheme& stage1() {
        static const ClassScheme s{"stage1",
                                   {"above-ILM", "retina", "below-BM"},
                                   {false, true, false}};
        return s;
    }

    static const ClassScheme& stage2() {
        static const ClassScheme s{"stage2",
                                   {"background-above-ILM", "ILM-NFL", "NFL-IPL", "IPL-OPL",
                                    "OPL-IOS", "IOS-BM", "background-below-BM", "fluid"},
                                   {false, true, true, true, true, true, false, true}};
        return s;
    }

    static const ClassScheme& by_name(const std::string& name) {
        if (name == "stage1") return stage1();
        if (name == "stage2") return stage2();
        throw ConfigError("unknown class scheme: " + name);
    }

    const std::string& name() const { return name_; }
    int num_classes() const { return static_cast<int>(labels_.size()); }
    const std::string& label(int id) const { return labels_.at(id); }

    /// True for ids inside the retina, fluid included (symbol L in the pixel
    /// weight definition).
    bool is_retina(int id) const { return retina_.at(id); }

    bool operator==(const ClassScheme& o) const { return this == &o; }

private:
    ClassScheme(std::string name, std::vector<std::string> labels, std::vector<bool> retina)
        : name_(std::move(name)), labels_(std::move(labels)), retina_(std::move(retina)) {}

    std::string name_;
    std::vector<std::string> labels_;
    std::vector<bool> retina_;
};

// ---------------------------------------------------------------------------
// Label maps
// ---------------------------------------------------------------------------

struct LabelMap {
    Grid<std::uint8_t> labels;
    const ClassScheme* scheme = &ClassScheme::stage2();

    int height() const { return labels.height(); }
    int width() const { return labels.width(); }

    void validate() const {
        const int n = scheme->num_classes();
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels.data()[i] >= n)
                throw ConfigError("label id " + std::to_string(labels.data()[i]) +
                                  " outside scheme " + scheme->name());
    }
};

/// Collapse an 8-class map to the 3-class stage-1 target:
/// background-above stays 0, everything retinal (layers + fluid) becomes 1,
/// background-below becomes 2.
inline LabelMap merge_to_stage1(const LabelMap& m) {
    if (m.scheme != &ClassScheme::stage2())
        throw ConfigError("merge_to_stage1 expects an 8-class map");
    LabelMap out;
    out.scheme = &ClassScheme::stage1();
    out.labels = Grid<std::uint8_t>(m.height(), m.width());
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        std::uint8_t v = m.labels.data()[i];
        out.labels.data()[i] = (v == 0) ? 0 : (v == 6) ? 2 : 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Surfaces
// ---------------------------------------------------------------------------

/// Per-column row coordinates of the ILM (y1) and the BM (y2); fractional
/// values are allowed. Rows grow downward, so y1 < y2 everywhere.
struct SurfacePair {
    std::vector<double> y1;
    std::vector<double> y2;

    int width() const { return static_cast<int>(y1.size()); }

    void validate(int height) const {
        if (y1.size() != y2.size()) throw ShapeError("SurfacePair: y1/y2 length mismatch");
        for (int x = 0; x < width(); ++x) {
            if (!(y1[x] >= 0.0 && y1[x] < y2[x] && y2[x] <= height - 1.0))
                throw DegenerateSurface(x);
        }
    }
};

// ---------------------------------------------------------------------------
// Volumes and input stacks
// ---------------------------------------------------------------------------

/// 3-D stack of B-scans; intensities in [0,1], voxel order (bscan, row, col).
struct OctVolume {
    int num_bscans = 0;
    int height = 0;
    int width = 0;
    std::array<double, 3> spacing_um{5.0, 12.2, 12.2}; // axial, lateral, inter-B-scan
    std::vector<float> voxels;

    float& at(int b, int y, int x) { return voxels[(static_cast<std::size_t>(b) * height + y) * width + x]; }
    float at(int b, int y, int x) const { return voxels[(static_cast<std::size_t>(b) * height + y) * width + x]; }
    const float* bscan(int b) const {
        return voxels.data() + static_cast<std::size_t>(b) * height * width;
    }

    void validate() const {
        if (height < 16 || width < 16) throw ConfigError("OctVolume: H and W must be >= 16");
        if (voxels.size() != static_cast<std::size_t>(num_bscans) * height * width)
            throw CorruptFile("OctVolume: voxel count does not match dims");
        for (float v : voxels)
            if (!(v >= 0.0f && v <= 1.0f))
                throw ConfigError("OctVolume: intensity outside [0,1] or non-finite");
    }
};

/// Network input: C x H x W with channel order [prev, current, next] and an
/// optional relative-distance channel appended (C = 4). C = 1 keeps only the
/// current B-scan.
using BscanStack = TensorF;

/// Build the (1- or 3-channel) input stack for one B-scan. Missing neighbors
/// at the volume ends are edge-replicated.
inline BscanStack extract_bscan_stack(const OctVolume& vol, int index, int channels = 3) {
    if (index < 0 || index >= vol.num_bscans)
        throw IndexError("B-scan index " + std::to_string(index) + " out of range [0, " +
                         std::to_string(vol.num_bscans) + ")");
    if (channels != 1 && channels != 3)
        throw ConfigError("extract_bscan_stack: channels must be 1 or 3");
    BscanStack stack(channels, vol.height, vol.width);
    const std::size_t plane = stack.plane_size();
    auto copy_plane = [&](int channel, int b) {
        const float* src = vol.bscan(b);
        std::copy(src, src + plane, stack.plane(channel));
    };
    if (channels == 1) {
        copy_plane(0, index);
    } else {
        copy_plane(0, std::max(index - 1, 0));
        copy_plane(1, index);
        copy_plane(2, std::min(index + 1, vol.num_bscans - 1));
    }
    return stack;
}

/// Append a relative-distance channel to a 3-channel stack.
inline BscanStack append_channel(const BscanStack& stack, const TensorF& extra) {
    if (extra.channels() != 1 || extra.height() != stack.height() || extra.width() != stack.width())
        throw ShapeError("append_channel: extra channel shape mismatch");
    BscanStack out(stack.channels() + 1, stack.height(), stack.width());
    std::copy(stack.data(), stack.data() + stack.size(), out.data());
    std::copy(extra.data(), extra.data() + extra.size(), out.plane(stack.channels()));
    return out;
}

// ---------------------------------------------------------------------------
// Label map -> layer surfaces
// ---------------------------------------------------------------------------

/// Per-column first row of each region below the six boundaries
/// (ILM, post-NFL, post-IPL, post-OPL, IS/OS, BM). Requires every column to
/// contain classes 1..6; fluid may interrupt a run but not erase a class.
inline std::vector<std::vector<int>> labelmap_to_surfaces(const LabelMap& map) {
    if (map.scheme != &ClassScheme::stage2())
        throw ConfigError("labelmap_to_surfaces expects an 8-class map");
    const int h = map.height(), w = map.width();
    std::vector<std::vector<int>> surfaces(6, std::vector<int>(w, -1));
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            int id = map.labels.at(y, x);
            if (id >= 1 && id <= 6 && surfaces[id - 1][x] < 0) surfaces[id - 1][x] = y;
        }
        for (int k = 0; k < 6; ++k)
            if (surfaces[k][x] < 0) throw MissingLayer(x, k + 1);
    }
    return surfaces;
}

} // namespace lfseg
