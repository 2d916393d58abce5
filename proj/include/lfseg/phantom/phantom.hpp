#pragma once
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfseg/core/error.hpp"
#include "lfseg/core/io.hpp"
#include "lfseg/core/png_io.hpp"
#include "lfseg/core/rng.hpp"
#include "lfseg/core/tensor.hpp"
#include "lfseg/data/types.hpp"

namespace lfseg {

/// Seeded synthetic OCT volume generator. Stands in for clinical data: smooth
/// sinusoidal layer boundaries, per-layer mean intensities with mild lateral
/// modulation, multiplicative gamma speckle, elliptical fluid pockets with a
/// shadow artifact underneath.
struct PhantomConfig {
    int height = 128;
    int width = 128;
    int num_bscans = 4;
    double surface_amplitude_px = 6.0;
    std::array<double, 5> layer_means{0.62, 0.48, 0.58, 0.44, 0.78};
    std::array<double, 2> background_means{0.08, 0.18}; // above ILM, below BM
    double fluid_mean = 0.05;
    double speckle_strength = 0.6;
    double fluid_probability = 0.3;
    std::array<double, 2> fluid_rx_px{6.0, 14.0}; // lateral semi-axis range
    std::array<double, 2> fluid_ry_px{4.0, 9.0};  // axial semi-axis range
    double shadow_attenuation = 0.55;
    std::uint64_t seed = 1;

    void validate() const {
        if (height < 32 || width < 16) throw ConfigError("phantom: height >= 32 and width >= 16 required");
        if (num_bscans < 1) throw ConfigError("phantom: num_bscans >= 1 required");
        for (double m : layer_means)
            if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("phantom: layer mean outside [0,1]");
        for (double m : background_means)
            if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("phantom: background mean outside [0,1]");
        if (!(fluid_mean >= 0.0 && fluid_mean <= 1.0)) throw ConfigError("phantom: fluid mean outside [0,1]");
        if (speckle_strength < 0.0) throw ConfigError("phantom: speckle_strength must be >= 0");
        if (fluid_probability < 0.0 || fluid_probability > 1.0)
            throw ConfigError("phantom: fluid_probability outside [0,1]");
        if (!(fluid_rx_px[0] > 0 && fluid_rx_px[1] >= fluid_rx_px[0]))
            throw ConfigError("phantom: bad fluid_rx_px range");
        if (!(fluid_ry_px[0] > 0 && fluid_ry_px[1] >= fluid_ry_px[0]))
            throw ConfigError("phantom: bad fluid_ry_px range");
        if (shadow_attenuation < 0.0 || shadow_attenuation > 1.0)
            throw ConfigError("phantom: shadow_attenuation outside [0,1]");
        if (surface_amplitude_px < 0.0) throw ConfigError("phantom: surface_amplitude_px must be >= 0");
    }
};

struct PhantomVolume {
    OctVolume volume;
    std::vector<LabelMap> labels;                            // 8-class, one per B-scan
    std::vector<SurfacePair> ilm_bm;                         // ground-truth ILM/BM
    std::vector<std::array<std::vector<double>, 6>> layers;  // all six boundary surfaces
    std::vector<Grid<std::uint8_t>> fluid;                   // per-B-scan fluid mask
};

namespace detail {

// Minimum float gap between adjacent boundaries; rounding to integer rows
// then still leaves every layer >= 3 px thick.
inline constexpr double kMinSurfaceGap = 3.5;

struct SurfaceWave {
    std::array<double, 3> amplitude;
    std::array<double, 3> cycles;     // lateral cycles across the B-scan width
    std::array<double, 3> phase;
    std::array<double, 3> bscan_drift; // phase shift per B-scan, keeps neighbors correlated

    double eval(double x01, int bscan) const {
        double v = 0.0;
        for (int j = 0; j < 3; ++j)
            v += amplitude[j] *
                 std::sin(6.283185307179586 * cycles[j] * x01 + phase[j] + bscan_drift[j] * bscan);
        return v;
    }
};

inline SurfaceWave draw_wave(Rng& rng, double max_amplitude) {
    SurfaceWave w{};
    double budget = max_amplitude;
    for (int j = 0; j < 3; ++j) {
        w.amplitude[j] = rng.uniform(0.2, 1.0) * budget / (j + 1.5);
        w.cycles[j] = rng.uniform(0.4, 1.2) * (j + 1);
        w.phase[j] = rng.uniform(0.0, 6.283185307179586);
        w.bscan_drift[j] = rng.uniform(-0.3, 0.3);
    }
    // Normalize so the worst-case sum stays within the configured amplitude.
    double total = w.amplitude[0] + w.amplitude[1] + w.amplitude[2];
    if (total > max_amplitude && total > 0.0)
        for (auto& a : w.amplitude) a *= max_amplitude / total;
    return w;
}

} // namespace detail

inline PhantomVolume generate_phantom(const PhantomConfig& cfg) {
    cfg.validate();
    const int h = cfg.height, w = cfg.width, nb = cfg.num_bscans;
    Rng rng(cfg.seed);

    // Volume-level geometry: where the retina sits and how thick each layer is.
    Rng geo = rng.fork(1);
    const double retina_top = h * geo.uniform(0.16, 0.22);
    const double retina_thickness = h * geo.uniform(0.46, 0.54);
    std::array<double, 5> fractions{0.14, 0.24, 0.16, 0.26, 0.20};
    double frac_sum = 0.0;
    for (auto& f : fractions) {
        f *= 1.0 + 0.1 * geo.uniform(-1.0, 1.0);
        frac_sum += f;
    }
    for (auto& f : fractions) f /= frac_sum;

    std::array<detail::SurfaceWave, 6> waves;
    for (auto& wave : waves) wave = detail::draw_wave(geo, cfg.surface_amplitude_px);

    // Lateral intensity modulation, tied to the speckle strength so the
    // noise-free configuration reproduces the configured means exactly.
    Rng tex = rng.fork(2);
    std::array<double, 7> lat_cycles{}, lat_phase{};
    const double lat_amp = 0.1 * std::min(cfg.speckle_strength, 1.0);
    for (int i = 0; i < 7; ++i) {
        lat_cycles[i] = tex.uniform(0.5, 1.5);
        lat_phase[i] = tex.uniform(0.0, 6.283185307179586);
    }

    PhantomVolume out;
    out.volume.num_bscans = nb;
    out.volume.height = h;
    out.volume.width = w;
    out.volume.voxels.assign(static_cast<std::size_t>(nb) * h * w, 0.0f);

    for (int b = 0; b < nb; ++b) {
        Rng brng = rng.fork(100 + static_cast<std::uint64_t>(b));

        // Boundary surfaces for this B-scan, with the minimum gap enforced.
        std::array<std::vector<double>, 6> surf;
        for (auto& s : surf) s.resize(w);
        bool out_of_canvas = false;
        for (int x = 0; x < w; ++x) {
            double x01 = static_cast<double>(x) / w;
            double cum = 0.0;
            for (int k = 0; k < 6; ++k) {
                double base = retina_top + cum * retina_thickness;
                surf[k][x] = base + waves[k].eval(x01, b);
                if (k < 5) cum += fractions[k];
            }
            for (int k = 1; k < 6; ++k)
                surf[k][x] = std::max(surf[k][x], surf[k - 1][x] + detail::kMinSurfaceGap);
            if (surf[0][x] < 2.0 || surf[5][x] > h - 3.0) out_of_canvas = true;
        }
        if (out_of_canvas)
            throw ConfigError("phantom: surfaces leave the canvas; reduce amplitude or thickness");

        // Rasterize the 8-class map.
        LabelMap map;
        map.scheme = &ClassScheme::stage2();
        map.labels = Grid<std::uint8_t>(h, w);
        std::array<std::vector<long>, 6> rows;
        for (int k = 0; k < 6; ++k) {
            rows[k].resize(w);
            for (int x = 0; x < w; ++x) rows[k][x] = std::llround(surf[k][x]);
        }
        for (int x = 0; x < w; ++x) {
            for (int y = 0; y < h; ++y) {
                std::uint8_t id = 6;
                if (y < rows[0][x]) id = 0;
                else
                    for (int k = 0; k < 5; ++k)
                        if (y < rows[k + 1][x]) {
                            id = static_cast<std::uint8_t>(k + 1);
                            break;
                        }
                map.labels.at(y, x) = id;
            }
        }

        // Optional fluid pocket, strictly inside the retina.
        Grid<std::uint8_t> fluid(h, w, 0);
        if (brng.bernoulli(cfg.fluid_probability)) {
            for (int attempt = 0; attempt < 20; ++attempt) {
                double rx = brng.uniform(cfg.fluid_rx_px[0], cfg.fluid_rx_px[1]);
                double ry = brng.uniform(cfg.fluid_ry_px[0], cfg.fluid_ry_px[1]);
                rx = std::min(rx, w / 2.0 - 2.0);
                int cx_lo = static_cast<int>(std::ceil(rx)) + 1;
                int cx_hi = w - 2 - static_cast<int>(std::ceil(rx));
                if (cx_hi <= cx_lo) continue;
                int cx = cx_lo + brng.uniform_int(cx_hi - cx_lo);
                // The pocket must fit between ILM and BM over its whole lateral extent.
                double lo = 0.0, hi = static_cast<double>(h);
                for (int x = std::max(0, static_cast<int>(cx - rx)); x <= std::min(w - 1, static_cast<int>(cx + rx)); ++x) {
                    double u = (x - cx) / rx;
                    double dy = ry * std::sqrt(std::max(0.0, 1.0 - u * u));
                    lo = std::max(lo, surf[0][x] + 1.5 + dy);
                    hi = std::min(hi, surf[5][x] - 1.5 - dy);
                }
                if (lo > hi) continue;
                double cy = brng.uniform(lo, hi);
                for (int x = 0; x < w; ++x) {
                    double u = (x - cx) / rx;
                    if (std::abs(u) > 1.0) continue;
                    double dy = ry * std::sqrt(std::max(0.0, 1.0 - u * u));
                    int y_lo = static_cast<int>(std::ceil(cy - dy));
                    int y_hi = static_cast<int>(std::floor(cy + dy));
                    for (int y = y_lo; y <= y_hi; ++y) {
                        double v = (y - cy) / ry, ux = (x - cx) / rx;
                        if (ux * ux + v * v <= 1.0) {
                            fluid.at(y, x) = 1;
                            map.labels.at(y, x) = 7;
                        }
                    }
                }
                break;
            }
        }

        // Intensities: per-class mean, lateral modulation, speckle, fluid shadow.
        Rng speckle = brng.fork(7);
        for (int x = 0; x < w; ++x) {
            double x01 = static_cast<double>(x) / w;
            // Rows below the deepest fluid pixel of this column are shadowed.
            int shadow_from = h;
            for (int y = h - 1; y >= 0; --y)
                if (fluid.at(y, x)) {
                    shadow_from = y + 1;
                    break;
                }
            for (int y = 0; y < h; ++y) {
                int id = map.labels.at(y, x);
                double mean;
                int tex_idx;
                if (id == 0) { mean = cfg.background_means[0]; tex_idx = 0; }
                else if (id == 6) { mean = cfg.background_means[1]; tex_idx = 6; }
                else if (id == 7) { mean = cfg.fluid_mean; tex_idx = 3; }
                else { mean = cfg.layer_means[id - 1]; tex_idx = id; }
                double v = mean * (1.0 + lat_amp * std::sin(6.283185307179586 * lat_cycles[tex_idx] * x01 +
                                                            lat_phase[tex_idx]));
                double factor = 1.0 + cfg.speckle_strength * (speckle.gamma_mean_one(4) - 1.0);
                v *= std::max(factor, 0.0);
                if (y >= shadow_from) v *= cfg.shadow_attenuation;
                out.volume.at(b, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }

        SurfacePair pair;
        pair.y1 = surf[0];
        pair.y2 = surf[5];
        out.labels.push_back(std::move(map));
        out.ilm_bm.push_back(std::move(pair));
        out.layers.push_back(std::move(surf));
        out.fluid.push_back(std::move(fluid));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

/// Ground-truth surface file stored next to each phantom volume.
inline void write_surfaces_json(const std::filesystem::path& path, const PhantomVolume& vol) {
    nlohmann::json bscans = nlohmann::json::array();
    for (std::size_t b = 0; b < vol.ilm_bm.size(); ++b) {
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& s : vol.layers[b]) layers.push_back(s);
        bscans.push_back({{"y1", vol.ilm_bm[b].y1}, {"y2", vol.ilm_bm[b].y2}, {"layers", layers}});
    }
    auto os = detail::open_out(path);
    os << nlohmann::json{{"bscans", bscans}}.dump() << "\n";
}

struct VolumeSurfaces {
    std::vector<SurfacePair> ilm_bm;
    std::vector<std::array<std::vector<double>, 6>> layers;
};

inline VolumeSurfaces read_surfaces_json(const std::filesystem::path& path) {
    auto is = detail::open_in(path);
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw CorruptFile("surface file is not valid JSON: " + path.string());
    VolumeSurfaces out;
    try {
        for (const auto& b : j.at("bscans")) {
            SurfacePair pair;
            pair.y1 = b.at("y1").get<std::vector<double>>();
            pair.y2 = b.at("y2").get<std::vector<double>>();
            std::array<std::vector<double>, 6> layers;
            for (int k = 0; k < 6; ++k) layers[k] = b.at("layers").at(k).get<std::vector<double>>();
            out.ilm_bm.push_back(std::move(pair));
            out.layers.push_back(std::move(layers));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(std::string("surface file malformed: ") + e.what());
    }
    return out;
}

/// Write `num_volumes` phantoms (volume container, per-B-scan label PNGs,
/// surface JSON) plus a manifest. Volume i uses an independent seed stream
/// forked from cfg.seed, so corpora are reproducible file-for-file.
inline Manifest generate_corpus(const PhantomConfig& cfg, int num_volumes,
                                const std::filesystem::path& out_dir, bool overwrite = false) {
    namespace fs = std::filesystem;
    if (fs::exists(out_dir) && !fs::is_directory(out_dir))
        throw IoError("corpus output path is not a directory: " + out_dir.string());
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !overwrite)
        throw IoError("corpus output directory not empty (pass overwrite): " + out_dir.string());
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    Manifest manifest;
    manifest.root = out_dir;
    Rng corpus_rng(cfg.seed);
    for (int i = 0; i < num_volumes; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "vol%03d", i);
        PhantomConfig vcfg = cfg;
        vcfg.seed = corpus_rng.fork(static_cast<std::uint64_t>(i)).next_u64();
        PhantomVolume vol = generate_phantom(vcfg);

        ManifestItem item;
        item.id = id;
        item.volume = std::string(id) + ".octv";
        write_volume(out_dir / item.volume, vol.volume);
        fs::create_directories(out_dir / id);
        for (int b = 0; b < vol.volume.num_bscans; ++b) {
            char name[32];
            std::snprintf(name, sizeof(name), "%s/b%03d.png", id, b);
            item.labels.emplace_back(name);
            write_png_gray8(out_dir / name, vol.labels[b].labels);
        }
        item.surfaces = std::string(id) + "_surfaces.json";
        write_surfaces_json(out_dir / item.surfaces, vol);
        manifest.items.push_back(std::move(item));
    }
    manifest.save(out_dir / "manifest.json");
    return manifest;
}

} // namespace lfseg
