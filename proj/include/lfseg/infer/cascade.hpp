#pragma once
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "lfseg/core/io.hpp"
#include "lfseg/data/types.hpp"
#include "lfseg/distmap/distmap.hpp"
#include "lfseg/infer/rf.hpp"
#include "lfseg/loss/losses.hpp"
#include "lfseg/net/checkpoint.hpp"
#include "lfseg/net/lfunet.hpp"

namespace lfseg {

/// Everything needed to segment a volume: both trained stages, the fluid
/// filter and the configs that produced them.
struct ModelBundle {
    Model<float> stage1;
    Model<float> stage2;
    RandomForest rf;
    LossConfig loss;
    RfConfig rf_config;
    nlohmann::json provenance; // training config snapshot, free-form
};

inline void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle) {
    std::filesystem::create_directories(dir);
    save_model(dir / "stage1", bundle.stage1);
    save_model(dir / "stage2", bundle.stage2);
    nlohmann::json meta{{"loss",
                         {{"lambda1", bundle.loss.lambda1},
                          {"lambda2", bundle.loss.lambda2},
                          {"omega1", bundle.loss.omega1},
                          {"omega2", bundle.loss.omega2},
                          {"epsilon", bundle.loss.epsilon}}},
                        {"rf_config", bundle.rf_config},
                        {"provenance", bundle.provenance}};
    {
        auto os = detail::open_out(dir / "bundle.json");
        os << meta.dump(2) << "\n";
    }
    auto os = detail::open_out(dir / "rf.json");
    os << bundle.rf.to_json().dump() << "\n";
}

inline ModelBundle load_bundle(const std::filesystem::path& dir) {
    ModelBundle bundle;
    bundle.stage1 = load_model(dir / "stage1");
    bundle.stage2 = load_model(dir / "stage2");
    {
        auto is = detail::open_in(dir / "bundle.json");
        nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
        if (j.is_discarded()) throw CorruptFile("bundle.json is not valid JSON");
        try {
            const auto& l = j.at("loss");
            bundle.loss.lambda1 = l.at("lambda1").get<double>();
            bundle.loss.lambda2 = l.at("lambda2").get<double>();
            bundle.loss.omega1 = l.at("omega1").get<double>();
            bundle.loss.omega2 = l.at("omega2").get<double>();
            bundle.loss.epsilon = l.at("epsilon").get<double>();
            bundle.rf_config = j.at("rf_config").get<RfConfig>();
            if (j.contains("provenance")) bundle.provenance = j.at("provenance");
        } catch (const nlohmann::json::exception& e) {
            throw CorruptFile(std::string("bundle.json malformed: ") + e.what());
        }
    }
    auto is = detail::open_in(dir / "rf.json");
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw CorruptFile("rf.json is not valid JSON");
    bundle.rf = RandomForest::from_json(j);
    return bundle;
}

// ---------------------------------------------------------------------------
// Stage-1 pass and distance-map construction
// ---------------------------------------------------------------------------

struct Stage1Output {
    LabelMap labels;          // 3-class argmax
    std::optional<SurfacePair> surfaces;
    RelativeDistanceMap distmap;
    bool fallback = false;    // surface extraction failed; constant 0.5 channel
};

/// Run stage 1 on a stack and derive the distance-map prior. Extraction
/// failures are flagged and replaced by the neutral constant channel rather
/// than aborting the B-scan.
inline Stage1Output run_stage1(const Model<float>& stage1, const BscanStack& stack) {
    Stage1Output out;
    out.labels.scheme = &ClassScheme::stage1();
    out.labels.labels = argmax_channels(stage1.infer(stack));
    try {
        SurfacePair surfaces = extract_surfaces(out.labels);
        out.distmap = compute_distance_map<float>(surfaces, stack.height(), stack.width());
        out.surfaces = std::move(surfaces);
    } catch (const SurfaceExtractionError&) {
        out.distmap = fallback_distance_map<float>(stack.height(), stack.width());
        out.fallback = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full cascade inference
// ---------------------------------------------------------------------------

struct BscanResult {
    LabelMap labels;                  // final 8-class map (after RF filtering)
    Grid<std::uint8_t> fluid_pre_rf;  // fluid mask straight out of stage 2
    SurfacePair surfaces;             // stage-1 ILM/BM (empty when fallback)
    bool distmap_fallback = false;
};

inline BscanResult infer_bscan(const OctVolume& vol, int index, const ModelBundle& bundle) {
    if (bundle.stage2.config().in_channels != 4)
        throw ConfigError("cascade: stage 2 must take 4 input channels (3 B-scans + distance map)");
    const BscanStack stack = extract_bscan_stack(vol, index, bundle.stage1.config().in_channels);
    Stage1Output s1 = run_stage1(bundle.stage1, stack);

    const BscanStack stage2_in = append_channel(
        bundle.stage1.config().in_channels == 3 ? stack : extract_bscan_stack(vol, index, 3),
        s1.distmap);

    BscanResult result;
    result.distmap_fallback = s1.fallback;
    if (s1.surfaces) result.surfaces = *s1.surfaces;
    result.labels.scheme = &ClassScheme::stage2();
    result.labels.labels = argmax_channels(bundle.stage2.infer(stage2_in));

    result.fluid_pre_rf = Grid<std::uint8_t>(vol.height, vol.width, 0);
    for (int y = 0; y < vol.height; ++y)
        for (int x = 0; x < vol.width; ++x)
            if (result.labels.labels.at(y, x) == kFluidClass) result.fluid_pre_rf.at(y, x) = 1;

    auto components = find_fluid_components(result.labels);
    if (!components.empty() && bundle.rf.trained()) {
        for (auto& comp : components)
            compute_component_features(comp, vol, index, s1.distmap, result.labels);
        result.labels = rf_filter(result.labels, components, bundle.rf);
    }
    return result;
}

/// stage 1 -> distance map -> stage 2 -> RF filtering for every B-scan.
inline std::vector<BscanResult> cascade_infer(const OctVolume& vol, const ModelBundle& bundle) {
    std::vector<BscanResult> results;
    results.reserve(vol.num_bscans);
    for (int b = 0; b < vol.num_bscans; ++b) results.push_back(infer_bscan(vol, b, bundle));
    return results;
}

} // namespace lfseg
