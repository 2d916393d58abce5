#pragma once
#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "lfseg/core/error.hpp"
#include "lfseg/infer/metrics.hpp"
#include "lfseg/phantom/phantom.hpp"

namespace lfseg {

struct EvalConfig {
    int folds = 5;
    double overlay_alpha = 0.45;
};

struct PathsConfig {
    std::string out_dir;
    std::string manifest;
    std::string bundle;
};

/// The JSON run configuration is the source of truth for every command;
/// command-line flags override only seed and paths. Unknown keys are
/// rejected with the JSON pointer of the offending key.
struct RunConfig {
    std::uint64_t seed = 1;
    int phantom_volumes = 10;
    PhantomConfig phantom;
    NetworkConfig network_stage1{.in_channels = 3, .num_classes = 3};
    NetworkConfig network_stage2{.in_channels = 4, .num_classes = 8};
    LossConfig loss;
    TrainConfig train;
    RfConfig rf;
    EvalConfig eval;
    PathsConfig paths;

    /// Assemble the cascade training configuration, deriving stage seeds from
    /// the master seed.
    CascadeConfigs cascade_configs() const {
        CascadeConfigs c;
        c.stage1 = network_stage1;
        c.stage2 = network_stage2;
        c.train = train;
        c.train.seed = seed;
        c.loss = loss;
        c.rf = rf;
        return c;
    }

    PhantomConfig phantom_config() const {
        PhantomConfig p = phantom;
        p.seed = seed;
        return p;
    }

    void validate() const {
        phantom.validate();
        network_stage1.validate();
        network_stage2.validate();
        loss.validate();
        train.validate();
        if (phantom_volumes < 0) throw ConfigError("/phantom/num_volumes must be >= 0");
        if (eval.folds < 1) throw ConfigError("/eval/folds must be >= 1");
        if (eval.overlay_alpha < 0 || eval.overlay_alpha > 1)
            throw ConfigError("/eval/overlay_alpha must lie in [0,1]");
        if (rf.num_trees < 1) throw ConfigError("/train/rf/num_trees must be >= 1");
    }
};

namespace cfgdetail {

/// Strict section reader: every key must be consumed, wrong types and unknown
/// keys report their JSON pointer.
class Section {
public:
    Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(pointer() + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return; // defaults apply to absent keys
        try {
            j_.at(key).get_to(out);
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(pointer() + "/" + key + ": wrong type");
        }
    }

    template <typename T, std::size_t N>
    void get_array(const char* key, std::array<T, N>& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const auto& a = j_.at(key);
        if (!a.is_array() || a.size() != N)
            throw ConfigError(pointer() + "/" + key + ": expected an array of " +
                              std::to_string(N) + " numbers");
        try {
            for (std::size_t i = 0; i < N; ++i) a.at(i).get_to(out[i]);
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(pointer() + "/" + key + ": wrong element type");
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    Section sub(const char* key) {
        seen_.insert(key);
        return Section(j_.at(key), path_ + "/" + key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError(pointer() + "/" + it.key() + ": unknown key");
    }

private:
    std::string pointer() const { return path_.empty() ? std::string("/") : path_; }

    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void parse_network(Section s, NetworkConfig& c) {
    s.get("in_channels", c.in_channels);
    s.get("num_classes", c.num_classes);
    s.get("base_features", c.base_features);
    s.get("depth", c.depth);
    s.get_array("dilation_rates", c.dilation_rates);
    s.get("dilated_branch_features", c.dilated_branch_features);
    s.get("dropout_rate", c.dropout_rate);
    s.finish();
}

} // namespace cfgdetail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    using cfgdetail::Section;
    RunConfig cfg;
    Section root(j, "");
    root.get("seed", cfg.seed);
    if (root.has("phantom")) {
        Section s = root.sub("phantom");
        s.get("height", cfg.phantom.height);
        s.get("width", cfg.phantom.width);
        s.get("num_bscans", cfg.phantom.num_bscans);
        s.get("num_volumes", cfg.phantom_volumes);
        s.get("surface_amplitude_px", cfg.phantom.surface_amplitude_px);
        s.get_array("layer_means", cfg.phantom.layer_means);
        s.get_array("background_means", cfg.phantom.background_means);
        s.get("fluid_mean", cfg.phantom.fluid_mean);
        s.get("speckle_strength", cfg.phantom.speckle_strength);
        s.get("fluid_probability", cfg.phantom.fluid_probability);
        s.get_array("fluid_rx_px", cfg.phantom.fluid_rx_px);
        s.get_array("fluid_ry_px", cfg.phantom.fluid_ry_px);
        s.get("shadow_attenuation", cfg.phantom.shadow_attenuation);
        s.finish();
    }
    if (root.has("network_stage1"))
        cfgdetail::parse_network(root.sub("network_stage1"), cfg.network_stage1);
    if (root.has("network_stage2"))
        cfgdetail::parse_network(root.sub("network_stage2"), cfg.network_stage2);
    if (root.has("loss")) {
        Section s = root.sub("loss");
        s.get("lambda1", cfg.loss.lambda1);
        s.get("lambda2", cfg.loss.lambda2);
        s.get("omega1", cfg.loss.omega1);
        s.get("omega2", cfg.loss.omega2);
        s.get("epsilon", cfg.loss.epsilon);
        s.finish();
    }
    if (root.has("train")) {
        Section s = root.sub("train");
        s.get("batch_size", cfg.train.batch_size);
        s.get("learning_rate", cfg.train.learning_rate);
        s.get("beta1", cfg.train.beta1);
        s.get("beta2", cfg.train.beta2);
        s.get("adam_epsilon", cfg.train.adam_epsilon);
        s.get("patience_epochs", cfg.train.patience_epochs);
        s.get("max_epochs", cfg.train.max_epochs);
        if (s.has("augment")) {
            Section a = s.sub("augment");
            a.get("enabled", cfg.train.augment.enabled);
            a.get("flip_probability", cfg.train.augment.flip_probability);
            a.get("rotation_deg", cfg.train.augment.rotation_deg);
            a.get("scale_min", cfg.train.augment.scale_min);
            a.get("scale_max", cfg.train.augment.scale_max);
            a.finish();
        }
        if (s.has("rf")) {
            Section r = s.sub("rf");
            r.get("num_trees", cfg.rf.num_trees);
            r.get("max_depth", cfg.rf.max_depth);
            r.get("seed", cfg.rf.seed);
            r.finish();
        }
        s.finish();
    }
    if (root.has("eval")) {
        Section s = root.sub("eval");
        s.get("folds", cfg.eval.folds);
        s.get("overlay_alpha", cfg.eval.overlay_alpha);
        s.finish();
    }
    if (root.has("paths")) {
        Section s = root.sub("paths");
        s.get("out_dir", cfg.paths.out_dir);
        s.get("manifest", cfg.paths.manifest);
        s.get("bundle", cfg.paths.bundle);
        s.finish();
    }
    root.finish();
    cfg.validate();
    return cfg;
}

inline nlohmann::json run_config_json(const RunConfig& cfg) {
    return {
        {"seed", cfg.seed},
        {"phantom",
         {{"height", cfg.phantom.height},
          {"width", cfg.phantom.width},
          {"num_bscans", cfg.phantom.num_bscans},
          {"num_volumes", cfg.phantom_volumes},
          {"surface_amplitude_px", cfg.phantom.surface_amplitude_px},
          {"layer_means", cfg.phantom.layer_means},
          {"background_means", cfg.phantom.background_means},
          {"fluid_mean", cfg.phantom.fluid_mean},
          {"speckle_strength", cfg.phantom.speckle_strength},
          {"fluid_probability", cfg.phantom.fluid_probability},
          {"fluid_rx_px", cfg.phantom.fluid_rx_px},
          {"fluid_ry_px", cfg.phantom.fluid_ry_px},
          {"shadow_attenuation", cfg.phantom.shadow_attenuation}}},
        {"network_stage1", cfg.network_stage1},
        {"network_stage2", cfg.network_stage2},
        {"loss",
         {{"lambda1", cfg.loss.lambda1},
          {"lambda2", cfg.loss.lambda2},
          {"omega1", cfg.loss.omega1},
          {"omega2", cfg.loss.omega2},
          {"epsilon", cfg.loss.epsilon}}},
        {"train",
         {{"batch_size", cfg.train.batch_size},
          {"learning_rate", cfg.train.learning_rate},
          {"beta1", cfg.train.beta1},
          {"beta2", cfg.train.beta2},
          {"adam_epsilon", cfg.train.adam_epsilon},
          {"patience_epochs", cfg.train.patience_epochs},
          {"max_epochs", cfg.train.max_epochs},
          {"augment", cfg.train.augment},
          {"rf", cfg.rf}}},
        {"eval", {{"folds", cfg.eval.folds}, {"overlay_alpha", cfg.eval.overlay_alpha}}},
        {"paths",
         {{"out_dir", cfg.paths.out_dir},
          {"manifest", cfg.paths.manifest},
          {"bundle", cfg.paths.bundle}}},
    };
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    auto is = detail::open_in(path);
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
    return parse_run_config(j);
}

} // namespace lfseg
