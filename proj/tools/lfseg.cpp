// Command-line entry point: phantom corpus generation, cascade training,
// inference, evaluation, cross-validation and overlay rendering. The JSON
// config is the source of truth; flags override only seed and paths.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lfseg/config/run_config.hpp"
#include "lfseg/infer/cascade.hpp"
#include "lfseg/infer/metrics.hpp"
#include "lfseg/infer/overlay.hpp"
#include "lfseg/net/checkpoint.hpp"
#include "lfseg/phantom/phantom.hpp"
#include "lfseg/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace lfseg;

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string manifest;
    std::string bundle;
};

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg = opts.config_path.empty() ? RunConfig{} : load_run_config(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (!opts.out_dir.empty()) cfg.paths.out_dir = opts.out_dir;
    if (!opts.manifest.empty()) cfg.paths.manifest = opts.manifest;
    if (!opts.bundle.empty()) cfg.paths.bundle = opts.bundle;
    return cfg;
}

fs::path require_out(const RunConfig& cfg) {
    if (cfg.paths.out_dir.empty()) throw ConfigError("missing output directory (--out)");
    return cfg.paths.out_dir;
}

fs::path require_manifest(const RunConfig& cfg) {
    if (cfg.paths.manifest.empty()) throw ConfigError("missing manifest path (--manifest)");
    if (!fs::exists(cfg.paths.manifest))
        throw IoError("manifest not found: " + cfg.paths.manifest);
    return cfg.paths.manifest;
}

void snapshot_config(const RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    auto os = detail::open_out(dir / "config.json");
    os << run_config_json(cfg).dump(2) << "\n";
}

ProgressFn stderr_progress(const char* stage) {
    std::string tag(stage);
    return [tag](const EpochStats& e) {
        std::fprintf(stderr, "[%s] epoch %d  loss %.5f  accuracy %.5f\n", tag.c_str(), e.epoch,
                     e.loss, e.accuracy);
    };
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_bundle = false) {
    cmd->add_option("--config", opts.config_path, "JSON run configuration");
    cmd->add_option("--seed", opts.seed, "Override the config seed");
    cmd->add_option("--out", opts.out_dir, "Output directory");
    cmd->add_option("--manifest", opts.manifest, "Corpus manifest path");
    if (with_bundle) cmd->add_option("--bundle", opts.bundle, "Model bundle directory");
}

int run_phantom_gen(const CommonOpts& opts, std::optional<int> volumes, bool overwrite) {
    RunConfig cfg = resolve_config(opts);
    const fs::path out = require_out(cfg);
    const int n = volumes.value_or(cfg.phantom_volumes);
    Manifest manifest = generate_corpus(cfg.phantom_config(), n, out, overwrite);
    snapshot_config(cfg, out);
    std::fprintf(stderr, "wrote %zu volumes under %s\n", manifest.items.size(),
                 out.string().c_str());
    return 0;
}

int run_train(const CommonOpts& opts) {
    RunConfig cfg = resolve_config(opts);
    const fs::path out = require_out(cfg);
    const Corpus corpus = load_corpus(Manifest::load(require_manifest(cfg)));
    snapshot_config(cfg, out);

    // train_cascade reports both stages through one callback; split the CSVs
    // by watching the epoch counter restart.
    std::vector<EpochStats> s1_history, s2_history;
    bool in_stage2 = false;
    auto progress = [&](const EpochStats& e) {
        if (!s1_history.empty() && e.epoch <= s1_history.back().epoch) in_stage2 = true;
        (in_stage2 ? s2_history : s1_history).push_back(e);
        std::fprintf(stderr, "[%s] epoch %d  loss %.5f  accuracy %.5f\n",
                     in_stage2 ? "stage2" : "stage1", e.epoch, e.loss, e.accuracy);
    };
    const ModelBundle bundle = train_cascade(corpus, cfg.cascade_configs(), progress);
    save_bundle(out / "bundle", bundle);
    write_history_csv(out / "stage1_history.csv", s1_history);
    write_history_csv(out / "stage2_history.csv", s2_history);
    std::fprintf(stderr, "bundle written to %s\n", (out / "bundle").string().c_str());
    return 0;
}

int run_infer(const CommonOpts& opts, const std::string& volume_path) {
    RunConfig cfg = resolve_config(opts);
    const fs::path out = require_out(cfg);
    if (cfg.paths.bundle.empty()) throw ConfigError("missing bundle directory (--bundle)");
    const ModelBundle bundle = load_bundle(cfg.paths.bundle);

    struct Item {
        std::string id;
        fs::path path;
    };
    std::vector<Item> items;
    if (!volume_path.empty()) {
        if (!fs::exists(volume_path)) throw IoError("volume not found: " + volume_path);
        items.push_back({fs::path(volume_path).stem().string(), volume_path});
    } else {
        Manifest manifest = Manifest::load(require_manifest(cfg));
        for (const auto& it : manifest.items) items.push_back({it.id, manifest.resolve(it.volume)});
    }

    nlohmann::json meta = nlohmann::json::array();
    for (const auto& item : items) {
        const OctVolume vol = read_volume(item.path);
        const auto results = cascade_infer(vol, bundle);
        const fs::path vol_dir = out / item.id;
        fs::create_directories(vol_dir);
        nlohmann::json flags = nlohmann::json::array();
        for (std::size_t b = 0; b < results.size(); ++b) {
            char name[16];
            std::snprintf(name, sizeof(name), "b%03zu.png", b);
            write_png_gray8(vol_dir / name, results[b].labels.labels);
            flags.push_back(results[b].distmap_fallback);
        }
        meta.push_back({{"id", item.id},
                        {"volume", item.path.string()},
                        {"bscans", results.size()},
                        {"distmap_fallback", flags}});
        std::fprintf(stderr, "segmented %s (%d B-scans)\n", item.id.c_str(), vol.num_bscans);
    }
    auto os = detail::open_out(out / "meta.json");
    os << meta.dump(2) << "\n";
    return 0;
}

int run_evaluate(const CommonOpts& opts, const std::string& pred_dir) {
    RunConfig cfg = resolve_config(opts);
    const fs::path out = require_out(cfg);
    const Corpus corpus = load_corpus(Manifest::load(require_manifest(cfg)));

    EvalReport report;
    if (!pred_dir.empty()) {
        // Pre-computed per-B-scan label maps: <pred_dir>/<volume_id>/b%03d.png
        report = evaluate_with(corpus, [&](const TrainVolume& tv, int b) {
            char name[16];
            std::snprintf(name, sizeof(name), "b%03d.png", b);
            BscanResult res;
            res.labels.scheme = &ClassScheme::stage2();
            res.labels.labels = read_png_gray8(fs::path(pred_dir) / tv.id / name);
            res.labels.validate();
            res.fluid_pre_rf = class_mask(res.labels, kFluidClass);
            return res;
        });
    } else {
        if (cfg.paths.bundle.empty())
            throw ConfigError("evaluate needs --bundle or --pred-dir");
        report = evaluate(corpus, load_bundle(cfg.paths.bundle));
    }
    fs::create_directories(out);
    report.write_csv(out / "report.csv");
    report.write_summary(out / "summary.json");
    std::fprintf(stderr, "mean layer Dice %.4f over %zu B-scans\n", report.mean_layer(),
                 report.rows.size());
    return 0;
}

int run_cross_validate(const CommonOpts& opts, std::optional<int> folds) {
    RunConfig cfg = resolve_config(opts);
    const fs::path out = require_out(cfg);
    const Corpus corpus = load_corpus(Manifest::load(require_manifest(cfg)));
    const int k = folds.value_or(cfg.eval.folds);
    snapshot_config(cfg, out);
    const CvResult cv = cross_validate(corpus, k, cfg.cascade_configs(),
                                       stderr_progress("cv"), out);
    std::fprintf(stderr, "cross-validation done: %d folds, aggregate in %s\n", k,
                 (out / "aggregate.json").string().c_str());
    return 0;
}

int run_render_overlay(const CommonOpts& opts, const std::string& volume_path,
                       const std::string& labels_dir, std::optional<double> alpha,
                       bool dump_distmap) {
    RunConfig cfg = resolve_config(opts);
    const fs::path out = require_out(cfg);
    if (volume_path.empty()) throw ConfigError("render-overlay needs --volume");
    if (!fs::exists(volume_path)) throw IoError("volume not found: " + volume_path);
    const OctVolume vol = read_volume(volume_path);
    const double a = alpha.value_or(cfg.eval.overlay_alpha);
    fs::create_directories(out);

    std::optional<ModelBundle> bundle;
    if (!cfg.paths.bundle.empty()) bundle = load_bundle(cfg.paths.bundle);
    if (dump_distmap && !bundle) throw ConfigError("--dump-distmap needs --bundle");
    if (labels_dir.empty() && !bundle)
        throw ConfigError("render-overlay needs --labels or --bundle");

    for (int b = 0; b < vol.num_bscans; ++b) {
        char name[16];
        std::snprintf(name, sizeof(name), "b%03d.png", b);
        LabelMap labels;
        labels.scheme = &ClassScheme::stage2();
        if (!labels_dir.empty()) {
            labels.labels = read_png_gray8(fs::path(labels_dir) / name);
            labels.validate();
        } else {
            labels = infer_bscan(vol, b, *bundle).labels;
        }
        write_png_rgb8(out / ("overlay_" + std::string(name)), make_overlay(vol, b, labels, a));
        if (dump_distmap) {
            const auto stack = extract_bscan_stack(vol, b, bundle->stage1.config().in_channels);
            const Stage1Output s1 = run_stage1(bundle->stage1, stack);
            write_png_gray16(out / ("distmap_" + std::string(name)), distmap_to_u16(s1.distmap),
                             {{kDistmapMappingKey, kDistmapMappingText}});
        }
    }
    std::fprintf(stderr, "wrote %d overlays to %s\n", vol.num_bscans, out.string().c_str());
    return 0;
}

int run_config_cmd(const std::string& config_path, bool dump_defaults) {
    if (dump_defaults) {
        std::cout << run_config_json(RunConfig{}).dump(2) << "\n";
        return 0;
    }
    if (config_path.empty()) throw ConfigError("config: pass --dump-defaults or --validate FILE");
    load_run_config(config_path);
    std::fprintf(stderr, "config ok: %s\n", config_path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cascaded retinal layer + fluid segmentation for OCT volumes"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::optional<int> volumes, folds;
    std::optional<double> alpha;
    bool overwrite = false, dump_defaults = false, dump_distmap = false;
    std::string volume_path, labels_dir, pred_dir, validate_path;

    auto* gen = app.add_subcommand("phantom-gen", "Generate a synthetic phantom corpus");
    add_common(gen, opts);
    gen->add_option("--volumes", volumes, "Number of volumes (overrides config)");
    gen->add_flag("--overwrite", overwrite, "Allow writing into a non-empty directory");

    auto* train = app.add_subcommand("train", "Train the two-stage cascade + fluid filter");
    add_common(train, opts);

    auto* infer = app.add_subcommand("infer", "Segment volumes with a trained bundle");
    add_common(infer, opts, /*with_bundle=*/true);
    infer->add_option("--volume", volume_path, "Single .octv volume (instead of --manifest)");

    auto* evaluate = app.add_subcommand("evaluate", "Dice report against ground truth");
    add_common(evaluate, opts, /*with_bundle=*/true);
    evaluate->add_option("--pred-dir", pred_dir, "Evaluate stored label PNGs instead of a bundle");

    auto* cv = app.add_subcommand("cross-validate", "Volume-level k-fold cross validation");
    add_common(cv, opts);
    cv->add_option("--folds", folds, "Fold count (overrides config)");

    auto* overlay = app.add_subcommand("render-overlay", "Color-coded segmentation overlays");
    add_common(overlay, opts, /*with_bundle=*/true);
    overlay->add_option("--volume", volume_path, ".octv volume to render")->required();
    overlay->add_option("--labels", labels_dir, "Directory of b%03d.png label maps");
    overlay->add_option("--alpha", alpha, "Overlay opacity in [0,1]");
    overlay->add_flag("--dump-distmap", dump_distmap, "Also write stage-1 distance maps (16-bit)");

    auto* config_cmd = app.add_subcommand("config", "Print or validate configurations");
    config_cmd->add_flag("--dump-defaults", dump_defaults, "Print the default config JSON");
    config_cmd->add_option("--validate", validate_path, "Validate a config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return run_phantom_gen(opts, volumes, overwrite);
        if (train->parsed()) return run_train(opts);
        if (infer->parsed()) return run_infer(opts, volume_path);
        if (evaluate->parsed()) return run_evaluate(opts, pred_dir);
        if (cv->parsed()) return run_cross_validate(opts, folds);
        if (overlay->parsed())
            return run_render_overlay(opts, volume_path, labels_dir, alpha, dump_distmap);
        if (config_cmd->parsed()) return run_config_cmd(validate_path, dump_defaults);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
