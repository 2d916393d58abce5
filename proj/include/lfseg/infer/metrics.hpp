#pragma once
#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfseg/core/io.hpp"
#include "lfseg/infer/cascade.hpp"
#include "lfseg/train/trainer.hpp"

namespace lfseg {

/// Dice index 2|A&B| / (|A|+|B|); two empty masks count as a perfect 1.0.
inline double dice(const Grid<std::uint8_t>& a, const Grid<std::uint8_t>& b) {
    if (!a.same_shape(b)) throw ShapeError("dice: mask shapes differ");
    std::size_t inter = 0, n_a = 0, n_b = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool va = a.data()[i] != 0, vb = b.data()[i] != 0;
        inter += va && vb;
        n_a += va;
        n_b += vb;
    }
    if (n_a + n_b == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(n_a + n_b);
}

inline Grid<std::uint8_t> class_mask(const LabelMap& map, int cls) {
    Grid<std::uint8_t> mask(map.height(), map.width(), 0);
    for (std::size_t i = 0; i < mask.size(); ++i) mask.data()[i] = map.labels.data()[i] == cls;
    return mask;
}

inline double dice_class(const LabelMap& pred, const LabelMap& truth, int cls) {
    return dice(class_mask(pred, cls), class_mask(truth, cls));
}

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

/// Metric column order follows the result table layout: the five layer
/// classes from top to bottom, then fluid before and after RF filtering.
inline constexpr std::array<const char*, 7> kMetricColumns{
    "ILM-NFL", "NFL-IPL", "IPL-OPL", "OPL-IOS", "IOS-BM", "Fluid", "RF-Fluid"};

struct BscanEval {
    std::string volume_id;
    int bscan = 0;
    std::array<double, 5> layer_dice{};
    double fluid_pre = std::numeric_limits<double>::quiet_NaN();
    double fluid_post = std::numeric_limits<double>::quiet_NaN();
    bool truth_has_fluid = false;
    bool distmap_fallback = false;
};

struct EvalReport {
    std::vector<BscanEval> rows;
    std::array<double, 5> mean_layer_dice{};
    double mean_fluid_pre = std::numeric_limits<double>::quiet_NaN();
    double mean_fluid_post = std::numeric_limits<double>::quiet_NaN();
    int fluid_bscans = 0;    // B-scans with ground-truth fluid
    int excluded_bscans = 0; // discarded from the fluid means
    int fallback_count = 0;

    std::array<double, 7> metric_row() const {
        return {mean_layer_dice[0], mean_layer_dice[1], mean_layer_dice[2], mean_layer_dice[3],
                mean_layer_dice[4], mean_fluid_pre, mean_fluid_post};
    }

    double mean_layer() const {
        double s = 0;
        for (double v : mean_layer_dice) s += v;
        return s / 5.0;
    }

    void finalize() {
        mean_layer_dice.fill(0.0);
        double fluid_pre = 0, fluid_post = 0;
        fluid_bscans = excluded_bscans = fallback_count = 0;
        for (const auto& row : rows) {
            for (int k = 0; k < 5; ++k) mean_layer_dice[k] += row.layer_dice[k];
            if (row.truth_has_fluid) {
                fluid_pre += row.fluid_pre;
                fluid_post += row.fluid_post;
                ++fluid_bscans;
            } else {
                ++excluded_bscans;
            }
            fallback_count += row.distmap_fallback;
        }
        if (!rows.empty())
            for (auto& v : mean_layer_dice) v /= static_cast<double>(rows.size());
        if (fluid_bscans > 0) {
            mean_fluid_pre = fluid_pre / fluid_bscans;
            mean_fluid_post = fluid_post / fluid_bscans;
        }
    }

    void write_csv(const std::filesystem::path& path) const {
        auto os = detail::open_out(path);
        os << "volume_id,bscan,ilm_nfl,nfl_ipl,ipl_opl,opl_ios,ios_bm,fluid,rf_fluid,"
              "truth_has_fluid,distmap_fallback\n";
        for (const auto& r : rows) {
            char buf[256];
            std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d,%d\n",
                          r.volume_id.c_str(), r.bscan, r.layer_dice[0], r.layer_dice[1],
                          r.layer_dice[2], r.layer_dice[3], r.layer_dice[4], r.fluid_pre,
                          r.fluid_post, r.truth_has_fluid ? 1 : 0, r.distmap_fallback ? 1 : 0);
            os << buf;
        }
    }

    nlohmann::json summary_json() const {
        auto num_or_null = [](double v) {
            return std::isnan(v) ? nlohmann::json() : nlohmann::json(v);
        };
        nlohmann::json layers;
        for (int k = 0; k < 5; ++k) layers[kMetricColumns[k]] = mean_layer_dice[k];
        return {{"layer_dice", layers},
                {"mean_layer_dice", mean_layer()},
                {"fluid_dice", num_or_null(mean_fluid_pre)},
                {"rf_fluid_dice", num_or_null(mean_fluid_post)},
                {"fluid_bscans", fluid_bscans},
                {"excluded_fluid_bscans", excluded_bscans},
                {"distmap_fallbacks", fallback_count},
                {"bscans", rows.size()}};
    }

    void write_summary(const std::filesystem::path& path) const {
        auto os = detail::open_out(path);
        os << summary_json().dump(2) << "\n";
    }
};

/// Per-B-scan prediction hook so the same report machinery serves the full
/// cascade, single-stage ablations and file-based predictions.
using PredictFn = std::function<BscanResult(const TrainVolume&, int)>;

inline EvalReport evaluate_with(const Corpus& corpus, const PredictFn& predict) {
    EvalReport report;
    for (const auto& tv : corpus) {
        for (int b = 0; b < tv.volume.num_bscans; ++b) {
            const BscanResult res = predict(tv, b);
            const LabelMap& truth = tv.truth[b];
            BscanEval row;
            row.volume_id = tv.id;
            row.bscan = b;
            for (int k = 0; k < 5; ++k) row.layer_dice[k] = dice_class(res.labels, truth, k + 1);
            const Grid<std::uint8_t> truth_fluid = class_mask(truth, kFluidClass);
            row.truth_has_fluid = false;
            for (std::size_t i = 0; i < truth_fluid.size(); ++i)
                if (truth_fluid.data()[i]) {
                    row.truth_has_fluid = true;
                    break;
                }
            row.fluid_pre = dice(res.fluid_pre_rf, truth_fluid);
            row.fluid_post = dice(class_mask(res.labels, kFluidClass), truth_fluid);
            row.distmap_fallback = res.distmap_fallback;
            report.rows.push_back(std::move(row));
        }
    }
    report.finalize();
    return report;
}

inline EvalReport evaluate(const Corpus& corpus, const ModelBundle& bundle) {
    return evaluate_with(corpus, [&](const TrainVolume& tv, int b) {
        return infer_bscan(tv.volume, b, bundle);
    });
}

/// Single-network ablation path: one model, 8 classes, no cascade and no RF.
inline EvalReport evaluate_single(const Corpus& corpus, const Model<float>& model) {
    return evaluate_with(corpus, [&](const TrainVolume& tv, int b) {
        BscanResult res;
        res.labels.scheme = &ClassScheme::stage2();
        res.labels.labels = argmax_channels(
            model.infer(extract_bscan_stack(tv.volume, b, model.config().in_channels)));
        res.fluid_pre_rf = class_mask(res.labels, kFluidClass);
        return res;
    });
}

// ---------------------------------------------------------------------------
// Cross validation
// ---------------------------------------------------------------------------

struct CvResult {
    std::vector<EvalReport> folds;
    std::vector<std::vector<int>> test_volumes; // indices per fold
    std::array<double, 7> mean_metrics{};

    nlohmann::json aggregate_json() const {
        auto num_or_null = [](double v) {
            return std::isnan(v) ? nlohmann::json() : nlohmann::json(v);
        };
        nlohmann::json fold_rows = nlohmann::json::array();
        for (const auto& fold : folds) {
            nlohmann::json row;
            const auto m = fold.metric_row();
            for (int c = 0; c < 7; ++c) row[kMetricColumns[c]] = num_or_null(m[c]);
            fold_rows.push_back(std::move(row));
        }
        nlohmann::json mean;
        for (int c = 0; c < 7; ++c) mean[kMetricColumns[c]] = num_or_null(mean_metrics[c]);
        return {{"columns", kMetricColumns}, {"folds", fold_rows}, {"mean", mean}};
    }
};

/// Volume-disjoint k-fold partition: volume i goes to test fold i % k, so
/// fold sizes differ by at most one and every volume is tested exactly once.
inline std::vector<std::vector<int>> cv_partition(int num_volumes, int k) {
    if (k < 1) throw ConfigError("cross_validate: k must be >= 1");
    if (k > num_volumes) throw ConfigError("cross_validate: k exceeds volume count");
    std::vector<std::vector<int>> folds(k);
    for (int i = 0; i < num_volumes; ++i) folds[i % k].push_back(i);
    return folds;
}

inline CvResult cross_validate(const Corpus& corpus, int k, const CascadeConfigs& configs,
                               const ProgressFn& progress = {},
                               const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
    CvResult result;
    result.test_volumes = cv_partition(static_cast<int>(corpus.size()), k);
    for (int f = 0; f < k; ++f) {
        Corpus train, test;
        for (int i = 0; i < static_cast<int>(corpus.size()); ++i) {
            const bool in_test =
                std::find(result.test_volumes[f].begin(), result.test_volumes[f].end(), i) !=
                result.test_volumes[f].end();
            (in_test ? test : train).push_back(corpus[i]);
        }
        const ModelBundle bundle = train_cascade(train, configs, progress);
        EvalReport report = evaluate(test, bundle);
        if (out_dir) {
            const auto fold_dir = *out_dir / ("fold" + std::to_string(f));
            std::filesystem::create_directories(fold_dir);
            report.write_csv(fold_dir / "report.csv");
            report.write_summary(fold_dir / "summary.json");
            save_bundle(fold_dir / "bundle", bundle);
        }
        result.folds.push_back(std::move(report));
    }

    std::array<double, 7> sums{};
    std::array<int, 7> counts{};
    for (const auto& fold : result.folds) {
        const auto m = fold.metric_row();
        for (int c = 0; c < 7; ++c)
            if (!std::isnan(m[c])) {
                sums[c] += m[c];
                ++counts[c];
            }
    }
    for (int c = 0; c < 7; ++c)
        result.mean_metrics[c] = counts[c] ? sums[c] / counts[c]
                                           : std::numeric_limits<double>::quiet_NaN();
    if (out_dir) {
        auto os = detail::open_out(*out_dir / "aggregate.json");
        os << result.aggregate_json().dump(2) << "\n";
    }
    return result;
}

} // namespace lfseg
