#pragma once
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfseg/core/io.hpp"
#include "lfseg/core/png_io.hpp"
#include "lfseg/core/rng.hpp"
#include "lfseg/infer/cascade.hpp"
#include "lfseg/loss/losses.hpp"
#include "lfseg/net/graph.hpp"
#include "lfseg/net/lfunet.hpp"
#include "lfseg/train/augment.hpp"

namespace lfseg {

struct TrainConfig {
    int batch_size = 3;
    double learning_rate = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int patience_epochs = 5;
    int max_epochs = 100;
    AugmentConfig augment;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
        if (patience_epochs < 1) throw ConfigError("train: patience_epochs must be >= 1");
        if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
        augment.validate();
    }
};

inline void to_json(nlohmann::json& j, const AugmentConfig& c) {
    j = {{"enabled", c.enabled},
         {"flip_probability", c.flip_probability},
         {"rotation_deg", c.rotation_deg},
         {"scale_min", c.scale_min},
         {"scale_max", c.scale_max}};
}
inline void from_json(const nlohmann::json& j, AugmentConfig& c) {
    j.at("enabled").get_to(c.enabled);
    j.at("flip_probability").get_to(c.flip_probability);
    j.at("rotation_deg").get_to(c.rotation_deg);
    j.at("scale_min").get_to(c.scale_min);
    j.at("scale_max").get_to(c.scale_max);
}
inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"adam_epsilon", c.adam_epsilon},
         {"patience_epochs", c.patience_epochs},
         {"max_epochs", c.max_epochs},
         {"augment", c.augment},
         {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("batch_size").get_to(c.batch_size);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("beta1").get_to(c.beta1);
    j.at("beta2").get_to(c.beta2);
    j.at("adam_epsilon").get_to(c.adam_epsilon);
    j.at("patience_epochs").get_to(c.patience_epochs);
    j.at("max_epochs").get_to(c.max_epochs);
    j.at("augment").get_to(c.augment);
    j.at("seed").get_to(c.seed);
}

struct EpochStats {
    int epoch = 0;      // 1-based
    double loss = 0.0;  // mean per-sample total loss
    double accuracy = 0.0; // training pixel accuracy
};

struct TrainResult {
    Model<float> model; // best-accuracy checkpoint
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_accuracy = 0.0;
};

using ProgressFn = std::function<void(const EpochStats&)>;

// ---------------------------------------------------------------------------
// Single-stage optimization
// ---------------------------------------------------------------------------

/// Mini-batch Adam on the composite loss with early stopping on training
/// pixel accuracy. Deterministic for a fixed seed: shuffling, augmentation
/// draws and dropout masks all derive from cfg.seed.
inline TrainResult train_stage(const std::vector<TrainSample>& data, const NetworkConfig& net_cfg,
                               const TrainConfig& cfg, const LossConfig& loss_cfg = {},
                               const ProgressFn& progress = {}) {
    net_cfg.validate();
    cfg.validate();
    loss_cfg.validate();
    if (data.empty()) throw ConfigError("train_stage: empty dataset");
    for (const auto& s : data)
        if (s.target.scheme->num_classes() != net_cfg.num_classes)
            throw ConfigError("train_stage: target scheme does not match num_classes");

    std::vector<LabelMap> targets;
    targets.reserve(data.size());
    for (const auto& s : data) targets.push_back(s.target);
    const ClassWeights cw = class_weights(targets);

    Rng root(cfg.seed);
    Rng init_rng = root.fork(0xA11CE);
    Model<float> model = Model<float>::build(net_cfg, init_rng);

    const std::size_t np = model.params().size();
    std::vector<TensorF> grads(np), adam_m(np), adam_v(np);
    for (std::size_t i = 0; i < np; ++i) {
        grads[i] = TensorF::zeros_like(model.params()[i].value);
        adam_m[i] = TensorF::zeros_like(model.params()[i].value);
        adam_v[i] = TensorF::zeros_like(model.params()[i].value);
    }

    TrainResult result;
    std::vector<TensorF> best_params;
    double best_acc = -1.0;
    int best_epoch = 0;
    long adam_t = 0;
    std::vector<int> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng erng = root.fork(1000 + static_cast<std::uint64_t>(epoch));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[i], order[erng.uniform_int(i + 1)]);

        double loss_sum = 0.0;
        std::size_t correct = 0, total = 0;
        for (std::size_t start = 0, batch_idx = 0; start < order.size();
             start += cfg.batch_size, ++batch_idx) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const float inv_batch = 1.0f / static_cast<float>(end - start);
            for (auto& g : grads) g.set_zero();

            for (std::size_t pos = start; pos < end; ++pos) {
                const TrainSample* sample = &data[order[pos]];
                TrainSample augmented;
                Rng srng = erng.fork(10'000 + pos);
                if (cfg.augment.enabled) {
                    augmented = augment(*sample, cfg.augment, srng);
                    sample = &augmented;
                }
                Graph<float> g;
                const int in = g.input(sample->stack);
                Rng drop_rng = srng.fork(1);
                const auto bind = model.run(g, in, /*training=*/true, drop_rng);
                const TensorF& prob = g.value(bind.prob);

                TensorF dprob = TensorF::zeros_like(prob);
                const double loss =
                    total_loss(prob, sample->target, cw, sample->weights, loss_cfg, &dprob);
                if (!std::isfinite(loss))
                    throw DivergenceError(epoch, static_cast<int>(batch_idx));
                loss_sum += loss;
                dprob.mat() *= inv_batch;
                g.backward(bind.prob, dprob);
                for (std::size_t i = 0; i < np; ++i)
                    if (g.has_grad(bind.param_nodes[i]))
                        grads[i].mat() += g.grad(bind.param_nodes[i]).mat();

                const Grid<std::uint8_t> pred = argmax_channels(prob);
                for (std::size_t i = 0; i < pred.size(); ++i)
                    correct += pred.data()[i] == sample->target.labels.data()[i];
                total += pred.size();
            }

            ++adam_t;
            const double bc1 = 1.0 - std::pow(cfg.beta1, adam_t);
            const double bc2 = 1.0 - std::pow(cfg.beta2, adam_t);
            const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
            const float step = static_cast<float>(cfg.learning_rate * std::sqrt(bc2) / bc1);
            const float eps = static_cast<float>(cfg.adam_epsilon);
            for (std::size_t i = 0; i < np; ++i) {
                float* w = model.params()[i].value.data();
                float* gm = grads[i].data();
                float* m = adam_m[i].data();
                float* v = adam_v[i].data();
                const std::size_t n = grads[i].size();
                for (std::size_t k = 0; k < n; ++k) {
                    m[k] = b1 * m[k] + (1.0f - b1) * gm[k];
                    v[k] = b2 * v[k] + (1.0f - b2) * gm[k] * gm[k];
                    w[k] -= step * m[k] / (std::sqrt(v[k]) + eps);
                }
            }
        }

        EpochStats stats{epoch, loss_sum / static_cast<double>(data.size()),
                         static_cast<double>(correct) / static_cast<double>(total)};
        result.history.push_back(stats);
        if (progress) progress(stats);

        if (stats.accuracy > best_acc) {
            best_acc = stats.accuracy;
            best_epoch = epoch;
            best_params.clear();
            for (const auto& p : model.params()) best_params.push_back(p.value);
        }
        if (epoch - best_epoch >= cfg.patience_epochs) break;
    }

    for (std::size_t i = 0; i < np; ++i) model.params()[i].value = best_params[i];
    result.model = std::move(model);
    result.best_epoch = best_epoch;
    result.best_accuracy = best_acc;
    return result;
}

// ---------------------------------------------------------------------------
// Corpus loading
// ---------------------------------------------------------------------------

struct TrainVolume {
    std::string id;
    OctVolume volume;
    std::vector<LabelMap> truth; // 8-class ground truth per B-scan
};

using Corpus = std::vector<TrainVolume>;

inline Corpus load_corpus(const Manifest& manifest) {
    Corpus corpus;
    for (const auto& item : manifest.items) {
        TrainVolume tv;
        tv.id = item.id;
        tv.volume = read_volume(manifest.resolve(item.volume));
        if (static_cast<int>(item.labels.size()) != tv.volume.num_bscans)
            throw CorruptFile("manifest item " + item.id + ": label count != B-scan count");
        for (const auto& rel : item.labels) {
            LabelMap map;
            map.scheme = &ClassScheme::stage2();
            map.labels = read_png_gray8(manifest.resolve(rel));
            if (map.height() != tv.volume.height || map.width() != tv.volume.width)
                throw CorruptFile("label map dims mismatch for " + item.id);
            map.validate();
            tv.truth.push_back(std::move(map));
        }
        corpus.push_back(std::move(tv));
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// Cascade training
// ---------------------------------------------------------------------------

struct CascadeConfigs {
    NetworkConfig stage1{.in_channels = 3, .num_classes = 3};
    NetworkConfig stage2{.in_channels = 4, .num_classes = 8};
    TrainConfig train;
    LossConfig loss;
    RfConfig rf;
};

/// Stage 1 on merged 3-class targets, stage-1 predictions feeding the
/// distance-map channel of stage 2, then the component filter fitted on
/// stage-2 training predictions (>= 50% ground-truth fluid overlap marks a
/// component true-positive).
inline ModelBundle train_cascade(const Corpus& corpus, const CascadeConfigs& configs,
                                 const ProgressFn& progress = {}) {
    if (corpus.empty()) throw ConfigError("train_cascade: empty corpus");

    std::vector<TrainSample> stage1_samples;
    for (const auto& tv : corpus) {
        for (int b = 0; b < tv.volume.num_bscans; ++b) {
            TrainSample s;
            s.stack = extract_bscan_stack(tv.volume, b, configs.stage1.in_channels);
            s.target = merge_to_stage1(tv.truth[b]);
            s.weights = pixel_weight_map(s.target, configs.loss);
            stage1_samples.push_back(std::move(s));
        }
    }
    TrainConfig cfg1 = configs.train;
    cfg1.seed = Rng(configs.train.seed).fork(1).next_u64();
    TrainResult stage1 = train_stage(stage1_samples, configs.stage1, cfg1, configs.loss, progress);

    // Stage-2 stacks use the *predicted* distance maps so training matches
    // the inference-time input distribution.
    std::vector<TrainSample> stage2_samples;
    std::vector<std::pair<int, int>> sample_origin; // (volume, bscan)
    {
        int vol_idx = 0;
        for (const auto& tv : corpus) {
            for (int b = 0; b < tv.volume.num_bscans; ++b) {
                const BscanStack stack3 = extract_bscan_stack(tv.volume, b, 3);
                const BscanStack stack1 =
                    configs.stage1.in_channels == 3 ? stack3
                                                    : extract_bscan_stack(tv.volume, b, configs.stage1.in_channels);
                Stage1Output s1 = run_stage1(stage1.model, stack1);
                TrainSample s;
                if (configs.stage2.in_channels == 4) {
                    s.stack = append_channel(stack3, s1.distmap);
                } else {
                    s.stack = append_channel(extract_bscan_stack(tv.volume, b, 1), s1.distmap);
                }
                s.target = tv.truth[b];
                s.weights = pixel_weight_map(s.target, configs.loss);
                stage2_samples.push_back(std::move(s));
                sample_origin.push_back({vol_idx, b});
            }
            ++vol_idx;
        }
    }
    TrainConfig cfg2 = configs.train;
    cfg2.seed = Rng(configs.train.seed).fork(2).next_u64();
    TrainResult stage2 = train_stage(stage2_samples, configs.stage2, cfg2, configs.loss, progress);

    // Fluid-component training set from stage-2 predictions on the training
    // corpus.
    std::vector<RandomForest::Features> rf_x;
    std::vector<int> rf_y;
    for (std::size_t i = 0; i < stage2_samples.size(); ++i) {
        const auto [vol_idx, b] = sample_origin[i];
        const TrainVolume& tv = corpus[vol_idx];
        LabelMap pred;
        pred.scheme = &ClassScheme::stage2();
        pred.labels = argmax_channels(stage2.model.infer(stage2_samples[i].stack));
        auto components = find_fluid_components(pred);
        if (components.empty()) continue;
        const TensorF& distmap_channel = stage2_samples[i].stack; // last channel
        TensorF distmap(1, tv.volume.height, tv.volume.width);
        std::copy(distmap_channel.plane(distmap_channel.channels() - 1),
                  distmap_channel.plane(distmap_channel.channels() - 1) + distmap.plane_size(),
                  distmap.data());
        for (auto& comp : components) {
            compute_component_features(comp, tv.volume, b, distmap, pred);
            int overlap = 0;
            for (auto [y, x] : comp.pixels) overlap += tv.truth[b].labels.at(y, x) == kFluidClass;
            rf_x.push_back(comp.features);
            rf_y.push_back(2 * overlap >= comp.area() ? 1 : 0);
        }
    }

    ModelBundle bundle;
    bundle.stage1 = std::move(stage1.model);
    bundle.stage2 = std::move(stage2.model);
    bundle.loss = configs.loss;
    bundle.rf_config = configs.rf;
    if (!rf_x.empty()) bundle.rf.fit(rf_x, rf_y, configs.rf);
    bundle.provenance = {{"train", configs.train},
                         {"stage1", configs.stage1},
                         {"stage2", configs.stage2},
                         {"rf_components", rf_x.size()},
                         {"stage1_best_epoch", stage1.best_epoch},
                         {"stage2_best_epoch", stage2.best_epoch}};
    return bundle;
}

/// Per-epoch metrics in CSV form (epoch, loss, accuracy), one row per epoch.
inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<EpochStats>& history) {
    auto os = detail::open_out(path);
    os << "epoch,loss,accuracy\n";
    for (const auto& e : history) {
        char line[96];
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", e.epoch, e.loss, e.accuracy);
        os << line;
    }
}

} // namespace lfseg
