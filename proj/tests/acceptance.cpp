// Acceptance harness: runs every gate criterion and prints one PASS/FAIL
// line each. Criteria 5-7 share one end-to-end phantom experiment (cascade +
// two single-stage ablations trained from scratch), so the binary takes a
// while on CPU; everything else is seconds.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lfseg/config/run_config.hpp"
#include "lfseg/infer/metrics.hpp"
#include "lfseg/phantom/phantom.hpp"
#include "lfseg/train/trainer.hpp"

using namespace lfseg;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0;
};

std::vector<Criterion> g_results;

void run_criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    Criterion c;
    c.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        auto [pass, detail] = fn();
        c.pass = pass;
        c.detail = std::move(detail);
    } catch (const std::exception& e) {
        c.pass = false;
        c.detail = std::string("exception: ") + e.what();
    }
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %s (%.1fs) %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.seconds,
                c.detail.c_str());
    std::fflush(stdout);
    g_results.push_back(std::move(c));
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

// ---------------------------------------------------------------------------
// Criterion 1: shape / normalization
// ---------------------------------------------------------------------------

bool normalized_and_shaped(const Model<float>& model, int c, int h, int w, Rng& rng,
                           std::string& err) {
    TensorF stack(c, h, w);
    for (std::size_t i = 0; i < stack.size(); ++i) stack.data()[i] = static_cast<float>(rng.uniform());
    const TensorF prob = model.infer(stack);
    if (prob.height() != h || prob.width() != w ||
        prob.channels() != model.config().num_classes) {
        err = fmt("dims %dx%d -> %dx%dx%d", h, w, prob.channels(), prob.height(), prob.width());
        return false;
    }
    for (std::size_t i = 0; i < prob.plane_size(); ++i) {
        double s = 0;
        for (int ch = 0; ch < prob.channels(); ++ch) s += prob.plane(ch)[i];
        if (std::abs(s - 1.0) > 1e-5) {
            err = fmt("probability sum %.8f at pixel %zu", s, i);
            return false;
        }
    }
    return true;
}

std::pair<bool, std::string> criterion_shapes() {
    Rng rng(2024);
    std::string err;
    // paper-default configuration at the paper's B-scan size
    NetworkConfig full;
    full.in_channels = 3;
    full.num_classes = 8;
    const auto model_full = Model<float>::build(full, Rng(1));
    if (!normalized_and_shaped(model_full, 3, 500, 245, rng, err))
        return {false, "500x245x3: " + err};

    NetworkConfig four = full;
    four.in_channels = 4;
    const auto model4 = Model<float>::build(four, Rng(2));
    if (!normalized_and_shaped(model4, 4, 64, 64, rng, err)) return {false, "64x64x4: " + err};

    NetworkConfig small;
    small.in_channels = 1;
    small.num_classes = 3;
    small.base_features = 6;
    small.depth = 3;
    const auto model_small = Model<float>::build(small, Rng(3));
    for (auto [h, w] : {std::pair{37, 61}, {128, 96}, {45, 45}})
        if (!normalized_and_shaped(model_small, 1, h, w, rng, err))
            return {false, fmt("%dx%dx1: ", h, w) + err};
    return {true, "sums within 1e-5 of 1, output dims equal input dims"};
}

// ---------------------------------------------------------------------------
// Criterion 2: gradient check through the full network
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_gradient() {
    Rng rng(77);
    NetworkConfig cfg;
    cfg.in_channels = 4;
    cfg.num_classes = 8;
    cfg.base_features = 4;
    cfg.depth = 2;
    cfg.dilated_branch_features = 6;
    cfg.dropout_rate = 0.0;
    Model<double> model = Model<float>::build(cfg, Rng(5)).cast<double>();

    Tensor<double> stack(4, 8, 8);
    for (std::size_t i = 0; i < stack.size(); ++i) stack.data()[i] = rng.uniform();
    LabelMap target;
    target.scheme = &ClassScheme::stage2();
    target.labels = Grid<std::uint8_t>(8, 8);
    for (std::size_t i = 0; i < target.labels.size(); ++i)
        target.labels.data()[i] = static_cast<std::uint8_t>(rng.uniform_int(8));
    const PixelWeightMap pw = pixel_weight_map(target); // omega1=10, omega2=5
    std::vector<LabelMap> one{target};
    const ClassWeights cw = class_weights(one);
    const LossConfig loss_cfg; // lambda1=0.5, lambda2=1

    auto loss_of = [&](Model<double>& m) {
        Graph<double> g;
        Rng drop(1);
        const auto bind = m.run(g, g.input(stack), false, drop);
        return total_loss(g.value(bind.prob), target, cw, pw, loss_cfg);
    };

    Graph<double> g;
    Rng drop(1);
    const auto bind = model.run(g, g.input(stack), false, drop);
    Tensor<double> dprob = Tensor<double>::zeros_like(g.value(bind.prob));
    total_loss(g.value(bind.prob), target, cw, pw, loss_cfg, &dprob);
    g.backward(bind.prob, dprob);

    const double eps = 1e-3;
    int tight = 0, total = 0;
    double worst = 0;
    Rng pick(99);
    while (total < 20) {
        const std::size_t pi = pick.next_u64() % model.params().size();
        const std::size_t ei = pick.next_u64() % model.params()[pi].value.size();
        const double analytic =
            g.has_grad(bind.param_nodes[pi]) ? g.grad(bind.param_nodes[pi]).data()[ei] : 0.0;
        double& slot = model.params()[pi].value.data()[ei];
        const double keep = slot;
        slot = keep + eps;
        const double up = loss_of(model);
        slot = keep - eps;
        const double dn = loss_of(model);
        slot = keep;
        const double fd = (up - dn) / (2 * eps);
        if (std::abs(fd) < 1e-13 && std::abs(analytic) < 1e-13) continue; // dead ReLU path
        const double rel =
            std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-12});
        worst = std::max(worst, rel);
        tight += rel < 1e-4;
        ++total;
    }
    const bool pass = tight >= 19 && worst < 1e-2; // >= 95% under 1e-4, all under 1e-2
    return {pass, fmt("%d/20 under 1e-4, worst relative error %.2e", tight, worst)};
}

// ---------------------------------------------------------------------------
// Criterion 3: oracle equivalence (independent scalar loops)
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_oracles() {
    Rng rng(31337);
    double worst = 0;
    auto track = [&](double got, double want) {
        worst = std::max(worst, std::abs(got - want));
        return std::abs(got - want) <= 1e-10;
    };

    for (int trial = 0; trial < 110; ++trial) {
        const int h = 4 + rng.uniform_int(10), w = 3 + rng.uniform_int(10);

        // distance map vs per-pixel formula
        SurfacePair s;
        for (int x = 0; x < w; ++x) {
            const double y1 = rng.uniform(0.0, h / 2.0);
            s.y1.push_back(y1);
            s.y2.push_back(y1 + 0.5 + rng.uniform(0.0, h / 2.0));
        }
        const auto dm = compute_distance_map<double>(s, h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double v =
                    std::clamp((y - s.y1[x]) / (s.y2[x] - s.y1[x]), -2.0, 3.0);
                if (!track(dm.at(0, y, x), v)) return {false, fmt("distmap off at trial %d", trial)};
            }

        // random 8-class instance for the losses and the weight map
        LabelMap g;
        g.scheme = &ClassScheme::stage2();
        g.labels = Grid<std::uint8_t>(h, w);
        for (std::size_t i = 0; i < g.labels.size(); ++i)
            g.labels.data()[i] = static_cast<std::uint8_t>(rng.uniform_int(8));
        Tensor<double> p(8, h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double sum = 0;
                for (int c = 0; c < 8; ++c) {
                    p.at(c, y, x) = rng.uniform(0.02, 1.0);
                    sum += p.at(c, y, x);
                }
                for (int c = 0; c < 8; ++c) p.at(c, y, x) /= sum;
            }

        const LossConfig lc;
        const PixelWeightMap pw = pixel_weight_map(g, lc);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int id = g.labels.at(y, x);
                bool boundary = false;
                if (y > 0) boundary |= g.labels.at(y - 1, x) != id;
                if (y + 1 < h) boundary |= g.labels.at(y + 1, x) != id;
                if (x > 0) boundary |= g.labels.at(y, x - 1) != id;
                if (x + 1 < w) boundary |= g.labels.at(y, x + 1) != id;
                const bool retina = id >= 1 && id <= 5 || id == 7;
                const double want = 1.0 + (boundary ? lc.omega1 : 0.0) + (retina ? lc.omega2 : 0.0);
                if (!track(pw.at(y, x), want)) return {false, "pixel weight map off"};
            }

        ClassWeights cw;
        for (int c = 0; c < 8; ++c) cw.w.push_back(rng.uniform(0.1, 5.0));
        double num = 0, den = 1e-6;
        for (int c = 0; c < 8; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double pv = p.at(c, y, x);
                    const double gv = g.labels.at(y, x) == c ? 1.0 : 0.0;
                    num += cw.w[c] * pv * gv;
                    den += pv * pv + gv * gv;
                }
        if (!track(dice_loss(p, g, cw, 1e-6), 1.0 - 2.0 * num / den))
            return {false, "dice loss off"};

        double acc = 0, wsum = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                acc -= pw.at(y, x) * std::log(p.at(g.labels.at(y, x), y, x) + 1e-6);
                wsum += pw.at(y, x);
            }
        if (!track(logistic_loss(p, g, pw, 1e-6), acc / wsum))
            return {false, "logistic loss off"};
    }
    return {true, fmt("110 random instances per op, worst |delta| %.1e", worst)};
}

// ---------------------------------------------------------------------------
// Criterion 4: trivial cases
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_trivial() {
    Rng rng(4);
    LabelMap g;
    g.scheme = &ClassScheme::stage2();
    g.labels = Grid<std::uint8_t>(12, 12);
    for (std::size_t i = 0; i < g.labels.size(); ++i)
        g.labels.data()[i] = static_cast<std::uint8_t>(rng.uniform_int(8));
    Tensor<double> onehot(8, 12, 12);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) onehot.at(g.labels.at(y, x), y, x) = 1.0;
    const PixelWeightMap pw = pixel_weight_map(g);
    ClassWeights ones{std::vector<double>(8, 1.0)};
    if (std::abs(dice_loss(onehot, g, ones)) > 1e-5) return {false, "perfect dice not ~0"};
    if (std::abs(logistic_loss(onehot, g, pw)) > 1e-5) return {false, "perfect logistic not ~0"};

    for (std::size_t i = 0; i < pw.size(); ++i) {
        const float v = pw.data()[i];
        if (v != 1.0f && v != 6.0f && v != 11.0f && v != 16.0f)
            return {false, fmt("weight %g outside {1,6,11,16}", v)};
    }

    SurfacePair s;
    s.y1.assign(9, 14.0);
    s.y2.assign(9, 47.0); // integer rows: exact 0 / 1 on the surfaces
    const auto dm = compute_distance_map<double>(s, 64, 9);
    for (int x = 0; x < 9; ++x) {
        if (dm.at(0, 14, x) != 0.0) return {false, "distance map not 0 on the ILM row"};
        if (dm.at(0, 47, x) != 1.0) return {false, "distance map not 1 on the BM row"};
    }
    return {true, "losses vanish at the optimum; weights in {1,6,11,16}; distmap anchored"};
}

// ---------------------------------------------------------------------------
// Criteria 5-7: end-to-end phantom experiment
// ---------------------------------------------------------------------------

PhantomConfig e2e_phantom() {
    PhantomConfig cfg;
    cfg.height = 128;
    cfg.width = 128;
    cfg.num_bscans = 4;
    cfg.surface_amplitude_px = 6.0;
    cfg.layer_means = {0.60, 0.50, 0.62, 0.48, 0.78};
    cfg.background_means = {0.06, 0.16};
    cfg.fluid_mean = 0.05;
    cfg.speckle_strength = 0.8;
    cfg.fluid_probability = 0.3;
    cfg.fluid_rx_px = {7.0, 16.0};
    cfg.fluid_ry_px = {4.0, 9.0};
    cfg.shadow_attenuation = 0.55;
    return cfg;
}

NetworkConfig e2e_net(int in_channels, int num_classes) {
    NetworkConfig cfg;
    cfg.in_channels = in_channels;
    cfg.num_classes = num_classes;
    cfg.base_features = 8;
    cfg.depth = 3;
    cfg.dilated_branch_features = 16;
    cfg.dropout_rate = 0.25;
    return cfg;
}

TrainConfig e2e_train() {
    TrainConfig cfg;
    cfg.batch_size = 3;
    cfg.learning_rate = 1.5e-3;
    cfg.patience_epochs = 5;
    cfg.max_epochs = 18;
    cfg.augment.enabled = false;
    cfg.seed = 42;
    return cfg;
}

struct E2E {
    EvalReport cascade, single3, single1;
    int subset_violations = -1;
    double surf_mae_y1 = -1, surf_mae_y2 = -1;
    bool ran = false;
    std::string error;
};

Corpus make_corpus(const PhantomConfig& base, int volumes, std::uint64_t seed_offset) {
    Corpus corpus;
    Rng seeds(base.seed);
    for (int v = 0; v < volumes; ++v) {
        PhantomConfig cfg = base;
        cfg.seed = seeds.fork(seed_offset + v).next_u64();
        PhantomVolume vol = generate_phantom(cfg);
        TrainVolume tv;
        tv.id = fmt("vol%03llu", static_cast<unsigned long long>(seed_offset + v));
        tv.volume = std::move(vol.volume);
        tv.truth = std::move(vol.labels);
        corpus.push_back(std::move(tv));
    }
    return corpus;
}

E2E& e2e_results() {
    static E2E e2e = [] {
        E2E r;
        try {
            const PhantomConfig phantom = [] {
                PhantomConfig p = e2e_phantom();
                p.seed = 2025;
                return p;
            }();
            std::fprintf(stderr, "[e2e] generating 40 train / 10 test phantom volumes...\n");
            const Corpus train = make_corpus(phantom, 40, 0);
            Corpus test = make_corpus(phantom, 10, 1000);

            // ground-truth surfaces for the stage-1 accuracy check
            std::vector<std::vector<SurfacePair>> test_surfaces;
            {
                Rng seeds(phantom.seed);
                for (int v = 0; v < 10; ++v) {
                    PhantomConfig cfg = phantom;
                    cfg.seed = seeds.fork(1000 + v).next_u64();
                    test_surfaces.push_back(generate_phantom(cfg).ilm_bm);
                }
            }

            CascadeConfigs configs;
            configs.stage1 = e2e_net(3, 3);
            configs.stage2 = e2e_net(4, 8);
            configs.train = e2e_train();
            configs.rf = RfConfig{};

            auto progress = [](const EpochStats& e) {
                std::fprintf(stderr, "[e2e]   epoch %d loss %.4f acc %.4f\n", e.epoch, e.loss,
                             e.accuracy);
            };
            std::fprintf(stderr, "[e2e] training the cascade...\n");
            const ModelBundle bundle = train_cascade(train, configs, progress);

            // cascade evaluation + subset violations + stage-1 surface error
            int violations = 0;
            double mae1 = 0, mae2 = 0;
            std::size_t mae_cols = 0;
            int vol_idx = -1;
            r.cascade = evaluate_with(test, [&](const TrainVolume& tv, int b) {
                if (b == 0) ++vol_idx;
                BscanResult res = infer_bscan(tv.volume, b, bundle);
                for (int y = 0; y < res.labels.height(); ++y)
                    for (int x = 0; x < res.labels.width(); ++x)
                        if (res.labels.labels.at(y, x) == kFluidClass &&
                            !res.fluid_pre_rf.at(y, x))
                            ++violations;
                if (!res.distmap_fallback) {
                    const SurfacePair& truth = test_surfaces[vol_idx][b];
                    for (int x = 0; x < res.labels.width(); ++x) {
                        mae1 += std::abs(res.surfaces.y1[x] - truth.y1[x]);
                        mae2 += std::abs(res.surfaces.y2[x] - truth.y2[x]);
                        ++mae_cols;
                    }
                }
                return res;
            });
            r.subset_violations = violations;
            r.surf_mae_y1 = mae_cols ? mae1 / mae_cols : 1e9;
            r.surf_mae_y2 = mae_cols ? mae2 / mae_cols : 1e9;

            // ablations: one-stage nets trained directly on the 8-class task
            std::fprintf(stderr, "[e2e] training the 3-B-scan single-stage ablation...\n");
            auto build_samples = [&](int channels) {
                std::vector<TrainSample> samples;
                for (const auto& tv : train)
                    for (int b = 0; b < tv.volume.num_bscans; ++b) {
                        TrainSample s;
                        s.stack = extract_bscan_stack(tv.volume, b, channels);
                        s.target = tv.truth[b];
                        s.weights = pixel_weight_map(s.target, configs.loss);
                        samples.push_back(std::move(s));
                    }
                return samples;
            };
            TrainConfig tcfg = configs.train;
            tcfg.seed = 43;
            const TrainResult s3 =
                train_stage(build_samples(3), e2e_net(3, 8), tcfg, configs.loss, progress);
            r.single3 = evaluate_single(test, s3.model);

            std::fprintf(stderr, "[e2e] training the 1-B-scan single-stage ablation...\n");
            tcfg.seed = 44;
            const TrainResult s1 =
                train_stage(build_samples(1), e2e_net(1, 8), tcfg, configs.loss, progress);
            r.single1 = evaluate_single(test, s1.model);

            r.ran = true;
            std::fprintf(stderr,
                         "[e2e] cascade layers %.3f %.3f %.3f %.3f %.3f fluid %.3f rf %.3f\n",
                         r.cascade.mean_layer_dice[0], r.cascade.mean_layer_dice[1],
                         r.cascade.mean_layer_dice[2], r.cascade.mean_layer_dice[3],
                         r.cascade.mean_layer_dice[4], r.cascade.mean_fluid_pre,
                         r.cascade.mean_fluid_post);
            std::fprintf(stderr, "[e2e] single3 mean %.3f, single1 mean %.3f\n",
                         r.single3.mean_layer(), r.single1.mean_layer());
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        return r;
    }();
    return e2e;
}

std::pair<bool, std::string> criterion_e2e() {
    const E2E& r = e2e_results();
    if (!r.ran) return {false, "end-to-end run failed: " + r.error};
    bool pass = true;
    for (double d : r.cascade.mean_layer_dice) pass &= d >= 0.85;
    pass &= r.cascade.mean_fluid_pre >= 0.5;
    const bool surf_ok = r.surf_mae_y1 <= 2.0 && r.surf_mae_y2 <= 2.0;
    return {pass && surf_ok,
            fmt("layers %.3f/%.3f/%.3f/%.3f/%.3f (need .85), fluid pre-RF %.3f (need .5), "
                "stage-1 surface MAE %.2f/%.2f px (need 2)",
                r.cascade.mean_layer_dice[0], r.cascade.mean_layer_dice[1],
                r.cascade.mean_layer_dice[2], r.cascade.mean_layer_dice[3],
                r.cascade.mean_layer_dice[4], r.cascade.mean_fluid_pre, r.surf_mae_y1,
                r.surf_mae_y2)};
}

std::pair<bool, std::string> criterion_ablation() {
    const E2E& r = e2e_results();
    if (!r.ran) return {false, "end-to-end run failed: " + r.error};
    int wins = 0;
    for (int k = 0; k < 5; ++k) wins += r.cascade.mean_layer_dice[k] >= r.single3.mean_layer_dice[k];
    const bool bscan_ok = r.single3.mean_layer() >= r.single1.mean_layer();
    return {wins >= 3 && bscan_ok,
            fmt("2-stage beats 1-stage on %d/5 classes (need 3); 3-B-scan %.3f vs 1-B-scan %.3f "
                "mean layer Dice",
                wins, r.single3.mean_layer(), r.single1.mean_layer())};
}

std::pair<bool, std::string> criterion_rf_contract() {
    const E2E& r = e2e_results();
    if (!r.ran) return {false, "end-to-end run failed: " + r.error};
    const bool reported = !std::isnan(r.cascade.mean_fluid_pre) && !std::isnan(r.cascade.mean_fluid_post);
    return {r.subset_violations == 0 && reported,
            fmt("%d subset violations over %zu test B-scans; fluid Dice pre %.3f / post %.3f",
                r.subset_violations, r.cascade.rows.size(), r.cascade.mean_fluid_pre,
                r.cascade.mean_fluid_post)};
}

// ---------------------------------------------------------------------------
// Criterion 8: determinism
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::pair<bool, std::string> criterion_determinism() {
    // byte-identical phantom-gen through the CLI
    const fs::path work = fs::temp_directory_path() / "lfseg_acceptance_det";
    fs::remove_all(work);
    fs::create_directories(work);
    const std::string cli = LFSEG_CLI_PATH;
    auto gen = [&](const char* sub) {
        const std::string cmd = cli + " phantom-gen --seed 11 --volumes 3 --out " +
                                (work / sub).string() + " 2> /dev/null";
        return std::system(cmd.c_str()) == 0;
    };
    if (!gen("a") || !gen("b")) return {false, "phantom-gen CLI failed"};
    std::vector<fs::path> rel;
    for (const auto& e : fs::recursive_directory_iterator(work / "a"))
        if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), work / "a"));
    if (rel.empty()) return {false, "phantom-gen produced no files"};
    for (const auto& p : rel)
        if (slurp(work / "a" / p) != slurp(work / "b" / p))
            return {false, "corpus differs at " + p.string()};

    // bit-exact loss history for fixed-seed training
    PhantomConfig pcfg;
    pcfg.height = 32;
    pcfg.width = 32;
    pcfg.num_bscans = 2;
    pcfg.surface_amplitude_px = 2.0;
    pcfg.fluid_probability = 0;
    pcfg.seed = 5;
    const PhantomVolume vol = generate_phantom(pcfg);
    std::vector<TrainSample> samples;
    for (int b = 0; b < 2; ++b) {
        TrainSample s;
        s.stack = extract_bscan_stack(vol.volume, b);
        s.target = merge_to_stage1(vol.labels[b]);
        s.weights = pixel_weight_map(s.target);
        samples.push_back(std::move(s));
    }
    NetworkConfig net;
    net.in_channels = 3;
    net.num_classes = 3;
    net.base_features = 4;
    net.depth = 2;
    net.dilated_branch_features = 4;
    net.dropout_rate = 0.5; // dropout masks must be seeded too
    TrainConfig tcfg;
    tcfg.batch_size = 2;
    tcfg.learning_rate = 1e-3;
    tcfg.max_epochs = 3;
    tcfg.patience_epochs = 5;
    tcfg.augment.enabled = false;
    tcfg.seed = 9;
    const TrainResult a = train_stage(samples, net, tcfg);
    const TrainResult b = train_stage(samples, net, tcfg);
    if (a.history.size() != b.history.size()) return {false, "history lengths differ"};
    for (std::size_t i = 0; i < a.history.size(); ++i)
        if (a.history[i].loss != b.history[i].loss || a.history[i].accuracy != b.history[i].accuracy)
            return {false, fmt("histories diverge at epoch %zu", i + 1)};
    return {true, fmt("corpora byte-identical (%zu files); %zu-epoch loss history bit-exact",
                      rel.size(), a.history.size())};
}

// ---------------------------------------------------------------------------
// Criterion 9: cross-validation harness
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_cv() {
    PhantomConfig pcfg;
    pcfg.height = 32;
    pcfg.width = 32;
    pcfg.num_bscans = 2;
    pcfg.surface_amplitude_px = 2.0;
    pcfg.fluid_probability = 0.5;
    pcfg.fluid_rx_px = {3.0, 5.0};
    pcfg.fluid_ry_px = {2.0, 3.0};
    pcfg.seed = 77;
    const Corpus corpus = make_corpus(pcfg, 10, 0);

    CascadeConfigs configs;
    configs.stage1 = NetworkConfig{.in_channels = 3, .num_classes = 3, .base_features = 4,
                                   .depth = 2, .dilated_branch_features = 4, .dropout_rate = 0.0};
    configs.stage2 = NetworkConfig{.in_channels = 4, .num_classes = 8, .base_features = 4,
                                   .depth = 2, .dilated_branch_features = 4, .dropout_rate = 0.0};
    configs.train.batch_size = 4;
    configs.train.learning_rate = 1e-3;
    configs.train.max_epochs = 1;
    configs.train.augment.enabled = false;
    configs.rf.num_trees = 5;

    const CvResult cv = cross_validate(corpus, 5, configs);
    if (cv.folds.size() != 5) return {false, "expected 5 folds"};

    std::set<int> seen;
    std::size_t mn = 100, mx = 0;
    for (const auto& fold : cv.test_volumes) {
        for (int v : fold)
            if (!seen.insert(v).second) return {false, "volume tested twice"};
        mn = std::min(mn, fold.size());
        mx = std::max(mx, fold.size());
    }
    if (seen.size() != 10) return {false, "partition not exhaustive"};
    if (mx - mn > 1) return {false, "folds unbalanced"};

    const auto agg = cv.aggregate_json();
    if (agg.at("columns").size() != 7) return {false, "aggregate lacks the 7 metric columns"};
    if (agg.at("folds").size() != 5) return {false, "aggregate lacks the 5 fold rows"};
    for (const auto& row : agg.at("folds"))
        for (const char* col : kMetricColumns)
            if (!row.contains(col)) return {false, fmt("fold row missing column %s", col)};

    bool threw = false;
    try {
        cv_partition(4, 5);
    } catch (const ConfigError&) {
        threw = true;
    }
    if (!threw) return {false, "k > volumes must raise ConfigError"};
    return {true, "partitions volume-disjoint, exhaustive, balanced; 7x5 aggregate report"};
}

} // namespace

int main() {
    std::printf("acceptance suite\n================\n");
    run_criterion("criterion 1: forward shape and softmax normalization", criterion_shapes);
    run_criterion("criterion 2: total-loss gradient vs central differences", criterion_gradient);
    run_criterion("criterion 3: oracle equivalence at 1e-10", criterion_oracles);
    run_criterion("criterion 4: trivial-case suite", criterion_trivial);
    run_criterion("criterion 5: phantom end-to-end cascade quality", criterion_e2e);
    run_criterion("criterion 6: cascade and B-scan-context ablations", criterion_ablation);
    run_criterion("criterion 7: RF filter removal-only contract", criterion_rf_contract);
    run_criterion("criterion 8: fixed-seed determinism", criterion_determinism);
    run_criterion("criterion 9: cross-validation harness", criterion_cv);

    int failures = 0;
    for (const auto& c : g_results) failures += !c.pass;
    std::printf("================\n%zu criteria, %d failed\n", g_results.size(), failures);
    return failures == 0 ? 0 : 1;
}
