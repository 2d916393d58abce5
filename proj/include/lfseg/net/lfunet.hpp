#pragma once
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfseg/core/error.hpp"
#include "lfseg/core/rng.hpp"
#include "lfseg/core/tensor.hpp"
#include "lfseg/net/graph.hpp"

namespace lfseg {

/// Shared-encoder dual-decoder segmentation network: a U-Net-style decoder
/// (skip concatenation, two convs per level) and an FCN-style decoder (skip
/// addition, one conv per level) rejoin in front of three parallel dilated
/// convolutions, dropout and a 1x1 softmax classifier.
struct NetworkConfig {
    int in_channels = 3;
    int num_classes = 8;
    int base_features = 64;
    int depth = 4;
    std::array<int, 3> dilation_rates{1, 2, 4};
    int dilated_branch_features = 64;
    double dropout_rate = 0.5;

    void validate() const {
        if (in_channels != 1 && in_channels != 3 && in_channels != 4)
            throw ConfigError("network: in_channels must be 1, 3 or 4");
        if (num_classes != 3 && num_classes != 8)
            throw ConfigError("network: num_classes must be 3 or 8");
        if (depth < 1) throw ConfigError("network: depth must be >= 1");
        if (base_features < 1 || dilated_branch_features < 1)
            throw ConfigError("network: feature counts must be >= 1");
        for (int r : dilation_rates)
            if (r < 1) throw ConfigError("network: dilation rates must be >= 1");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw ConfigError("network: dropout_rate must lie in [0,1)");
    }

    /// Encoder block widths: base, 2*base, ..., base*2^(depth-1).
    std::vector<int> block_features() const {
        std::vector<int> f(depth);
        for (int i = 0; i < depth; ++i) f[i] = base_features << i;
        return f;
    }
};

inline void to_json(nlohmann::json& j, const NetworkConfig& c) {
    j = {{"in_channels", c.in_channels},
         {"num_classes", c.num_classes},
         {"base_features", c.base_features},
         {"depth", c.depth},
         {"dilation_rates", c.dilation_rates},
         {"dilated_branch_features", c.dilated_branch_features},
         {"dropout_rate", c.dropout_rate}};
}

inline void from_json(const nlohmann::json& j, NetworkConfig& c) {
    j.at("in_channels").get_to(c.in_channels);
    j.at("num_classes").get_to(c.num_classes);
    j.at("base_features").get_to(c.base_features);
    j.at("depth").get_to(c.depth);
    j.at("dilation_rates").get_to(c.dilation_rates);
    j.at("dilated_branch_features").get_to(c.dilated_branch_features);
    j.at("dropout_rate").get_to(c.dropout_rate);
}

/// Debug/ablation switch: optionally silence one decoder before the head.
enum class BranchMode { both, unet_only, fcn_only };

namespace detail {

struct LayerSpec {
    enum class Kind { conv, upconv };
    Kind kind;
    std::string name;
    int in_ch, out_ch, kernel, dilation;
};

inline std::vector<LayerSpec> layer_specs(const NetworkConfig& cfg) {
    using Kind = LayerSpec::Kind;
    std::vector<LayerSpec> specs;
    const auto feats = cfg.block_features();
    const int bottom = cfg.base_features << cfg.depth;
    int ch = cfg.in_channels;
    for (int i = 0; i < cfg.depth; ++i) {
        std::string p = "enc" + std::to_string(i);
        specs.push_back({Kind::conv, p + ".conv1", ch, feats[i], 3, 1});
        specs.push_back({Kind::conv, p + ".conv2", feats[i], feats[i], 3, 1});
        ch = feats[i];
    }
    specs.push_back({Kind::conv, "bottleneck.conv1", ch, bottom, 3, 1});
    specs.push_back({Kind::conv, "bottleneck.conv2", bottom, bottom, 3, 1});
    for (int i = cfg.depth - 1; i >= 0; --i) {
        const int upper = (i + 1 < cfg.depth) ? feats[i + 1] : bottom;
        std::string u = "udec" + std::to_string(i);
        specs.push_back({Kind::upconv, u + ".up", upper, feats[i], 2, 1});
        specs.push_back({Kind::conv, u + ".conv1", 2 * feats[i], feats[i], 3, 1});
        specs.push_back({Kind::conv, u + ".conv2", feats[i], feats[i], 3, 1});
        std::string f = "fdec" + std::to_string(i);
        specs.push_back({Kind::upconv, f + ".up", upper, feats[i], 2, 1});
        specs.push_back({Kind::conv, f + ".conv", feats[i], feats[i], 3, 1});
    }
    for (int r = 0; r < 3; ++r)
        specs.push_back({Kind::conv, "head.dil" + std::to_string(r), 2 * cfg.base_features,
                         cfg.dilated_branch_features, 3, cfg.dilation_rates[r]});
    specs.push_back(
        {Kind::conv, "head.classifier", 3 * cfg.dilated_branch_features, cfg.num_classes, 1, 1});
    return specs;
}

} // namespace detail

/// Spatial dims after padding up to the next multiple of 2^depth.
inline std::pair<int, int> padded_dims(int depth, int height, int width) {
    const int m = 1 << depth;
    auto up = [m](int v) { return (v + m - 1) / m * m; };
    return {up(height), up(width)};
}

template <typename T>
struct Param {
    std::string name;
    std::vector<int> shape; // logical dims, serialization order equals storage order
    Tensor<T> value;
};

template <typename T>
class Model {
public:
    /// Glorot-uniform weights (fan-based bound), zero biases.
    static Model build(const NetworkConfig& cfg, Rng rng) {
        cfg.validate();
        Model m;
        m.cfg_ = cfg;
        m.specs_ = detail::layer_specs(cfg);
        for (const auto& s : m.specs_) {
            Param<T> w, b;
            double fan_in, fan_out;
            if (s.kind == detail::LayerSpec::Kind::conv) {
                const int k2 = s.kernel * s.kernel;
                w.value = Tensor<T>(1, s.out_ch, s.in_ch * k2);
                w.shape = {s.out_ch, s.in_ch, s.kernel, s.kernel};
                fan_in = static_cast<double>(s.in_ch) * k2;
                fan_out = static_cast<double>(s.out_ch) * k2;
            } else {
                w.value = Tensor<T>(1, 4, s.in_ch * s.out_ch);
                w.shape = {s.in_ch, s.out_ch, 2, 2};
                fan_in = s.in_ch;
                fan_out = s.out_ch;
            }
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            for (std::size_t i = 0; i < w.value.size(); ++i)
                w.value.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
            w.name = s.name + ".w";
            b.name = s.name + ".b";
            b.shape = {s.out_ch};
            b.value = Tensor<T>(1, 1, s.out_ch); // zero
            m.params_.push_back(std::move(w));
            m.params_.push_back(std::move(b));
        }
        return m;
    }

    const NetworkConfig& config() const { return cfg_; }
    std::vector<Param<T>>& params() { return params_; }
    const std::vector<Param<T>>& params() const { return params_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    struct Bindings {
        std::vector<int> param_nodes; // aligned with params()
        int prob;                     // softmax output node
    };

    /// Assemble the network onto `g` starting from `input_id` (C x H x W with
    /// C = config().in_channels, any H,W >= 16; reflect padding and cropping
    /// keep output dims equal to input dims). Returns per-parameter node ids
    /// so a trainer can read gradients after backward().
    Bindings run(Graph<T>& g, int input_id, bool training, Rng& dropout_rng,
                 BranchMode mode = BranchMode::both) const {
        const Tensor<T>& in = g.value(input_id);
        if (in.channels() != cfg_.in_channels)
            throw ShapeError("forward: expected " + std::to_string(cfg_.in_channels) +
                             " input channels, got " + std::to_string(in.channels()));
        if (in.height() < 4 || in.width() < 4)
            throw ShapeError("forward: input dims too small");

        Bindings bind;
        bind.param_nodes.reserve(params_.size());
        for (const auto& p : params_) bind.param_nodes.push_back(g.parameter(p.value));

        const auto [ph, pw] = padded_dims(cfg_.depth, in.height(), in.width());
        int x = g.reflect_pad(input_id, ph - in.height(), pw - in.width());

        // Layer cursor walks specs in the same order build() created them.
        std::size_t cursor = 0;
        auto conv = [&](int node, int dilation) {
            const int w_id = bind.param_nodes[2 * cursor];
            const int b_id = bind.param_nodes[2 * cursor + 1];
            const auto& s = specs_[cursor];
            ++cursor;
            return g.conv2d(node, w_id, b_id, s.kernel, dilation > 0 ? dilation : s.dilation);
        };
        auto upconv = [&](int node) {
            const int w_id = bind.param_nodes[2 * cursor];
            const int b_id = bind.param_nodes[2 * cursor + 1];
            const auto& s = specs_[cursor];
            ++cursor;
            return g.upconv2(node, w_id, b_id, s.out_ch);
        };

        std::vector<int> skips(cfg_.depth);
        for (int i = 0; i < cfg_.depth; ++i) {
            x = g.relu(conv(x, 0));
            x = g.relu(conv(x, 0));
            skips[i] = x;
            x = g.maxpool2(x);
        }
        x = g.relu(conv(x, 0));
        x = g.relu(conv(x, 0));

        int u = x, f = x;
        for (int i = cfg_.depth - 1; i >= 0; --i) {
            u = g.relu(upconv(u));
            u = g.concat(u, skips[i]);
            u = g.relu(conv(u, 0));
            u = g.relu(conv(u, 0));
            f = g.relu(upconv(f));
            f = g.add(f, skips[i]);
            f = g.relu(conv(f, 0));
        }
        if (mode == BranchMode::fcn_only) u = g.scale(u, T(0));
        if (mode == BranchMode::unet_only) f = g.scale(f, T(0));

        int h = g.concat(u, f);
        int d0 = g.relu(conv(h, 0));
        int d1 = g.relu(conv(h, 0));
        int d2 = g.relu(conv(h, 0));
        int merged = g.concat(g.concat(d0, d1), d2);
        merged = g.dropout(merged, cfg_.dropout_rate, dropout_rng, training);
        int logits = conv(merged, 0);
        logits = g.crop(logits, in.height(), in.width());
        bind.prob = g.softmax_channels(logits);
        return bind;
    }

    /// Inference-mode forward pass; output is H x W x num_classes
    /// probabilities at the input's spatial dims.
    Tensor<T> infer(const Tensor<T>& stack, BranchMode mode = BranchMode::both) const {
        Graph<T> g;
        Rng rng(0);
        const int in = g.input(stack);
        return g.value(run(g, in, /*training=*/false, rng, mode).prob);
    }

    /// Weight/bias tensors copied into another scalar type (used by the
    /// double-precision gradient checks).
    template <typename U>
    Model<U> cast() const {
        Model<U> out;
        out.cfg_ = cfg_;
        out.specs_ = specs_;
        for (const auto& p : params_) {
            Param<U> q;
            q.name = p.name;
            q.shape = p.shape;
            q.value = Tensor<U>(p.value.channels(), p.value.height(), p.value.width());
            for (std::size_t i = 0; i < p.value.size(); ++i)
                q.value.data()[i] = static_cast<U>(p.value.data()[i]);
            out.params_.push_back(std::move(q));
        }
        return out;
    }

private:
    template <typename U>
    friend class Model;

    NetworkConfig cfg_;
    std::vector<detail::LayerSpec> specs_;
    std::vector<Param<T>> params_;
};

using ModelF = Model<float>;

} // namespace lfseg
