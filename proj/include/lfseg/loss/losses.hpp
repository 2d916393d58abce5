#pragma once
#include <cmath>
#include <span>
#include <vector>

#include "lfseg/core/error.hpp"
#include "lfseg/core/tensor.hpp"
#include "lfseg/data/types.hpp"

namespace lfseg {

/// Loss constants: total = lambda1 * Dice + lambda2 * logistic; omega1/omega2
/// weight boundary and retina pixels inside the logistic term.
struct LossConfig {
    double lambda1 = 0.5;
    double lambda2 = 1.0;
    double omega1 = 10.0;
    double omega2 = 5.0;
    double epsilon = 1e-6;

    void validate() const {
        if (lambda1 < 0 || lambda2 < 0 || omega1 < 0 || omega2 < 0 || epsilon < 0)
            throw ConfigError("loss config: all constants must be non-negative");
    }
};

/// Per-class weights countering pixel-count imbalance.
struct ClassWeights {
    std::vector<double> w;
    int num_classes() const { return static_cast<int>(w.size()); }
};

/// Per-pixel weights; values lie in {1, 1+omega2, 1+omega1, 1+omega1+omega2}.
using PixelWeightMap = Grid<float>;

// ---------------------------------------------------------------------------

/// Inverse-frequency class weights over a label collection:
/// w_l = N_total / (num_classes * max(N_l, 1)), clipped to [0.1, 10].
inline ClassWeights class_weights(std::span<const LabelMap> labels) {
    if (labels.empty()) throw ConfigError("class_weights: empty label collection");
    const int num_classes = labels.front().scheme->num_classes();
    std::vector<std::size_t> counts(num_classes, 0);
    std::size_t total = 0;
    for (const auto& map : labels) {
        if (map.scheme->num_classes() != num_classes)
            throw ConfigError("class_weights: mixed schemes in collection");
        for (std::size_t i = 0; i < map.labels.size(); ++i) ++counts[map.labels.data()[i]];
        total += map.labels.size();
    }
    ClassWeights cw;
    cw.w.resize(num_classes);
    for (int l = 0; l < num_classes; ++l) {
        double w = static_cast<double>(total) /
                   (num_classes * static_cast<double>(std::max<std::size_t>(counts[l], 1)));
        cw.w[l] = std::clamp(w, 0.1, 10.0);
    }
    return cw;
}

/// w(x) = 1 + omega1 * [x on a label boundary] + omega2 * [label(x) retinal].
/// A boundary pixel is one with any 4-neighbor holding a different label.
inline PixelWeightMap pixel_weight_map(const LabelMap& truth, const LossConfig& cfg = {}) {
    const int h = truth.height(), w = truth.width();
    PixelWeightMap out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::uint8_t id = truth.labels.at(y, x);
            bool boundary = (y > 0 && truth.labels.at(y - 1, x) != id) ||
                            (y + 1 < h && truth.labels.at(y + 1, x) != id) ||
                            (x > 0 && truth.labels.at(y, x - 1) != id) ||
                            (x + 1 < w && truth.labels.at(y, x + 1) != id);
            double v = 1.0;
            if (boundary) v += cfg.omega1;
            if (truth.scheme->is_retina(id)) v += cfg.omega2;
            out.at(y, x) = static_cast<float>(v);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Losses. `grad`, when non-null, receives dLoss/dprob added in place (callers
// zero it first); all accumulation runs in double regardless of T.
// ---------------------------------------------------------------------------

template <typename T>
T dice_loss(const Tensor<T>& prob, const LabelMap& truth, const ClassWeights& cw,
            double epsilon = 1e-6, Tensor<T>* grad = nullptr) {
    const int classes = prob.channels(), h = prob.height(), w = prob.width();
    if (truth.height() != h || truth.width() != w || cw.num_classes() != classes)
        throw ShapeError("dice_loss: prob/truth/weights shape mismatch");
    if (grad && !grad->same_shape(prob)) throw ShapeError("dice_loss: grad shape mismatch");

    const std::size_t plane = prob.plane_size();
    double overlap = 0.0, prob_sq = 0.0;
    for (int l = 0; l < classes; ++l) {
        const T* p = prob.plane(l);
        double sq = 0.0, ov = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            double v = static_cast<double>(p[i]);
            sq += v * v;
            if (truth.labels.data()[i] == l) ov += v;
        }
        prob_sq += sq;
        overlap += cw.w[l] * ov;
    }
    const double truth_sq = static_cast<double>(plane); // one-hot: sum of squares = pixel count
    const double denom = prob_sq + truth_sq + epsilon;
    const double loss = 1.0 - 2.0 * overlap / denom;

    if (grad) {
        const double inv_d = 1.0 / denom;
        const double n_over_d2 = overlap * inv_d * inv_d;
        for (int l = 0; l < classes; ++l) {
            const T* p = prob.plane(l);
            T* g = grad->plane(l);
            const double wl = cw.w[l];
            for (std::size_t i = 0; i < plane; ++i) {
                double dp = 4.0 * n_over_d2 * static_cast<double>(p[i]);
                if (truth.labels.data()[i] == l) dp -= 2.0 * wl * inv_d;
                g[i] += static_cast<T>(dp);
            }
        }
    }
    return static_cast<T>(loss);
}

template <typename T>
T logistic_loss(const Tensor<T>& prob, const LabelMap& truth, const PixelWeightMap& weights,
                double epsilon = 1e-6, Tensor<T>* grad = nullptr) {
    const int h = prob.height(), w = prob.width();
    if (truth.height() != h || truth.width() != w || weights.height() != h || weights.width() != w)
        throw ShapeError("logistic_loss: prob/truth/weights shape mismatch");
    if (grad && !grad->same_shape(prob)) throw ShapeError("logistic_loss: grad shape mismatch");

    const std::size_t plane = prob.plane_size();
    double weight_sum = 0.0, loss_sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) weight_sum += weights.data()[i];
    if (weight_sum <= 0.0) throw ConfigError("logistic_loss: total weight is zero");

    for (std::size_t i = 0; i < plane; ++i) {
        const T* p = prob.plane(truth.labels.data()[i]);
        loss_sum -= weights.data()[i] * std::log(static_cast<double>(p[i]) + epsilon);
    }
    const double loss = loss_sum / weight_sum;

    if (grad) {
        for (std::size_t i = 0; i < plane; ++i) {
            const int l = truth.labels.data()[i];
            const double p = static_cast<double>(prob.plane(l)[i]);
            grad->plane(l)[i] -= static_cast<T>(weights.data()[i] / ((p + epsilon) * weight_sum));
        }
    }
    return static_cast<T>(loss);
}

template <typename T>
T total_loss(const Tensor<T>& prob, const LabelMap& truth, const ClassWeights& cw,
             const PixelWeightMap& weights, const LossConfig& cfg = {}, Tensor<T>* grad = nullptr) {
    Tensor<T> dice_grad, log_grad;
    Tensor<T>* dg = nullptr;
    Tensor<T>* lg = nullptr;
    if (grad) {
        dice_grad = Tensor<T>::zeros_like(prob);
        log_grad = Tensor<T>::zeros_like(prob);
        dg = &dice_grad;
        lg = &log_grad;
    }
    const double dice = dice_loss(prob, truth, cw, cfg.epsilon, dg);
    const double logistic = logistic_loss(prob, truth, weights, cfg.epsilon, lg);
    if (grad) {
        auto gm = grad->mat();
        gm += static_cast<T>(cfg.lambda1) * dice_grad.mat() +
              static_cast<T>(cfg.lambda2) * log_grad.mat();
    }
    return static_cast<T>(cfg.lambda1 * dice + cfg.lambda2 * logistic);
}

} // namespace lfseg
