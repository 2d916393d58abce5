#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "lfseg/core/error.hpp"
#include "lfseg/core/rng.hpp"
#include "lfseg/core/tensor.hpp"
#include "lfseg/data/types.hpp"

namespace lfseg {

inline constexpr int kFluidClass = 7;
inline constexpr int kNumRfFeatures = 7;

/// 4-connected component of predicted fluid pixels with the descriptors the
/// false-positive filter classifies on.
struct FluidComponent {
    std::vector<std::pair<int, int>> pixels; // (y, x)
    std::array<double, kNumRfFeatures> features{};

    int area() const { return static_cast<int>(pixels.size()); }
};

inline std::vector<FluidComponent> find_fluid_components(const LabelMap& pred) {
    const int h = pred.height(), w = pred.width();
    Grid<std::uint8_t> seen(h, w, 0);
    std::vector<FluidComponent> components;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (pred.labels.at(y, x) != kFluidClass || seen.at(y, x)) continue;
            FluidComponent comp;
            stack.push_back({y, x});
            seen.at(y, x) = 1;
            while (!stack.empty()) {
                auto [cy, cx] = stack.back();
                stack.pop_back();
                comp.pixels.push_back({cy, cx});
                const int ny[4] = {cy - 1, cy + 1, cy, cy};
                const int nx[4] = {cx, cx, cx - 1, cx + 1};
                for (int k = 0; k < 4; ++k) {
                    if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
                    if (seen.at(ny[k], nx[k]) || pred.labels.at(ny[k], nx[k]) != kFluidClass) continue;
                    seen.at(ny[k], nx[k]) = 1;
                    stack.push_back({ny[k], nx[k]});
                }
            }
            components.push_back(std::move(comp));
        }
    }
    return components;
}

namespace detail {

/// Convex hull area over the pixel corner points (each pixel contributes its
/// four unit-square corners), so 1-px-wide components still have area.
inline double hull_area(const std::vector<std::pair<int, int>>& pixels) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(pixels.size() * 4);
    for (auto [y, x] : pixels)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
                pts.push_back({x - 0.5 + dx, y - 0.5 + dy});
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return 0.0;
    auto cross = [](const auto& o, const auto& a, const auto& b) {
        return (a.first - o.first) * (b.second - o.second) -
               (a.second - o.second) * (b.first - o.first);
    };
    std::vector<std::pair<double, double>> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    const std::size_t lower = k + 1;
    for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
        hull[k++] = *it;
    }
    hull.resize(k - 1);
    double area = 0.0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % hull.size()];
        area += a.first * b.second - b.first * a.second;
    }
    return std::abs(area) / 2.0;
}

} // namespace detail

/// Fill in the descriptor vector: area, intensity statistics over the center
/// B-scan, mean relative-distance value, bounding-box aspect ratio, solidity,
/// and the centroid's distance to the nearest predicted layer boundary.
inline void compute_component_features(FluidComponent& comp, const OctVolume& vol, int bscan,
                                       const TensorF& distmap, const LabelMap& pred) {
    const int h = pred.height(), w = pred.width();
    double sum_i = 0, sum_i2 = 0, sum_d = 0, sum_y = 0, sum_x = 0;
    int min_y = h, max_y = -1, min_x = w, max_x = -1;
    for (auto [y, x] : comp.pixels) {
        const double v = vol.at(bscan, y, x);
        sum_i += v;
        sum_i2 += v * v;
        sum_d += distmap.at(0, y, x);
        sum_y += y;
        sum_x += x;
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
    }
    const double n = comp.area();
    const double mean_i = sum_i / n;
    const double var_i = std::max(0.0, sum_i2 / n - mean_i * mean_i);
    const double bbox_h = max_y - min_y + 1, bbox_w = max_x - min_x + 1;
    const double hull = detail::hull_area(comp.pixels);

    // Nearest vertical label transition (between non-fluid classes) in the
    // centroid's column.
    const int cx = static_cast<int>(std::lround(sum_x / n));
    const double cy = sum_y / n;
    double boundary_dist = h;
    for (int y = 0; y + 1 < h; ++y) {
        const int a = pred.labels.at(y, cx), b = pred.labels.at(y + 1, cx);
        if (a != b && a != kFluidClass && b != kFluidClass)
            boundary_dist = std::min(boundary_dist, std::abs(y + 0.5 - cy));
    }

    comp.features = {n,
                     mean_i,
                     std::sqrt(var_i),
                     sum_d / n,
                     bbox_w / bbox_h,
                     hull > 0 ? std::min(1.0, n / hull) : 1.0,
                     boundary_dist};
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

struct RfConfig {
    int num_trees = 100;
    int max_depth = 0; // 0 = unlimited
    std::uint64_t seed = 7;
};

inline void to_json(nlohmann::json& j, const RfConfig& c) {
    j = {{"num_trees", c.num_trees}, {"max_depth", c.max_depth}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, RfConfig& c) {
    j.at("num_trees").get_to(c.num_trees);
    j.at("max_depth").get_to(c.max_depth);
    j.at("seed").get_to(c.seed);
}

/// Bootstrap-aggregated CART trees (gini impurity, sqrt(d) feature
/// subsampling per node). Small enough to serialize as JSON inside the model
/// bundle.
class RandomForest {
public:
    using Features = std::array<double, kNumRfFeatures>;

    void fit(const std::vector<Features>& x, const std::vector<int>& y, const RfConfig& cfg) {
        if (x.size() != y.size()) throw ShapeError("rf: feature/label count mismatch");
        trees_.clear();
        if (x.empty()) return;
        Rng rng(cfg.seed);
        const int n = static_cast<int>(x.size());
        for (int t = 0; t < cfg.num_trees; ++t) {
            Rng tree_rng = rng.fork(static_cast<std::uint64_t>(t));
            std::vector<int> sample(n);
            for (int i = 0; i < n; ++i) sample[i] = tree_rng.uniform_int(n);
            Tree tree;
            grow(tree, x, y, sample, tree_rng, cfg.max_depth, 0);
            trees_.push_back(std::move(tree));
        }
    }

    bool trained() const { return !trees_.empty(); }

    double predict_proba(const Features& f) const {
        if (trees_.empty()) return 1.0; // untrained filter keeps everything
        double acc = 0.0;
        for (const auto& tree : trees_) {
            int node = 0;
            while (tree.nodes[node].feature >= 0) {
                const auto& nd = tree.nodes[node];
                node = f[nd.feature] <= nd.threshold ? nd.left : nd.right;
            }
            acc += tree.nodes[node].prob_positive;
        }
        return acc / trees_.size();
    }

    bool predict(const Features& f) const { return predict_proba(f) >= 0.5; }

    nlohmann::json to_json() const {
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& tree : trees_) {
            nlohmann::json nodes = nlohmann::json::array();
            for (const auto& nd : tree.nodes)
                nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.prob_positive});
            trees.push_back(std::move(nodes));
        }
        return {{"num_features", kNumRfFeatures}, {"trees", trees}};
    }

    static RandomForest from_json(const nlohmann::json& j) {
        RandomForest rf;
        try {
            for (const auto& tj : j.at("trees")) {
                Tree tree;
                for (const auto& nj : tj) {
                    Node nd;
                    nd.feature = nj.at(0).get<int>();
                    nd.threshold = nj.at(1).get<double>();
                    nd.left = nj.at(2).get<int>();
                    nd.right = nj.at(3).get<int>();
                    nd.prob_positive = nj.at(4).get<double>();
                    tree.nodes.push_back(nd);
                }
                rf.trees_.push_back(std::move(tree));
            }
        } catch (const nlohmann::json::exception& e) {
            throw CorruptFile(std::string("rf: malformed forest JSON: ") + e.what());
        }
        return rf;
    }

private:
    struct Node {
        int feature = -1; // -1 marks a leaf
        double threshold = 0.0;
        int left = -1, right = -1;
        double prob_positive = 0.0;
    };
    struct Tree {
        std::vector<Node> nodes;
    };

    int grow(Tree& tree, const std::vector<Features>& x, const std::vector<int>& y,
             const std::vector<int>& idx, Rng& rng, int max_depth, int depth) {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        int positives = 0;
        for (int i : idx) positives += y[i];
        tree.nodes[id].prob_positive = static_cast<double>(positives) / idx.size();
        const bool pure = positives == 0 || positives == static_cast<int>(idx.size());
        if (pure || idx.size() < 2 || (max_depth > 0 && depth >= max_depth)) return id;

        // sqrt(d) random feature candidates, best gini split among them.
        constexpr int kCandidates = 3; // ceil(sqrt(7))
        int order[kNumRfFeatures];
        for (int i = 0; i < kNumRfFeatures; ++i) order[i] = i;
        for (int i = kNumRfFeatures - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_int(i + 1)]);

        double best_gini = 1e18, best_thr = 0;
        int best_feature = -1;
        std::vector<double> values;
        for (int c = 0; c < kCandidates; ++c) {
            const int f = order[c];
            values.clear();
            for (int i : idx) values.push_back(x[i][f]);
            std::sort(values.begin(), values.end());
            values.erase(std::unique(values.begin(), values.end()), values.end());
            for (std::size_t v = 0; v + 1 < values.size(); ++v) {
                const double thr = (values[v] + values[v + 1]) / 2.0;
                int nl = 0, pl = 0;
                for (int i : idx)
                    if (x[i][f] <= thr) {
                        ++nl;
                        pl += y[i];
                    }
                const int nr = static_cast<int>(idx.size()) - nl, pr = positives - pl;
                if (nl == 0 || nr == 0) continue;
                auto gini = [](int pos, int n) {
                    const double p = static_cast<double>(pos) / n;
                    return 2.0 * p * (1.0 - p) * n;
                };
                const double g = gini(pl, nl) + gini(pr, nr);
                if (g < best_gini) {
                    best_gini = g;
                    best_thr = thr;
                    best_feature = f;
                }
            }
        }
        if (best_feature < 0) return id;

        std::vector<int> left, right;
        for (int i : idx) (x[i][best_feature] <= best_thr ? left : right).push_back(i);
        tree.nodes[id].feature = best_feature;
        tree.nodes[id].threshold = best_thr;
        tree.nodes[id].left = grow(tree, x, y, left, rng, max_depth, depth + 1);
        tree.nodes[id].right = grow(tree, x, y, right, rng, max_depth, depth + 1);
        return id;
    }

    std::vector<Tree> trees_;
};

/// Remove components the forest classifies as false positives by relabeling
/// their pixels to the majority adjacent non-fluid class. Output fluid pixels
/// are always a subset of the input's (removal only).
inline LabelMap rf_filter(const LabelMap& pred, const std::vector<FluidComponent>& components,
                          const RandomForest& rf) {
    LabelMap out = pred;
    if (!rf.trained() || components.empty()) return out;
    const int h = pred.height(), w = pred.width();
    for (const auto& comp : components) {
        if (rf.predict(comp.features)) continue;
        std::array<int, 8> votes{};
        for (auto [y, x] : comp.pixels) {
            const int ny[4] = {y - 1, y + 1, y, y};
            const int nx[4] = {x, x, x - 1, x + 1};
            for (int k = 0; k < 4; ++k) {
                if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
                const int id = pred.labels.at(ny[k], nx[k]);
                if (id != kFluidClass) ++votes[id];
            }
        }
        int majority = 0;
        for (int id = 1; id < 8; ++id)
            if (votes[id] > votes[majority]) majority = id;
        for (auto [y, x] : comp.pixels) out.labels.at(y, x) = static_cast<std::uint8_t>(majority);
    }
    return out;
}

} // namespace lfseg
