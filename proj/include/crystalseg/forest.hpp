#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "crystalseg/core.hpp"
#include "crystalseg/util.hpp"

namespace crystalseg {

enum class ClassLabel : int {
    StackingFault = 0,
    NoStackingFault = 1,
    Misoriented = 2,
    Agglomeration = 3,
    NoParticle = 4,
};

inline constexpr int n_classes = 5;
inline constexpr int n_features = 5;

inline constexpr std::array<std::string_view, n_classes> class_names = {
    "StackingFault", "NoStackingFault", "Misoriented", "Agglomeration", "NoParticle"};

inline std::string_view class_name(ClassLabel label) {
    return class_names[static_cast<int>(label)];
}

inline ClassLabel class_from_name(std::string_view name) {
    for (int i = 0; i < n_classes; ++i)
        if (class_names[i] == name) return static_cast<ClassLabel>(i);
    throw data_error("unknown class name: " + std::string(name));
}

using ClassCounts = std::array<std::uint64_t, n_classes>;

/// Gini impurity 1 − Σ (nᵢ/N)².
inline double gini(const ClassCounts& counts) {
    const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    if (total == 0) throw std::invalid_argument("gini of empty counts");
    double sum_sq = 0.0;
    for (std::uint64_t c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

/// Either an internal split (feature, threshold, children) or a leaf holding
/// the training class counts. Nodes live in a per-tree arena, root at 0.
struct TreeNode {
    bool is_leaf = true;
    int feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    ClassCounts counts{};
    int predicted = 0;
};

struct Tree {
    std::vector<TreeNode> nodes;
};

struct TrainParams {
    int n_trees = 500;
    int max_features = 2;
    std::size_t min_leaf = 1;
};

struct ForestModel {
    TrainParams params;
    std::uint64_t seed = 0;
    int pad_to = 128;  // feature-extraction frame the model was trained with
    std::vector<Tree> trees;
    bool single_class = false;  // degenerate training data warning
};

namespace detail {

inline int majority(const ClassCounts& counts) {
    int best = 0;
    for (int i = 1; i < n_classes; ++i)
        if (counts[i] > counts[best]) best = i;  // ties keep the lowest code
    return best;
}

struct TreeBuilder {
    const std::vector<std::array<double, n_features>>& x;
    const std::vector<ClassLabel>& y;
    const TrainParams& params;
    SplitMix64 rng;
    Tree tree;

    ClassCounts tally(const std::vector<std::uint32_t>& idx) const {
        ClassCounts counts{};
        for (std::uint32_t i : idx) counts[static_cast<int>(y[i])] += 1;
        return counts;
    }

    std::int32_t make_leaf(const ClassCounts& counts) {
        TreeNode node;
        node.is_leaf = true;
        node.counts = counts;
        node.predicted = majority(counts);
        tree.nodes.push_back(node);
        return static_cast<std::int32_t>(tree.nodes.size() - 1);
    }

    // Candidate features are a without-replacement draw of max_features;
    // candidate thresholds are midpoints between consecutive distinct sorted
    // values. The scan runs in ascending (feature, threshold) order with a
    // strict improvement test, so equal-impurity ties resolve to the lower
    // feature index, then the lower threshold.
    std::int32_t build(std::vector<std::uint32_t>& idx) {
        const ClassCounts counts = tally(idx);
        const double node_gini = gini(counts);
        const std::size_t n = idx.size();
        if (node_gini == 0.0 || n < 2 * params.min_leaf) return make_leaf(counts);

        std::array<int, n_features> pool = {0, 1, 2, 3, 4};
        const int mf = std::clamp(params.max_features, 1, n_features);
        for (int j = 0; j < mf; ++j) {
            const int k = j + static_cast<int>(rng.bounded(n_features - j));
            std::swap(pool[j], pool[k]);
        }
        std::sort(pool.begin(), pool.begin() + mf);

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_impurity = node_gini;
        std::vector<std::uint32_t> order(idx);
        for (int fi = 0; fi < mf; ++fi) {
            const int f = pool[fi];
            std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
                return x[a][f] < x[b][f] || (x[a][f] == x[b][f] && a < b);
            });
            ClassCounts left{};
            std::uint64_t n_left = 0;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                left[static_cast<int>(y[order[i]])] += 1;
                n_left += 1;
                const double lo = x[order[i]][f];
                const double hi = x[order[i + 1]][f];
                if (lo == hi) continue;
                if (n_left < params.min_leaf || n - n_left < params.min_leaf) continue;
                ClassCounts right{};
                for (int k = 0; k < n_classes; ++k) right[k] = counts[k] - left[k];
                const double weighted =
                    (static_cast<double>(n_left) * gini(left) +
                     static_cast<double>(n - n_left) * gini(right)) /
                    static_cast<double>(n);
                if (weighted < best_impurity) {
                    best_impurity = weighted;
                    best_feature = f;
                    best_threshold = (lo + hi) / 2.0;
                }
            }
        }
        if (best_feature < 0) return make_leaf(counts);

        std::vector<std::uint32_t> idx_left, idx_right;
        for (std::uint32_t i : idx)
            (x[i][best_feature] <= best_threshold ? idx_left : idx_right).push_back(i);
        idx.clear();
        idx.shrink_to_fit();

        TreeNode node;
        node.is_leaf = false;
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.counts = counts;
        tree.nodes.push_back(node);
        const std::int32_t self = static_cast<std::int32_t>(tree.nodes.size() - 1);
        const std::int32_t l = build(idx_left);
        const std::int32_t r = build(idx_right);
        tree.nodes[self].left = l;
        tree.nodes[self].right = r;
        return self;
    }
};

inline Tree build_tree(const std::vector<std::array<double, n_features>>& x,
                       const std::vector<ClassLabel>& y, const TrainParams& params,
                       std::uint64_t tree_seed) {
    TreeBuilder builder{x, y, params, SplitMix64{tree_seed}, Tree{}};
    const std::size_t n = x.size();
    std::vector<std::uint32_t> bootstrap(n);
    for (std::size_t i = 0; i < n; ++i)
        bootstrap[i] = static_cast<std::uint32_t>(builder.rng.bounded(n));
    builder.build(bootstrap);
    return std::move(builder.tree);
}

} // namespace detail

/// Trains params.n_trees gini decision trees, each on a bootstrap resample.
/// Per-tree seeds are drawn serially from a master splitmix64 stream before
/// any tree is built, so training is bit-identical at any jobs count.
/// Single-class data produces a valid model of single-leaf trees, flagged via
/// single_class.
inline ForestModel train(const std::vector<std::array<double, n_features>>& x,
                         const std::vector<ClassLabel>& y, const TrainParams& params,
                         std::uint64_t seed, int jobs = 1) {
    if (x.size() != y.size()) throw std::invalid_argument("feature/label count mismatch");
    if (x.size() < 2) throw std::invalid_argument("need at least 2 samples");
    if (params.n_trees < 1) throw std::invalid_argument("n_trees must be >= 1");
    if (params.max_features < 1 || params.max_features > n_features)
        throw std::invalid_argument("max_features must be in 1..5");
    if (params.min_leaf < 1) throw std::invalid_argument("min_leaf must be >= 1");
    for (const auto& fv : x)
        for (double v : fv)
            if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");

    ForestModel model;
    model.params = params;
    model.seed = seed;
    model.single_class =
        std::all_of(y.begin(), y.end(), [&](ClassLabel l) { return l == y.front(); });

    SplitMix64 master{seed};
    std::vector<std::uint64_t> tree_seeds(params.n_trees);
    for (auto& s : tree_seeds) s = master.next();

    model.trees.resize(params.n_trees);
    parallel_for(static_cast<std::size_t>(params.n_trees), jobs, [&](std::size_t t) {
        model.trees[t] = detail::build_tree(x, y, params, tree_seeds[t]);
    });
    return model;
}

/// Routes the vector down one tree: feature ≤ threshold goes left.
inline int tree_predict(const Tree& tree, const std::array<double, n_features>& fv) {
    std::int32_t node = 0;
    while (!tree.nodes[node].is_leaf) {
        const TreeNode& nd = tree.nodes[node];
        node = fv[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    return tree.nodes[node].predicted;
}

struct Prediction {
    ClassLabel label = ClassLabel::StackingFault;
    ClassCounts votes{};
};

/// Majority vote over all trees; vote ties resolve to the lowest class code.
inline Prediction predict(const ForestModel& model, const std::array<double, n_features>& fv) {
    for (double v : fv)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");
    Prediction pred;
    for (const Tree& tree : model.trees) pred.votes[tree_predict(tree, fv)] += 1;
    pred.label = static_cast<ClassLabel>(detail::majority(pred.votes));
    return pred;
}

namespace detail {

inline nlohmann::json node_to_json(const Tree& tree, std::int32_t index) {
    const TreeNode& node = tree.nodes[index];
    nlohmann::json j;
    if (node.is_leaf) {
        j["leaf"] = node.counts;
    } else {
        j["f"] = node.feature;
        j["t"] = node.threshold;
        j["l"] = node_to_json(tree, node.left);
        j["r"] = node_to_json(tree, node.right);
    }
    return j;
}

inline std::int32_t node_from_json(const nlohmann::json& j, Tree& tree) {
    TreeNode node;
    if (j.contains("leaf")) {
        const auto counts = j["leaf"].get<std::vector<std::uint64_t>>();
        if (counts.size() != n_classes) throw data_error("leaf counts must have 5 entries");
        std::copy(counts.begin(), counts.end(), node.counts.begin());
        node.predicted = majority(node.counts);
    } else {
        if (!j.contains("f") || !j.contains("t") || !j.contains("l") || !j.contains("r"))
            throw data_error("malformed tree node");
        node.is_leaf = false;
        node.feature = j["f"].get<int>();
        node.threshold = j["t"].get<double>();
        if (node.feature < 0 || node.feature >= n_features)
            throw data_error("tree node feature index out of range");
    }
    tree.nodes.push_back(node);
    const std::int32_t self = static_cast<std::int32_t>(tree.nodes.size() - 1);
    if (!tree.nodes[self].is_leaf) {
        const std::int32_t l = node_from_json(j["l"], tree);
        const std::int32_t r = node_from_json(j["r"], tree);
        tree.nodes[self].left = l;
        tree.nodes[self].right = r;
    }
    return self;
}

} // namespace detail

inline constexpr int model_format_version = 1;

inline void save_model(const ForestModel& model, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = model_format_version;
    j["n_trees"] = model.params.n_trees;
    j["params"] = {{"max_features", model.params.max_features},
                   {"min_leaf", model.params.min_leaf},
                   {"seed", model.seed}};
    nlohmann::json names = nlohmann::json::array();
    for (auto name : class_names) names.push_back(std::string(name));
    j["classes"] = std::move(names);
    j["pad_to"] = model.pad_to;
    nlohmann::json trees = nlohmann::json::array();
    for (const Tree& t : model.trees) trees.push_back(detail::node_to_json(t, 0));
    j["trees"] = std::move(trees);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("unwritable path: " + path);
    out << j.dump() << "\n";
    if (!out) throw io_error("unwritable path: " + path);
}

inline ForestModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("missing file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception&) {
        throw data_error("truncated or malformed model file: " + path);
    }
    if (!j.contains("format_version") || !j["format_version"].is_number_integer())
        throw data_error("truncated or malformed model file: " + path);
    if (j["format_version"].get<int>() != model_format_version)
        throw data_error("model format version mismatch: " + path);
    if (!j.contains("classes")) throw data_error("model lacks class table: " + path);
    const auto classes = j["classes"].get<std::vector<std::string>>();
    if (classes.size() != n_classes) throw data_error("unknown class table: " + path);
    for (int i = 0; i < n_classes; ++i)
        if (classes[i] != class_names[i]) throw data_error("unknown class table: " + path);

    ForestModel model;
    try {
        model.params.n_trees = j.at("n_trees").get<int>();
        model.params.max_features = j.at("params").at("max_features").get<int>();
        model.params.min_leaf = j.at("params").at("min_leaf").get<std::size_t>();
        model.seed = j.at("params").at("seed").get<std::uint64_t>();
        model.pad_to = j.at("pad_to").get<int>();
        const auto& trees = j.at("trees");
        if (!trees.is_array() || static_cast<int>(trees.size()) != model.params.n_trees)
            throw data_error("tree count does not match n_trees: " + path);
        for (const auto& tj : trees) {
            Tree tree;
            detail::node_from_json(tj, tree);
            model.trees.push_back(std::move(tree));
        }
    } catch (const nlohmann::json::exception& e) {
        throw data_error("malformed model file " + path + ": " + e.what());
    }
    return model;
}

} // namespace crystalseg
