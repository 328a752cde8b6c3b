#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "crystalseg/core.hpp"
#include "crystalseg/forest.hpp"
#include "crystalseg/segment.hpp"

namespace crystalseg {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Pixelwise confusion counts with particle = positive.
inline ConfusionCounts mask_counts(const BinaryMask& pred, const BinaryMask& truth) {
    if (pred.width != truth.width || pred.height != truth.height)
        throw std::invalid_argument("mask dimensions differ");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.bits[i] != 0;
        const bool t = truth.bits[i] != 0;
        if (p && t)
            c.tp += 1;
        else if (p && !t)
            c.fp += 1;
        else if (!p && t)
            c.fn += 1;
        else
            c.tn += 1;
    }
    return c;
}

/// DICE = 2TP / (2TP + FP + FN). Two masks with no positives at all agree
/// vacuously: that case is defined as 1.0 and flagged through vacuous.
inline double dice(const ConfusionCounts& c, bool* vacuous = nullptr) {
    if (vacuous) *vacuous = false;
    const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) {
        if (vacuous) *vacuous = true;
        return 1.0;
    }
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

/// TP/(TP+FP); NaN when no positive predictions exist.
inline double precision(const ConfusionCounts& c) {
    if (c.tp + c.fp == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

/// TP/(TP+FN); NaN when the truth has no positives.
inline double recall(const ConfusionCounts& c) {
    if (c.tp + c.fn == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

/// Precision/recall at each threshold (thresholds must be sorted ascending).
inline std::vector<PrPoint> pr_curve(const ProbMap& prob, const BinaryMask& truth,
                                     const std::vector<double>& thresholds) {
    if (prob.width != truth.width || prob.height != truth.height)
        throw std::invalid_argument("probability map and truth dimensions differ");
    if (thresholds.empty()) throw std::invalid_argument("no thresholds given");
    for (std::size_t i = 1; i < thresholds.size(); ++i)
        if (thresholds[i] < thresholds[i - 1])
            throw std::invalid_argument("thresholds must be sorted ascending");
    std::vector<PrPoint> curve;
    curve.reserve(thresholds.size());
    for (double t : thresholds) {
        const ConfusionCounts c = mask_counts(threshold_probmap(prob, t), truth);
        curve.push_back({t, precision(c), recall(c)});
    }
    return curve;
}

/// 5×5 class confusion counts; rows = true class, columns = predicted.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, n_classes>, n_classes> cells{};

    std::uint64_t row_sum(int row) const {
        std::uint64_t s = 0;
        for (std::uint64_t v : cells[row]) s += v;
        return s;
    }

    /// Row-stochastic view; rows with no samples stay all zero.
    std::array<std::array<double, n_classes>, n_classes> row_normalized() const {
        std::array<std::array<double, n_classes>, n_classes> out{};
        for (int r = 0; r < n_classes; ++r) {
            const std::uint64_t s = row_sum(r);
            if (s == 0) continue;
            for (int c = 0; c < n_classes; ++c)
                out[r][c] = static_cast<double>(cells[r][c]) / static_cast<double>(s);
        }
        return out;
    }
};

inline ConfusionMatrix confusion_matrix(
    const std::vector<std::pair<ClassLabel, ClassLabel>>& true_pred_pairs) {
    if (true_pred_pairs.empty()) throw std::invalid_argument("no label pairs");
    ConfusionMatrix cm;
    for (const auto& [t, p] : true_pred_pairs)
        cm.cells[static_cast<int>(t)][static_cast<int>(p)] += 1;
    return cm;
}

/// Mean per-class recall over the classes that actually occur.
inline double balanced_accuracy(const ConfusionMatrix& cm) {
    double sum = 0.0;
    int present = 0;
    for (int r = 0; r < n_classes; ++r) {
        const std::uint64_t s = cm.row_sum(r);
        if (s == 0) continue;
        sum += static_cast<double>(cm.cells[r][r]) / static_cast<double>(s);
        present += 1;
    }
    if (present == 0) throw std::invalid_argument("confusion matrix has no samples");
    return sum / present;
}

/// Population summary over predicted labels:
///   fraction_oriented = (SF + NoSF) / (SF + NoSF + Misoriented)
///   fraction_faulted_of_oriented = SF / (SF + NoSF)
/// Agglomeration and NoParticle regions count toward neither. Zero
/// denominators give NaN ("undefined" in reports).
struct PopulationStats {
    double fraction_oriented = 0.0;
    double fraction_faulted_of_oriented = 0.0;
};

inline PopulationStats population_stats(const std::vector<ClassLabel>& labels) {
    if (labels.empty()) throw std::invalid_argument("no labels");
    std::uint64_t sf = 0, nosf = 0, mis = 0;
    for (ClassLabel l : labels) {
        if (l == ClassLabel::StackingFault) sf += 1;
        if (l == ClassLabel::NoStackingFault) nosf += 1;
        if (l == ClassLabel::Misoriented) mis += 1;
    }
    PopulationStats st;
    st.fraction_oriented = (sf + nosf + mis) > 0
                               ? static_cast<double>(sf + nosf) / static_cast<double>(sf + nosf + mis)
                               : std::numeric_limits<double>::quiet_NaN();
    st.fraction_faulted_of_oriented =
        (sf + nosf) > 0 ? static_cast<double>(sf) / static_cast<double>(sf + nosf)
                        : std::numeric_limits<double>::quiet_NaN();
    return st;
}

} // namespace crystalseg
