#ifndef FAIRX_FAIRNESS_HPP
#define FAIRX_FAIRNESS_HPP

#include <array>
#include <cmath>
#include <iostream>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fairx/autodiff.hpp"

namespace fairx::fairness {

using autodiff::NodeId;
using autodiff::Tape;

/// Group-conditional confusion counts and rates.  A rate is absent when its
/// denominator cell is empty; callers must treat that as an error, not zero.
struct GroupRates {
    std::array<long, 2> tp{0, 0}, fp{0, 0}, tn{0, 0}, fn{0, 0};
    std::array<std::optional<double>, 2> tpr;
    std::array<std::optional<double>, 2> fpr;
};

inline GroupRates group_rates(std::span<const int> predictions, std::span<const int> y,
                              std::span<const int> a) {
    if (predictions.size() != y.size() || y.size() != a.size())
        throw std::invalid_argument("group_rates: length mismatch");
    GroupRates r;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if ((predictions[i] & ~1) || (y[i] & ~1) || (a[i] & ~1))
            throw std::invalid_argument("group_rates: entries must be binary");
        auto g = static_cast<std::size_t>(a[i]);
        if (y[i] == 1)
            (predictions[i] == 1 ? r.tp[g] : r.fn[g])++;
        else
            (predictions[i] == 1 ? r.fp[g] : r.tn[g])++;
    }
    for (std::size_t g = 0; g < 2; ++g) {
        if (r.tp[g] + r.fn[g] > 0)
            r.tpr[g] = static_cast<double>(r.tp[g]) / static_cast<double>(r.tp[g] + r.fn[g]);
        if (r.fp[g] + r.tn[g] > 0)
            r.fpr[g] = static_cast<double>(r.fp[g]) / static_cast<double>(r.fp[g] + r.tn[g]);
    }
    return r;
}

/// Delta_EO = |TPR_0 - TPR_1| + |FPR_0 - FPR_1|, in [0,2].
inline double eo_gap(std::span<const int> predictions, std::span<const int> y,
                     std::span<const int> a) {
    GroupRates r = group_rates(predictions, y, a);
    for (std::size_t g = 0; g < 2; ++g)
        if (!r.tpr[g] || !r.fpr[g])
            throw std::runtime_error("eo_gap: group " + std::to_string(g) +
                                     " lacks positive or negative instances");
    return std::abs(*r.tpr[0] - *r.tpr[1]) + std::abs(*r.fpr[0] - *r.fpr[1]);
}

/// Differentiable EO surrogate: per (label, group) cell, the soft rate is the
/// mean of sigma(logit); the loss is smooth-abs of the two rate gaps.  Cells
/// absent from the batch contribute 0.  Returns a node on `tape` whose value
/// lies in [0,2] and is differentiable wrt the model parameters feeding the
/// logit nodes.
inline NodeId soft_eo_loss(Tape& tape, std::span<const NodeId> logit_nodes,
                           std::span<const int> y, std::span<const int> a,
                           bool log_missing_cells = false) {
    if (logit_nodes.size() != y.size() || y.size() != a.size())
        throw std::invalid_argument("soft_eo_loss: length mismatch");

    std::array<std::array<std::vector<NodeId>, 2>, 2> cells;  // [y][g] sigmoid nodes
    for (std::size_t i = 0; i < y.size(); ++i)
        cells[static_cast<std::size_t>(y[i])][static_cast<std::size_t>(a[i])].push_back(
            tape.sigmoid(logit_nodes[i]));

    std::vector<NodeId> gap_terms;
    for (std::size_t label = 0; label < 2; ++label) {
        auto& c0 = cells[label][0];
        auto& c1 = cells[label][1];
        if (c0.empty() || c1.empty()) {
            if (log_missing_cells)
                std::cerr << "soft_eo_loss: label " << label
                          << " missing one group in batch, term contributes 0\n";
            continue;
        }
        NodeId r0 = tape.div(tape.sum(c0), tape.constant(static_cast<double>(c0.size())));
        NodeId r1 = tape.div(tape.sum(c1), tape.constant(static_cast<double>(c1.size())));
        gap_terms.push_back(tape.abs_smooth(tape.sub(r0, r1)));
    }
    if (gap_terms.empty()) return tape.constant(0.0);
    if (gap_terms.size() == 1) return gap_terms[0];
    return tape.add(gap_terms[0], gap_terms[1]);
}

}  // namespace fairx::fairness

#endif  // FAIRX_FAIRNESS_HPP
