// matching.hpp - bipartite matching between predicted query instances and
// ground-truth segments. Costs mirror the training loss terms so the
// assignment is consistent with what the losses optimize.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "avseg/instance.hpp"
#include "avseg/losses.hpp"

namespace avseg {

struct CostWeights {
    double classification = 1.0;
    double focal = 20.0;
    double dice = 1.0;
    double focal_gamma = 2.0;
    double focal_alpha = 0.25;
    double epsilon = 1e-6;

    static CostWeights from(const LossWeights& w) {
        CostWeights c;
        c.focal = w.lambda_focal;
        c.dice = w.lambda_dice;
        c.focal_gamma = w.focal_gamma;
        c.focal_alpha = w.focal_alpha;
        c.epsilon = w.epsilon;
        return c;
    }
};

namespace detail {

// Per-prediction values reused across every ground truth in a cost
// matrix: clamped probabilities, their logs and the mask sum. match()
// builds one per prediction instead of re-deriving them per pair.
struct MaskCostCache {
    std::vector<double> p;      // clamped pixel values
    std::vector<double> log_p;
    std::vector<double> log_q;  // log(1 - p)
    double sum_raw = 0.0;       // unclamped pixel sum, for the dice term
};

inline MaskCostCache build_cost_cache(const SoftMask& mask, double eps) {
    MaskCostCache c;
    const std::size_t n = mask.pixels.size();
    c.p.resize(n);
    c.log_p.resize(n);
    c.log_q.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = clamp_unit(mask.pixels[i], eps);
        c.p[i] = p;
        c.log_p[i] = std::log(p);
        c.log_q[i] = std::log(1.0 - p);
        c.sum_raw += mask.pixels[i];
    }
    return c;
}

// Mirrors the per-pixel expressions of focal_loss and dice_loss exactly,
// so a cost computed here is bit-identical to one recomposed from the
// public loss functions.
inline double cached_pair_cost(const MaskCostCache& cache, const SoftMask& mask,
                               const GroundTruthSegment& gt, const CostWeights& w) {
    require_same_shape(mask.shape, gt.mask.shape, "pair_cost");
    const double inv_n = 1.0 / static_cast<double>(mask.shape.pixel_count());
    double focal = 0.0;
    double inter = 0.0, sum_g = 0.0;
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
        const double p = cache.p[i];
        double term;
        if (gt.mask.pixels[i]) {
            term = -w.focal_alpha * pow_gamma(1.0 - p, w.focal_gamma) * cache.log_p[i];
        } else {
            term = -(1.0 - w.focal_alpha) * pow_gamma(p, w.focal_gamma) * cache.log_q[i];
        }
        focal += term * inv_n;
        inter += mask.pixels[i] * gt.mask.pixels[i];
        sum_g += gt.mask.pixels[i];
    }
    const double dice = 1.0 - (2.0 * inter + w.epsilon) / (cache.sum_raw + sum_g + w.epsilon);
    return w.focal * focal + w.dice * dice;
}

// Shortest augmenting path assignment (Kuhn-Munkres with potentials) on a
// rectangular rows x cols matrix, rows <= cols. Returns col index per row.
// Columns are scanned in ascending order and delta updates use strict
// comparisons, so ties resolve to the lowest column index.
inline std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    if (n == 0) return {};
    const int m = static_cast<int>(cost.front().size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j]) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

inline void require_pair_valid(const InstancePrediction& pred, const GroundTruthSegment& gt) {
    if (gt.category < 0 || gt.category >= pred.scores.category_count())
        throw ValidationError("pair_cost: gt category " + std::to_string(gt.category) +
                              " out of range for " + std::to_string(pred.scores.category_count()) +
                              " categories");
}

}  // namespace detail

/// Assignment cost for one (prediction, ground truth) pair:
/// -classification * p(c_gt) + focal * L_focal + dice * L_dice,
/// evaluated on the soft prediction mask against the binary gt mask.
inline double pair_cost(const InstancePrediction& pred, const GroundTruthSegment& gt,
                        const CostWeights& w) {
    detail::require_pair_valid(pred, gt);
    const detail::MaskCostCache cache = detail::build_cost_cache(pred.mask, w.epsilon);
    return -w.classification * pred.scores.probs[gt.category] +
           detail::cached_pair_cost(cache, pred.mask, gt, w);
}

/// Minimum-cost injective assignment of ground truths to predictions.
/// Requires at least as many predictions as ground truths. Deterministic:
/// among equal-cost alternatives the solver's ascending column scan picks
/// the lowest prediction index.
inline MatchingIndex match(const std::vector<InstancePrediction>& preds,
                           const std::vector<GroundTruthSegment>& gts, const CostWeights& w) {
    const int n_pred = static_cast<int>(preds.size());
    const int n_gt = static_cast<int>(gts.size());
    if (n_pred < n_gt)
        throw ValidationError("match: " + std::to_string(n_pred) + " predictions cannot cover " +
                              std::to_string(n_gt) + " ground truths");
    MatchingIndex out;
    if (n_gt == 0) {
        out.unmatched.resize(n_pred);
        for (int i = 0; i < n_pred; ++i) out.unmatched[i] = i;
        return out;
    }
    std::vector<detail::MaskCostCache> caches;
    caches.reserve(preds.size());
    for (const InstancePrediction& p : preds)
        caches.push_back(detail::build_cost_cache(p.mask, w.epsilon));
    std::vector<std::vector<double>> cost(n_gt, std::vector<double>(n_pred));
    for (int g = 0; g < n_gt; ++g) {
        for (int i = 0; i < n_pred; ++i) {
            detail::require_pair_valid(preds[i], gts[g]);
            cost[g][i] = -w.classification * preds[i].scores.probs[gts[g].category] +
                         detail::cached_pair_cost(caches[i], preds[i].mask, gts[g], w);
        }
    }
    const std::vector<int> gt_to_pred = detail::solve_assignment(cost);
    std::vector<char> taken(n_pred, 0);
    for (int g = 0; g < n_gt; ++g) {
        out.pairs.emplace_back(g, gt_to_pred[g]);
        taken[gt_to_pred[g]] = 1;
    }
    for (int i = 0; i < n_pred; ++i)
        if (!taken[i]) out.unmatched.push_back(i);
    return out;
}

/// Total cost of an index under the given weights, summed in ground-truth
/// order so repeated evaluations are bit-identical.
inline double total_cost(const MatchingIndex& idx, const std::vector<InstancePrediction>& preds,
                         const std::vector<GroundTruthSegment>& gts, const CostWeights& w) {
    double sum = 0.0;
    for (auto [g, i] : idx.pairs) sum += pair_cost(preds[i], gts[g], w);
    return sum;
}

}  // namespace avseg
