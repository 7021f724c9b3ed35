// instance.hpp - query predictions, ground-truth segments and the
// matching index shared by the matching and loss components.
#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "avseg/mask.hpp"

namespace avseg {

/// Classification confidence over K real categories plus the no-object
/// class at index K. Entries are probabilities summing to 1.
struct ClassScores {
    std::vector<double> probs;  // size K+1

    int category_count() const { return static_cast<int>(probs.size()) - 1; }

    int argmax() const {
        return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    }
};

inline void require_simplex(const ClassScores& s, const char* where, double tol = 1e-6) {
    if (s.probs.size() < 2)
        throw ValidationError(std::string(where) + ": class scores need at least 2 entries");
    double sum = 0.0;
    for (double p : s.probs) {
        if (!(p >= 0.0 && p <= 1.0) || !std::isfinite(p))
            throw ValidationError(std::string(where) + ": class score outside [0,1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > tol)
        throw ValidationError(std::string(where) + ": class scores sum to " + std::to_string(sum) +
                              ", violating the simplex constraint");
}

/// One query slot's output: a class distribution and a soft mask.
struct InstancePrediction {
    ClassScores scores;
    SoftMask mask;
};

/// One annotated sounding object: its category id in [0, K) and a
/// non-empty binary mask.
struct GroundTruthSegment {
    int category = 0;
    BinaryMask mask;
};

/// The assignment between ground-truth segments and predictions.
/// `pairs` holds (gt_index, prediction_index), injective in both
/// coordinates with one pair per ground truth; `unmatched` holds every
/// prediction index that received no ground truth.
struct MatchingIndex {
    std::vector<std::pair<int, int>> pairs;
    std::vector<int> unmatched;
};

/// Checks the structural invariants of a matching index against the
/// scene it was computed for.
inline void require_consistent(const MatchingIndex& idx, int prediction_count, int gt_count,
                               const char* where) {
    if (static_cast<int>(idx.pairs.size()) != gt_count)
        throw ValidationError(std::string(where) + ": matching covers " +
                              std::to_string(idx.pairs.size()) + " of " + std::to_string(gt_count) +
                              " ground truths");
    std::vector<char> seen(static_cast<std::size_t>(prediction_count), 0);
    std::vector<char> seen_gt(static_cast<std::size_t>(gt_count), 0);
    for (auto [g, p] : idx.pairs) {
        if (g < 0 || g >= gt_count || seen_gt[g])
            throw ValidationError(std::string(where) + ": bad or duplicate gt index in matching");
        if (p < 0 || p >= prediction_count || seen[p])
            throw ValidationError(std::string(where) + ": bad or duplicate prediction index in matching");
        seen_gt[g] = 1;
        seen[p] = 1;
    }
    for (int p : idx.unmatched) {
        if (p < 0 || p >= prediction_count || seen[p])
            throw ValidationError(std::string(where) + ": unmatched set overlaps matched predictions");
        seen[p] = 1;
    }
    for (char c : seen)
        if (!c) throw ValidationError(std::string(where) + ": matching does not cover every prediction");
}

}  // namespace avseg
