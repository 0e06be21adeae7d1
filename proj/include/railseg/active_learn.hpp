#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "railseg/point_cloud.hpp"

namespace railseg::al {

/// Normalised Shannon entropy of a softmax row: -sum p log2 p / log2(N).
/// 0 log 0 is taken as 0; the result is clamped to [0, 1].
double point_entropy(std::span<const float> probs);
double point_entropy(std::span<const double> probs);

/// 1 - max_c p_c; 0 for a one-hot row, 1 - 1/N for a uniform one.
double point_uncertainty(std::span<const float> probs);
double point_uncertainty(std::span<const double> probs);

struct ScanScore {
    std::string scan_id;
    double mean_entropy = 0.0;
    double mean_uncertainty = 0.0;
    std::size_t n_points = 0;
};

/// Means of the per-point scores over every row. Throws on an empty matrix.
ScanScore score_scan(const PredictionMatrix& pred);

struct RankedScan {
    std::string scan_id;
    std::size_t rank_entropy = 0;      // 1 = highest mean entropy
    std::size_t rank_uncertainty = 0;  // 1 = highest mean uncertainty
    std::size_t rank_sum = 0;

    bool operator==(const RankedScan&) const = default;
};

struct SelectionResult {
    int iteration = 0;
    std::vector<RankedScan> ranked;  // ascending rank_sum
    std::vector<std::string> selected;

    bool operator==(const SelectionResult&) const = default;
};

inline constexpr std::size_t kDefaultBatchSize = 10;

/// Ranks both scores descending (ties by scan id) and orders by their sum;
/// equal sums are ordered by the entropy rank, then scan id.
std::vector<RankedScan> rank_scans(const std::vector<ScanScore>& scores);

/// The first n of an already ranked list (all of them when fewer than n).
SelectionResult select_top(std::vector<RankedScan> ranked, std::size_t n, int iteration);

/// Supplies the prediction for a candidate scan.
using PredictionSource = std::function<PredictionMatrix(const std::string& scan_id)>;

/// Scores every candidate, ranks them and keeps the first n.
SelectionResult select_scans(const std::vector<std::string>& candidates, const PredictionSource& predictions,
                             std::size_t n, int iteration);

}  // namespace railseg::al
