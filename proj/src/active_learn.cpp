#include "railseg/active_learn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "railseg/error.hpp"

namespace railseg::al {

namespace {

template <typename T>
void check_simplex(std::span<const T> probs) {
    if (probs.size() < 2) throw ValidationError("probability vector needs at least two classes");
    double sum = 0.0;
    for (T p : probs) {
        if (!std::isfinite(p) || p < 0 || p > 1) throw ValidationError(fmt::format("probability {} outside [0,1]", p));
        sum += p;
    }
    if (std::abs(sum - 1.0) > PredictionMatrix::kRowSumTolerance) {
        throw ValidationError(fmt::format("probabilities sum to {:.6f}", sum));
    }
}

template <typename T>
double entropy_of(std::span<const T> probs) {
    double h = 0.0;
    for (T p : probs) {
        if (p > 0) h -= static_cast<double>(p) * std::log2(static_cast<double>(p));
    }
    return std::clamp(h / std::log2(static_cast<double>(probs.size())), 0.0, 1.0);
}

template <typename T>
double uncertainty_of(std::span<const T> probs) {
    return std::clamp(1.0 - static_cast<double>(*std::max_element(probs.begin(), probs.end())), 0.0, 1.0);
}

}  // namespace

double point_entropy(std::span<const float> probs) {
    check_simplex(probs);
    return entropy_of(probs);
}

double point_entropy(std::span<const double> probs) {
    check_simplex(probs);
    return entropy_of(probs);
}

double point_uncertainty(std::span<const float> probs) {
    check_simplex(probs);
    return uncertainty_of(probs);
}

double point_uncertainty(std::span<const double> probs) {
    check_simplex(probs);
    return uncertainty_of(probs);
}

ScanScore score_scan(const PredictionMatrix& pred) {
    if (pred.n_points() == 0) throw ValidationError(fmt::format("scan '{}' has no predictions", pred.scan_id()));
    // Rows were validated when the matrix was built.
    double h = 0.0, u = 0.0;
    for (std::size_t i = 0; i < pred.n_points(); ++i) {
        h += entropy_of(pred.row(i));
        u += uncertainty_of(pred.row(i));
    }
    const auto n = static_cast<double>(pred.n_points());
    return {pred.scan_id(), h / n, u / n, pred.n_points()};
}

std::vector<RankedScan> rank_scans(const std::vector<ScanScore>& scores) {
    if (scores.empty()) throw ValidationError("nothing to rank");
    std::set<std::string> ids;
    for (const auto& s : scores) {
        if (!ids.insert(s.scan_id).second) throw ValidationError(fmt::format("duplicate scan id '{}'", s.scan_id));
    }

    std::vector<RankedScan> ranked(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) ranked[i].scan_id = scores[i].scan_id;

    auto assign = [&](auto score_of, std::size_t RankedScan::*rank) {
        std::vector<std::size_t> order(scores.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double sa = score_of(scores[a]), sb = score_of(scores[b]);
            if (sa != sb) return sa > sb;
            return scores[a].scan_id < scores[b].scan_id;
        });
        for (std::size_t r = 0; r < order.size(); ++r) ranked[order[r]].*rank = r + 1;
    };
    assign([](const ScanScore& s) { return s.mean_entropy; }, &RankedScan::rank_entropy);
    assign([](const ScanScore& s) { return s.mean_uncertainty; }, &RankedScan::rank_uncertainty);

    for (auto& r : ranked) r.rank_sum = r.rank_entropy + r.rank_uncertainty;
    std::sort(ranked.begin(), ranked.end(), [](const RankedScan& a, const RankedScan& b) {
        return std::tie(a.rank_sum, a.rank_entropy, a.scan_id) < std::tie(b.rank_sum, b.rank_entropy, b.scan_id);
    });
    return ranked;
}

SelectionResult select_top(std::vector<RankedScan> ranked, std::size_t n, int iteration) {
    if (n < 1) throw ValidationError("selection size must be at least 1");
    SelectionResult result{iteration, std::move(ranked), {}};
    const std::size_t take = std::min(n, result.ranked.size());
    for (std::size_t i = 0; i < take; ++i) result.selected.push_back(result.ranked[i].scan_id);
    return result;
}

SelectionResult select_scans(const std::vector<std::string>& candidates, const PredictionSource& predictions,
                             std::size_t n, int iteration) {
    std::vector<ScanScore> scores;
    scores.reserve(candidates.size());
    for (const auto& id : candidates) {
        auto score = score_scan(predictions(id));
        score.scan_id = id;
        scores.push_back(std::move(score));
    }
    return select_top(rank_scans(scores), n, iteration);
}

}  // namespace railseg::al
