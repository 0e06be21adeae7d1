#include "railseg/metrics.hpp"

#include <numeric>

#include <fmt/format.h>

#include "railseg/error.hpp"

namespace railseg::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes) : n_(n_classes), counts_(n_classes * (n_classes + 1), 0) {}

std::uint64_t ConfusionMatrix::total() const {
    return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::false_positives(std::size_t c) const {
    std::uint64_t fp = 0;
    for (std::size_t r = 0; r < n_; ++r) {
        if (r != c) fp += at(r, c);
    }
    return fp;
}

std::uint64_t ConfusionMatrix::gt_count(std::size_t c) const {
    std::uint64_t n = 0;
    for (std::size_t p = 0; p <= n_; ++p) n += counts_[c * (n_ + 1) + p];
    return n;
}

std::uint64_t ConfusionMatrix::false_negatives(std::size_t c) const { return gt_count(c) - at(c, c); }

void ConfusionMatrix::add(std::size_t gt, std::optional<std::size_t> pred, std::uint64_t count) {
    if (gt >= n_ || (pred && *pred >= n_)) throw ValidationError("confusion matrix index out of range");
    counts_[gt * (n_ + 1) + pred.value_or(n_)] += count;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.n_ != n_) throw ValidationError("cannot merge confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
}

void accumulate(ConfusionMatrix& cm, std::span<const ClassId> predicted, std::span<const ClassId> ground_truth,
                const ClassSet& classes) {
    if (predicted.size() != ground_truth.size()) {
        throw ValidationError(fmt::format("{} predictions for {} ground-truth labels", predicted.size(),
                                          ground_truth.size()));
    }
    if (cm.n_classes() != classes.num_3d()) throw ValidationError("confusion matrix does not match the class set");
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (!classes.is_point_label(ground_truth[i]) || !classes.is_point_label(predicted[i])) {
            throw ValidationError(fmt::format("point {}: class id outside the 3D class set", i));
        }
        if (ground_truth[i] == kUnlabeled) continue;
        const auto gt = *classes.column_of(ground_truth[i]);
        cm.add(gt, predicted[i] == kUnlabeled ? std::nullopt : classes.column_of(predicted[i]));
    }
}

std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm) {
    std::vector<std::optional<double>> out(cm.n_classes());
    for (std::size_t c = 0; c < cm.n_classes(); ++c) {
        const auto tp = cm.true_positives(c);
        const auto uni = tp + cm.false_positives(c) + cm.false_negatives(c);
        if (uni > 0) out[c] = static_cast<double>(tp) / static_cast<double>(uni);
    }
    return out;
}

std::vector<double> gt_frequencies(const ConfusionMatrix& cm) {
    std::vector<double> out(cm.n_classes(), 0.0);
    const auto total = cm.total();
    if (total == 0) return out;
    for (std::size_t c = 0; c < cm.n_classes(); ++c) {
        out[c] = static_cast<double>(cm.gt_count(c)) / static_cast<double>(total);
    }
    return out;
}

namespace {

void check_lengths(std::span<const std::optional<double>> ious, std::span<const double> frequencies) {
    if (ious.size() != frequencies.size()) {
        throw ValidationError(fmt::format("{} IoU values for {} frequencies", ious.size(), frequencies.size()));
    }
}

}  // namespace

double miou(std::span<const std::optional<double>> ious, std::span<const double> frequencies) {
    check_lengths(ious, frequencies);
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < ious.size(); ++c) {
        if (!(frequencies[c] > 0.0)) continue;
        sum += ious[c].value_or(0.0);
        ++present;
    }
    if (present == 0) throw ValidationError("no class is present in the ground truth");
    return sum / static_cast<double>(present);
}

double fwiou(std::span<const std::optional<double>> ious, std::span<const double> frequencies) {
    check_lengths(ious, frequencies);
    double weighted = 0.0, weight = 0.0;
    for (std::size_t c = 0; c < ious.size(); ++c) {
        if (!(frequencies[c] > 0.0)) continue;
        weighted += frequencies[c] * ious[c].value_or(0.0);
        weight += frequencies[c];
    }
    return weight > 0.0 ? weighted / weight : 0.0;
}

double improvement(double old_score, double new_score) {
    if (!(old_score > 0.0)) throw ValidationError("baseline score must be positive");
    return (new_score - old_score) / old_score * 100.0;
}

IoUReport make_report(const ConfusionMatrix& cm, std::size_t scans_evaluated, const ClassSet& classes) {
    if (cm.n_classes() != classes.num_3d()) throw ValidationError("confusion matrix does not match the class set");
    const auto ious = iou_per_class(cm);
    const auto freq = gt_frequencies(cm);
    IoUReport report;
    report.scans_evaluated = scans_evaluated;
    for (std::size_t c = 0; c < cm.n_classes(); ++c) {
        report.classes.push_back({classes.name(classes.id_of_column(c)), ious[c], freq[c]});
    }
    report.miou = miou(ious, freq);
    report.fwiou = fwiou(ious, freq);
    return report;
}

}  // namespace railseg::metrics
