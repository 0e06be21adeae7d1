#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "railseg/class_set.hpp"
#include "railseg/point_cloud.hpp"

namespace railseg::metrics {

/// Rows are ground-truth classes, columns predictions, both indexed by the
/// 3D-class column of the ClassSet. Predictions of UNLABELED on a labelled
/// point land in a separate reject column: they are false negatives for the
/// ground-truth class and false positives for nobody. Ground-truth UNLABELED
/// points are never counted.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t n_classes = 9);

    std::size_t n_classes() const { return n_; }
    std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * (n_ + 1) + pred]; }
    std::uint64_t rejected(std::size_t gt) const { return counts_[gt * (n_ + 1) + n_]; }
    std::uint64_t total() const;

    std::uint64_t true_positives(std::size_t c) const { return at(c, c); }
    std::uint64_t false_positives(std::size_t c) const;
    std::uint64_t false_negatives(std::size_t c) const;
    std::uint64_t gt_count(std::size_t c) const;

    void add(std::size_t gt, std::optional<std::size_t> pred, std::uint64_t count = 1);
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t n_;
    std::vector<std::uint64_t> counts_;
};

/// Adds one scan's point pairs. Throws on length mismatch or unknown ids.
void accumulate(ConfusionMatrix& cm, std::span<const ClassId> predicted, std::span<const ClassId> ground_truth,
                const ClassSet& classes = ClassSet::rail_default());

/// TP / (TP + FP + FN); nullopt when the union is empty.
std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm);

/// Ground-truth point share of every class (zeros when nothing was counted).
std::vector<double> gt_frequencies(const ConfusionMatrix& cm);

/// Mean IoU over classes present in ground truth (frequency > 0). Absent
/// IoUs of present classes count as 0. Throws if no class is present.
double miou(std::span<const std::optional<double>> ious, std::span<const double> frequencies);

/// Frequency-weighted IoU: sum f_c IoU_c / sum f_c over present classes.
double fwiou(std::span<const std::optional<double>> ious, std::span<const double> frequencies);

/// Relative change in percent, (new - old) / old * 100.
double improvement(double old_score, double new_score);

struct ClassRow {
    std::string name;
    std::optional<double> iou;
    double gt_frequency = 0.0;
};

struct IoUReport {
    std::vector<ClassRow> classes;
    double miou = 0.0;
    double fwiou = 0.0;
    std::size_t scans_evaluated = 0;
};

IoUReport make_report(const ConfusionMatrix& cm, std::size_t scans_evaluated,
                      const ClassSet& classes = ClassSet::rail_default());

}  // namespace railseg::metrics
