#include "railseg/point_cloud.hpp"

#include <cmath>

#include <fmt/format.h>

#include "railseg/error.hpp"

namespace railseg {

void validate(const PointCloud& cloud) {
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const auto& p = cloud.points[i];
        if (!p.position.allFinite() || !std::isfinite(p.intensity) || !std::isfinite(p.t_rel)) {
            throw ValidationError(fmt::format("point {}: non-finite value", i));
        }
        if (p.intensity < 0.0 || p.intensity > 1.0) {
            throw ValidationError(fmt::format("point {}: intensity {} outside [0,1]", i, p.intensity));
        }
        if (p.t_rel < 0.0 || p.t_rel >= kScanPeriod) {
            throw ValidationError(fmt::format("point {}: t_rel {} outside [0,{})", i, p.t_rel, kScanPeriod));
        }
    }
}

void validate(const LabelArray& labels, const ClassSet& classes) {
    if (labels.labels.size() != labels.provenance.size()) {
        throw ValidationError("label and provenance columns differ in length");
    }
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        if (!classes.is_point_label(labels.labels[i])) {
            throw ValidationError(fmt::format("point {}: class id {} is not a 3D class", i, labels.labels[i]));
        }
    }
}

void require_aligned(const PointCloud& cloud, const LabelArray& labels) {
    if (cloud.size() != labels.size()) {
        throw ValidationError(fmt::format("scan '{}': {} labels for {} points", cloud.scan_id,
                                          labels.size(), cloud.size()));
    }
}

PredictionMatrix::PredictionMatrix(std::string scan_id, std::size_t n_points, std::size_t n_classes,
                                   std::vector<float> values)
    : scan_id_(std::move(scan_id)), n_points_(n_points), n_classes_(n_classes), values_(std::move(values)) {
    if (n_classes_ == 0) throw ValidationError("prediction matrix needs at least one class");
    if (values_.size() != n_points_ * n_classes_) {
        throw ValidationError(fmt::format("prediction payload has {} values, expected {}x{}", values_.size(),
                                          n_points_, n_classes_));
    }
    for (std::size_t i = 0; i < n_points_; ++i) {
        double sum = 0.0;
        for (float v : row(i)) {
            if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
                throw ValidationError(fmt::format("prediction row {}: entry {} outside [0,1]", i, v));
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
            throw ValidationError(fmt::format("prediction row {}: sums to {:.6f}", i, sum));
        }
    }
}

std::size_t PredictionMatrix::argmax(std::size_t i) const {
    auto r = row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < r.size(); ++c) {
        if (r[c] > r[best]) best = c;
    }
    return best;
}

LabelArray predicted_labels(const PredictionMatrix& pred, const ClassSet& classes) {
    if (pred.n_classes() != classes.num_3d()) {
        throw ValidationError(fmt::format("prediction has {} classes, class set has {}", pred.n_classes(),
                                          classes.num_3d()));
    }
    LabelArray out(pred.scan_id(), pred.n_points());
    for (std::size_t i = 0; i < pred.n_points(); ++i) {
        out.labels[i] = classes.id_of_column(pred.argmax(i));
    }
    return out;
}

}  // namespace railseg
