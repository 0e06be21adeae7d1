#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "railseg/class_set.hpp"

namespace railseg {

/// Length of one sweep at 4 Hz; every t_rel lies in [0, kScanPeriod).
inline constexpr double kScanPeriod = 0.25;

struct Point {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // sensor frame, +x forward, +z up
    double intensity = 0.0;                              // [0, 1]
    double t_rel = 0.0;                                  // seconds since scan start
};

struct PointCloud {
    std::string scan_id;
    double t_scan = 0.0;  // epoch seconds
    std::vector<Point> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

/// Throws ValidationError naming the first offending point index.
void validate(const PointCloud& cloud);

enum class Provenance : std::uint8_t { Auto = 0, Corrected = 1 };

struct LabelArray {
    std::string scan_id;
    std::vector<ClassId> labels;
    std::vector<Provenance> provenance;

    LabelArray() = default;
    LabelArray(std::string id, std::size_t n, ClassId fill = kUnlabeled,
               Provenance prov = Provenance::Auto)
        : scan_id(std::move(id)), labels(n, fill), provenance(n, prov) {}

    std::size_t size() const { return labels.size(); }
};

/// Checks equal column lengths and that every label is admissible.
void validate(const LabelArray& labels, const ClassSet& classes);

/// Misalignment between a per-point array and its cloud is always an error.
void require_aligned(const PointCloud& cloud, const LabelArray& labels);

/// Row-major n_points x n_classes softmax output.
class PredictionMatrix {
public:
    static constexpr double kRowSumTolerance = 1e-4;

    PredictionMatrix() = default;
    PredictionMatrix(std::string scan_id, std::size_t n_points, std::size_t n_classes,
                     std::vector<float> values);

    const std::string& scan_id() const { return scan_id_; }
    std::size_t n_points() const { return n_points_; }
    std::size_t n_classes() const { return n_classes_; }

    std::span<const float> row(std::size_t i) const {
        return {values_.data() + i * n_classes_, n_classes_};
    }
    const std::vector<float>& values() const { return values_; }

    /// Column index of the largest probability (first one on ties).
    std::size_t argmax(std::size_t i) const;

private:
    std::string scan_id_;
    std::size_t n_points_ = 0;
    std::size_t n_classes_ = 0;
    std::vector<float> values_;
};

/// Maps each row's argmax to its class id.
LabelArray predicted_labels(const PredictionMatrix& pred, const ClassSet& classes);

}  // namespace railseg
