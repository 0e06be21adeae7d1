#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "railseg/class_set.hpp"
#include "railseg/point_cloud.hpp"

namespace railseg::transfer {

inline constexpr int kImageWidth = 2048;
inline constexpr int kImageHeight = 1536;
/// Points closer than this in front of the camera are not projected.
inline constexpr double kMinDepth = 0.1;

/// Pinhole camera plus rigid LiDAR -> camera transform (p_cam = R p + t).
struct CameraCalibration {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    int width = kImageWidth;
    int height = kImageHeight;
};

void validate(const CameraCalibration& calib);

/// Grid of class ids, row-major, origin top-left.
struct LabelImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    LabelImage() = default;
    LabelImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t at(int col, int row) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
    std::uint8_t& at(int col, int row) { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

struct Projection {
    double u = 0.0;
    double v = 0.0;
    bool valid = false;
};

std::vector<Projection> project_points(const PointCloud& cloud, const CameraCalibration& calib);

/// Pixel nearest to (u, v): pixel centres sit on integer coordinates and
/// halves round down.
inline int nearest_pixel(double coord, int extent) {
    const int i = static_cast<int>(std::ceil(coord - 0.5));
    return i < 0 ? 0 : (i >= extent ? extent - 1 : i);
}

/// Samples the label image at every valid projection. Pixel values go through
/// `class_map`; anything that does not land on a 3D class becomes UNLABELED.
/// Every output point has provenance AUTO.
LabelArray transfer_labels(const PointCloud& cloud, const LabelImage& image, const CameraCalibration& calib,
                           const ClassSet& classes, const ClassMap& class_map);

LabelArray transfer_labels(const PointCloud& cloud, const LabelImage& image, const CameraCalibration& calib);

struct Correction {
    std::size_t point_index = 0;
    ClassId new_class = kUnlabeled;
    std::string author;
    double timestamp = 0.0;  // epoch seconds
};

struct CorrectionSet {
    std::string scan_id;
    std::vector<Correction> entries;
};

/// Collapses to one entry per point: the latest timestamp wins, and on equal
/// timestamps the later entry in the list wins. Output is sorted by index.
std::vector<Correction> resolve_latest(const std::vector<Correction>& entries);

/// Throws on out-of-range indices or classes that are neither 3D nor UNLABELED.
void validate(const CorrectionSet& corrections, std::size_t n_points, const ClassSet& classes);

LabelArray apply_corrections(const LabelArray& labels, const CorrectionSet& corrections,
                             const ClassSet& classes = ClassSet::rail_default());

struct LabelStatus {
    std::size_t auto_count = 0;
    std::size_t corrected_count = 0;
    std::size_t unlabeled_count = 0;  // label 0, regardless of provenance

    bool operator==(const LabelStatus&) const = default;
};

LabelStatus label_status(const LabelArray& labels);

}  // namespace railseg::transfer
