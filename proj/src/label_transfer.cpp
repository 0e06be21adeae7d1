#include "railseg/label_transfer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <Eigen/LU>
#include <fmt/format.h>

#include "railseg/error.hpp"

namespace railseg::transfer {

void validate(const CameraCalibration& calib) {
    if (!(calib.fx > 0.0) || !(calib.fy > 0.0)) throw ValidationError("focal lengths must be positive");
    if (calib.width <= 0 || calib.height <= 0) throw ValidationError("image size must be positive");
    if (!(calib.cx >= 0.0 && calib.cx < calib.width && calib.cy >= 0.0 && calib.cy < calib.height)) {
        throw ValidationError(fmt::format("principal point ({}, {}) outside the image", calib.cx, calib.cy));
    }
    const Eigen::Matrix3d& r = calib.rotation;
    if (!r.allFinite() || !calib.translation.allFinite()) throw ValidationError("non-finite extrinsics");
    if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9 || std::abs(r.determinant() - 1.0) > 1e-9) {
        throw ValidationError("extrinsic rotation is not a proper orthonormal matrix");
    }
}

std::vector<Projection> project_points(const PointCloud& cloud, const CameraCalibration& calib) {
    validate(calib);
    std::vector<Projection> out(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Eigen::Vector3d cam = calib.rotation * cloud.points[i].position + calib.translation;
        if (!(cam.z() > kMinDepth)) continue;
        const double u = calib.fx * cam.x() / cam.z() + calib.cx;
        const double v = calib.fy * cam.y() / cam.z() + calib.cy;
        if (u >= 0.0 && u < calib.width && v >= 0.0 && v < calib.height) out[i] = {u, v, true};
    }
    return out;
}

LabelArray transfer_labels(const PointCloud& cloud, const LabelImage& image, const CameraCalibration& calib,
                           const ClassSet& classes, const ClassMap& class_map) {
    if (image.width != calib.width || image.height != calib.height) {
        throw ValidationError(fmt::format("label image is {}x{}, calibration expects {}x{}", image.width,
                                          image.height, calib.width, calib.height));
    }
    if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
        throw ValidationError("label image buffer does not match its dimensions");
    }
    std::array<bool, 256> seen{};
    for (auto px : image.pixels) seen[px] = true;
    for (int value = 0; value < 256; ++value) {
        if (seen[value] && !class_map.declares(static_cast<std::uint8_t>(value))) {
            throw ValidationError(fmt::format("label image contains undeclared class id {}", value));
        }
    }

    const auto proj = project_points(cloud, calib);
    LabelArray out(cloud.scan_id, cloud.size());
    for (std::size_t i = 0; i < proj.size(); ++i) {
        if (!proj[i].valid) continue;
        const auto px = image.at(nearest_pixel(proj[i].u, image.width), nearest_pixel(proj[i].v, image.height));
        const ClassId target = class_map.map(px);
        out.labels[i] = classes.is_3d(target) ? target : kUnlabeled;
    }
    return out;
}

LabelArray transfer_labels(const PointCloud& cloud, const LabelImage& image, const CameraCalibration& calib) {
    const auto& classes = ClassSet::rail_default();
    return transfer_labels(cloud, image, calib, classes, ClassMap::identity(classes));
}

std::vector<Correction> resolve_latest(const std::vector<Correction>& entries) {
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (entries[a].point_index != entries[b].point_index) return entries[a].point_index < entries[b].point_index;
        return entries[a].timestamp < entries[b].timestamp;
    });
    std::vector<Correction> out;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& e = entries[order[k]];
        const bool last_for_point = k + 1 == order.size() || entries[order[k + 1]].point_index != e.point_index;
        if (last_for_point) out.push_back(e);
    }
    return out;
}

void validate(const CorrectionSet& corrections, std::size_t n_points, const ClassSet& classes) {
    for (const auto& c : corrections.entries) {
        if (c.point_index >= n_points) {
            throw ValidationError(fmt::format("correction index {} out of range for {} points", c.point_index,
                                              n_points));
        }
        if (!classes.is_point_label(c.new_class)) {
            throw ValidationError(fmt::format("correction at {} uses class {} which is not a 3D class",
                                              c.point_index, c.new_class));
        }
        if (!std::isfinite(c.timestamp)) {
            throw ValidationError(fmt::format("correction at {} has a non-finite timestamp", c.point_index));
        }
    }
}

LabelArray apply_corrections(const LabelArray& labels, const CorrectionSet& corrections, const ClassSet& classes) {
    validate(corrections, labels.size(), classes);
    LabelArray out = labels;
    for (const auto& c : resolve_latest(corrections.entries)) {
        out.labels[c.point_index] = c.new_class;
        out.provenance[c.point_index] = Provenance::Corrected;
    }
    return out;
}

LabelStatus label_status(const LabelArray& labels) {
    LabelStatus s;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        (labels.provenance[i] == Provenance::Corrected ? s.corrected_count : s.auto_count) += 1;
        if (labels.labels[i] == kUnlabeled) ++s.unlabeled_count;
    }
    return s;
}

}  // namespace railseg::transfer
