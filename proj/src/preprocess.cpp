#include "railseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include <fmt/format.h>

#include "kdtree.hpp"
#include "railseg/error.hpp"

namespace railseg::preprocess {

namespace {

FilterResult select(const PointCloud& cloud, KeepMask kept) {
    FilterResult out{{cloud.scan_id, cloud.t_scan, {}}, std::move(kept)};
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (out.kept[i]) out.cloud.points.push_back(cloud.points[i]);
    }
    return out;
}

}  // namespace

FilterResult filter_reflections(const PointCloud& cloud, double min_range) {
    if (!(min_range > 0.0)) throw ValidationError("min_range must be positive");
    const double min_sq = min_range * min_range;
    KeepMask kept(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        kept[i] = cloud.points[i].position.squaredNorm() >= min_sq;
    }
    return select(cloud, std::move(kept));
}

std::vector<double> mean_knn_distances(const PointCloud& cloud, int k) {
    if (k < 1) throw ValidationError("k must be at least 1");
    if (cloud.size() <= static_cast<std::size_t>(k)) {
        throw ValidationError(fmt::format("outlier removal needs more than k={} points, cloud has {}", k,
                                          cloud.size()));
    }
    std::vector<Eigen::Vector3d> positions(cloud.size());
    std::transform(cloud.points.begin(), cloud.points.end(), positions.begin(),
                   [](const Point& p) { return p.position; });
    const detail::KdTree tree(positions);

    std::vector<double> stat(cloud.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        const auto sq = tree.nearest_sq(positions[i], static_cast<std::size_t>(k), i);
        double sum = 0.0;
        for (double d : sq) sum += std::sqrt(d);
        stat[i] = sum / k;
    }
    return stat;
}

FilterResult remove_outliers(const PointCloud& cloud, int k, double alpha) {
    if (!(alpha > 0.0)) throw ValidationError("alpha must be positive");
    const auto stat = mean_knn_distances(cloud, k);
    const double n = static_cast<double>(stat.size());
    const double mean = std::accumulate(stat.begin(), stat.end(), 0.0) / n;
    double var = 0.0;
    for (double s : stat) var += (s - mean) * (s - mean);
    // Relative slack so round-off cannot split points whose statistics are equal.
    const double threshold = (mean + alpha * std::sqrt(var / n)) * (1.0 + kOutlierSlack);

    KeepMask kept(cloud.size());
    for (std::size_t i = 0; i < stat.size(); ++i) kept[i] = !(stat[i] > threshold);
    return select(cloud, std::move(kept));
}

std::vector<std::size_t> kept_indices(const KeepMask& mask) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) out.push_back(i);
    }
    return out;
}

KeepMask compose(const KeepMask& first, const KeepMask& second) {
    const auto survivors = kept_indices(first);
    if (survivors.size() != second.size()) {
        throw ValidationError(fmt::format("second mask covers {} points, first mask kept {}", second.size(),
                                          survivors.size()));
    }
    KeepMask out(first.size(), false);
    for (std::size_t j = 0; j < survivors.size(); ++j) out[survivors[j]] = second[j];
    return out;
}

LabelArray apply_mask(const LabelArray& labels, const KeepMask& mask) {
    if (labels.size() != mask.size()) {
        throw ValidationError(fmt::format("mask covers {} points, label array has {}", mask.size(), labels.size()));
    }
    LabelArray out;
    out.scan_id = labels.scan_id;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        out.labels.push_back(labels.labels[i]);
        out.provenance.push_back(labels.provenance[i]);
    }
    return out;
}

std::vector<SyncPair> sync_pairs(std::vector<TimedId> scans, std::vector<TimedId> images, double max_dt) {
    for (const auto* list : {&scans, &images}) {
        for (const auto& e : *list) {
            if (!std::isfinite(e.t)) throw ValidationError(fmt::format("non-finite timestamp for '{}'", e.id));
        }
    }
    auto by_time = [](const TimedId& a, const TimedId& b) { return std::tie(a.t, a.id) < std::tie(b.t, b.id); };
    std::sort(scans.begin(), scans.end(), by_time);
    std::sort(images.begin(), images.end(), by_time);

    struct Edge {
        double abs_dt;
        std::size_t scan;
        std::size_t image;
    };
    std::vector<Edge> edges;
    for (std::size_t s = 0; s < scans.size(); ++s) {
        const double t = scans[s].t;
        auto it = std::lower_bound(images.begin(), images.end(), t - max_dt,
                                   [](const TimedId& img, double v) { return img.t < v; });
        for (; it != images.end() && it->t < t + max_dt; ++it) {
            const double abs_dt = std::abs(it->t - t);
            if (abs_dt < max_dt) edges.push_back({abs_dt, s, static_cast<std::size_t>(it - images.begin())});
        }
    }
    std::sort(edges.begin(), edges.end(), [&](const Edge& a, const Edge& b) {
        return std::tie(a.abs_dt, scans[a.scan].id, images[a.image].id) <
               std::tie(b.abs_dt, scans[b.scan].id, images[b.image].id);
    });

    std::vector<bool> scan_used(scans.size()), image_used(images.size());
    std::vector<std::size_t> match(scans.size(), images.size());
    for (const auto& e : edges) {
        if (scan_used[e.scan] || image_used[e.image]) continue;
        scan_used[e.scan] = image_used[e.image] = true;
        match[e.scan] = e.image;
    }

    std::vector<SyncPair> out;
    for (std::size_t s = 0; s < scans.size(); ++s) {
        if (match[s] == images.size()) continue;
        const auto& img = images[match[s]];
        out.push_back({scans[s].id, img.id, img.t - scans[s].t});
    }
    return out;
}

void validate(const MotionParams& params) {
    if (!std::isfinite(params.speed) || params.speed < 0.0 || params.speed > kMaxSpeed) {
        throw ValidationError(fmt::format("speed {} m/s outside [0, {}]", params.speed, kMaxSpeed));
    }
    if (!params.travel_dir.allFinite() || std::abs(params.travel_dir.norm() - 1.0) > 1e-9) {
        throw ValidationError("travel direction must be a unit vector");
    }
}

PointCloud shift_along_travel(const PointCloud& cloud, double signed_speed, const Eigen::Vector3d& travel_dir) {
    PointCloud out = cloud;
    if (signed_speed == 0.0) return out;
    for (auto& p : out.points) p.position += (p.t_rel * signed_speed) * travel_dir;
    return out;
}

PointCloud motion_correct(const PointCloud& cloud, const MotionParams& params) {
    validate(params);
    return shift_along_travel(cloud, params.speed, params.travel_dir);
}

PointCloud apply_motion_distortion(const PointCloud& cloud, const MotionParams& params) {
    validate(params);
    return shift_along_travel(cloud, -params.speed, params.travel_dir);
}

}  // namespace railseg::preprocess
