#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "railseg/point_cloud.hpp"

namespace railseg::preprocess {

/// One flag per input point; true = kept.
using KeepMask = std::vector<bool>;

struct FilterResult {
    PointCloud cloud;
    KeepMask kept;
};

inline constexpr double kDefaultMinRange = 1.5;
inline constexpr int kDefaultKnnK = 8;
inline constexpr double kDefaultKnnAlpha = 2.0;
inline constexpr double kDefaultMaxSyncDt = 0.010;
inline constexpr double kMaxSpeed = 60.0;
inline constexpr double kOutlierSlack = 1e-9;

/// Drops housing reflections: keeps points with Euclidean range >= min_range.
FilterResult filter_reflections(const PointCloud& cloud, double min_range = kDefaultMinRange);

/// Statistical outlier removal. Point i is dropped iff the mean distance to its
/// k nearest neighbours exceeds mean + alpha * stddev (population) of that
/// statistic over the whole cloud, up to a relative slack of kOutlierSlack.
/// Throws if the cloud has <= k points.
FilterResult remove_outliers(const PointCloud& cloud, int k = kDefaultKnnK, double alpha = kDefaultKnnAlpha);

/// Per-point mean distance to the k nearest other points (k-d tree backed).
std::vector<double> mean_knn_distances(const PointCloud& cloud, int k);

/// Indices (into the mask's domain) of kept entries.
std::vector<std::size_t> kept_indices(const KeepMask& mask);

/// Mask over the original cloud after applying `first`, then `second` on the survivors.
KeepMask compose(const KeepMask& first, const KeepMask& second);

/// Subsets a per-point label array with a mask built over the same points.
LabelArray apply_mask(const LabelArray& labels, const KeepMask& mask);

struct TimedId {
    std::string id;
    double t = 0.0;
};

struct SyncPair {
    std::string scan_id;
    std::string image_id;
    double dt = 0.0;  // t_image - t_scan
};

/// One-to-one camera/LiDAR pairing. Candidate edges with |dt| < max_dt are
/// accepted greedily by ascending |dt| (ties: scan id, then image id); the
/// result is ordered by scan time.
std::vector<SyncPair> sync_pairs(std::vector<TimedId> scans, std::vector<TimedId> images,
                                 double max_dt = kDefaultMaxSyncDt);

struct MotionParams {
    double speed = 0.0;  // m/s at scan start
    Eigen::Vector3d travel_dir = Eigen::Vector3d::UnitX();
};

void validate(const MotionParams& params);

/// Adds t_rel * signed_speed * travel_dir to every position.
PointCloud shift_along_travel(const PointCloud& cloud, double signed_speed, const Eigen::Vector3d& travel_dir);

/// Expresses every point in the sensor pose at scan start (shift forward by
/// the distance travelled since t_scan).
PointCloud motion_correct(const PointCloud& cloud, const MotionParams& params);

/// Inverse of motion_correct; simulates the skew of a moving sensor.
PointCloud apply_motion_distortion(const PointCloud& cloud, const MotionParams& params);

}  // namespace railseg::preprocess
