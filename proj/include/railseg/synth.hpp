#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "railseg/label_transfer.hpp"
#include "railseg/point_cloud.hpp"

namespace railseg::synth {

/// Point share of each LiDAR class (ids 1..9 in order) in the test split of
/// the railway recording this tool was built for.
inline constexpr std::array<double, 9> kRailClassFrequencies{0.1044, 0.0128, 0.0955, 0.0771, 0.0604,
                                                             0.0048, 0.0058, 0.4073, 0.2318};

struct SynthSceneConfig {
    std::uint64_t seed = 42;
    double extent = 80.0;  // length of track modelled ahead of the sensor, metres
    std::array<double, 9> densities = kRailClassFrequencies;
    std::size_t n_points = 10'000;  // scene points, before reflections are added
    double speed = 27.78;           // m/s
    double sweep_time = kScanPeriod;
    double reflection_fraction = 2.0 / 3.0;  // share of reflections in the raw cloud
    double sensor_height = 2.0;              // above the terrain plane
    transfer::CameraCalibration camera = default_camera();
    bool render_image = true;

    static transfer::CameraCalibration default_camera();
};

void validate(const SynthSceneConfig& cfg);

struct SynthScene {
    PointCloud undistorted;  // sensor pose at scan start
    PointCloud distorted;    // what a moving sensor records; reflections are not shifted
    LabelArray labels;       // generator classes; reflections are UNLABELED
    std::vector<bool> is_reflection;
    transfer::LabelImage image;  // rendered through cfg.camera
    transfer::CameraCalibration calibration;
};

/// Fully determined by cfg (including the seed).
SynthScene synth_scene(const SynthSceneConfig& cfg);

/// First surface along a ray; `hit` is false when nothing lies within range.
struct RayHit {
    double distance = 0.0;
    ClassId cls = kUnlabeled;
    bool hit = false;
};

/// Analytic railway corridor shared by the LiDAR model and the camera renderer.
class Scene {
public:
    Scene(const SynthSceneConfig& cfg);
    RayHit cast(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double max_range) const;

private:
    struct Box {
        Eigen::Vector3d lo, hi;
        ClassId cls;
    };
    struct Cylinder {  // vertical
        double x, y, radius, z_lo, z_hi;
        ClassId cls;
    };
    struct Sphere {
        Eigen::Vector3d centre;
        double radius;
        ClassId cls;
    };
    double ground_z_;
    std::vector<Box> boxes_;
    std::vector<Cylinder> cylinders_;
    std::vector<Sphere> spheres_;
};

/// Small deterministic generator (splitmix64) so outputs do not depend on the
/// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next();
    double uniform();  // [0, 1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

private:
    std::uint64_t state_;
};

}  // namespace railseg::synth
