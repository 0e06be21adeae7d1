#include "railseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "railseg/error.hpp"
#include "railseg/preprocess.hpp"

namespace railseg::synth {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kEps = 1e-9;

// Scanner pattern: a forward-facing sector swept left to right.
constexpr int kChannels = 128;
constexpr double kElevationLo = -11.25 * kDeg;
constexpr double kElevationHi = 10.0 * kDeg;
constexpr int kAzimuthSteps = 2800;
constexpr double kAzimuthHalfWidth = 70.0 * kDeg;

constexpr double kImageMaxRange = 150.0;

double azimuth_of_step(int step) {
    return kAzimuthHalfWidth - 2.0 * kAzimuthHalfWidth * (step + 0.5) / kAzimuthSteps;
}

Eigen::Vector3d ray_direction(double azimuth, double elevation) {
    return {std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth), std::sin(elevation)};
}

double base_intensity(ClassId cls) {
    switch (static_cast<RailClass>(cls)) {
        case RailClass::RailTrack: return 0.7;
        case RailClass::Sign: return 0.9;
        case RailClass::OnTracks: return 0.5;
        case RailClass::Construction: return 0.45;
        case RailClass::Pole: return 0.55;
        case RailClass::Vegetation: return 0.2;
        case RailClass::Terrain: return 0.25;
        case RailClass::Trackbed: return 0.35;
        default: return 0.3;
    }
}

}  // namespace

std::uint64_t Rng::next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

transfer::CameraCalibration SynthSceneConfig::default_camera() {
    transfer::CameraCalibration calib;
    calib.fx = calib.fy = 1400.0;
    calib.cx = 1024.0;
    calib.cy = 768.0;
    // LiDAR (x fwd, y left, z up) -> camera (x right, y down, z fwd), pitched down 4 degrees.
    Eigen::Matrix3d axes;
    axes << 0, -1, 0, 0, 0, -1, 1, 0, 0;
    const double pitch = 4.0 * kDeg;
    Eigen::Matrix3d tilt;
    tilt << 1, 0, 0, 0, std::cos(pitch), -std::sin(pitch), 0, std::sin(pitch), std::cos(pitch);
    calib.rotation = tilt * axes;
    const Eigen::Vector3d centre(0.1, 0.0, 0.3);  // camera centre in the LiDAR frame
    calib.translation = -calib.rotation * centre;
    return calib;
}

void validate(const SynthSceneConfig& cfg) {
    if (!(cfg.extent > 0.0) || !std::isfinite(cfg.extent)) throw ValidationError("scene extent must be positive");
    if (cfg.n_points == 0) throw ValidationError("scene needs at least one point");
    double total = 0.0;
    for (double d : cfg.densities) {
        if (!(d >= 0.0)) throw ValidationError("class densities must be non-negative");
        total += d;
    }
    if (!(total > 0.0)) throw ValidationError("class densities sum to zero");
    if (!(cfg.speed >= 0.0 && cfg.speed <= preprocess::kMaxSpeed)) throw ValidationError("speed out of range");
    if (!(cfg.sweep_time > 0.0 && cfg.sweep_time <= kScanPeriod)) {
        throw ValidationError(fmt::format("sweep time must lie in (0, {}]", kScanPeriod));
    }
    if (!(cfg.reflection_fraction >= 0.0 && cfg.reflection_fraction < 1.0)) {
        throw ValidationError("reflection fraction must lie in [0, 1)");
    }
    if (!(cfg.sensor_height > 0.0)) throw ValidationError("sensor height must be positive");
    transfer::validate(cfg.camera);
}

Scene::Scene(const SynthSceneConfig& cfg) : ground_z_(-cfg.sensor_height) {
    const double zg = ground_z_;
    const double len = cfg.extent;
    const double s = len / 80.0;  // layout is authored for an 80 m corridor
    Rng rng(cfg.seed ^ 0x5ce4e5b9ULL);

    auto box = [&](double x0, double y0, double z0, double x1, double y1, double z1, RailClass c) {
        boxes_.push_back({{x0, y0, z0}, {x1, y1, z1}, id(c)});
    };
    box(-5, -1.7, zg, len, 1.7, zg + 0.35, RailClass::Trackbed);
    box(-5, -0.85, zg + 0.35, len, 0.85, zg + 0.45, RailClass::RailTrack);
    for (double y : {-0.7175, 0.7175}) box(-5, y - 0.035, zg + 0.45, len, y + 0.035, zg + 0.6, RailClass::RailTrack);

    const double train_x = 0.45 * len + rng.uniform(-2.0, 2.0) * s;
    box(train_x, -1.5, zg + 0.6, train_x + 20.0, 1.5, zg + 4.4, RailClass::OnTracks);

    const double person_x = 0.22 * len + rng.uniform(-1.0, 1.0) * s;
    const double person_y = 2.6 + rng.uniform(0.0, 0.8);
    box(person_x, person_y, zg, person_x + 0.5, person_y + 0.5, zg + 1.8, RailClass::Person);

    const double sign_x = 0.3 * len;
    box(sign_x, -3.3, zg + 2.6, sign_x + 0.06, -2.4, zg + 3.3, RailClass::Sign);
    box(0.7 * len, 2.4, zg + 3.0, 0.7 * len + 0.06, 3.3, zg + 3.7, RailClass::Sign);

    for (double x : {0.15 * len, 0.3 * len + 0.3, 0.55 * len, 0.7 * len + 0.3, 0.85 * len}) {
        const double y = (x > 0.6 * len && x < 0.75 * len) ? 3.5 : -3.5;
        cylinders_.push_back({x, y, 0.15, zg, zg + 7.0, id(RailClass::Pole)});
    }

    box(0.3 * len, 10.0, zg, 0.55 * len, 17.0, zg + 7.0, RailClass::Construction);
    box(0.6 * len, -8.0, zg, 0.8 * len, -6.0, zg + 1.2, RailClass::Construction);

    const int trees = 14;
    for (int i = 0; i < trees; ++i) {
        const double side = (i % 2 == 0) ? 1.0 : -1.0;
        const double x = rng.uniform(6.0, len);
        const double y = side * rng.uniform(5.0, 18.0);
        const double r = rng.uniform(1.5, 3.5);
        spheres_.push_back({{x, y, zg + 1.2 + r}, r, id(RailClass::Vegetation)});
    }
    for (int i = 0; i < 10; ++i) {
        const double side = (i % 2 == 0) ? 1.0 : -1.0;
        const double x = rng.uniform(4.0, len);
        const double y = side * rng.uniform(4.0, 9.0);
        const double r = rng.uniform(0.6, 1.2);
        spheres_.push_back({{x, y, zg + 0.3 * r}, r, id(RailClass::Vegetation)});
    }
}

RayHit Scene::cast(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double max_range) const {
    RayHit best;
    best.distance = max_range;
    auto consider = [&](double t, ClassId cls) {
        if (t > kEps && t < best.distance) best = {t, cls, true};
    };

    if (d.z() < 0.0) consider((ground_z_ - o.z()) / d.z(), id(RailClass::Terrain));

    for (const auto& b : boxes_) {
        double t0 = -std::numeric_limits<double>::infinity();
        double t1 = std::numeric_limits<double>::infinity();
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
            if (std::abs(d[a]) < 1e-12) {
                miss = o[a] < b.lo[a] || o[a] > b.hi[a];
                continue;
            }
            double ta = (b.lo[a] - o[a]) / d[a];
            double tb = (b.hi[a] - o[a]) / d[a];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
            miss = t0 > t1;
        }
        if (!miss) consider(t0 > kEps ? t0 : t1, b.cls);
    }

    for (const auto& c : cylinders_) {
        const double dx = o.x() - c.x, dy = o.y() - c.y;
        const double a = d.x() * d.x() + d.y() * d.y();
        if (a > 1e-12) {
            const double bq = dx * d.x() + dy * d.y();
            const double cq = dx * dx + dy * dy - c.radius * c.radius;
            const double disc = bq * bq - a * cq;
            if (disc >= 0.0) {
                const double t = (-bq - std::sqrt(disc)) / a;
                const double z = o.z() + t * d.z();
                if (z >= c.z_lo && z <= c.z_hi) consider(t, c.cls);
            }
        }
        if (std::abs(d.z()) > 1e-12) {
            const double t = (c.z_hi - o.z()) / d.z();
            const double px = o.x() + t * d.x() - c.x, py = o.y() + t * d.y() - c.y;
            if (px * px + py * py <= c.radius * c.radius) consider(t, c.cls);
        }
    }

    for (const auto& sp : spheres_) {
        const Eigen::Vector3d oc = o - sp.centre;
        const double bq = oc.dot(d);
        const double cq = oc.squaredNorm() - sp.radius * sp.radius;
        const double disc = bq * bq - cq;
        if (disc >= 0.0) consider(-bq - std::sqrt(disc), sp.cls);
    }
    return best;
}

SynthScene synth_scene(const SynthSceneConfig& cfg) {
    validate(cfg);
    const Scene scene(cfg);
    Rng rng(cfg.seed);
    const double max_range = 1.5 * cfg.extent;

    struct Hit {
        int step;
        Eigen::Vector3d position;
        ClassId cls;
    };
    std::array<std::vector<std::size_t>, 9> by_class;
    std::vector<Hit> hits;
    for (int step = 0; step < kAzimuthSteps; ++step) {
        const double az = azimuth_of_step(step);
        for (int ch = 0; ch < kChannels; ++ch) {
            const double el = kElevationLo + (kElevationHi - kElevationLo) * ch / (kChannels - 1);
            const auto dir = ray_direction(az, el);
            const auto hit = scene.cast(Eigen::Vector3d::Zero(), dir, max_range);
            if (!hit.hit) continue;
            by_class[hit.cls - 1].push_back(hits.size());
            hits.push_back({step, hit.distance * dir, hit.cls});
        }
    }

    // Subsample every class to its configured share of n_points.
    const double density_total = std::accumulate(cfg.densities.begin(), cfg.densities.end(), 0.0);
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& pool = by_class[c];
        const auto target = static_cast<std::size_t>(
            std::llround(cfg.densities[c] / density_total * static_cast<double>(cfg.n_points)));
        const std::size_t take = std::min(target, pool.size());
        for (std::size_t i = 0; i < take; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(chosen.begin(), chosen.end());

    struct Sample {
        int step;
        Point point;
        ClassId cls;
        bool reflection;
    };
    std::vector<Sample> samples;
    samples.reserve(chosen.size());
    for (auto idx : chosen) {
        const auto& h = hits[idx];
        const double intensity = std::clamp(base_intensity(h.cls) + rng.uniform(-0.1, 0.1), 0.0, 1.0);
        samples.push_back({h.step, {h.position, intensity, 0.0}, h.cls, false});
    }

    const auto n_reflections = static_cast<std::size_t>(std::llround(
        static_cast<double>(samples.size()) * cfg.reflection_fraction / (1.0 - cfg.reflection_fraction)));
    for (std::size_t i = 0; i < n_reflections; ++i) {
        const int step = static_cast<int>(rng.below(kAzimuthSteps));
        const double el = rng.uniform(kElevationLo, kElevationHi);
        const double range = rng.uniform(0.15, 1.2);
        samples.push_back({step, {range * ray_direction(azimuth_of_step(step), el), rng.uniform(0.6, 1.0), 0.0},
                           kUnlabeled, true});
    }
    std::stable_sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.step < b.step; });

    SynthScene out;
    const auto scan_id = fmt::format("synth_{}", cfg.seed);
    out.undistorted = {scan_id, 0.0, {}};
    out.labels = LabelArray(scan_id, samples.size());
    out.is_reflection.resize(samples.size());
    out.undistorted.points.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto p = samples[i].point;
        p.t_rel = cfg.sweep_time * samples[i].step / kAzimuthSteps;
        out.undistorted.points.push_back(p);
        out.labels.labels[i] = samples[i].cls;
        out.is_reflection[i] = samples[i].reflection;
    }
    out.distorted = preprocess::apply_motion_distortion(out.undistorted, {cfg.speed, Eigen::Vector3d::UnitX()});
    // Reflections come from the sensor housing and move with it.
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (out.is_reflection[i]) out.distorted.points[i] = out.undistorted.points[i];
    }
    out.calibration = cfg.camera;

    if (cfg.render_image) {
        const auto& cam = cfg.camera;
        out.image = transfer::LabelImage(cam.width, cam.height);
        const Eigen::Matrix3d cam_to_lidar = cam.rotation.transpose();
        const Eigen::Vector3d centre = -cam_to_lidar * cam.translation;
        for (int row = 0; row < cam.height; ++row) {
            for (int col = 0; col < cam.width; ++col) {
                const Eigen::Vector3d ray((col - cam.cx) / cam.fx, (row - cam.cy) / cam.fy, 1.0);
                const Eigen::Vector3d dir = (cam_to_lidar * ray).normalized();
                const auto hit = scene.cast(centre, dir, std::numeric_limits<double>::infinity());
                ClassId cls = id(RailClass::Sky);
                if (hit.hit) cls = hit.distance <= kImageMaxRange ? hit.cls : id(RailClass::Background);
                out.image.at(col, row) = static_cast<std::uint8_t>(cls);
            }
        }
    }
    return out;
}

}  // namespace railseg::synth
