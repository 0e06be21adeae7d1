#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "railseg/class_set.hpp"
#include "railseg/point_cloud.hpp"

namespace railseg::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string pattern = (std::filesystem::temp_directory_path() / "railseg-test-XXXXXX").string();
        if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
        path_ = pattern;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

using Engine = std::mt19937_64;

inline double uniform(Engine& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline std::size_t below(Engine& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// Values exactly representable as float32 so file round-trips are lossless.
inline double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline PointCloud random_cloud(Engine& rng, std::size_t n, double extent = 50.0) {
    PointCloud cloud{"rand", 0.0, {}};
    cloud.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Point p;
        p.position = {f32(uniform(rng, -extent, extent)), f32(uniform(rng, -extent, extent)),
                      f32(uniform(rng, -5.0, 5.0))};
        p.intensity = f32(uniform(rng, 0.0, 1.0));
        p.t_rel = f32(uniform(rng, 0.0, 0.2499));
        cloud.points.push_back(p);
    }
    return cloud;
}

inline LabelArray random_labels(Engine& rng, std::size_t n, const ClassSet& classes = ClassSet::rail_default()) {
    LabelArray labels("rand", n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto pick = below(rng, classes.num_3d() + 1);
        labels.labels[i] = pick == classes.num_3d() ? kUnlabeled : classes.id_of_column(pick);
        labels.provenance[i] = below(rng, 2) ? Provenance::Corrected : Provenance::Auto;
    }
    return labels;
}

/// Random simplex row; `sharpness` > 1 concentrates mass on one class.
inline std::vector<double> random_simplex(Engine& rng, std::size_t k, double sharpness = 1.0) {
    std::vector<double> row(k);
    double total = 0.0;
    for (auto& v : row) total += (v = std::pow(uniform(rng, 0.0, 1.0), sharpness));
    for (auto& v : row) v /= total;
    return row;
}

inline PredictionMatrix random_predictions(Engine& rng, std::string id, std::size_t n, std::size_t k = 9,
                                           double sharpness = 1.0) {
    std::vector<float> values;
    values.reserve(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        for (double v : random_simplex(rng, k, sharpness)) values.push_back(static_cast<float>(v));
    }
    return PredictionMatrix(std::move(id), n, k, std::move(values));
}

}  // namespace railseg::testing
