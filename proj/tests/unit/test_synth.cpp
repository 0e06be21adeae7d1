#include <doctest.h>

#include "railseg/error.hpp"
#include "railseg/io.hpp"
#include "railseg/image_io.hpp"
#include "railseg/synth.hpp"

using namespace railseg;
using namespace railseg::synth;

namespace {

SynthSceneConfig fast_config() {
    SynthSceneConfig cfg;
    cfg.n_points = 4000;
    return cfg;
}

}  // namespace

TEST_CASE("a seed fully determines the scene") {
    const auto cfg = fast_config();
    const auto a = synth_scene(cfg);
    const auto b = synth_scene(cfg);
    CHECK(io::encode_cloud(a.distorted) == io::encode_cloud(b.distorted));
    CHECK(io::encode_cloud(a.undistorted) == io::encode_cloud(b.undistorted));
    CHECK(io::encode_labels(a.labels) == io::encode_labels(b.labels));
    CHECK(io::encode_pgm(a.image) == io::encode_pgm(b.image));
    CHECK(a.is_reflection == b.is_reflection);

    auto other = cfg;
    other.seed = 43;
    CHECK(io::encode_cloud(synth_scene(other).distorted) != io::encode_cloud(a.distorted));
}

TEST_CASE("zero speed leaves the recording undistorted") {
    auto cfg = fast_config();
    cfg.speed = 0.0;
    cfg.render_image = false;
    const auto s = synth_scene(cfg);
    CHECK(io::encode_cloud(s.distorted) == io::encode_cloud(s.undistorted));
}

TEST_CASE("scene contents follow the configuration") {
    const auto cfg = fast_config();
    const auto s = synth_scene(cfg);
    std::array<std::size_t, 9> counts{};
    std::size_t scene_points = 0, reflections = 0;
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
        const auto& p = s.undistorted.points[i];
        CHECK(p.t_rel >= 0.0);
        CHECK(p.t_rel < kScanPeriod);
        if (s.is_reflection[i]) {
            ++reflections;
            CHECK(s.labels.labels[i] == kUnlabeled);
            CHECK(p.position.norm() < 1.5);
            continue;
        }
        REQUIRE(s.labels.labels[i] >= 1);
        REQUIRE(s.labels.labels[i] <= 9);
        ++counts[s.labels.labels[i] - 1u];
        ++scene_points;
    }
    CHECK(static_cast<double>(reflections) / static_cast<double>(s.labels.size()) ==
          doctest::Approx(cfg.reflection_fraction).epsilon(0.01));
    for (std::size_t c = 0; c < 9; ++c) {
        const double share = static_cast<double>(counts[c]) / static_cast<double>(scene_points);
        CAPTURE(c);
        CAPTURE(share);
        CHECK(std::abs(share - kRailClassFrequencies[c]) <= 0.2 * kRailClassFrequencies[c]);
    }

    // Only the image-only classes and 3D classes appear in the rendering.
    std::array<bool, 256> seen{};
    for (auto px : s.image.pixels) seen[px] = true;
    CHECK(seen[id(RailClass::Sky)]);
    CHECK(seen[id(RailClass::RailTrack)]);
    for (int v = 12; v < 256; ++v) CHECK_FALSE(seen[v]);
    CHECK_FALSE(seen[0]);
}

TEST_CASE("timestamps increase along the sweep") {
    const auto s = synth_scene(fast_config());
    for (std::size_t i = 1; i < s.undistorted.size(); ++i) {
        CHECK(s.undistorted.points[i - 1].t_rel <= s.undistorted.points[i].t_rel);
    }
}

TEST_CASE("degenerate configurations are rejected") {
    auto cfg = fast_config();
    cfg.extent = 0.0;
    CHECK_THROWS_AS(synth_scene(cfg), ValidationError);
    cfg = fast_config();
    cfg.n_points = 0;
    CHECK_THROWS_AS(synth_scene(cfg), ValidationError);
    cfg = fast_config();
    cfg.densities.fill(0.0);
    CHECK_THROWS_AS(synth_scene(cfg), ValidationError);
    cfg = fast_config();
    cfg.speed = 70.0;
    CHECK_THROWS_AS(synth_scene(cfg), ValidationError);
    cfg = fast_config();
    cfg.reflection_fraction = 1.0;
    CHECK_THROWS_AS(synth_scene(cfg), ValidationError);
    cfg = fast_config();
    cfg.camera.fx = -1.0;
    CHECK_THROWS_AS(synth_scene(cfg), ValidationError);
}

TEST_CASE("the splitmix generator is reproducible") {
    Rng a(1), b(1);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    Rng c(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = c.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(c.below(5) < 5);
    }
}
