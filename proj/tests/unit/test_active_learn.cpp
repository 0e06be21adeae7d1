#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "railseg/active_learn.hpp"
#include "railseg/error.hpp"

using namespace railseg;
using namespace railseg::al;

namespace {

std::vector<double> one_hot(std::size_t k, std::size_t hot) {
    std::vector<double> p(k, 0.0);
    p[hot] = 1.0;
    return p;
}

PredictionMatrix constant_rows(std::string id, std::size_t n, const std::vector<double>& row) {
    std::vector<float> values;
    for (std::size_t i = 0; i < n; ++i) {
        for (double v : row) values.push_back(static_cast<float>(v));
    }
    return PredictionMatrix(std::move(id), n, row.size(), std::move(values));
}

std::vector<double> to_double(std::span<const float> row) { return {row.begin(), row.end()}; }

}  // namespace

TEST_CASE("point scores on the reference vectors") {
    const std::vector<double> uniform(9, 1.0 / 9.0);
    CHECK(std::abs(point_entropy(uniform) - 1.0) < 1e-9);
    CHECK(std::abs(point_uncertainty(uniform) - 8.0 / 9.0) < 1e-9);
    for (std::size_t c = 0; c < 9; ++c) {
        CHECK(point_entropy(one_hot(9, c)) == 0.0);
        CHECK(point_uncertainty(one_hot(9, c)) == 0.0);
    }
    std::vector<double> half(9, 0.0);
    half[0] = half[1] = 0.5;
    CHECK(std::abs(point_entropy(half) - 1.0 / std::log2(9.0)) < 1e-9);
    CHECK(std::abs(point_entropy(half) - 0.3155) < 1e-4);
    std::vector<double> skew{0.6, 0.3, 0.1, 0, 0, 0, 0, 0, 0};
    CHECK(std::abs(point_uncertainty(skew) - 0.4) < 1e-9);
}

TEST_CASE("point scores reject invalid vectors") {
    CHECK_THROWS_AS((point_entropy(std::vector<double>{0.5, 0.4})), ValidationError);
    CHECK_THROWS_AS((point_entropy(std::vector<double>{1.0})), ValidationError);
    CHECK_THROWS_AS((point_uncertainty(std::vector<double>{1.5, -0.5})), ValidationError);
    CHECK_THROWS_AS((point_uncertainty(std::vector<double>{std::nan(""), 1.0})), ValidationError);
    CHECK_NOTHROW((point_entropy(std::vector<double>{0.50005, 0.5})));
}

TEST_CASE("point scores are permutation invariant and bounded") {
    testing::Engine rng(1);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 2 + testing::below(rng, 12);
        auto p = testing::random_simplex(rng, k, testing::uniform(rng, 0.5, 6.0));
        const double h = point_entropy(p);
        const double u = point_uncertainty(p);
        CHECK(h >= 0.0);
        CHECK(h <= 1.0);
        CHECK(u >= 0.0);
        CHECK(u <= 1.0 - 1.0 / static_cast<double>(k) + 1e-12);
        CHECK(std::abs(h - oracle::entropy(p)) < 1e-12);
        CHECK(std::abs(u - oracle::uncertainty(p)) < 1e-12);
        std::shuffle(p.begin(), p.end(), rng);
        CHECK(std::abs(point_entropy(p) - h) < 1e-12);
        CHECK(point_uncertainty(p) == u);
    }
}

TEST_CASE("sharpening never raises uncertainty and only the uniform vector has entropy 1") {
    testing::Engine rng(2);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 2 + testing::below(rng, 10);
        auto p = testing::random_simplex(rng, k);
        const auto top = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        std::size_t other = testing::below(rng, k);
        if (other == top) other = (other + 1) % k;
        const double eps = p[other] * testing::uniform(rng, 0.0, 1.0);
        auto sharp = p;
        sharp[other] -= eps;
        sharp[top] += eps;
        CHECK(point_uncertainty(sharp) <= point_uncertainty(p) + 1e-15);
        CHECK(point_entropy(p) < 1.0);
    }
}

TEST_CASE("scan scores are means of point scores") {
    const std::vector<double> uniform(9, 1.0 / 9.0);
    auto s = score_scan(constant_rows("u", 10, uniform));
    CHECK(std::abs(s.mean_entropy - 1.0) < 1e-6);
    CHECK(std::abs(s.mean_uncertainty - 8.0 / 9.0) < 1e-6);
    s = score_scan(constant_rows("h", 10, one_hot(9, 3)));
    CHECK(s.mean_entropy == 0.0);
    CHECK(s.mean_uncertainty == 0.0);
    CHECK(s.n_points == 10);

    testing::Engine rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto pred = testing::random_predictions(rng, "r", 100, 9, testing::uniform(rng, 0.5, 5.0));
        const auto got = score_scan(pred);
        const auto want = oracle::score("r", pred);
        CHECK(std::abs(got.mean_entropy - want.h) < 1e-12);
        CHECK(std::abs(got.mean_uncertainty - want.u) < 1e-12);
    }
    CHECK_THROWS_AS((score_scan(PredictionMatrix("e", 0, 9, {}))), ValidationError);
}

TEST_CASE("ranking: single scan and the rank-sum tie") {
    auto r = rank_scans({{"only", 0.5, 0.5, 1}});
    REQUIRE(r.size() == 1);
    CHECK(r[0] == RankedScan{"only", 1, 1, 2});

    r = rank_scans({{"B", 0.1, 0.8, 1}, {"A", 0.9, 0.2, 1}});
    REQUIRE(r.size() == 2);
    CHECK(r[0] == RankedScan{"A", 1, 2, 3});
    CHECK(r[1] == RankedScan{"B", 2, 1, 3});

    // Equal scores fall back to scan id.
    r = rank_scans({{"y", 0.5, 0.5, 1}, {"x", 0.5, 0.5, 1}});
    CHECK(r[0].scan_id == "x");
    CHECK(r[0].rank_entropy == 1);
    CHECK(r[1].rank_uncertainty == 2);

    CHECK_THROWS_AS((rank_scans({{"a", 0.1, 0.1, 1}, {"a", 0.2, 0.2, 1}})), ValidationError);
    CHECK_THROWS_AS((rank_scans({})), ValidationError);
}

TEST_CASE("ranking agrees with the counting oracle") {
    testing::Engine rng(4);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t m = 1 + testing::below(rng, 20);
        std::vector<ScanScore> scores;
        std::vector<oracle::Scored> plain;
        for (std::size_t i = 0; i < m; ++i) {
            // Coarse values so ties within a score are frequent.
            const double h = static_cast<double>(testing::below(rng, 5)) / 4.0;
            const double u = static_cast<double>(testing::below(rng, 5)) / 5.0;
            const std::string id = "scan" + std::to_string(testing::below(rng, 1000)) + "_" + std::to_string(i);
            scores.push_back({id, h, u, 1});
            plain.push_back({id, h, u});
        }
        const auto got = rank_scans(scores);
        const auto want = oracle::rank(plain);
        REQUIRE(got.size() == want.size());
        std::vector<std::size_t> rh, ru;
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].scan_id == want[i].id);
            CHECK(got[i].rank_entropy == want[i].rank_h);
            CHECK(got[i].rank_uncertainty == want[i].rank_u);
            CHECK(got[i].rank_sum == want[i].sum);
            rh.push_back(got[i].rank_entropy);
            ru.push_back(got[i].rank_uncertainty);
        }
        std::sort(rh.begin(), rh.end());
        std::sort(ru.begin(), ru.end());
        for (std::size_t i = 0; i < m; ++i) {
            CHECK(rh[i] == i + 1);
            CHECK(ru[i] == i + 1);
        }
    }
}

TEST_CASE("ranking only depends on the order of the scores") {
    testing::Engine rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<ScanScore> scores;
        for (int i = 0; i < 15; ++i) {
            scores.push_back({"s" + std::to_string(i), testing::uniform(rng, 0, 1), testing::uniform(rng, 0, 1), 1});
        }
        auto transformed = scores;
        for (auto& s : transformed) {
            s.mean_entropy = std::exp(3.0 * s.mean_entropy) - 7.0;
            s.mean_uncertainty = std::sqrt(s.mean_uncertainty) * 0.01;
        }
        CHECK(select_top(rank_scans(scores), 5, 1) == select_top(rank_scans(transformed), 5, 1));
    }
}

TEST_CASE("selection picks the first n by rank sum") {
    testing::Engine rng(6);
    std::map<std::string, PredictionMatrix> preds;
    std::vector<std::string> ids;
    std::vector<oracle::Scored> plain;
    for (int i = 0; i < 15; ++i) {
        const std::string id = "scan_" + std::to_string(i);
        preds.emplace(id, testing::random_predictions(rng, id, 50 + testing::below(rng, 100), 9,
                                                      testing::uniform(rng, 0.5, 8.0)));
        ids.push_back(id);
        plain.push_back(oracle::score(id, preds.at(id)));
    }
    const auto source = [&](const std::string& id) { return preds.at(id); };
    const auto result = select_scans(ids, source, 10, 3);
    const auto want = oracle::rank(plain);
    CHECK(result.iteration == 3);
    REQUIRE(result.selected.size() == 10);
    REQUIRE(result.ranked.size() == 15);
    for (std::size_t i = 0; i < 10; ++i) CHECK(result.selected[i] == want[i].id);

    CHECK(select_scans(ids, source, 10, 3) == result);
    std::vector<std::string> reversed(ids.rbegin(), ids.rend());
    CHECK(select_scans(reversed, source, 10, 3) == result);

    const auto all = select_scans(ids, source, 40, 1);
    CHECK(all.selected.size() == 15);
    CHECK_THROWS_AS(select_scans(ids, source, 0, 1), ValidationError);
}
