#include <doctest.h>

#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "railseg/dataset.hpp"
#include "railseg/io.hpp"

using namespace railseg;
using namespace railseg::dataset;
namespace fs = std::filesystem;

namespace {

SynthDatasetOptions small_options() {
    SynthDatasetOptions o;
    o.scans = 12;
    o.test_scans = 2;
    o.points_per_scan = 2000;
    return o;
}

/// Runs every stage up to label transfer.
void run_front_half(Dataset& ds) {
    preprocess_scans(ds, {});
    sync_scans(ds, preprocess::kDefaultMaxSyncDt);
    motion_correct_scans(ds);
    transfer_scans(ds, 100.0);
}

void write_predictions(Dataset& ds, double noise) {
    for (auto& scan : ds.manifest().scans) {
        if (scan.status != ScanStatus::Coarse) continue;
        const auto labels = ds.load_labels(scan, Access::Select);
        const auto rel = "predictions/" + scan.scan_id + ".pred";
        io::save_predictions(synthetic_predictions(labels, ds.classes(), noise, std::hash<std::string>{}(rel)),
                             ds.resolve(rel));
        scan.predictions = rel;
    }
    ds.save();
}

}  // namespace

TEST_CASE("synthetic dataset layout") {
    testing::TempDir dir;
    const auto m = synth_dataset(dir.path(), small_options());
    CHECK(m.scans.size() == 12);
    std::size_t test = 0;
    for (const auto& s : m.scans) {
        CHECK(fs::exists(dir / s.cloud));
        if (s.status == ScanStatus::Test) {
            ++test;
            CHECK(fs::exists(dir / *s.labels));
            CHECK(fs::exists(dir / *s.predictions));
        } else {
            CHECK(s.status == ScanStatus::Raw);
            CHECK_FALSE(s.labels);
            CHECK(fs::exists(dir / ("ground_truth/" + s.scan_id + ".label")));
        }
    }
    CHECK(test == 2);
    CHECK(m.images.size() >= 2);
    for (const auto& im : m.images) CHECK(fs::exists(dir / im.path));
    CHECK(Manifest::load(dir / "manifest.json").to_json() == m.to_json());

    testing::TempDir again;
    synth_dataset(again.path(), small_options());
    for (const auto& s : m.scans) CHECK(io::read_file(dir / s.cloud) == io::read_file(again / s.cloud));
}

TEST_CASE("pipeline stages update the manifest consistently") {
    testing::TempDir dir;
    synth_dataset(dir.path(), small_options());
    Dataset ds(dir / "manifest.json");

    const auto pre = preprocess_scans(ds, {});
    CHECK(pre.scans == 10);
    CHECK(pre.points_out < pre.points_in);
    for (const auto& s : ds.manifest().scans) {
        if (s.status == ScanStatus::Test) continue;
        REQUIRE(s.preprocessed);
        const auto raw = io::load_cloud(ds.resolve(*s.raw_cloud));
        const auto mask = io::read_file(ds.resolve(*s.mask));
        CHECK(mask.size() == raw.size());
        std::size_t kept = 0;
        for (auto b : mask) kept += b;
        CHECK(kept == io::load_cloud(ds.resolve(s.cloud)).size());
        // Reflections never survive.
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw.points[i].position.norm() < preprocess::kDefaultMinRange) CHECK(mask[i] == 0);
        }
    }
    CHECK(preprocess_scans(ds, {}).scans == 0);

    const auto pairs = sync_scans(ds, preprocess::kDefaultMaxSyncDt);
    std::vector<preprocess::TimedId> scans, images;
    for (const auto& s : ds.manifest().scans) {
        if (s.status != ScanStatus::Test) scans.push_back({s.scan_id, s.t_scan});
    }
    for (const auto& im : ds.manifest().images) images.push_back({im.image_id, im.t_image});
    const auto expected = oracle::best_nearest_matching(scans, images, preprocess::kDefaultMaxSyncDt);
    CHECK(pairs.size() == expected.size());
    CHECK(pairs.size() >= 2);
    for (const auto& p : pairs) {
        const auto& s = *ds.manifest().find_scan(p.scan_id);
        CHECK(s.image_id == p.image_id);
        CHECK(std::abs(*s.sync_dt) < preprocess::kDefaultMaxSyncDt);
    }

    CHECK(motion_correct_scans(ds) == 10);
    CHECK(motion_correct_scans(ds) == 0);

    const auto transferred = transfer_scans(ds, 100.0);
    CHECK(transferred == pairs.size());
    std::size_t labelled = 0, correct = 0;
    for (const auto& s : ds.manifest().scans) {
        if (s.status == ScanStatus::Test) continue;
        if (!s.image_id) {
            CHECK(s.status == ScanStatus::Raw);
            continue;
        }
        CHECK(s.status == ScanStatus::Coarse);
        const auto labels = ds.load_labels(s, Access::Transfer);
        const auto mask = io::read_file(ds.resolve(*s.mask));
        const auto truth = preprocess::apply_mask(
            io::load_labels(dir / ("ground_truth/" + s.scan_id + ".label"), ds.classes()),
            preprocess::KeepMask(mask.begin(), mask.end()));
        REQUIRE(truth.size() == labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            CHECK(labels.provenance[i] == Provenance::Auto);
            if (labels.labels[i] == kUnlabeled) continue;
            ++labelled;
            correct += labels.labels[i] == truth.labels[i];
        }
    }
    CHECK(labelled > 1000);
    CHECK(static_cast<double>(correct) / static_cast<double>(labelled) >= 0.97);

    const auto reloaded = Manifest::load(dir / "manifest.json");
    CHECK(reloaded.to_json() == ds.manifest().to_json());
    const auto replayed = reloaded.replay_transitions();
    for (const auto& s : reloaded.scans) CHECK(replayed.at(s.scan_id) == s.status);
}

TEST_CASE("selection needs a prediction for every candidate") {
    testing::TempDir dir;
    synth_dataset(dir.path(), small_options());
    Dataset ds(dir / "manifest.json");
    run_front_half(ds);
    const auto candidates = selection_candidates(ds);
    REQUIRE(candidates.size() >= 2);

    try {
        select_for_labeling(ds, 10, 0, 200.0);
        FAIL("expected MissingFilesError");
    } catch (const MissingFilesError& e) {
        CHECK(e.missing().size() == candidates.size());
        for (const auto& id : candidates) {
            CHECK(std::find(e.missing().begin(), e.missing().end(), "predictions/" + id + ".pred") !=
                  e.missing().end());
        }
    }
    CHECK(ds.manifest().al_iterations.empty());
    for (const auto& id : candidates) CHECK(ds.manifest().find_scan(id)->status == ScanStatus::Coarse);
}

TEST_CASE("selection ranks candidates and flags the batch") {
    testing::TempDir dir;
    synth_dataset(dir.path(), small_options());
    Dataset ds(dir / "manifest.json");
    run_front_half(ds);
    write_predictions(ds, 0.5);
    const auto candidates = selection_candidates(ds);
    for (const auto& id : candidates) CHECK(ds.manifest().find_scan(id)->status != ScanStatus::Test);

    std::vector<oracle::Scored> plain;
    for (const auto& id : candidates) {
        plain.push_back(oracle::score(
            id, io::load_predictions(ds.resolve("predictions/" + id + ".pred"), 9, id)));
    }
    const auto want = oracle::rank(plain);

    ds.clear_audit();
    const auto first = select_for_labeling(ds, 1, 0, 200.0);
    CHECK(first.iteration == 1);
    REQUIRE(first.selected.size() == 1);
    CHECK(first.selected[0] == want[0].id);
    CHECK(ds.manifest().find_scan(want[0].id)->status == ScanStatus::PendingAnnotation);

    const auto second = select_for_labeling(ds, 100, 0, 300.0);
    CHECK(second.iteration == 2);
    CHECK(second.selected.size() == candidates.size() - 1);
    for (std::size_t i = 0; i < second.selected.size(); ++i) CHECK(second.selected[i] == want[i + 1].id);

    const auto saved = Manifest::load(dir / "manifest.json");
    REQUIRE(saved.al_iterations.size() == 2);
    CHECK(saved.al_iterations[0].result == first);
    CHECK(saved.al_iterations[1].result == second);
}

TEST_CASE("TEST labels are only read by evaluation") {
    testing::TempDir dir;
    synth_dataset(dir.path(), small_options());
    Dataset ds(dir / "manifest.json");
    run_front_half(ds);
    write_predictions(ds, 0.5);
    select_for_labeling(ds, 2, 0, 200.0);
    const auto eval = evaluate_test_split(ds, std::nullopt, std::nullopt);
    CHECK(eval.scan_ids.size() == 2);

    std::set<std::string> test_ids;
    for (const auto& s : ds.manifest().scans) {
        if (s.status == ScanStatus::Test) test_ids.insert(s.scan_id);
    }
    std::size_t evaluated = 0;
    for (const auto& r : ds.audit()) {
        if (!test_ids.count(r.scan_id)) continue;
        CHECK(r.access == Access::Evaluate);
        if (r.kind == "labels") ++evaluated;
    }
    CHECK(evaluated == 2);

    const auto& test_scan = *ds.manifest().find_scan(*test_ids.begin());
    for (auto access : {Access::Preprocess, Access::Transfer, Access::Select, Access::Annotate, Access::Serve}) {
        CHECK_THROWS_AS(ds.load_labels(test_scan, access), IsolationError);
    }
    CHECK_THROWS_AS((ingest_corrections(ds, {test_scan.scan_id, {{0, 1, "a", 1.0}}})), IsolationError);
}

TEST_CASE("evaluation inputs") {
    testing::TempDir dir;
    synth_dataset(dir.path(), small_options());
    Dataset ds(dir / "manifest.json");

    // Ground truth as prediction gives a perfect score.
    const auto perfect = evaluate_test_split(ds, dir / "labels", dir / "labels");
    CHECK(perfect.report.miou == 1.0);
    CHECK(perfect.report.fwiou == 1.0);

    const auto eval = evaluate_test_split(ds, std::nullopt, std::nullopt);
    CHECK(eval.report.miou < 1.0);
    CHECK(eval.report.miou > 0.3);

    // The report mirrors the confusion matrix.
    auto report = report_to_json(eval, ds.classes(), "run-b");
    CHECK(report.at("classes").size() == 9);
    CHECK(report.at("confusion_matrix").at("counts").size() == 9);
    CHECK(report.at("confusion_matrix").at("counts").at(0).size() == 10);
    std::uint64_t total = 0;
    for (const auto& row : report.at("confusion_matrix").at("counts")) {
        for (const auto& v : row) total += v.get<std::uint64_t>();
    }
    CHECK(total == eval.confusion.total());
    add_improvements(report, {report_to_json(perfect, ds.classes(), "run-a")});
    CHECK(report.at("improvements").at(0).at("baseline") == "run-a");
    CHECK(report.at("improvements").at(0).at("miou_pct").get<double>() ==
          doctest::Approx((eval.report.miou - 1.0) * 100.0));

    testing::TempDir empty;
    try {
        evaluate_test_split(ds, empty.path(), std::nullopt);
        FAIL("expected MissingFilesError");
    } catch (const MissingFilesError& e) {
        CHECK(e.missing().size() == 2);
    }
}

TEST_CASE("corrections are logged durably and the latest entry wins") {
    testing::TempDir dir;
    synth_dataset(dir.path(), small_options());
    Dataset ds(dir / "manifest.json");
    run_front_half(ds);
    const auto candidates = selection_candidates(ds);
    REQUIRE_FALSE(candidates.empty());
    const auto id = candidates.front();
    const auto before = ds.load_labels(*ds.manifest().find_scan(id), Access::Annotate);

    ingest_corrections(ds, {id, {{0, railseg::id(RailClass::Pole), "ann", 10.0}, {1, 2, "ann", 10.0}}});
    ingest_corrections(ds, {id, {{0, railseg::id(RailClass::Sign), "ann", 20.0}, {1, 9, "old", 5.0}}});

    const auto after = io::load_labels(ds.resolve(*ds.manifest().find_scan(id)->labels), ds.classes());
    CHECK(after.labels[0] == railseg::id(RailClass::Sign));
    CHECK(after.labels[1] == 2);
    CHECK(after.provenance[0] == Provenance::Corrected);
    CHECK(after.provenance[1] == Provenance::Corrected);
    for (std::size_t i = 2; i < after.size(); ++i) {
        CHECK(after.labels[i] == before.labels[i]);
        CHECK(after.provenance[i] == Provenance::Auto);
    }

    const auto log_path = ds.resolve("corrections/" + id + ".jsonl");
    {
        std::ifstream in(log_path);
        std::string line;
        std::size_t lines = 0;
        while (std::getline(in, line)) ++lines;
        CHECK(lines == 2);
    }
    // A torn trailing record is ignored on the next ingest.
    { std::ofstream(log_path, std::ios::app) << "{\"scan_id\": \"" << id << "\", \"correc"; }
    const auto third = ingest_corrections(ds, {id, {{2, 8, "ann", 30.0}}});
    CHECK(third.labels[0] == railseg::id(RailClass::Sign));
    CHECK(third.labels[2] == 8);

    // Scans with corrected points leave the candidate pool.
    const auto now = selection_candidates(ds);
    CHECK(std::find(now.begin(), now.end(), id) == now.end());

    CHECK_THROWS_AS((ingest_corrections(ds, {id, {{after.size(), 1, "ann", 1.0}}})), ValidationError);
    CHECK_THROWS_AS((ingest_corrections(ds, {id, {{0, 10, "ann", 1.0}}})), ValidationError);
    CHECK_THROWS_AS((ingest_corrections(ds, {"nope", {}})), ValidationError);
}

TEST_CASE("correction sets round-trip through json") {
    transfer::CorrectionSet set{"s", {{3, 4, "a", 1.5}, {0, 0, "b", 2.0}}};
    const auto back = corrections_from_json(to_json(set));
    REQUIRE(back.entries.size() == 2);
    CHECK(back.scan_id == "s");
    CHECK(back.entries[0].point_index == 3);
    CHECK(back.entries[0].new_class == 4);
    CHECK(back.entries[1].author == "b");
    CHECK(back.entries[1].timestamp == 2.0);
    CHECK_THROWS_AS((corrections_from_json({{"corrections", {{{"point_index", -1}, {"new_class_id", 1}}}}})),
                    ValidationError);
    CHECK_THROWS_AS((corrections_from_json({{"corrections", 3}})), ValidationError);
    CHECK_THROWS_AS((corrections_from_json({{"scan_id", "s"}})), ValidationError);
}

TEST_CASE("the manifest lock is exclusive") {
    testing::TempDir dir;
    const auto path = dir / "manifest.json";
    {
        ManifestLock held(path, 0);
        CHECK_THROWS_AS(ManifestLock(path, 50), LockError);
    }
    CHECK_NOTHROW(ManifestLock(path, 0));
}
