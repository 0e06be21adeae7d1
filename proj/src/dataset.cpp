#include "railseg/dataset.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "railseg/image_io.hpp"
#include "railseg/io.hpp"

namespace railseg::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Access a) {
    switch (a) {
        case Access::Preprocess: return "preprocess";
        case Access::Transfer: return "transfer";
        case Access::Select: return "select";
        case Access::Annotate: return "annotate";
        case Access::Evaluate: return "evaluate";
        case Access::Serve: return "serve";
    }
    return "unknown";
}

ManifestLock::ManifestLock(const fs::path& manifest_path, int timeout_ms) {
    auto lock_path = manifest_path;
    lock_path += ".lock";
    fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError(fmt::format("cannot open lock file '{}'", lock_path.string()));
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    while (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        if (std::chrono::steady_clock::now() >= deadline) {
            ::close(fd_);
            fd_ = -1;
            throw LockError(fmt::format("manifest '{}' is locked by another process", manifest_path.string()));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
}

ManifestLock::~ManifestLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

Dataset::Dataset(fs::path manifest_path)
    : manifest_path_(std::move(manifest_path)), manifest_(Manifest::load(manifest_path_)) {}

Dataset::Dataset(fs::path manifest_path, Manifest manifest)
    : manifest_path_(std::move(manifest_path)), manifest_(std::move(manifest)) {}

void Dataset::record(Access access, const ScanEntry& scan, std::string kind) const {
    if (kind == "labels" && scan.status == ScanStatus::Test && access != Access::Evaluate) {
        throw IsolationError(fmt::format("labels of TEST scan '{}' may only be read for evaluation (requested by {})",
                                         scan.scan_id, to_string(access)));
    }
    std::lock_guard lock(audit_mutex_);
    audit_.push_back({access, scan.scan_id, std::move(kind)});
}

std::vector<AuditRecord> Dataset::audit() const {
    std::lock_guard lock(audit_mutex_);
    return audit_;
}

void Dataset::clear_audit() {
    std::lock_guard lock(audit_mutex_);
    audit_.clear();
}

PointCloud Dataset::load_cloud(const ScanEntry& scan, Access access) const {
    record(access, scan, "cloud");
    return io::load_cloud(resolve(scan.cloud), scan.scan_id, scan.t_scan);
}

LabelArray Dataset::load_labels(const ScanEntry& scan, Access access) const {
    if (!scan.labels) throw ValidationError(fmt::format("scan '{}' has no labels", scan.scan_id));
    return load_labels_from(scan, resolve(*scan.labels), access);
}

LabelArray Dataset::load_labels_from(const ScanEntry& scan, const fs::path& path, Access access) const {
    record(access, scan, "labels");
    return io::load_labels(path, classes(), scan.scan_id);
}

PredictionMatrix Dataset::load_predictions(const ScanEntry& scan, const fs::path& path, Access access) const {
    record(access, scan, "predictions");
    return io::load_predictions(path, classes().num_3d(), scan.scan_id);
}

transfer::LabelImage Dataset::load_image(const ScanEntry& scan, Access access) const {
    if (!scan.image_id) throw ValidationError(fmt::format("scan '{}' has no paired image", scan.scan_id));
    const auto* image = manifest_.find_image(*scan.image_id);
    if (!image) throw ValidationError(fmt::format("unknown image '{}'", *scan.image_id));
    record(access, scan, "image");
    return io::load_label_image(resolve(image->path));
}

std::string Dataset::prediction_path(const ScanEntry& scan) const {
    return scan.predictions.value_or("predictions/" + scan.scan_id + ".pred");
}

namespace {

void ensure_parent(const fs::path& path) { fs::create_directories(path.parent_path()); }

std::string with_suffix(const std::string& relative, std::string_view suffix) {
    fs::path p(relative);
    return (p.parent_path() / (p.stem().string() + std::string(suffix) + p.extension().string())).generic_string();
}

void check_cloud_labels(const PointCloud& cloud, const LabelArray& labels) { require_aligned(cloud, labels); }

}  // namespace

PreprocessSummary preprocess_scans(Dataset& ds, const PreprocessOptions& options) {
    PreprocessSummary summary;
    for (auto& scan : ds.manifest().scans) {
        if (scan.preprocessed || scan.status == ScanStatus::Test) continue;
        const auto cloud = ds.load_cloud(scan, Access::Preprocess);
        auto reflections = preprocess::filter_reflections(cloud, options.min_range);
        preprocess::KeepMask mask = reflections.kept;
        PointCloud filtered = std::move(reflections.cloud);
        if (filtered.size() > static_cast<std::size_t>(options.knn_k)) {
            auto outliers = preprocess::remove_outliers(filtered, options.knn_k, options.knn_alpha);
            mask = preprocess::compose(mask, outliers.kept);
            filtered = std::move(outliers.cloud);
        }

        const std::string out_rel = with_suffix(scan.cloud, "_pre");
        io::save_cloud(filtered, ds.resolve(out_rel));
        const std::string mask_rel = "masks/" + scan.scan_id + ".mask";
        ensure_parent(ds.resolve(mask_rel));
        io::Bytes mask_bytes(mask.begin(), mask.end());
        io::write_file_atomic(ds.resolve(mask_rel), mask_bytes);

        if (scan.labels) {
            auto labels = ds.load_labels(scan, Access::Preprocess);
            check_cloud_labels(cloud, labels);
            io::save_labels(preprocess::apply_mask(labels, mask), ds.resolve(*scan.labels));
        }
        scan.raw_cloud = scan.cloud;
        scan.cloud = out_rel;
        scan.mask = mask_rel;
        scan.preprocessed = true;
        ++summary.scans;
        summary.points_in += cloud.size();
        summary.points_out += filtered.size();
    }
    ds.save();
    return summary;
}

std::vector<preprocess::SyncPair> sync_scans(Dataset& ds, double max_dt) {
    std::vector<preprocess::TimedId> scans, images;
    for (const auto& s : ds.manifest().scans) {
        if (s.status != ScanStatus::Test) scans.push_back({s.scan_id, s.t_scan});
    }
    for (const auto& im : ds.manifest().images) images.push_back({im.image_id, im.t_image});
    auto pairs = preprocess::sync_pairs(scans, images, max_dt);
    for (auto& s : ds.manifest().scans) {
        if (s.status == ScanStatus::Test) continue;
        s.image_id.reset();
        s.sync_dt.reset();
    }
    for (const auto& p : pairs) {
        auto& s = ds.manifest().scan(p.scan_id);
        s.image_id = p.image_id;
        s.sync_dt = p.dt;
    }
    ds.save();
    return pairs;
}

std::size_t motion_correct_scans(Dataset& ds) {
    std::size_t n = 0;
    for (auto& scan : ds.manifest().scans) {
        if (scan.motion_corrected || scan.status == ScanStatus::Test) continue;
        const auto cloud = ds.load_cloud(scan, Access::Preprocess);
        const auto corrected = preprocess::motion_correct(cloud, {scan.v_current, scan.travel_dir});
        const std::string out_rel = with_suffix(scan.cloud, "_mc");
        io::save_cloud(corrected, ds.resolve(out_rel));
        scan.cloud = out_rel;
        scan.motion_corrected = true;
        ++n;
    }
    ds.save();
    return n;
}

std::size_t transfer_scans(Dataset& ds, double time) {
    std::size_t n = 0;
    const auto& calib = ds.manifest().calibration;
    for (auto& scan : ds.manifest().scans) {
        if (scan.status != ScanStatus::Raw || !scan.image_id) continue;
        const auto cloud = ds.load_cloud(scan, Access::Transfer);
        const auto image = ds.load_image(scan, Access::Transfer);
        const auto labels = transfer::transfer_labels(cloud, image, calib, ds.classes(), ds.manifest().class_map);
        const std::string rel = "labels/" + scan.scan_id + ".label";
        ensure_parent(ds.resolve(rel));
        io::save_labels(labels, ds.resolve(rel));
        scan.labels = rel;
        ds.manifest().set_status(scan.scan_id, ScanStatus::Coarse, time);
        ++n;
    }
    ds.save();
    return n;
}

std::vector<std::string> selection_candidates(const Dataset& ds) {
    std::vector<std::string> out;
    for (const auto& scan : ds.manifest().scans) {
        if (scan.status != ScanStatus::Coarse) continue;
        if (scan.labels && transfer::label_status(ds.load_labels(scan, Access::Select)).corrected_count > 0) continue;
        out.push_back(scan.scan_id);
    }
    return out;
}

al::SelectionResult select_for_labeling(Dataset& ds, std::size_t n, int iteration, double time) {
    const auto candidates = selection_candidates(ds);
    std::vector<std::string> missing;
    for (const auto& id : candidates) {
        const auto rel = ds.prediction_path(*ds.manifest().find_scan(id));
        if (!fs::exists(ds.resolve(rel))) missing.push_back(rel);
    }
    if (!missing.empty()) {
        throw MissingFilesError(fmt::format("{} candidate scan(s) have no prediction file", missing.size()), missing);
    }
    if (iteration <= 0) {
        iteration = 1;
        for (const auto& rec : ds.manifest().al_iterations) iteration = std::max(iteration, rec.result.iteration + 1);
    }
    const auto result = al::select_scans(
        candidates,
        [&](const std::string& id) {
            const auto& scan = *ds.manifest().find_scan(id);
            return ds.load_predictions(scan, ds.resolve(ds.prediction_path(scan)), Access::Select);
        },
        n, iteration);
    for (const auto& id : result.selected) ds.manifest().set_status(id, ScanStatus::PendingAnnotation, time);
    ds.manifest().al_iterations.push_back({result, time});
    ds.save();
    return result;
}

Evaluation evaluate_test_split(const Dataset& ds, const std::optional<fs::path>& pred_dir,
                               const std::optional<fs::path>& gt_dir) {
    Evaluation eval{metrics::ConfusionMatrix(ds.classes().num_3d()), {}, {}};
    std::vector<std::string> missing;
    for (const auto& scan : ds.manifest().scans) {
        if (scan.status != ScanStatus::Test) continue;

        std::optional<LabelArray> gt;
        if (gt_dir) {
            const auto path = *gt_dir / (scan.scan_id + ".label");
            if (fs::exists(path)) gt = ds.load_labels_from(scan, path, Access::Evaluate);
            else missing.push_back(path.string());
        } else if (scan.labels) {
            gt = ds.load_labels(scan, Access::Evaluate);
        } else {
            missing.push_back(scan.scan_id + ": labels");
        }

        std::optional<LabelArray> pred;
        if (pred_dir) {
            const auto label_path = *pred_dir / (scan.scan_id + ".label");
            const auto pred_path = *pred_dir / (scan.scan_id + ".pred");
            if (fs::exists(label_path)) {
                pred = ds.load_labels_from(scan, label_path, Access::Evaluate);
            } else if (fs::exists(pred_path)) {
                pred = predicted_labels(ds.load_predictions(scan, pred_path, Access::Evaluate), ds.classes());
            } else {
                missing.push_back(label_path.string());
            }
        } else {
            const auto path = ds.resolve(ds.prediction_path(scan));
            if (fs::exists(path)) {
                pred = predicted_labels(ds.load_predictions(scan, path, Access::Evaluate), ds.classes());
            } else {
                missing.push_back(path.string());
            }
        }
        if (!gt || !pred) continue;
        if (gt->size() != pred->size()) {
            throw ValidationError(fmt::format("scan '{}': {} predictions for {} ground-truth labels", scan.scan_id,
                                              pred->size(), gt->size()));
        }
        metrics::accumulate(eval.confusion, pred->labels, gt->labels, ds.classes());
        eval.scan_ids.push_back(scan.scan_id);
    }
    if (!missing.empty()) throw MissingFilesError("evaluation inputs are missing", missing);
    if (eval.scan_ids.empty()) throw ValidationError("the manifest has no TEST scans to evaluate");
    eval.report = metrics::make_report(eval.confusion, eval.scan_ids.size(), ds.classes());
    return eval;
}

json report_to_json(const Evaluation& eval, const ClassSet& classes, const std::string& run_name) {
    json rows = json::array();
    for (const auto& row : eval.report.classes) {
        rows.push_back({{"class", row.name},
                        {"iou", row.iou ? json(*row.iou) : json(nullptr)},
                        {"gt_frequency", row.gt_frequency}});
    }
    const auto& cm = eval.confusion;
    json counts = json::array();
    for (std::size_t r = 0; r < cm.n_classes(); ++r) {
        json line = json::array();
        for (std::size_t c = 0; c < cm.n_classes(); ++c) line.push_back(cm.at(r, c));
        line.push_back(cm.rejected(r));
        counts.push_back(std::move(line));
    }
    json names = json::array();
    for (auto id : classes.ids_3d()) names.push_back(classes.name(id));
    return {{"run", run_name},
            {"scans_evaluated", eval.report.scans_evaluated},
            {"scan_ids", eval.scan_ids},
            {"miou", eval.report.miou},
            {"fwiou", eval.report.fwiou},
            {"classes", rows},
            {"confusion_matrix",
             {{"rows", "ground truth"}, {"columns", names}, {"last_column", "predicted UNLABELED"}, {"counts", counts}}},
            {"improvements", json::array()}};
}

void add_improvements(json& report, const std::vector<json>& baselines) {
    for (const auto& base : baselines) {
        const double old_miou = base.at("miou").get<double>();
        const double old_fwiou = base.at("fwiou").get<double>();
        report["improvements"].push_back({{"baseline", base.value("run", std::string("baseline"))},
                                          {"miou_pct", metrics::improvement(old_miou, report.at("miou"))},
                                          {"fwiou_pct", metrics::improvement(old_fwiou, report.at("fwiou"))}});
    }
}

transfer::CorrectionSet corrections_from_json(const json& j) {
    try {
        transfer::CorrectionSet set;
        set.scan_id = j.value("scan_id", std::string());
        for (const auto& e : j.at("corrections")) {
            const auto index = e.at("point_index").get<std::int64_t>();
            const auto cls = e.at("new_class_id").get<std::int64_t>();
            if (index < 0) throw ValidationError("negative point index");
            if (cls < 0 || cls > 0xffff) throw ValidationError(fmt::format("class id {} out of range", cls));
            set.entries.push_back({static_cast<std::size_t>(index), static_cast<ClassId>(cls),
                                   e.value("author", std::string()), e.value("timestamp", 0.0)});
        }
        return set;
    } catch (const json::exception& e) {
        throw ValidationError(fmt::format("malformed correction set: {}", e.what()));
    }
}

json to_json(const transfer::CorrectionSet& set) {
    json entries = json::array();
    for (const auto& c : set.entries) {
        entries.push_back({{"point_index", c.point_index},
                           {"new_class_id", c.new_class},
                           {"author", c.author},
                           {"timestamp", c.timestamp}});
    }
    return {{"scan_id", set.scan_id}, {"corrections", entries}};
}

LabelArray ingest_corrections(Dataset& ds, const transfer::CorrectionSet& batch) {
    const auto& scan = ds.manifest().scan(batch.scan_id);
    auto labels = ds.load_labels(scan, Access::Annotate);
    transfer::validate(batch, labels.size(), ds.classes());

    const std::string log_rel = "corrections/" + scan.scan_id + ".jsonl";
    const auto log_path = ds.resolve(log_rel);
    ensure_parent(log_path);

    std::vector<transfer::Correction> history;
    if (fs::exists(log_path)) {
        std::ifstream in(log_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto parsed = json::parse(line, nullptr, false);
            if (parsed.is_discarded()) continue;  // torn final line from an interrupted append
            auto set = corrections_from_json(parsed);
            history.insert(history.end(), set.entries.begin(), set.entries.end());
        }
    }

    const auto line = to_json(batch).dump() + "\n";
    const int fd = ::open(log_path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw IoError(fmt::format("cannot open '{}'", log_path.string()));
    const auto written = ::write(fd, line.data(), line.size());
    const bool synced = written == static_cast<ssize_t>(line.size()) && ::fsync(fd) == 0;
    ::close(fd);
    if (!synced) throw IoError(fmt::format("cannot append to '{}'", log_path.string()));

    history.insert(history.end(), batch.entries.begin(), batch.entries.end());
    const auto updated = transfer::apply_corrections(labels, {scan.scan_id, history}, ds.classes());
    io::save_labels(updated, ds.resolve(*scan.labels));
    return updated;
}

PredictionMatrix synthetic_predictions(const LabelArray& labels, const ClassSet& classes, double noise,
                                       std::uint64_t seed) {
    synth::Rng rng(seed);
    const std::size_t k = classes.num_3d();
    std::vector<float> values(labels.size() * k);
    std::vector<double> rest(k);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::size_t peak = labels.labels[i] == kUnlabeled ? rng.below(k) : *classes.column_of(labels.labels[i]);
        if (rng.uniform() < noise) peak = rng.below(k);
        const double confidence = rng.uniform(0.4, 0.95);
        double total = 0.0;
        for (std::size_t c = 0; c < k; ++c) total += (rest[c] = c == peak ? 0.0 : rng.uniform());
        for (std::size_t c = 0; c < k; ++c) {
            const double p = c == peak ? confidence : (1.0 - confidence) * rest[c] / total;
            values[i * k + c] = static_cast<float>(p);
        }
    }
    return PredictionMatrix(labels.scan_id, labels.size(), k, std::move(values));
}

Manifest synth_dataset(const fs::path& out_dir, const SynthDatasetOptions& options) {
    if (options.scans == 0 || options.test_scans > options.scans) {
        throw ValidationError("synthetic dataset needs at least one scan and no more TEST scans than scans");
    }
    for (const char* sub : {"clouds", "images", "labels", "ground_truth", "predictions"}) {
        fs::create_directories(out_dir / sub);
    }
    constexpr double kEpoch = 1'700'000'000.0;
    synth::Rng rng(options.seed);
    Manifest m;
    m.calibration = synth::SynthSceneConfig::default_camera();

    std::vector<double> scan_times(options.scans);
    for (std::size_t i = 0; i < options.scans; ++i) scan_times[i] = kEpoch + kScanPeriod * static_cast<double>(i);
    const double end = scan_times.back() + kScanPeriod;

    // Camera stream: nominal 1.5 Hz; most frames are triggered next to a scan.
    struct PlannedImage {
        std::string id;
        double t;
        std::size_t scan;
    };
    std::vector<PlannedImage> planned;
    const std::size_t n_train = options.scans - options.test_scans;
    for (double t = kEpoch + rng.uniform(0.0, 1.0 / options.image_rate); t < end; t += 1.0 / options.image_rate) {
        auto nearest = static_cast<std::size_t>(std::llround((t - kEpoch) / kScanPeriod));
        nearest = std::min(nearest, options.scans - 1);
        double t_image = t;
        if (rng.uniform() < options.synced_share) t_image = scan_times[nearest] + rng.uniform(-0.008, 0.008);
        if (nearest >= n_train) continue;  // TEST scans carry their own ground truth
        planned.push_back({fmt::format("img_{:04d}", planned.size()), t_image, nearest});
    }

    const double now = now_seconds();
    const auto& classes = ClassSet::rail_default();
    for (std::size_t i = 0; i < options.scans; ++i) {
        const bool is_test = i >= n_train;
        synth::SynthSceneConfig cfg;
        cfg.seed = options.seed * 1000 + i;
        cfg.speed = options.speed;
        cfg.n_points = options.points_per_scan;
        cfg.render_image = !is_test && std::any_of(planned.begin(), planned.end(),
                                                   [&](const PlannedImage& p) { return p.scan == i; });
        const auto scene = synth::synth_scene(cfg);
        const auto id = fmt::format("scan_{:04d}", i);

        ScanEntry entry;
        entry.scan_id = id;
        entry.t_scan = scan_times[i];
        entry.v_current = options.speed;
        entry.cloud = "clouds/" + id + ".bin";
        if (is_test) {
            PointCloud clean{id, scan_times[i], {}};
            LabelArray gt(id, 0);
            gt.labels.clear();
            gt.provenance.clear();
            for (std::size_t p = 0; p < scene.undistorted.size(); ++p) {
                if (scene.is_reflection[p]) continue;
                clean.points.push_back(scene.undistorted.points[p]);
                gt.labels.push_back(scene.labels.labels[p]);
                gt.provenance.push_back(Provenance::Corrected);
            }
            io::save_cloud(clean, out_dir / entry.cloud);
            entry.labels = "labels/" + id + ".label";
            io::save_labels(gt, out_dir / *entry.labels);
            if (options.write_predictions) {
                entry.predictions = "predictions/" + id + ".pred";
                io::save_predictions(synthetic_predictions(gt, classes, 0.3, cfg.seed), out_dir / *entry.predictions);
            }
            entry.status = ScanStatus::Test;
            entry.preprocessed = entry.motion_corrected = true;
        } else {
            PointCloud raw = scene.distorted;
            raw.scan_id = id;
            raw.t_scan = scan_times[i];
            io::save_cloud(raw, out_dir / entry.cloud);
            LabelArray gt = scene.labels;
            gt.scan_id = id;
            io::save_labels(gt, out_dir / "ground_truth" / (id + ".label"));
        }
        for (const auto& p : planned) {
            if (p.scan != i) continue;
            const std::string rel = "images/" + p.id + ".pgm";
            io::save_label_image(scene.image, out_dir / rel);
            m.images.push_back({p.id, p.t, rel});
        }
        m.add_scan(std::move(entry), now);
    }
    std::sort(m.images.begin(), m.images.end(),
              [](const ImageEntry& a, const ImageEntry& b) { return a.t_image < b.t_image; });
    m.save(out_dir / "manifest.json");
    return m;
}

}  // namespace railseg::dataset
