#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "railseg/active_learn.hpp"
#include "railseg/error.hpp"
#include "railseg/label_transfer.hpp"
#include "railseg/manifest.hpp"
#include "railseg/metrics.hpp"
#include "railseg/preprocess.hpp"
#include "railseg/synth.hpp"

namespace railseg::dataset {

/// Why a file is being read; TEST labels may only be read for evaluation.
enum class Access { Preprocess, Transfer, Select, Annotate, Evaluate, Serve };

std::string_view to_string(Access a);

struct AuditRecord {
    Access access;
    std::string scan_id;
    std::string kind;  // "cloud", "labels", "predictions", "image"
};

class IsolationError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class LockError : public Error {
public:
    using Error::Error;
};

/// Raised when candidate scans lack prediction files; lists every offender.
class MissingFilesError : public Error {
public:
    MissingFilesError(std::string message, std::vector<std::string> missing)
        : Error(std::move(message)), missing_(std::move(missing)) {}
    const std::vector<std::string>& missing() const { return missing_; }

private:
    std::vector<std::string> missing_;
};

/// Exclusive advisory lock on "<manifest>.lock" held for the object's lifetime.
class ManifestLock {
public:
    ManifestLock(const std::filesystem::path& manifest_path, int timeout_ms = 2000);
    ~ManifestLock();
    ManifestLock(const ManifestLock&) = delete;
    ManifestLock& operator=(const ManifestLock&) = delete;

private:
    int fd_ = -1;
};

/// A manifest plus the directory its relative paths resolve against. Every
/// per-scan file read goes through here and is recorded in the audit log.
class Dataset {
public:
    explicit Dataset(std::filesystem::path manifest_path);
    Dataset(std::filesystem::path manifest_path, Manifest manifest);

    const std::filesystem::path& manifest_path() const { return manifest_path_; }
    std::filesystem::path root() const { return manifest_path_.parent_path(); }
    std::filesystem::path resolve(const std::string& relative) const { return root() / relative; }

    Manifest& manifest() { return manifest_; }
    const Manifest& manifest() const { return manifest_; }
    const ClassSet& classes() const { return ClassSet::rail_default(); }

    void save() const { manifest_.save(manifest_path_); }

    PointCloud load_cloud(const ScanEntry& scan, Access access) const;
    LabelArray load_labels(const ScanEntry& scan, Access access) const;
    /// Labels from an explicit file (e.g. a prediction or ground-truth dir).
    LabelArray load_labels_from(const ScanEntry& scan, const std::filesystem::path& path, Access access) const;
    PredictionMatrix load_predictions(const ScanEntry& scan, const std::filesystem::path& path,
                                      Access access) const;
    transfer::LabelImage load_image(const ScanEntry& scan, Access access) const;

    /// Manifest entry if set, otherwise predictions/<scan_id>.pred.
    std::string prediction_path(const ScanEntry& scan) const;

    std::vector<AuditRecord> audit() const;
    void clear_audit();

private:
    void record(Access access, const ScanEntry& scan, std::string kind) const;

    std::filesystem::path manifest_path_;
    Manifest manifest_;
    mutable std::mutex audit_mutex_;
    mutable std::vector<AuditRecord> audit_;
};

struct PreprocessOptions {
    double min_range = preprocess::kDefaultMinRange;
    int knn_k = preprocess::kDefaultKnnK;
    double knn_alpha = preprocess::kDefaultKnnAlpha;
};

struct PreprocessSummary {
    std::size_t scans = 0;
    std::size_t points_in = 0;
    std::size_t points_out = 0;
};

/// Reflection + outlier filtering of every unprocessed non-TEST scan. The
/// filtered cloud replaces `cloud`; the original stays in `raw_cloud` and the
/// composed keep-mask (one byte per raw point) is written next to it.
PreprocessSummary preprocess_scans(Dataset& ds, const PreprocessOptions& options);

/// Pairs scans with images and records image_id / sync_dt on each scan.
std::vector<preprocess::SyncPair> sync_scans(Dataset& ds, double max_dt);

/// Applies the speed-based correction to every uncorrected non-TEST scan
/// using the per-scan v_current from the manifest.
std::size_t motion_correct_scans(Dataset& ds);

/// Projects the paired label image onto every RAW scan that has an image,
/// writes AUTO labels and moves the scan to COARSE.
std::size_t transfer_scans(Dataset& ds, double time);

/// Default candidate filter: COARSE scans without any CORRECTED point.
std::vector<std::string> selection_candidates(const Dataset& ds);

/// Scores and ranks all candidates, flags the first n PENDING_ANNOTATION and
/// appends the result to al_iterations. iteration = 0 picks the next number.
al::SelectionResult select_for_labeling(Dataset& ds, std::size_t n, int iteration, double time);

struct Evaluation {
    metrics::ConfusionMatrix confusion;
    metrics::IoUReport report;
    std::vector<std::string> scan_ids;
};

/// IoU over the TEST split. Ground truth comes from gt_dir/<id>.label or the
/// manifest; predictions from pred_dir/<id>.label, pred_dir/<id>.pred or the
/// scan's prediction matrix (argmax).
Evaluation evaluate_test_split(const Dataset& ds, const std::optional<std::filesystem::path>& pred_dir,
                               const std::optional<std::filesystem::path>& gt_dir);

nlohmann::json report_to_json(const Evaluation& eval, const ClassSet& classes, const std::string& run_name);

/// Adds improvement rows against earlier report JSON documents.
void add_improvements(nlohmann::json& report, const std::vector<nlohmann::json>& baselines);

/// Appends the batch to corrections/<id>.jsonl (flushed to disk), then
/// rewrites the label file with the latest entry per point.
LabelArray ingest_corrections(Dataset& ds, const transfer::CorrectionSet& batch);

transfer::CorrectionSet corrections_from_json(const nlohmann::json& j);
nlohmann::json to_json(const transfer::CorrectionSet& set);

struct SynthDatasetOptions {
    std::uint64_t seed = 42;
    std::size_t scans = 24;
    std::size_t test_scans = 4;
    double image_rate = 1.5;      // Hz; scans run at 4 Hz
    double synced_share = 0.7;    // images triggered within a few ms of a scan
    double speed = 10.0;
    std::size_t points_per_scan = 10'000;
    bool write_predictions = true;  // for TEST scans
};

/// Generates a dataset directory (clouds, label images, manifest) from
/// synthetic scenes. Training scans are stored raw; TEST scans are stored
/// clean together with their ground truth.
Manifest synth_dataset(const std::filesystem::path& out_dir, const SynthDatasetOptions& options);

/// Softmax-like rows peaked on `labels` with confidence 0.4..0.95. A share
/// `noise` of rows (and every UNLABELED row) peaks on a random class instead.
PredictionMatrix synthetic_predictions(const LabelArray& labels, const ClassSet& classes, double noise,
                                       std::uint64_t seed);

}  // namespace railseg::dataset
