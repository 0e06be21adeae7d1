#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "railseg/active_learn.hpp"
#include "railseg/class_set.hpp"
#include "railseg/label_transfer.hpp"

namespace railseg::dataset {

/// Lifecycle of a scan. Allowed moves: RAW -> COARSE -> PENDING_ANNOTATION ->
/// CORRECTED. TEST is assigned when a scan is registered and never changes.
enum class ScanStatus { Raw, Coarse, PendingAnnotation, Corrected, Test };

std::string_view to_string(ScanStatus s);
ScanStatus parse_status(std::string_view s);
bool transition_allowed(ScanStatus from, ScanStatus to);

struct ScanEntry {
    std::string scan_id;
    std::string cloud;  // paths are relative to the dataset root
    std::optional<std::string> raw_cloud;
    std::optional<std::string> mask;
    double t_scan = 0.0;
    double v_current = 0.0;
    Eigen::Vector3d travel_dir = Eigen::Vector3d::UnitX();
    std::optional<std::string> image_id;
    std::optional<double> sync_dt;
    std::optional<std::string> labels;
    std::optional<std::string> predictions;
    ScanStatus status = ScanStatus::Raw;
    bool preprocessed = false;
    bool motion_corrected = false;
};

struct ImageEntry {
    std::string image_id;
    double t_image = 0.0;
    std::string path;
};

struct Transition {
    std::string scan_id;
    std::optional<ScanStatus> from;  // empty when the scan was registered
    ScanStatus to = ScanStatus::Raw;
    double time = 0.0;
};

struct SelectionRecord {
    al::SelectionResult result;
    double time = 0.0;
};

class Manifest {
public:
    transfer::CameraCalibration calibration;
    ClassMap class_map = ClassMap::identity(ClassSet::rail_default());
    std::vector<ImageEntry> images;
    std::vector<ScanEntry> scans;
    std::vector<SelectionRecord> al_iterations;
    std::vector<Transition> transitions;

    static Manifest load(const std::filesystem::path& path);
    /// Write-temp-then-rename; a crash never leaves a partial manifest.
    void save(const std::filesystem::path& path) const;

    nlohmann::json to_json() const;
    static Manifest from_json(const nlohmann::json& j);

    /// Unique ids, TEST scans absent from every selection, statuses consistent
    /// with the transition log.
    void validate() const;

    ScanEntry* find_scan(std::string_view scan_id);
    const ScanEntry* find_scan(std::string_view scan_id) const;
    ScanEntry& scan(std::string_view scan_id);
    const ImageEntry* find_image(std::string_view image_id) const;

    /// Registers a scan and logs its initial status.
    void add_scan(ScanEntry entry, double time);
    void set_status(std::string_view scan_id, ScanStatus to, double time);

    /// Statuses obtained by replaying the transition log from scratch.
    std::map<std::string, ScanStatus> replay_transitions() const;
};

nlohmann::json to_json(const transfer::CameraCalibration& calib);
transfer::CameraCalibration calibration_from_json(const nlohmann::json& j);
nlohmann::json to_json(const al::SelectionResult& result);
nlohmann::json to_json(const ClassMap& map);
/// {"<pixel value>": class_id, ...}; targets must be 3D classes or UNLABELED.
ClassMap class_map_from_json(const nlohmann::json& j);
al::SelectionResult selection_from_json(const nlohmann::json& j);

double now_seconds();

}  // namespace railseg::dataset
