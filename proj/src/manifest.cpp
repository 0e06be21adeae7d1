#include "railseg/manifest.hpp"

#include <chrono>
#include <set>

#include <fmt/format.h>

#include "railseg/error.hpp"
#include "railseg/io.hpp"

namespace railseg::dataset {

using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& value) {
    if (value) j[key] = *value;
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<T>();
}

}  // namespace

std::string_view to_string(ScanStatus s) {
    switch (s) {
        case ScanStatus::Raw: return "RAW";
        case ScanStatus::Coarse: return "COARSE";
        case ScanStatus::PendingAnnotation: return "PENDING_ANNOTATION";
        case ScanStatus::Corrected: return "CORRECTED";
        case ScanStatus::Test: return "TEST";
    }
    return "RAW";
}

ScanStatus parse_status(std::string_view s) {
    for (auto st : {ScanStatus::Raw, ScanStatus::Coarse, ScanStatus::PendingAnnotation, ScanStatus::Corrected,
                    ScanStatus::Test}) {
        if (to_string(st) == s) return st;
    }
    throw ValidationError(fmt::format("unknown scan status '{}'", s));
}

bool transition_allowed(ScanStatus from, ScanStatus to) {
    return (from == ScanStatus::Raw && to == ScanStatus::Coarse) ||
           (from == ScanStatus::Coarse && to == ScanStatus::PendingAnnotation) ||
           (from == ScanStatus::PendingAnnotation && to == ScanStatus::Corrected);
}

double now_seconds() {
    using namespace std::chrono;
    return duration<double>(system_clock::now().time_since_epoch()).count();
}

json to_json(const transfer::CameraCalibration& c) {
    json r = json::array(), t = json::array();
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) r.push_back(c.rotation(i, k));
        t.push_back(c.translation[i]);
    }
    return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx},       {"cy", c.cy},
            {"width", c.width}, {"height", c.height}, {"R", r}, {"t", t}};
}

transfer::CameraCalibration calibration_from_json(const json& j) {
    transfer::CameraCalibration c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.value("width", transfer::kImageWidth);
    c.height = j.value("height", transfer::kImageHeight);
    const auto& r = j.at("R");
    const auto& t = j.at("t");
    if (r.size() != 9 || t.size() != 3) throw ValidationError("calibration needs 9 rotation and 3 translation values");
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) c.rotation(i, k) = r.at(3 * i + k).get<double>();
        c.translation[i] = t.at(i).get<double>();
    }
    transfer::validate(c);
    return c;
}

json to_json(const al::SelectionResult& result) {
    json ranked = json::array();
    for (const auto& r : result.ranked) {
        ranked.push_back({{"scan_id", r.scan_id}, {"rank_H", r.rank_entropy}, {"rank_U", r.rank_uncertainty},
                          {"R", r.rank_sum}});
    }
    return {{"iteration", result.iteration}, {"ranked", ranked}, {"selected", result.selected}};
}

al::SelectionResult selection_from_json(const json& j) {
    al::SelectionResult result;
    result.iteration = j.at("iteration").get<int>();
    for (const auto& r : j.at("ranked")) {
        result.ranked.push_back({r.at("scan_id").get<std::string>(), r.at("rank_H").get<std::size_t>(),
                                 r.at("rank_U").get<std::size_t>(), r.at("R").get<std::size_t>()});
    }
    result.selected = j.at("selected").get<std::vector<std::string>>();
    return result;
}

json to_json(const ClassMap& map) {
    json cm = json::object();
    for (const auto& [px, target] : map.table()) cm[std::to_string(px)] = target;
    return cm;
}

ClassMap class_map_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("class map must be an object of pixel value -> class id");
    ClassMap map;
    const auto& classes = ClassSet::rail_default();
    for (const auto& [key, value] : j.items()) {
        int px = -1;
        try {
            std::size_t used = 0;
            px = std::stoi(key, &used);
            if (used != key.size()) px = -1;
        } catch (const std::exception&) {
        }
        if (px < 0 || px > 255) throw ValidationError(fmt::format("class map key '{}' is not a pixel value 0..255", key));
        const auto target = value.get<ClassId>();
        if (!classes.is_point_label(target)) {
            throw ValidationError(fmt::format("class map sends {} to non-3D class {}", key, target));
        }
        map.set(static_cast<std::uint8_t>(px), target);
    }
    return map;
}

json Manifest::to_json() const {
    json j;
    j["version"] = kManifestVersion;
    j["calibration"] = dataset::to_json(calibration);
    j["class_map"] = dataset::to_json(class_map);

    j["images"] = json::array();
    for (const auto& im : images) {
        j["images"].push_back({{"image_id", im.image_id}, {"t_image", im.t_image}, {"path", im.path}});
    }
    j["scans"] = json::array();
    for (const auto& s : scans) {
        json e{{"scan_id", s.scan_id},
               {"cloud", s.cloud},
               {"t_scan", s.t_scan},
               {"v_current", s.v_current},
               {"travel_dir", {s.travel_dir.x(), s.travel_dir.y(), s.travel_dir.z()}},
               {"status", to_string(s.status)},
               {"preprocessed", s.preprocessed},
               {"motion_corrected", s.motion_corrected}};
        put_optional(e, "raw_cloud", s.raw_cloud);
        put_optional(e, "mask", s.mask);
        put_optional(e, "image_id", s.image_id);
        put_optional(e, "sync_dt", s.sync_dt);
        put_optional(e, "labels", s.labels);
        put_optional(e, "predictions", s.predictions);
        j["scans"].push_back(std::move(e));
    }
    j["al_iterations"] = json::array();
    for (const auto& rec : al_iterations) {
        auto e = dataset::to_json(rec.result);
        e["time"] = rec.time;
        j["al_iterations"].push_back(std::move(e));
    }
    j["transitions"] = json::array();
    for (const auto& t : transitions) {
        j["transitions"].push_back({{"scan_id", t.scan_id},
                                    {"from", t.from ? json(to_string(*t.from)) : json(nullptr)},
                                    {"to", to_string(t.to)},
                                    {"time", t.time}});
    }
    return j;
}

Manifest Manifest::from_json(const json& j) {
    try {
        if (j.value("version", kManifestVersion) != kManifestVersion) {
            throw ValidationError(fmt::format("unsupported manifest version {}", j.at("version").dump()));
        }
        Manifest m;
        m.calibration = calibration_from_json(j.at("calibration"));
        if (auto it = j.find("class_map"); it != j.end()) m.class_map = class_map_from_json(*it);
        for (const auto& im : j.value("images", json::array())) {
            m.images.push_back({im.at("image_id").get<std::string>(), im.at("t_image").get<double>(),
                                im.at("path").get<std::string>()});
        }
        for (const auto& e : j.value("scans", json::array())) {
            ScanEntry s;
            s.scan_id = e.at("scan_id").get<std::string>();
            s.cloud = e.at("cloud").get<std::string>();
            s.t_scan = e.at("t_scan").get<double>();
            s.v_current = e.value("v_current", 0.0);
            if (auto d = e.find("travel_dir"); d != e.end()) {
                s.travel_dir = {d->at(0).get<double>(), d->at(1).get<double>(), d->at(2).get<double>()};
            }
            s.status = parse_status(e.value("status", std::string("RAW")));
            s.preprocessed = e.value("preprocessed", false);
            s.motion_corrected = e.value("motion_corrected", false);
            s.raw_cloud = get_optional<std::string>(e, "raw_cloud");
            s.mask = get_optional<std::string>(e, "mask");
            s.image_id = get_optional<std::string>(e, "image_id");
            s.sync_dt = get_optional<double>(e, "sync_dt");
            s.labels = get_optional<std::string>(e, "labels");
            s.predictions = get_optional<std::string>(e, "predictions");
            m.scans.push_back(std::move(s));
        }
        for (const auto& e : j.value("al_iterations", json::array())) {
            m.al_iterations.push_back({selection_from_json(e), e.value("time", 0.0)});
        }
        for (const auto& e : j.value("transitions", json::array())) {
            Transition t;
            t.scan_id = e.at("scan_id").get<std::string>();
            if (!e.at("from").is_null()) t.from = parse_status(e.at("from").get<std::string>());
            t.to = parse_status(e.at("to").get<std::string>());
            t.time = e.at("time").get<double>();
            m.transitions.push_back(std::move(t));
        }
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(fmt::format("malformed manifest: {}", e.what()));
    }
}

Manifest Manifest::load(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded()) throw ValidationError(fmt::format("'{}' is not valid JSON", path.string()));
    return from_json(j);
}

void Manifest::save(const std::filesystem::path& path) const {
    validate();
    const auto text = to_json().dump(1);
    io::write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void Manifest::validate() const {
    std::set<std::string> ids, test_ids, image_ids;
    for (const auto& s : scans) {
        if (s.scan_id.empty()) throw ValidationError("scan with empty id");
        if (!ids.insert(s.scan_id).second) throw ValidationError(fmt::format("duplicate scan id '{}'", s.scan_id));
        if (s.status == ScanStatus::Test) test_ids.insert(s.scan_id);
        if (!std::isfinite(s.t_scan)) throw ValidationError(fmt::format("scan '{}': bad t_scan", s.scan_id));
    }
    for (const auto& im : images) {
        if (!image_ids.insert(im.image_id).second) {
            throw ValidationError(fmt::format("duplicate image id '{}'", im.image_id));
        }
    }
    for (const auto& s : scans) {
        if (s.image_id && !image_ids.count(*s.image_id)) {
            throw ValidationError(fmt::format("scan '{}' references unknown image '{}'", s.scan_id, *s.image_id));
        }
    }
    for (const auto& rec : al_iterations) {
        for (const auto& r : rec.result.ranked) {
            if (test_ids.count(r.scan_id)) {
                throw ValidationError(fmt::format("TEST scan '{}' appears in selection {}", r.scan_id,
                                                  rec.result.iteration));
            }
        }
    }
    const auto replayed = replay_transitions();
    for (const auto& s : scans) {
        auto it = replayed.find(s.scan_id);
        if (it != replayed.end() && it->second != s.status) {
            throw ValidationError(fmt::format("scan '{}' is {} but its transition log ends at {}", s.scan_id,
                                              to_string(s.status), to_string(it->second)));
        }
    }
}

ScanEntry* Manifest::find_scan(std::string_view scan_id) {
    for (auto& s : scans) {
        if (s.scan_id == scan_id) return &s;
    }
    return nullptr;
}

const ScanEntry* Manifest::find_scan(std::string_view scan_id) const {
    return const_cast<Manifest*>(this)->find_scan(scan_id);
}

ScanEntry& Manifest::scan(std::string_view scan_id) {
    auto* s = find_scan(scan_id);
    if (!s) throw ValidationError(fmt::format("unknown scan '{}'", scan_id));
    return *s;
}

const ImageEntry* Manifest::find_image(std::string_view image_id) const {
    for (const auto& im : images) {
        if (im.image_id == image_id) return &im;
    }
    return nullptr;
}

void Manifest::add_scan(ScanEntry entry, double time) {
    if (find_scan(entry.scan_id)) throw ValidationError(fmt::format("duplicate scan id '{}'", entry.scan_id));
    transitions.push_back({entry.scan_id, std::nullopt, entry.status, time});
    scans.push_back(std::move(entry));
}

void Manifest::set_status(std::string_view scan_id, ScanStatus to, double time) {
    auto& s = scan(scan_id);
    if (!transition_allowed(s.status, to)) {
        throw ValidationError(fmt::format("scan '{}': transition {} -> {} is not allowed", scan_id,
                                          to_string(s.status), to_string(to)));
    }
    transitions.push_back({s.scan_id, s.status, to, time});
    s.status = to;
}

std::map<std::string, ScanStatus> Manifest::replay_transitions() const {
    std::map<std::string, ScanStatus> state;
    for (const auto& t : transitions) {
        auto it = state.find(t.scan_id);
        if (!t.from) {
            if (it != state.end()) throw ValidationError(fmt::format("scan '{}' registered twice", t.scan_id));
            state.emplace(t.scan_id, t.to);
            continue;
        }
        if (it == state.end() || it->second != *t.from || !transition_allowed(*t.from, t.to)) {
            throw ValidationError(fmt::format("transition log for '{}' is inconsistent", t.scan_id));
        }
        it->second = t.to;
    }
    return state;
}

}  // namespace railseg::dataset
