#include "railseg/class_set.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "railseg/error.hpp"

namespace railseg {

ClassSet::ClassSet(std::vector<ClassInfo> classes) : classes_(std::move(classes)) {
    std::map<std::string, ClassId> names;
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        const auto& c = classes_[i];
        if (!index_.emplace(c.id, i).second) {
            throw ValidationError(fmt::format("duplicate class id {}", c.id));
        }
        if (!names.emplace(c.name, c.id).second) {
            throw ValidationError(fmt::format("duplicate class name '{}'", c.name));
        }
        if (c.id == kUnlabeled && c.is_3d) {
            throw ValidationError("class id 0 is reserved for UNLABELED");
        }
        if (c.is_3d) ids_3d_.push_back(c.id);
    }
    std::sort(ids_3d_.begin(), ids_3d_.end());
    num_3d_ = ids_3d_.size();
}

const ClassSet& ClassSet::rail_default() {
    static const ClassSet set({
        {id(RailClass::Unlabeled), "UNLABELED", false},
        {id(RailClass::OnTracks), "ON_TRACKS", true},
        {id(RailClass::Person), "PERSON", true},
        {id(RailClass::RailTrack), "RAIL_TRACK", true},
        {id(RailClass::Trackbed), "TRACKBED", true},
        {id(RailClass::Construction), "CONSTRUCTION", true},
        {id(RailClass::Pole), "POLE", true},
        {id(RailClass::Sign), "SIGN", true},
        {id(RailClass::Vegetation), "VEGETATION", true},
        {id(RailClass::Terrain), "TERRAIN", true},
        {id(RailClass::Sky), "SKY", false},
        {id(RailClass::Background), "BACKGROUND", false},
    });
    return set;
}

bool ClassSet::contains(ClassId id) const { return index_.count(id) != 0; }

bool ClassSet::is_3d(ClassId id) const {
    auto it = index_.find(id);
    return it != index_.end() && classes_[it->second].is_3d;
}

std::optional<std::size_t> ClassSet::column_of(ClassId id) const {
    auto it = std::lower_bound(ids_3d_.begin(), ids_3d_.end(), id);
    if (it == ids_3d_.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - ids_3d_.begin());
}

const std::string& ClassSet::name(ClassId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError(fmt::format("unknown class id {}", id));
    return classes_[it->second].name;
}

std::optional<ClassId> ClassSet::find(std::string_view name) const {
    for (const auto& c : classes_) {
        if (c.name == name) return c.id;
    }
    return std::nullopt;
}

ClassMap ClassMap::identity(const ClassSet& classes) {
    ClassMap m;
    for (const auto& c : classes.classes()) {
        if (c.id > 255) continue;
        m.set(static_cast<std::uint8_t>(c.id), c.is_3d ? c.id : kUnlabeled);
    }
    return m;
}

ClassId ClassMap::map(std::uint8_t pixel_value) const {
    auto it = table_.find(pixel_value);
    return it == table_.end() ? kUnlabeled : it->second;
}

}  // namespace railseg
