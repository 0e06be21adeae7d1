#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace railseg {

using ClassId = std::uint16_t;

inline constexpr ClassId kUnlabeled = 0;

/// Fixed ids of the built-in taxonomy. 1..9 are the LiDAR classes, the rest
/// only exist in camera label maps.
enum class RailClass : ClassId {
    Unlabeled = 0,
    OnTracks = 1,
    Person = 2,
    RailTrack = 3,
    Trackbed = 4,
    Construction = 5,
    Pole = 6,
    Sign = 7,
    Vegetation = 8,
    Terrain = 9,
    Sky = 10,
    Background = 11,
};

constexpr ClassId id(RailClass c) { return static_cast<ClassId>(c); }

struct ClassInfo {
    ClassId id = 0;
    std::string name;
    bool is_3d = false;
};

/// Ordered class taxonomy. Id 0 is always UNLABELED (not a 3D class).
class ClassSet {
public:
    ClassSet() = default;
    explicit ClassSet(std::vector<ClassInfo> classes);

    /// UNLABELED, the nine LiDAR classes and the image-only SKY / BACKGROUND.
    static const ClassSet& rail_default();

    const std::vector<ClassInfo>& classes() const { return classes_; }

    /// Number of is_3d classes.
    std::size_t num_3d() const { return num_3d_; }

    /// Is_3d class ids in ascending order.
    const std::vector<ClassId>& ids_3d() const { return ids_3d_; }

    bool contains(ClassId id) const;
    bool is_3d(ClassId id) const;
    /// True for 0 or any is_3d id; the admissible values of a label array.
    bool is_point_label(ClassId id) const { return id == kUnlabeled || is_3d(id); }

    /// Column of an is_3d class in a prediction matrix (0-based).
    std::optional<std::size_t> column_of(ClassId id) const;
    ClassId id_of_column(std::size_t column) const { return ids_3d_.at(column); }

    const std::string& name(ClassId id) const;
    std::optional<ClassId> find(std::string_view name) const;

private:
    std::vector<ClassInfo> classes_;
    std::map<ClassId, std::size_t> index_;
    std::vector<ClassId> ids_3d_;
    std::size_t num_3d_ = 0;
};

/// Maps label-image pixel values to point labels. Values mapped to an
/// image-only class or missing from the table become UNLABELED.
class ClassMap {
public:
    ClassMap() = default;

    /// Identity on every declared class; image-only classes collapse to 0.
    static ClassMap identity(const ClassSet& classes);

    void set(std::uint8_t pixel_value, ClassId target) { table_[pixel_value] = target; }
    bool declares(std::uint8_t pixel_value) const { return table_.count(pixel_value) != 0; }
    ClassId map(std::uint8_t pixel_value) const;

    const std::map<std::uint8_t, ClassId>& table() const { return table_; }

private:
    std::map<std::uint8_t, ClassId> table_;
};

}  // namespace railseg
