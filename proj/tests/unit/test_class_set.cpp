#include <doctest.h>

#include <set>

#include "railseg/class_set.hpp"
#include "railseg/error.hpp"

using namespace railseg;

TEST_CASE("default class set follows the table row order") {
    const auto& cs = ClassSet::rail_default();
    const std::vector<std::string> names{"ON_TRACKS", "PERSON",     "RAIL_TRACK", "TRACKBED", "CONSTRUCTION",
                                         "POLE",      "SIGN",       "VEGETATION", "TERRAIN"};
    REQUIRE(cs.num_3d() == 9);
    for (std::size_t c = 0; c < names.size(); ++c) {
        CHECK(cs.id_of_column(c) == c + 1);
        CHECK(cs.name(static_cast<ClassId>(c + 1)) == names[c]);
        CHECK(cs.column_of(static_cast<ClassId>(c + 1)) == c);
    }
    CHECK(cs.name(kUnlabeled) == "UNLABELED");
    CHECK_FALSE(cs.is_3d(kUnlabeled));
    CHECK(cs.is_point_label(kUnlabeled));
}

TEST_CASE("image-only classes are declared but not point labels") {
    const auto& cs = ClassSet::rail_default();
    for (auto c : {RailClass::Sky, RailClass::Background}) {
        CHECK(cs.contains(id(c)));
        CHECK_FALSE(cs.is_3d(id(c)));
        CHECK_FALSE(cs.is_point_label(id(c)));
        CHECK_FALSE(cs.column_of(id(c)).has_value());
    }
    CHECK_FALSE(cs.contains(12));
    CHECK_THROWS_AS(cs.name(12), ValidationError);
}

TEST_CASE("id to name mapping is a bijection") {
    const auto& cs = ClassSet::rail_default();
    std::set<std::string> names;
    for (const auto& c : cs.classes()) {
        CHECK(names.insert(c.name).second);
        CHECK(cs.find(c.name) == c.id);
    }
    CHECK_FALSE(cs.find("TRAIN").has_value());
}

TEST_CASE("class set construction rejects duplicates and a 3D id 0") {
    CHECK_THROWS_AS((ClassSet({{1, "A", true}, {1, "B", true}})), ValidationError);
    CHECK_THROWS_AS((ClassSet({{1, "A", true}, {2, "A", true}})), ValidationError);
    CHECK_THROWS_AS((ClassSet({{0, "A", true}})), ValidationError);
}

TEST_CASE("identity class map sends image-only classes to UNLABELED") {
    const auto m = ClassMap::identity(ClassSet::rail_default());
    CHECK(m.map(id(RailClass::Vegetation)) == id(RailClass::Vegetation));
    CHECK(m.map(id(RailClass::Sky)) == kUnlabeled);
    CHECK(m.map(id(RailClass::Background)) == kUnlabeled);
    CHECK(m.declares(11));
    CHECK_FALSE(m.declares(12));
}
