#include <doctest.h>

#include <set>

#include "beamloc/geometry.hpp"

using namespace beamloc;
using namespace beamloc::geometry;

namespace {

// Independent O(M^2) difference enumeration.
std::set<std::pair<int, int>> brute_force_differences(const GridArray& a) {
    std::set<std::pair<int, int>> d;
    for (const auto& p : a.elements)
        for (const auto& q : a.elements) d.insert({p.x - q.x, p.y - q.y});
    return d;
}

GridArray named(GeometryKind kind, std::uint64_t seed = 1) {
    GeometryParams p;
    p.seed = seed;
    return make_geometry(kind, p);
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("full URA fills the master grid") {
    const auto a = named(GeometryKind::Ura);
    CHECK(a.size() == 64);
    std::set<GridPoint> cells(a.elements.begin(), a.elements.end());
    for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y) CHECK(cells.count({x, y}) == 1);
}

TEST_CASE("reduced 5x5 URA has 25 elements") {
    const auto a = named(GeometryKind::Ura5x5);
    CHECK(a.size() == 25);
    for (const auto& e : a.elements) {
        CHECK(e.x <= 4);
        CHECK(e.y <= 4);
    }
}

TEST_CASE("random layout is deterministic per seed") {
    GeometryParams p;
    p.random_count = 16;
    p.seed = 7;
    const auto a = make_geometry(GeometryKind::Random, p);
    const auto b = make_geometry(GeometryKind::Random, p);
    CHECK(a.elements == b.elements);
    CHECK(a.size() == 16);
    p.seed = 8;
    CHECK(make_geometry(GeometryKind::Random, p).elements != a.elements);
}

TEST_CASE("construction rejects bad parameters") {
    CHECK_THROWS_AS(parse_geometry_kind("hexagonal"), InvalidArgument);
    GeometryParams p;
    p.random_count = 65;
    CHECK_THROWS_AS(make_geometry(GeometryKind::Random, p), InvalidArgument);
    p = {};
    p.coprime_a = 2;
    p.coprime_b = 4;
    CHECK_THROWS_AS(make_geometry(GeometryKind::Coprime, p), InvalidArgument);
    p = {};
    p.nx = 9;
    CHECK_THROWS_AS(make_geometry(GeometryKind::Ura, p), InvalidArgument);
    GridArray bad;
    bad.pitch_m = 0.01;
    bad.elements = {{0, 0}, {0, 0}};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad.elements = {{0, 0}, {8, 0}};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad.elements = {{0, 0}};
    bad.pitch_m = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("2x2 URA difference set is the full 3x3 box") {
    GeometryParams p;
    p.nx = 2;
    p.ny = 2;
    const auto co = difference_coarray(make_geometry(GeometryKind::Ura, p));
    CHECK(co.differences.size() == 9);
    CHECK(co.hole_free.size() == 9);
    for (int x = -1; x <= 1; ++x)
        for (int y = -1; y <= 1; ++y) CHECK(co.contains({x, y}));
}

TEST_CASE("full URA co-array is hole free with the closed-form size") {
    for (auto [nx, ny] : {std::pair{3, 5}, {8, 8}, {4, 2}}) {
        GeometryParams p;
        p.nx = nx;
        p.ny = ny;
        const auto co = difference_coarray(make_geometry(GeometryKind::Ura, p));
        CHECK(static_cast<int>(co.differences.size()) == (2 * nx - 1) * (2 * ny - 1));
        CHECK(co.hole_free.size() == co.differences.size());
    }
}

TEST_CASE("single element collapses to the origin") {
    GridArray a;
    a.name = "single";
    a.pitch_m = 0.01;
    a.elements = {{3, 3}};
    const auto co = difference_coarray(a);
    CHECK(co.differences.size() == 1);
    CHECK(co.contains({0, 0}));
}

TEST_CASE("difference set matches the brute-force oracle for every kind") {
    for (auto kind : {GeometryKind::Ura, GeometryKind::Ura5x5, GeometryKind::Nested,
                      GeometryKind::Billboard, GeometryKind::OpenBox, GeometryKind::Coprime,
                      GeometryKind::Random}) {
        const auto a = named(kind, 11);
        const auto co = difference_coarray(a);
        const auto oracle = brute_force_differences(a);
        REQUIRE(co.differences.size() == oracle.size());
        for (const auto& d : co.differences) CHECK(oracle.count({d.x, d.y}) == 1);
    }
}

TEST_CASE("co-array symmetry and hole-free containment") {
    for (std::uint64_t seed : {1, 2, 3, 4}) {
        GeometryParams p;
        p.seed = seed;
        p.random_count = 12;
        const auto co = difference_coarray(make_geometry(GeometryKind::Random, p));
        for (const auto& d : co.differences) CHECK(co.contains({-d.x, -d.y}));
        CHECK(co.contains({0, 0}));
        for (int x = -co.half_x; x <= co.half_x; ++x)
            for (int y = -co.half_y; y <= co.half_y; ++y) CHECK(co.contains({x, y}));
        for (const auto& h : co.hole_free) CHECK(co.contains(h));
    }
}

TEST_CASE("sparse layouts reach their designed virtual extents") {
    CHECK(difference_coarray(named(GeometryKind::Nested)).virtual_extent_x() == 11);
    CHECK(difference_coarray(named(GeometryKind::Nested)).virtual_extent_y() == 11);
    CHECK(difference_coarray(named(GeometryKind::OpenBox)).virtual_extent_x() == 11);
    const auto bb = difference_coarray(named(GeometryKind::Billboard));
    CHECK(bb.virtual_extent_x() == 15);
    CHECK(bb.virtual_extent_y() == 9);
    CHECK(named(GeometryKind::Nested).size() == 16);
    CHECK(named(GeometryKind::OpenBox).size() == 16);
    CHECK(named(GeometryKind::Billboard).size() == 16);
    CHECK(named(GeometryKind::Coprime).size() == 16);
}

TEST_CASE("smoothing plan enumerates window offsets") {
    GeometryParams p;
    p.nx = 2;
    p.ny = 2;
    const auto co = difference_coarray(make_geometry(GeometryKind::Ura, p));  // 3x3 virtual
    CHECK(smoothing_plan(co, 2, 2).offsets.size() == 4);
    CHECK_THROWS_AS(smoothing_plan(co, 4, 4), InvalidArgument);

    const auto big = difference_coarray(named(GeometryKind::Ura));  // 15x15 virtual
    const auto plan = smoothing_plan(big, 8, 8);
    CHECK(plan.offsets.size() == 64);
    CHECK(plan.offsets.size() ==
          static_cast<std::size_t>((plan.virtual_x - plan.window_x + 1) *
                                   (plan.virtual_y - plan.window_y + 1)));
    const auto [wx, wy] = default_window(big);
    CHECK(wx == 8);
    CHECK(wy == 8);
}

}  // TEST_SUITE
