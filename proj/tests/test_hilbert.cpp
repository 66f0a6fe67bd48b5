#include <cstdint>
#include <cstdlib>
#include <vector>

#include "doctest.h"
#include "hfc/common.hpp"
#include "hfc/hilbert.hpp"

using namespace hfc;

namespace {
int l1_dist(const Coord3& a, const Coord3& b) {
    return std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.z - b.z);
}
}  // namespace

TEST_CASE("curve geometry constants") {
    HilbertCurve c(6);
    CHECK(c.order() == 6);
    CHECK(c.side() == 64);
    CHECK(c.total_cells() == 262144);
    CHECK(HilbertCurve(1).total_cells() == 8);
}

TEST_CASE("curve starts at the origin") {
    for (int order = 1; order <= 6; ++order) {
        HilbertCurve c(order);
        Coord3 first = c.index_to_coord(0);
        CHECK(first == Coord3{0, 0, 0});
    }
}

TEST_CASE("exhaustive round trip at low orders") {
    for (int order = 1; order <= 4; ++order) {
        HilbertCurve c(order);
        for (std::uint64_t h = 0; h < c.total_cells(); ++h) {
            Coord3 p = c.index_to_coord(h);
            CHECK(c.contains(p));
            REQUIRE(c.coord_to_index(p) == h);
        }
    }
}

TEST_CASE("consecutive indices are face neighbors") {
    for (int order = 1; order <= 4; ++order) {
        HilbertCurve c(order);
        Coord3 prev = c.index_to_coord(0);
        for (std::uint64_t h = 1; h < c.total_cells(); ++h) {
            Coord3 cur = c.index_to_coord(h);
            REQUIRE(l1_dist(prev, cur) == 1);
            prev = cur;
        }
    }
}

TEST_CASE("order 5 bijection via visit bitmap") {
    HilbertCurve c(5);
    std::vector<bool> seen(c.total_cells(), false);
    for (std::uint64_t h = 0; h < c.total_cells(); ++h) {
        Coord3 p = c.index_to_coord(h);
        std::uint64_t flat =
            std::uint64_t(p.x) + 32ull * (std::uint64_t(p.y) + 32ull * std::uint64_t(p.z));
        REQUIRE(!seen[flat]);
        seen[flat] = true;
    }
}

TEST_CASE("spot inverse at order 6") {
    HilbertCurve c(6);
    Rng rng(42);
    for (int i = 0; i < 20000; ++i) {
        std::uint64_t h = rng.uniform_int(c.total_cells());
        CHECK(c.coord_to_index(c.index_to_coord(h)) == h);
    }
}

TEST_CASE("invalid construction arguments") {
    CHECK_THROWS_AS(HilbertCurve(0), config_error);
    CHECK_THROWS_AS(HilbertCurve(-2), config_error);
    CHECK_THROWS_AS(HilbertCurve(22), config_error);
}

TEST_CASE("out-of-cube coordinate rejected") {
    HilbertCurve c(2);
    CHECK_THROWS_AS(c.coord_to_index(4, 0, 0), bounds_error);
    CHECK_THROWS_AS(c.coord_to_index(0, -1, 0), bounds_error);
    CHECK_THROWS_AS(c.index_to_coord(64), bounds_error);
}
