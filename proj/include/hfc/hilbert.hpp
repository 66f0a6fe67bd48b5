#pragma once

#include <array>
#include <cstdint>

#include "hfc/common.hpp"

namespace hfc {

struct Coord3 {
    int x = 0, y = 0, z = 0;
    friend bool operator==(const Coord3&, const Coord3&) = default;
};

/// 3D Hilbert curve over a cube of side 2^order.
///
/// index_to_coord / coord_to_index are mutually inverse bijections between
/// [0, side^3) and the cube's integer coordinates, and consecutive indices
/// map to L1-adjacent coordinates. The orientation is fixed: the curve
/// starts at (0,0,0) and is defined by the Skilling transpose transform
/// with x as the most significant axis. Mappings are computed on the fly
/// in O(order) per query; instances are immutable and thread-safe.
class HilbertCurve {
  public:
    explicit HilbertCurve(int order);

    int order() const { return order_; }
    int side() const { return side_; }
    std::uint64_t total_cells() const { return total_; }

    Coord3 index_to_coord(std::uint64_t h) const;
    std::uint64_t coord_to_index(int x, int y, int z) const;
    std::uint64_t coord_to_index(const Coord3& c) const { return coord_to_index(c.x, c.y, c.z); }

    bool contains(int x, int y, int z) const {
        return x >= 0 && x < side_ && y >= 0 && y < side_ && z >= 0 && z < side_;
    }
    bool contains(const Coord3& c) const { return contains(c.x, c.y, c.z); }

  private:
    int order_;
    int side_;
    std::uint64_t total_;
};

inline HilbertCurve build_curve(int order) { return HilbertCurve(order); }

}  // namespace hfc
