#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hfc/hilbert.hpp"
#include "hfc/volume.hpp"

namespace hfc {

/// Region seed table: ordered (id, name, seed coordinate) triples with the
/// seed given in curve-cube voxel coordinates.
struct SeedAtlas {
    struct Region {
        int id = 0;
        std::string name;
        Coord3 seed;
    };
    std::vector<Region> regions;
};

/// Parse a delimited text atlas: one region per line, "id,name,x,y,z"
/// (comma or tab separated), optional header line. Rejects duplicate ids
/// and seeds outside the cube of side `cube_side`.
SeedAtlas load_seed_atlas(const std::string& path, int cube_side = 64);
void write_seed_atlas(const SeedAtlas& atlas, const std::string& path);

/// A contiguous curve segment of 2*half_length+1 voxels centered on a seed.
struct RoiSegment {
    int region_id = 0;
    std::uint64_t seed_index = 0;
    int half_length = 0;
    std::vector<Coord3> voxels;  // in curve order, seed at the center

    std::uint64_t first_index() const { return seed_index - half_length; }
    std::uint64_t last_index() const { return seed_index + half_length; }
    int length() const { return 2 * half_length + 1; }
};

RoiSegment extract_segment(const HilbertCurve& curve, const Coord3& seed, int half_length,
                           int region_id = 0);
std::vector<RoiSegment> extract_segments(const HilbertCurve& curve, const SeedAtlas& atlas,
                                         int half_length);

/// Pairwise curve-index interval intersections. Empty iff all segments are
/// disjoint; overlap is reported, not treated as a failure.
struct OverlapReport {
    struct Pair {
        int region_a = 0;
        int region_b = 0;
        std::uint64_t shared_voxels = 0;
    };
    std::vector<Pair> pairs;
    bool empty() const { return pairs.empty(); }
};

OverlapReport check_overlaps(const std::vector<RoiSegment>& segments);

/// Placement of the data grid inside the curve cube: cube = grid + offset.
struct GridOffset {
    int x = 0, y = 0, z = 0;

    static GridOffset centered(int cube_side, int nx, int ny, int nz) {
        return {(cube_side - nx) / 2, (cube_side - ny) / 2, (cube_side - nz) / 2};
    }
};

/// Segment voxel values read from a time-averaged volume in curve order.
std::vector<double> roi_signal_array(const Volume3D& avg, const RoiSegment& segment,
                                     const GridOffset& cube_to_grid);

/// Sample Pearson correlation (divisor N-1, so self-correlation is exactly 1),
/// clamped to [-1, 1]. A zero-variance input yields 0 and sets *degenerate.
double pearson_spatial(std::span<const double> v, std::span<const double> w,
                       bool* degenerate = nullptr);

/// Symmetric region-by-region correlation matrix; the feature fed to the CNNs.
struct CorrelationMatrix {
    int r = 0;
    std::vector<double> values;  // r*r, row-major
    std::string subject_id;
    std::string label;  // CN | AD | MCI
    int half_length = 0;
    std::vector<int> degenerate_regions;  // indices of zero-variance arrays

    double& at(int j, int k) { return values[std::size_t(j) * r + k]; }
    double at(int j, int k) const { return values[std::size_t(j) * r + k]; }
};

/// All-pairs spatial correlation of the region arrays. Upper triangle is
/// computed and mirrored; the diagonal is set to exactly 1.
CorrelationMatrix correlation_matrix(const std::vector<std::vector<double>>& arrays,
                                     const std::string& subject_id, const std::string& label);

/// CSV of r rows of r full-precision values; metadata goes to a sidecar
/// `<stem>.meta` file (subject_id, label, half_length, degenerate flags).
void write_matrix_csv(const CorrelationMatrix& m, const std::string& path);
CorrelationMatrix read_matrix_csv(const std::string& path);

/// Pairwise time correlation of the segment's voxel series (region
/// homogeneity basis). Constant series follow the zero-variance rule:
/// their rows/columns (diagonal included) are 0 and the voxel index is
/// appended to *degenerate.
std::vector<std::vector<double>> reho_pairwise(const Volume4D& vol, const RoiSegment& segment,
                                               const GridOffset& cube_to_grid,
                                               std::vector<int>* degenerate = nullptr);

/// Mean over all ordered voxel pairs, diagonal included (divisor size^2).
double reho_region(const std::vector<std::vector<double>>& pc);

/// Row/column means and spreads of a subjects-by-regions homogeneity table.
/// Spreads are reported two ways: "literal" places 1/n outside the radical,
/// "sample" is the conventional sqrt(sum/(n-1)) (0 when n < 2).
struct RehoSummary {
    std::vector<double> subject_mean;
    std::vector<double> subject_std_literal;
    std::vector<double> subject_std_sample;
    std::vector<double> region_mean;
    std::vector<double> region_std_literal;
    std::vector<double> region_std_sample;
};

RehoSummary reho_summary(const std::vector<std::vector<double>>& table);

}  // namespace hfc
