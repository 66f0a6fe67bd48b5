#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hfc/common.hpp"
#include "hfc/features.hpp"
#include "hfc/hilbert.hpp"
#include "hfc/volume.hpp"

namespace hfc {

/// Synthetic cohort description. Intensity defaults reproduce the published
/// cohort statistics (global mean/std and the share of voxels between
/// 10,000 and 14,000); separation in [0,1] scales how differently the
/// classes mix the latent region factors (0 = identically distributed).
struct SynthSpec {
    int n_per_class = 10;
    std::vector<std::string> classes = {"CN", "AD"};
    int r_regions = 90;
    int half_length = 50;  // segment length 2h+1
    int curve_order = 6;
    int grid_nx = 53, grid_ny = 63, grid_nz = 52;
    int nt = 164;
    double tr_seconds = 3.0;
    double intensity_mean = 12692.0;
    double intensity_std = 2155.0;
    double separation = 1.0;
    std::uint64_t master_seed = 1;

    // How intensity_std^2 splits across components: a cohort-wide spatial
    // profile (survives subject averaging), a per-subject latent-factor
    // profile (carries the class signal), a per-subject global offset, and
    // iid residue making up the rest.
    double sigma_base = 1560.0;
    double sigma_signal = 800.0;
    double sigma_subject = 400.0;

    double temporal_amp = 300.0;  // zero-mean course + voxel noise, equal parts
    double signal_frac = 0.8;     // latent share of direct matrix arrays
    int factors = 6;
    double voxel_mm = 3.0;

    int subject_count() const { return int(classes.size()) * n_per_class; }
    int segment_length() const { return 2 * half_length + 1; }
};

struct LabeledVolume {
    Volume4D vol;
    std::string label;
    std::string subject_id;
};

/// Disjoint in-grid segments: a full pass over the curve collects every
/// center whose segment stays inside the data grid, packed at stride
/// 2h+1, then a seeded subset of r_regions is kept in curve order.
SeedAtlas gen_seed_atlas(const SynthSpec& spec, const HilbertCurve& curve);

/// Deterministic cohort factory. Cohort-level draws (shared spatial
/// profile, class mixing weights) happen once at construction; each
/// subject then consumes an independent derived stream, so subjects can
/// be produced in any order or in parallel.
class CohortGenerator {
public:
    explicit CohortGenerator(SynthSpec spec);

    const SynthSpec& spec() const { return spec_; }
    const HilbertCurve& curve() const { return curve_; }
    const SeedAtlas& atlas() const { return atlas_; }
    const std::vector<RoiSegment>& segments() const { return segments_; }
    GridOffset cube_to_grid() const { return offset_; }

    int subject_count() const { return spec_.subject_count(); }
    int class_of(int subject) const;
    const std::string& label_of(int subject) const;
    std::string subject_id(int subject) const;

    /// Full time series: constant background voxels, region segments carry
    /// the calibrated intensity profile plus zero-mean temporal structure.
    LabeledVolume gen_volume(int subject) const;

    /// The subject's time-averaged volume, produced without materializing
    /// frames. Matches the 4D path's time average to floating-point
    /// rounding (the temporal structure is demeaned, so only accumulation
    /// residue of order 1e-10 remains).
    Volume3D gen_average_volume(int subject) const;

    /// Direct correlation matrix from latent-factor region arrays, routed
    /// through the standard matrix construction so every invariant holds.
    CorrelationMatrix gen_matrix(int subject) const;

private:
    SynthSpec spec_;
    HilbertCurve curve_;
    SeedAtlas atlas_;
    std::vector<RoiSegment> segments_;
    GridOffset offset_;
    double sigma_delta_ = 0.0;
    std::vector<std::vector<double>> base_;     // [R][L] shared spatial profile
    std::vector<std::vector<std::vector<double>>> weights_;  // [class][R][F], unit rows

    Rng subject_stream(int subject) const;
    // Region intensity profiles; consumes the subject offset, factor
    // patterns and residue from rng, in that order.
    std::vector<std::vector<double>> subject_vi(Rng& rng, int cls) const;
};

std::vector<LabeledVolume> gen_cohort_volumes(const SynthSpec& spec);
std::vector<CorrelationMatrix> gen_cohort_matrices(const SynthSpec& spec);

}  // namespace hfc
