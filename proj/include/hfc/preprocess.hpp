#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hfc/features.hpp"
#include "hfc/volume.hpp"

namespace hfc {

/// FWHM (mm) to Gaussian sigma (mm): fwhm / (2 * sqrt(2 * ln 2)).
double fwhm_to_sigma_mm(double fwhm_mm);

/// Temporal realignment to the acquisition midpoint. Slices are indexed
/// along `slice_axis` (0=x, 1=y, 2=z); slice k (1-based) acquired in
/// ascending order is shifted by (N/2 + 1 - k) * TR / N seconds. Each voxel
/// series is resampled by linear interpolation with clamped ends; the
/// zero-shift slice (k = N/2 + 1 when N is even) is copied bit-for-bit.
Volume4D slice_time_correct(const Volume4D& vol, int slice_axis = 2);

/// Separable Gaussian blur with per-axis sigma derived from voxel size,
/// kernel truncated at floor(4*sigma) taps each side and renormalized,
/// replicate-edge boundary handling.
Volume3D gaussian_smooth(const Volume3D& vol, double fwhm_mm);
Volume4D gaussian_smooth(const Volume4D& vol, double fwhm_mm);

/// Per-voxel mean across frames.
Volume3D time_average(const Volume4D& vol);

/// Normalized mutual information I(X,Y)/sqrt(H(X)*H(Y)) in nats, from a
/// joint histogram with `bins` equal-width bins per volume spanning each
/// volume's own [min, max]. A zero intensity range is a data error.
double nmi(const Volume3D& a, const Volume3D& b, int bins = 64);

/// Cohort-level descriptive statistics over region segments of
/// time-averaged volumes.
struct CohortStats {
    std::vector<int> region_ids;               // R entries
    std::vector<std::vector<double>> vi_sa;    // [R][segment length], mean across subjects
    std::vector<double> si_sa;                 // [R], seed-voxel mean across subjects
    double vi_mean = 0.0;                      // over all (subject, region, voxel) samples
    double vi_std = 0.0;                       // population std of the same samples
    double si_mean = 0.0;                      // over all (subject, region) seed samples
    double si_std = 0.0;
    int subjects = 0;
    std::uint64_t vi_samples = 0;              // subjects * total segment voxels
    double hist_lo = 0.0;
    double hist_width = 0.0;
    std::vector<std::uint64_t> hist_counts;    // over vi_sa values; ends absorb out-of-range
};

/// Averages voxel and seed intensities across subjects per region, then
/// histograms the subject-averaged voxel values (default bins of width
/// 1,000 over [0, 30,000]; values outside clamp into the end bins so
/// counts always sum to the sample count).
CohortStats cohort_stats(const std::vector<Volume3D>& averaged_subjects,
                         const std::vector<RoiSegment>& segments,
                         const GridOffset& cube_to_grid, double hist_bin_width = 1000.0,
                         double hist_lo = 0.0, double hist_hi = 30000.0);

/// Writes `<prefix>stats.csv` (key,value), `<prefix>histogram.csv`
/// (bin_lo,bin_hi,count) and `<prefix>regions.csv` (per-region means).
void write_cohort_stats_csv(const CohortStats& stats, const std::string& prefix);

}  // namespace hfc
