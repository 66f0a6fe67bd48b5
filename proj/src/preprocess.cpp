#include "hfc/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>

#include "hfc/common.hpp"

namespace hfc {

namespace {

void require_grid(const Volume3D& v, const char* what) {
    if (v.nx < 1 || v.ny < 1 || v.nz < 1) throw config_error(std::string(what) + ": empty volume");
    if (v.data.size() != v.size()) throw config_error(std::string(what) + ": data size mismatch");
}

void require_grid(const Volume4D& v, const char* what) {
    if (v.nx < 1 || v.ny < 1 || v.nz < 1 || v.nt < 1)
        throw config_error(std::string(what) + ": empty volume");
    if (v.data.size() != v.size()) throw config_error(std::string(what) + ": data size mismatch");
}

// Linear interpolation of a series at fractional sample position p,
// clamped at both ends. Integer p reproduces the stored value exactly.
double sample_series(const double* s, int n, double p) {
    if (p <= 0.0) return s[0];
    if (p >= double(n - 1)) return s[n - 1];
    double fl = std::floor(p);
    int i = int(fl);
    double frac = p - fl;
    if (frac == 0.0) return s[i];
    return s[i] + frac * (s[i + 1] - s[i]);
}

std::vector<double> gaussian_taps(double sigma_vox) {
    int radius = int(std::floor(4.0 * sigma_vox));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int d = -radius; d <= radius; ++d) {
        double w = std::exp(-0.5 * (double(d) * d) / (sigma_vox * sigma_vox));
        taps[std::size_t(d + radius)] = w;
        sum += w;
    }
    for (double& w : taps) w /= sum;
    return taps;
}

// One separable pass along `axis` with replicate-edge clamping.
void smooth_axis(std::vector<double>& data, int nx, int ny, int nz, int axis,
                 const std::vector<double>& taps) {
    int radius = (int(taps.size()) - 1) / 2;
    if (radius == 0) return;
    int dims[3] = {nx, ny, nz};
    std::int64_t strides[3] = {1, nx, std::int64_t(nx) * ny};
    int n = dims[axis];
    std::int64_t stride = strides[axis];
    int ou = dims[axis == 0 ? 1 : 0];
    int ov = dims[axis == 2 ? 1 : 2];
    std::int64_t su = strides[axis == 0 ? 1 : 0];
    std::int64_t sv = strides[axis == 2 ? 1 : 2];
    std::vector<double> line(static_cast<std::size_t>(n));
    for (int v = 0; v < ov; ++v) {
        for (int u = 0; u < ou; ++u) {
            double* base = data.data() + su * u + sv * v;
            for (int i = 0; i < n; ++i) line[std::size_t(i)] = base[stride * i];
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int d = -radius; d <= radius; ++d) {
                    int j = std::clamp(i + d, 0, n - 1);
                    acc += taps[std::size_t(d + radius)] * line[std::size_t(j)];
                }
                base[stride * i] = acc;
            }
        }
    }
}

int hist_bin(double v, double lo, double width, int nbins) {
    int b = int(std::floor((v - lo) / width));
    return std::clamp(b, 0, nbins - 1);
}

}  // namespace

double fwhm_to_sigma_mm(double fwhm_mm) {
    if (!(fwhm_mm > 0.0)) throw config_error("fwhm must be positive");
    return fwhm_mm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
}

Volume4D slice_time_correct(const Volume4D& vol, int slice_axis) {
    require_grid(vol, "slice_time_correct");
    if (slice_axis < 0 || slice_axis > 2)
        throw config_error("slice_time_correct: slice_axis must be 0, 1 or 2");
    if (!(vol.tr_seconds > 0.0))
        throw data_error("slice_time_correct: repetition time must be positive");

    int dims[3] = {vol.nx, vol.ny, vol.nz};
    int nslices = dims[slice_axis];
    int nt = vol.nt;
    Volume4D out = vol;

    // Shift for slice k (1-based), in sample units; TR cancels out of
    // (N/2 + 1 - k) * TR / N once expressed as a fraction of TR.
    std::vector<double> shift(static_cast<std::size_t>(nslices));
    for (int k = 1; k <= nslices; ++k)
        shift[std::size_t(k - 1)] = (double(nslices) / 2.0 + 1.0 - double(k)) / double(nslices);

    std::vector<double> series(static_cast<std::size_t>(nt));
    std::size_t fsize = vol.frame_size();
    for (int z = 0; z < vol.nz; ++z) {
        for (int y = 0; y < vol.ny; ++y) {
            for (int x = 0; x < vol.nx; ++x) {
                int slice = slice_axis == 0 ? x : slice_axis == 1 ? y : z;
                double s = shift[std::size_t(slice)];
                std::size_t voxel = vol.idx(x, y, z, 0);
                if (s == 0.0) continue;  // out already holds the input copy
                for (int t = 0; t < nt; ++t) series[std::size_t(t)] = vol.data[voxel + fsize * std::size_t(t)];
                for (int t = 0; t < nt; ++t)
                    out.data[voxel + fsize * std::size_t(t)] =
                        sample_series(series.data(), nt, double(t) + s);
            }
        }
    }
    return out;
}

Volume3D gaussian_smooth(const Volume3D& vol, double fwhm_mm) {
    require_grid(vol, "gaussian_smooth");
    double sigma_mm = fwhm_to_sigma_mm(fwhm_mm);
    Volume3D out = vol;
    for (int axis = 0; axis < 3; ++axis) {
        double mm = vol.voxel_mm[std::size_t(axis)];
        if (!(mm > 0.0)) throw data_error("gaussian_smooth: voxel size must be positive");
        smooth_axis(out.data, out.nx, out.ny, out.nz, axis, gaussian_taps(sigma_mm / mm));
    }
    return out;
}

Volume4D gaussian_smooth(const Volume4D& vol, double fwhm_mm) {
    require_grid(vol, "gaussian_smooth");
    double sigma_mm = fwhm_to_sigma_mm(fwhm_mm);
    std::vector<std::vector<double>> taps;
    for (int axis = 0; axis < 3; ++axis) {
        double mm = vol.voxel_mm[std::size_t(axis)];
        if (!(mm > 0.0)) throw data_error("gaussian_smooth: voxel size must be positive");
        taps.push_back(gaussian_taps(sigma_mm / mm));
    }
    Volume4D out = vol;
    std::size_t fsize = vol.frame_size();
    std::vector<double> frame(fsize);
    for (int t = 0; t < vol.nt; ++t) {
        auto begin = out.data.begin() + std::ptrdiff_t(fsize * std::size_t(t));
        std::copy(begin, begin + std::ptrdiff_t(fsize), frame.begin());
        for (int axis = 0; axis < 3; ++axis)
            smooth_axis(frame, out.nx, out.ny, out.nz, axis, taps[std::size_t(axis)]);
        std::copy(frame.begin(), frame.end(), begin);
    }
    return out;
}

Volume3D time_average(const Volume4D& vol) {
    require_grid(vol, "time_average");
    Volume3D out;
    out.nx = vol.nx;
    out.ny = vol.ny;
    out.nz = vol.nz;
    out.voxel_mm = vol.voxel_mm;
    std::size_t fsize = vol.frame_size();
    out.data.assign(fsize, 0.0);
    for (int t = 0; t < vol.nt; ++t) {
        const double* frame = vol.data.data() + fsize * std::size_t(t);
        for (std::size_t i = 0; i < fsize; ++i) out.data[i] += frame[i];
    }
    for (double& v : out.data) v /= double(vol.nt);
    return out;
}

double nmi(const Volume3D& a, const Volume3D& b, int bins) {
    require_grid(a, "nmi");
    require_grid(b, "nmi");
    if (a.nx != b.nx || a.ny != b.ny || a.nz != b.nz)
        throw data_error("nmi: volume dimensions differ");
    if (bins < 2) throw config_error("nmi: bins must be at least 2");

    auto [amin_it, amax_it] = std::minmax_element(a.data.begin(), a.data.end());
    auto [bmin_it, bmax_it] = std::minmax_element(b.data.begin(), b.data.end());
    double amin = *amin_it, arange = *amax_it - *amin_it;
    double bmin = *bmin_it, brange = *bmax_it - *bmin_it;
    if (arange == 0.0 || brange == 0.0)
        throw data_error("nmi: volume has zero intensity range, histogram is degenerate");

    std::vector<std::uint64_t> joint(std::size_t(bins) * std::size_t(bins), 0);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        int ba = std::min(int((a.data[i] - amin) / arange * bins), bins - 1);
        int bb = std::min(int((b.data[i] - bmin) / brange * bins), bins - 1);
        ++joint[std::size_t(ba) * std::size_t(bins) + std::size_t(bb)];
    }

    double n = double(a.data.size());
    std::vector<double> pa(std::size_t(bins), 0.0), pb(std::size_t(bins), 0.0);
    double hxy = 0.0;
    for (int i = 0; i < bins; ++i) {
        for (int j = 0; j < bins; ++j) {
            std::uint64_t c = joint[std::size_t(i) * std::size_t(bins) + std::size_t(j)];
            if (c == 0) continue;
            double p = double(c) / n;
            pa[std::size_t(i)] += p;
            pb[std::size_t(j)] += p;
            hxy -= p * std::log(p);
        }
    }
    double hx = 0.0, hy = 0.0;
    for (int i = 0; i < bins; ++i) {
        if (pa[std::size_t(i)] > 0.0) hx -= pa[std::size_t(i)] * std::log(pa[std::size_t(i)]);
        if (pb[std::size_t(i)] > 0.0) hy -= pb[std::size_t(i)] * std::log(pb[std::size_t(i)]);
    }
    return (hx + hy - hxy) / std::sqrt(hx * hy);
}

CohortStats cohort_stats(const std::vector<Volume3D>& averaged_subjects,
                         const std::vector<RoiSegment>& segments, const GridOffset& cube_to_grid,
                         double hist_bin_width, double hist_lo, double hist_hi) {
    if (averaged_subjects.empty()) throw config_error("cohort_stats: no subjects");
    if (segments.empty()) throw config_error("cohort_stats: no segments");
    if (!(hist_bin_width > 0.0) || !(hist_hi > hist_lo))
        throw config_error("cohort_stats: invalid histogram range");
    const Volume3D& first = averaged_subjects.front();
    for (const Volume3D& v : averaged_subjects) {
        require_grid(v, "cohort_stats");
        if (v.nx != first.nx || v.ny != first.ny || v.nz != first.nz)
            throw data_error("cohort_stats: subject volume dimensions differ");
    }

    std::size_t s_count = averaged_subjects.size();
    CohortStats st;
    st.subjects = int(s_count);
    st.hist_lo = hist_lo;
    st.hist_width = hist_bin_width;
    int nbins = int(std::llround((hist_hi - hist_lo) / hist_bin_width));
    if (nbins < 1) throw config_error("cohort_stats: histogram needs at least one bin");
    st.hist_counts.assign(std::size_t(nbins), 0);

    double vi_sum = 0.0, vi_sumsq = 0.0;
    double si_sum = 0.0, si_sumsq = 0.0;
    std::uint64_t vi_n = 0, si_n = 0;

    for (const RoiSegment& seg : segments) {
        std::vector<double> acc(std::size_t(seg.length()), 0.0);
        for (const Volume3D& subj : averaged_subjects) {
            std::vector<double> vals = roi_signal_array(subj, seg, cube_to_grid);
            for (std::size_t i = 0; i < vals.size(); ++i) {
                acc[i] += vals[i];
                vi_sum += vals[i];
                vi_sumsq += vals[i] * vals[i];
            }
            vi_n += vals.size();
            double seed = vals[std::size_t(seg.half_length)];
            si_sum += seed;
            si_sumsq += seed * seed;
            ++si_n;
        }
        for (double& v : acc) v /= double(s_count);
        for (double v : acc) ++st.hist_counts[std::size_t(hist_bin(v, hist_lo, hist_bin_width, nbins))];
        st.region_ids.push_back(seg.region_id);
        st.si_sa.push_back(acc[std::size_t(seg.half_length)]);
        st.vi_sa.push_back(std::move(acc));
    }

    st.vi_samples = vi_n;
    st.vi_mean = vi_sum / double(vi_n);
    st.vi_std = std::sqrt(std::max(0.0, vi_sumsq / double(vi_n) - st.vi_mean * st.vi_mean));
    st.si_mean = si_sum / double(si_n);
    st.si_std = std::sqrt(std::max(0.0, si_sumsq / double(si_n) - st.si_mean * st.si_mean));
    return st;
}

void write_cohort_stats_csv(const CohortStats& stats, const std::string& prefix) {
    {
        std::ofstream f(prefix + "stats.csv");
        if (!f) throw io_error("cannot open " + prefix + "stats.csv for writing");
        f << "key,value\n";
        f << "subjects," << stats.subjects << "\n";
        f << "regions," << stats.region_ids.size() << "\n";
        f << "vi_samples," << stats.vi_samples << "\n";
        f << "vi_mean," << g17(stats.vi_mean) << "\n";
        f << "vi_std," << g17(stats.vi_std) << "\n";
        f << "si_mean," << g17(stats.si_mean) << "\n";
        f << "si_std," << g17(stats.si_std) << "\n";
        if (!f) throw io_error("failed writing " + prefix + "stats.csv");
    }
    {
        std::ofstream f(prefix + "histogram.csv");
        if (!f) throw io_error("cannot open " + prefix + "histogram.csv for writing");
        f << "bin_lo,bin_hi,count\n";
        for (std::size_t i = 0; i < stats.hist_counts.size(); ++i) {
            double lo = stats.hist_lo + stats.hist_width * double(i);
            f << g17(lo) << "," << g17(lo + stats.hist_width) << "," << stats.hist_counts[i]
              << "\n";
        }
        if (!f) throw io_error("failed writing " + prefix + "histogram.csv");
    }
    {
        std::ofstream f(prefix + "regions.csv");
        if (!f) throw io_error("cannot open " + prefix + "regions.csv for writing");
        f << "region_id,si_sa,vi_sa_mean\n";
        for (std::size_t j = 0; j < stats.region_ids.size(); ++j) {
            double mean = 0.0;
            for (double v : stats.vi_sa[j]) mean += v;
            mean /= double(stats.vi_sa[j].size());
            f << stats.region_ids[j] << "," << g17(stats.si_sa[j]) << "," << g17(mean) << "\n";
        }
        if (!f) throw io_error("failed writing " + prefix + "regions.csv");
    }
}

}  // namespace hfc
