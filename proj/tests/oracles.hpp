#pragma once

// Naive definitional reference implementations, kept deliberately slow and
// structurally unlike the library code (full kernels, per-pair recomputation,
// no caching). Tests compare library output against these.

#include <cmath>
#include <vector>

#include "hfc/features.hpp"
#include "hfc/volume.hpp"

namespace oracles {

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

// Textbook sample correlation with explicit N-1 normalization.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double amin = a[0], amax = a[0], bmin = b[0], bmax = b[0];
    for (std::size_t i = 0; i < n; ++i) {
        amin = std::min(amin, a[i]);
        amax = std::max(amax, a[i]);
        bmin = std::min(bmin, b[i]);
        bmax = std::max(bmax, b[i]);
    }
    if (amin == amax || bmin == bmax) return 0.0;
    double ma = mean_of(a), mb = mean_of(b);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (a[i] - ma) * (b[i] - mb) / double(n - 1);
        va += (a[i] - ma) * (a[i] - ma) / double(n - 1);
        vb += (b[i] - mb) * (b[i] - mb) / double(n - 1);
    }
    double r = cov / std::sqrt(va * vb);
    return std::min(1.0, std::max(-1.0, r));
}

inline std::vector<double> voxel_series(const hfc::Volume4D& vol, int x, int y, int z) {
    std::vector<double> s(std::size_t(vol.nt), 0.0);
    for (int t = 0; t < vol.nt; ++t) s[std::size_t(t)] = vol.at(x, y, z, t);
    return s;
}

// Per-pair recomputation from scratch; self-pairs of non-constant series
// are exactly 1 by the same rule the library uses.
inline std::vector<std::vector<double>> reho_pairwise(const hfc::Volume4D& vol,
                                                      const hfc::RoiSegment& seg,
                                                      const hfc::GridOffset& off) {
    const std::size_t n = seg.voxels.size();
    std::vector<std::vector<double>> pc(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            auto a = voxel_series(vol, seg.voxels[i].x - off.x, seg.voxels[i].y - off.y,
                                  seg.voxels[i].z - off.z);
            auto b = voxel_series(vol, seg.voxels[j].x - off.x, seg.voxels[j].y - off.y,
                                  seg.voxels[j].z - off.z);
            if (i == j) {
                double lo = a[0], hi = a[0];
                for (double v : a) {
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                pc[i][j] = lo == hi ? 0.0 : 1.0;
            } else {
                pc[i][j] = pearson(a, b);
            }
        }
    }
    return pc;
}

inline double reho_region(const std::vector<std::vector<double>>& pc) {
    double s = 0.0;
    for (const auto& row : pc)
        for (double v : row) s += v;
    return s / (double(pc.size()) * double(pc.size()));
}

inline hfc::Volume3D time_average(const hfc::Volume4D& vol) {
    hfc::Volume3D out(vol.nx, vol.ny, vol.nz);
    out.voxel_mm = vol.voxel_mm;
    for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < vol.ny; ++y)
            for (int x = 0; x < vol.nx; ++x) {
                double s = 0.0;
                for (int t = 0; t < vol.nt; ++t) s += vol.at(x, y, z, t);
                out.at(x, y, z) = s / double(vol.nt);
            }
    return out;
}

// Full (non-separable) product-kernel convolution with replicate edges.
// The kernel is the outer product of the per-axis renormalized tap sets,
// so it must match the library's separable passes to rounding.
inline hfc::Volume3D gaussian_smooth(const hfc::Volume3D& vol, double fwhm_mm) {
    auto taps_for = [&](double voxel_mm) {
        double sigma = fwhm_mm / (2.0 * std::sqrt(2.0 * std::log(2.0))) / voxel_mm;
        int radius = int(std::floor(4.0 * sigma));
        std::vector<double> t(std::size_t(2 * radius + 1), 0.0);
        double sum = 0.0;
        for (int i = -radius; i <= radius; ++i) {
            double v = std::exp(-0.5 * (double(i) / sigma) * (double(i) / sigma));
            t[std::size_t(i + radius)] = v;
            sum += v;
        }
        for (double& v : t) v /= sum;
        return t;
    };
    auto tx = taps_for(vol.voxel_mm[0]);
    auto ty = taps_for(vol.voxel_mm[1]);
    auto tz = taps_for(vol.voxel_mm[2]);
    int rx = (int(tx.size()) - 1) / 2, ry = (int(ty.size()) - 1) / 2, rz = (int(tz.size()) - 1) / 2;
    auto clampi = [](int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
    hfc::Volume3D out(vol.nx, vol.ny, vol.nz);
    out.voxel_mm = vol.voxel_mm;
    for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < vol.ny; ++y)
            for (int x = 0; x < vol.nx; ++x) {
                double acc = 0.0;
                for (int dz = -rz; dz <= rz; ++dz)
                    for (int dy = -ry; dy <= ry; ++dy)
                        for (int dx = -rx; dx <= rx; ++dx) {
                            double w = tx[std::size_t(dx + rx)] * ty[std::size_t(dy + ry)] *
                                       tz[std::size_t(dz + rz)];
                            acc += w * vol.at(clampi(x + dx, vol.nx), clampi(y + dy, vol.ny),
                                              clampi(z + dz, vol.nz));
                        }
                out.at(x, y, z) = acc;
            }
    return out;
}

}  // namespace oracles
