#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "hfc/common.hpp"

namespace hfc {

/// 3D scalar grid, x-fastest storage order.
struct Volume3D {
    int nx = 0, ny = 0, nz = 0;
    std::array<double, 3> voxel_mm = {3.0, 3.0, 3.0};
    std::vector<double> data;

    Volume3D() = default;
    Volume3D(int nx_, int ny_, int nz_, double fill = 0.0)
        : nx(nx_), ny(ny_), nz(nz_), data(std::size_t(nx_) * ny_ * nz_, fill) {}

    std::size_t size() const { return std::size_t(nx) * ny * nz; }
    std::size_t idx(int x, int y, int z) const {
        return std::size_t(x) + std::size_t(nx) * (std::size_t(y) + std::size_t(ny) * z);
    }
    double& at(int x, int y, int z) { return data[idx(x, y, z)]; }
    double at(int x, int y, int z) const { return data[idx(x, y, z)]; }
};

/// Time series of 3D grids (x, then y, then z, then t fastest-to-slowest).
struct Volume4D {
    int nx = 0, ny = 0, nz = 0, nt = 0;
    std::array<double, 3> voxel_mm = {3.0, 3.0, 3.0};
    double tr_seconds = 1.0;
    std::vector<double> data;

    Volume4D() = default;
    Volume4D(int nx_, int ny_, int nz_, int nt_, double fill = 0.0)
        : nx(nx_), ny(ny_), nz(nz_), nt(nt_),
          data(std::size_t(nx_) * ny_ * nz_ * nt_, fill) {}

    std::size_t size() const { return std::size_t(nx) * ny * nz * nt; }
    std::size_t frame_size() const { return std::size_t(nx) * ny * nz; }
    std::size_t idx(int x, int y, int z, int t) const {
        return std::size_t(x) +
               std::size_t(nx) * (std::size_t(y) + std::size_t(ny) * (std::size_t(z) + std::size_t(nz) * t));
    }
    double& at(int x, int y, int z, int t) { return data[idx(x, y, z, t)]; }
    double at(int x, int y, int z, int t) const { return data[idx(x, y, z, t)]; }
};

enum class VolumeFormat { nifti, internal };

/// Read a NIfTI-1 file (subset: datatypes int16 and float32, magic "n+1"
/// or "ni1", either endianness, data in the same file at vox_offset).
/// Values are scaled by scl_slope/scl_inter when scl_slope != 0 and
/// converted to double.
Volume4D read_nifti(const std::string& path);

/// Read either format, dispatching on the leading magic bytes.
Volume4D read_volume(const std::string& path);

/// Write a volume. The internal format is a lossless float64 container;
/// NIfTI export stores float32 (documented precision loss of at most one
/// single-precision rounding per value).
void write_volume(const Volume4D& vol, const std::string& path, VolumeFormat format);

}  // namespace hfc
