#include "hfc/volume.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace hfc {

namespace {

// NIfTI-1 header fields used by this reader, with byte offsets into the
// 348-byte header. Everything else is ignored on read and zeroed on write.
constexpr std::size_t kNiftiHeaderSize = 348;
constexpr std::size_t kOffSizeofHdr = 0;    // int32, must be 348
constexpr std::size_t kOffDim = 40;         // int16[8]
constexpr std::size_t kOffDatatype = 70;    // int16
constexpr std::size_t kOffBitpix = 72;      // int16
constexpr std::size_t kOffPixdim = 76;      // float32[8]
constexpr std::size_t kOffVoxOffset = 108;  // float32
constexpr std::size_t kOffSclSlope = 112;   // float32
constexpr std::size_t kOffSclInter = 116;   // float32
constexpr std::size_t kOffMagic = 344;      // char[4]

constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

std::uint16_t bswap16(std::uint16_t v) { return std::uint16_t((v >> 8) | (v << 8)); }
std::uint32_t bswap32(std::uint32_t v) {
    return ((v & 0xFF000000u) >> 24) | ((v & 0x00FF0000u) >> 8) | ((v & 0x0000FF00u) << 8) |
           ((v & 0x000000FFu) << 24);
}

struct HeaderView {
    const unsigned char* raw;
    bool swap;

    std::int16_t i16(std::size_t off) const {
        std::uint16_t v;
        std::memcpy(&v, raw + off, 2);
        if (swap) v = bswap16(v);
        return std::bit_cast<std::int16_t>(v);
    }
    std::int32_t i32(std::size_t off) const {
        std::uint32_t v;
        std::memcpy(&v, raw + off, 4);
        if (swap) v = bswap32(v);
        return std::bit_cast<std::int32_t>(v);
    }
    float f32(std::size_t off) const {
        std::uint32_t v;
        std::memcpy(&v, raw + off, 4);
        if (swap) v = bswap32(v);
        return std::bit_cast<float>(v);
    }
};

void put_u32le(std::vector<unsigned char>& buf, std::size_t off, std::uint32_t v) {
    buf[off] = v & 0xFF;
    buf[off + 1] = (v >> 8) & 0xFF;
    buf[off + 2] = (v >> 16) & 0xFF;
    buf[off + 3] = (v >> 24) & 0xFF;
}
void put_i16le(std::vector<unsigned char>& buf, std::size_t off, std::int16_t v) {
    std::uint16_t u = std::bit_cast<std::uint16_t>(v);
    buf[off] = u & 0xFF;
    buf[off + 1] = (u >> 8) & 0xFF;
}
void put_f32le(std::vector<unsigned char>& buf, std::size_t off, float v) {
    put_u32le(buf, off, std::bit_cast<std::uint32_t>(v));
}

void put_u64le(std::vector<unsigned char>& buf, std::size_t off, std::uint64_t v) {
    for (int i = 0; i < 8; i++) buf[off + i] = (v >> (8 * i)) & 0xFF;
}
void put_f64le(std::vector<unsigned char>& buf, std::size_t off, double v) {
    put_u64le(buf, off, std::bit_cast<std::uint64_t>(v));
}

std::uint64_t get_u64le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; i++) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
}
double get_f64le(const unsigned char* p) { return std::bit_cast<double>(get_u64le(p)); }
std::int32_t get_i32le(const unsigned char* p) {
    std::uint32_t v = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
                      (std::uint32_t(p[3]) << 24);
    return std::bit_cast<std::int32_t>(v);
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open file: " + path);
    in.seekg(0, std::ios::end);
    auto n = in.tellg();
    in.seekg(0);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(n));
    if (n > 0) in.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!in) throw io_error("read failed: " + path);
    return bytes;
}

constexpr char kInternalMagic[4] = {'H', 'V', 'O', 'L'};
constexpr unsigned char kInternalVersion = 1;

Volume4D read_internal(const std::vector<unsigned char>& bytes, const std::string& path) {
    // Layout: magic "HVOL", version byte, int32 nx ny nz nt, float64
    // voxel_mm[3], float64 tr_seconds, then nx*ny*nz*nt float64 values.
    // All fields little-endian.
    constexpr std::size_t head = 4 + 1 + 4 * 4 + 8 * 3 + 8;
    if (bytes.size() < head) throw parse_error("truncated internal volume header: " + path);
    if (bytes[4] != kInternalVersion)
        throw parse_error("unsupported internal volume version " + std::to_string(bytes[4]) + ": " + path);
    Volume4D vol;
    vol.nx = get_i32le(&bytes[5]);
    vol.ny = get_i32le(&bytes[9]);
    vol.nz = get_i32le(&bytes[13]);
    vol.nt = get_i32le(&bytes[17]);
    if (vol.nx <= 0 || vol.ny <= 0 || vol.nz <= 0 || vol.nt <= 0)
        throw parse_error("non-positive dims in internal volume: " + path);
    for (int i = 0; i < 3; i++) vol.voxel_mm[i] = get_f64le(&bytes[21 + 8 * i]);
    vol.tr_seconds = get_f64le(&bytes[45]);
    std::size_t n = vol.size();
    if (bytes.size() < head + 8 * n) throw parse_error("truncated internal volume data: " + path);
    vol.data.resize(n);
    for (std::size_t i = 0; i < n; i++) vol.data[i] = get_f64le(&bytes[head + 8 * i]);
    return vol;
}

void write_internal(const Volume4D& vol, const std::string& path) {
    constexpr std::size_t head = 4 + 1 + 4 * 4 + 8 * 3 + 8;
    std::vector<unsigned char> bytes(head + 8 * vol.size());
    std::memcpy(bytes.data(), kInternalMagic, 4);
    bytes[4] = kInternalVersion;
    put_u32le(bytes, 5, std::uint32_t(vol.nx));
    put_u32le(bytes, 9, std::uint32_t(vol.ny));
    put_u32le(bytes, 13, std::uint32_t(vol.nz));
    put_u32le(bytes, 17, std::uint32_t(vol.nt));
    for (int i = 0; i < 3; i++) put_f64le(bytes, 21 + 8 * i, vol.voxel_mm[i]);
    put_f64le(bytes, 45, vol.tr_seconds);
    for (std::size_t i = 0; i < vol.size(); i++) put_f64le(bytes, head + 8 * i, vol.data[i]);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw io_error("write failed: " + path);
}

void write_nifti(const Volume4D& vol, const std::string& path) {
    // Single-file "n+1" layout, float32 data at offset 352 (header plus the
    // 4-byte extension flag).
    std::vector<unsigned char> hdr(kNiftiHeaderSize + 4, 0);
    put_u32le(hdr, kOffSizeofHdr, 348);
    put_i16le(hdr, kOffDim, 4);
    put_i16le(hdr, kOffDim + 2, std::int16_t(vol.nx));
    put_i16le(hdr, kOffDim + 4, std::int16_t(vol.ny));
    put_i16le(hdr, kOffDim + 6, std::int16_t(vol.nz));
    put_i16le(hdr, kOffDim + 8, std::int16_t(vol.nt));
    put_i16le(hdr, kOffDim + 10, 1);
    put_i16le(hdr, kOffDim + 12, 1);
    put_i16le(hdr, kOffDim + 14, 1);
    put_i16le(hdr, kOffDatatype, kDtFloat32);
    put_i16le(hdr, kOffBitpix, 32);
    put_f32le(hdr, kOffPixdim, 1.0f);
    for (int i = 0; i < 3; i++) put_f32le(hdr, kOffPixdim + 4 * (i + 1), float(vol.voxel_mm[i]));
    put_f32le(hdr, kOffPixdim + 16, float(vol.tr_seconds));
    put_f32le(hdr, kOffVoxOffset, 352.0f);
    put_f32le(hdr, kOffSclSlope, 0.0f);  // raw values, no scaling
    put_f32le(hdr, kOffSclInter, 0.0f);
    hdr[kOffMagic] = 'n';
    hdr[kOffMagic + 1] = '+';
    hdr[kOffMagic + 2] = '1';
    hdr[kOffMagic + 3] = '\0';

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(hdr.data()), std::streamsize(hdr.size()));
    std::vector<unsigned char> buf(4 * vol.size());
    for (std::size_t i = 0; i < vol.size(); i++) put_f32le(buf, 4 * i, float(vol.data[i]));
    out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    if (!out) throw io_error("write failed: " + path);
}

Volume4D parse_nifti(const std::vector<unsigned char>& bytes, const std::string& path) {
    if (bytes.size() < kNiftiHeaderSize)
        throw parse_error("file shorter than the 348-byte NIfTI-1 header: " + path);

    // Endianness: sizeof_hdr reads as 348 under exactly one byte order.
    std::uint32_t raw_size;
    std::memcpy(&raw_size, bytes.data() + kOffSizeofHdr, 4);
    bool swap;
    if (raw_size == 348)
        swap = false;
    else if (bswap32(raw_size) == 348)
        swap = true;
    else
        throw parse_error("bad sizeof_hdr (expected 348 in either byte order): " + path);

    HeaderView h{bytes.data(), swap};

    char magic[4];
    std::memcpy(magic, bytes.data() + kOffMagic, 4);
    bool n1 = std::memcmp(magic, "n+1", 4) == 0;
    bool ni1 = std::memcmp(magic, "ni1", 4) == 0;
    if (!n1 && !ni1) throw parse_error("bad magic (expected \"n+1\" or \"ni1\"): " + path);

    std::int16_t ndim = h.i16(kOffDim);
    if (ndim != 3 && ndim != 4)
        throw parse_error("dim[0] must be 3 or 4, got " + std::to_string(ndim) + ": " + path);

    Volume4D vol;
    vol.nx = h.i16(kOffDim + 2);
    vol.ny = h.i16(kOffDim + 4);
    vol.nz = h.i16(kOffDim + 6);
    vol.nt = ndim == 4 ? h.i16(kOffDim + 8) : 1;
    if (vol.nx <= 0 || vol.ny <= 0 || vol.nz <= 0 || vol.nt <= 0)
        throw parse_error("non-positive dim[1..4]: " + path);

    for (int i = 0; i < 3; i++) {
        float d = h.f32(kOffPixdim + 4 * (i + 1));
        if (!(d > 0.0f))
            throw parse_error("non-positive pixdim[" + std::to_string(i + 1) + "]: " + path);
        vol.voxel_mm[i] = d;
    }
    if (ndim == 4) {
        float tr = h.f32(kOffPixdim + 16);
        if (!(tr > 0.0f)) throw parse_error("non-positive pixdim[4] (TR) in 4D file: " + path);
        vol.tr_seconds = tr;
    } else {
        vol.tr_seconds = 1.0;
    }

    std::int16_t datatype = h.i16(kOffDatatype);
    if (datatype != kDtInt16 && datatype != kDtFloat32)
        throw parse_error("unsupported datatype code " + std::to_string(datatype) +
                          " (only 4=int16 and 16=float32): " + path);
    std::int16_t bitpix = h.i16(kOffBitpix);
    std::int16_t expected_bitpix = datatype == kDtInt16 ? 16 : 32;
    if (bitpix != expected_bitpix)
        throw parse_error("bitpix " + std::to_string(bitpix) + " inconsistent with datatype: " + path);

    float vox_offset_f = h.f32(kOffVoxOffset);
    if (!(vox_offset_f >= float(kNiftiHeaderSize)))
        throw parse_error("vox_offset must be >= 348 for single-file data: " + path);
    std::size_t vox_offset = std::size_t(vox_offset_f);

    float scl_slope = h.f32(kOffSclSlope);
    float scl_inter = h.f32(kOffSclInter);
    bool scale = scl_slope != 0.0f;

    std::size_t n = vol.size();
    std::size_t elem = std::size_t(expected_bitpix) / 8;
    if (bytes.size() < vox_offset || bytes.size() - vox_offset < n * elem)
        throw parse_error("truncated data section (need " + std::to_string(n * elem) +
                          " bytes at vox_offset): " + path);

    vol.data.resize(n);
    const unsigned char* p = bytes.data() + vox_offset;
    if (datatype == kDtInt16) {
        for (std::size_t i = 0; i < n; i++) {
            std::uint16_t u;
            std::memcpy(&u, p + 2 * i, 2);
            if (swap) u = bswap16(u);
            double v = std::bit_cast<std::int16_t>(u);
            vol.data[i] = scale ? double(scl_slope) * v + double(scl_inter) : v;
        }
    } else {
        for (std::size_t i = 0; i < n; i++) {
            std::uint32_t u;
            std::memcpy(&u, p + 4 * i, 4);
            if (swap) u = bswap32(u);
            double v = std::bit_cast<float>(u);
            vol.data[i] = scale ? double(scl_slope) * v + double(scl_inter) : v;
            if (!std::isfinite(vol.data[i]))
                throw parse_error("non-finite value at element " + std::to_string(i) + ": " + path);
        }
    }
    return vol;
}

}  // namespace

Volume4D read_nifti(const std::string& path) {
    return parse_nifti(read_file_bytes(path), path);
}

Volume4D read_volume(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() < 4) throw parse_error("truncated file (no magic): " + path);
    if (std::memcmp(bytes.data(), kInternalMagic, 4) == 0) return read_internal(bytes, path);
    return parse_nifti(bytes, path);
}

void write_volume(const Volume4D& vol, const std::string& path, VolumeFormat format) {
    if (vol.nx <= 0 || vol.ny <= 0 || vol.nz <= 0 || vol.nt <= 0 || vol.data.size() != vol.size())
        throw config_error("invalid volume dims or data size");
    if (format == VolumeFormat::internal)
        write_internal(vol, path);
    else
        write_nifti(vol, path);
}

}  // namespace hfc
