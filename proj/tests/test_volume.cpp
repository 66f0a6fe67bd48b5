#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hfc/common.hpp"
#include "hfc/volume.hpp"

using namespace hfc;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / ("hfc_voltest_" + name)).string();
}

Volume4D sample_volume(int nx, int ny, int nz, int nt) {
    Volume4D v(nx, ny, nz, nt);
    v.voxel_mm = {3.0, 3.5, 4.0};
    v.tr_seconds = 2.5;
    Rng rng(99);
    for (double& x : v.data) x = rng.uniform(-1000.0, 30000.0);
    return v;
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void dump(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    REQUIRE(bool(out));
}

}  // namespace

TEST_CASE("internal format is lossless") {
    Volume4D v = sample_volume(5, 4, 3, 7);
    std::string p = temp_path("a.hvol");
    write_volume(v, p, VolumeFormat::internal);
    Volume4D r = read_volume(p);
    CHECK(r.nx == v.nx);
    CHECK(r.ny == v.ny);
    CHECK(r.nz == v.nz);
    CHECK(r.nt == v.nt);
    CHECK(r.voxel_mm == v.voxel_mm);
    CHECK(r.tr_seconds == v.tr_seconds);
    REQUIRE(r.data.size() == v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) REQUIRE(r.data[i] == v.data[i]);
    fs::remove(p);
}

TEST_CASE("nifti round trip within float32 rounding") {
    Volume4D v = sample_volume(6, 5, 4, 3);
    std::string p = temp_path("b.nii");
    write_volume(v, p, VolumeFormat::nifti);
    Volume4D r = read_nifti(p);
    CHECK(r.nx == v.nx);
    CHECK(r.nt == v.nt);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        REQUIRE(r.data[i] == double(float(v.data[i])));
    CHECK(r.voxel_mm[1] == doctest::Approx(3.5).epsilon(1e-6));
    CHECK(r.tr_seconds == doctest::Approx(2.5).epsilon(1e-6));
    fs::remove(p);
}

TEST_CASE("3d nifti reads as a single frame") {
    Volume4D v = sample_volume(4, 4, 4, 1);
    std::string p = temp_path("c.nii");
    write_volume(v, p, VolumeFormat::nifti);
    Volume4D r = read_volume(p);
    CHECK(r.nt == 1);
    CHECK(r.frame_size() == 64);
    fs::remove(p);
}

TEST_CASE("read_volume dispatches on magic") {
    Volume4D v = sample_volume(3, 3, 3, 2);
    std::string ph = temp_path("d.hvol"), pn = temp_path("d.nii");
    write_volume(v, ph, VolumeFormat::internal);
    write_volume(v, pn, VolumeFormat::nifti);
    CHECK(read_volume(ph).data[5] == v.data[5]);
    CHECK(read_volume(pn).nx == 3);
    fs::remove(ph);
    fs::remove(pn);
}

TEST_CASE("bad magic, bad datatype and truncation raise distinct errors") {
    Volume4D v = sample_volume(4, 3, 2, 2);
    std::string p = temp_path("e.nii");
    write_volume(v, p, VolumeFormat::nifti);
    std::vector<char> good = slurp(p);

    std::string what_magic, what_dtype, what_trunc;

    {
        std::vector<char> bad = good;
        bad[344] = 'X';  // magic field
        dump(p, bad);
        try {
            read_nifti(p);
            FAIL("bad magic accepted");
        } catch (const parse_error& e) {
            what_magic = e.what();
        }
    }
    {
        std::vector<char> bad = good;
        bad[70] = 64;  // datatype field: float64 code, unsupported
        bad[71] = 0;
        bad[72] = 64;  // bitpix kept consistent
        bad[73] = 0;
        dump(p, bad);
        try {
            read_nifti(p);
            FAIL("unsupported datatype accepted");
        } catch (const parse_error& e) {
            what_dtype = e.what();
        }
    }
    {
        std::vector<char> bad(good.begin(), good.begin() + std::ptrdiff_t(good.size() - 9));
        dump(p, bad);
        try {
            read_nifti(p);
            FAIL("truncated payload accepted");
        } catch (const parse_error& e) {
            what_trunc = e.what();
        }
    }

    CHECK(what_magic.find("magic") != std::string::npos);
    CHECK(what_dtype.find("datatype") != std::string::npos);
    CHECK(what_trunc.find("truncated") != std::string::npos);
    CHECK(what_magic != what_dtype);
    CHECK(what_dtype != what_trunc);
    CHECK(what_magic != what_trunc);
    fs::remove(p);
}

TEST_CASE("header truncation rejected") {
    std::string p = temp_path("f.nii");
    dump(p, std::vector<char>(100, 0));
    CHECK_THROWS_AS(read_nifti(p), parse_error);
    fs::remove(p);
}

TEST_CASE("missing file raises io error") {
    CHECK_THROWS_AS(read_volume(temp_path("does_not_exist.hvol")), io_error);
}

TEST_CASE("internal format truncation rejected") {
    Volume4D v = sample_volume(3, 3, 3, 1);
    std::string p = temp_path("g.hvol");
    write_volume(v, p, VolumeFormat::internal);
    std::vector<char> bytes = slurp(p);
    bytes.resize(bytes.size() - 4);
    dump(p, bytes);
    CHECK_THROWS_AS(read_volume(p), parse_error);
    fs::remove(p);
}
