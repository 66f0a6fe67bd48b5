// End-to-end runs of the hilbertfc executable: exit codes, produced files,
// and config-echo reruns. The binary path is injected at compile time.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"

#ifndef HILBERTFC_BIN
#error "HILBERTFC_BIN must point at the pipeline executable"
#endif

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string("\"") + HILBERTFC_BIN + "\" " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    if (rc == -1) return -1;
    if (WIFEXITED(rc)) return WEXITSTATUS(rc);
    return -2;
}

fs::path scratch(const std::string& leaf) {
    fs::path dir = fs::temp_directory_path() / ("hfc_cli_" + leaf);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(bool(f));
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::size_t line_count(const fs::path& p) {
    std::ifstream f(p);
    REQUIRE(bool(f));
    std::size_t n = 0;
    std::string line;
    while (std::getline(f, line)) ++n;
    return n;
}

const std::string kSmallGen =
    " --per-class 2 --regions 8 --half-length 3 --order 4"
    " --grid-x 14 --grid-y 15 --grid-z 13 --frames 12 --seed 5";

}  // namespace

TEST_CASE("help exits cleanly, usage errors do not") {
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("gen --help") == 0);
    CHECK(run_cli("") == 1);               // a subcommand is required
    CHECK(run_cli("gen") == 1);            // --out is required
    CHECK(run_cli("frobnicate") == 1);     // unknown subcommand
    CHECK(run_cli("gen --out /tmp/x --bogus 1") == 1);
    CHECK(run_cli("train-eval --manifest m --out o --arch resnet") == 1);
}

TEST_CASE("gen writes matrices, atlas, manifest and a config echo") {
    fs::path dir = scratch("gen");
    CHECK(run_cli("gen --out \"" + dir.string() + "\"" + kSmallGen) == 0);
    CHECK(fs::exists(dir / "atlas.csv"));
    CHECK(fs::exists(dir / "manifest.csv"));
    CHECK(fs::exists(dir / "config.txt"));
    for (const char* name : {"CN_001.csv", "CN_002.csv", "AD_001.csv", "AD_002.csv"})
        CHECK(fs::exists(dir / name));
    CHECK(line_count(dir / "manifest.csv") == 5);  // header + 4 subjects

    std::string config = slurp(dir / "config.txt");
    CHECK(config.substr(0, 6) == "[gen]\n");
}

TEST_CASE("a config echo reruns the generation byte for byte") {
    fs::path a = scratch("gen_a");
    fs::path b = scratch("gen_b");
    REQUIRE(run_cli("gen --out \"" + a.string() + "\"" + kSmallGen) == 0);
    REQUIRE(run_cli("gen --out \"" + b.string() + "\" --config \"" +
                    (a / "config.txt").string() + "\"") == 0);
    for (const char* name : {"atlas.csv", "manifest.csv", "CN_001.csv", "AD_002.csv"})
        CHECK(slurp(a / name) == slurp(b / name));
}

TEST_CASE("extract and reho run on generated volumes") {
    fs::path vols = scratch("vols");
    REQUIRE(run_cli("gen --mode volumes --out \"" + vols.string() + "\"" + kSmallGen) == 0);
    CHECK(fs::exists(vols / "CN_001.hvol"));

    fs::path out = scratch("extract");
    CHECK(run_cli("extract --manifest \"" + (vols / "manifest.csv").string() + "\" --atlas \"" +
                  (vols / "atlas.csv").string() + "\" --out \"" + out.string() +
                  "\" --order 4 --half-length 3 --fwhm 4 --with-reho --with-stats") == 0);
    for (const char* name : {"manifest.csv", "config.txt", "CN_001.csv", "AD_002.csv", "reho.csv",
                             "cohort_stats.csv", "cohort_histogram.csv", "cohort_regions.csv"})
        CHECK(fs::exists(out / name));

    fs::path rout = scratch("reho");
    CHECK(run_cli("reho --manifest \"" + (vols / "manifest.csv").string() + "\" --atlas \"" +
                  (vols / "atlas.csv").string() + "\" --out \"" + rout.string() +
                  "\" --order 4 --half-length 3") == 0);
    CHECK(fs::exists(rout / "reho.csv"));
    CHECK(line_count(rout / "reho.csv") == 8);  // header + 4 subjects + 3 footer rows
}

TEST_CASE("nifti volumes round through extract as well") {
    fs::path vols = scratch("nifti");
    REQUIRE(run_cli("gen --mode volumes --format nifti --out \"" + vols.string() + "\"" +
                    kSmallGen) == 0);
    CHECK(fs::exists(vols / "CN_001.nii"));
    fs::path out = scratch("nifti_extract");
    CHECK(run_cli("extract --manifest \"" + (vols / "manifest.csv").string() + "\" --atlas \"" +
                  (vols / "atlas.csv").string() + "\" --out \"" + out.string() +
                  "\" --order 4 --half-length 3 --fwhm 0 --slice-axis -1") == 0);
    CHECK(fs::exists(out / "AD_001.csv"));
}

TEST_CASE("train-eval writes the experiment report") {
    fs::path mats = scratch("mats");
    REQUIRE(run_cli("gen --out \"" + mats.string() + "\" --per-class 5 --regions 8"
                    " --half-length 3 --order 4 --grid-x 14 --grid-y 15 --grid-z 13"
                    " --frames 12 --seed 5") == 0);

    fs::path out = scratch("traineval");
    CHECK(run_cli("train-eval --manifest \"" + (mats / "manifest.csv").string() + "\" --out \"" +
                  out.string() +
                  "\" --arch net2 --epochs 1 --reps 2 --batch 4 --lr 0.001"
                  " --test-fraction 0.2 --balance-tol 0.5 --seed 3") == 0);
    CHECK(line_count(out / "summary.csv") == 4);  // header + 2 reps + aggregate
    CHECK(fs::exists(out / "loss_rep_001.csv"));
    CHECK(fs::exists(out / "loss_rep_002.csv"));
    std::string config = slurp(out / "config.txt");
    CHECK(config.substr(0, 13) == "[train-eval]\n");
    CHECK(config.find("core-params=64836") == std::string::npos);  // net2 on r=8 is smaller
    CHECK(config.find("core-params=") != std::string::npos);
}

TEST_CASE("failures map to distinct exit codes") {
    // Packing 1000 regions into a 14x15x13 grid is infeasible.
    fs::path dir = scratch("codes");
    CHECK(run_cli("gen --out \"" + dir.string() + "\" --per-class 2 --regions 1000"
                  " --half-length 3 --order 4 --grid-x 14 --grid-y 15 --grid-z 13"
                  " --frames 12") == 3);

    // Invalid spec value: usage error.
    CHECK(run_cli("gen --out \"" + dir.string() + "\" --separation 2" + kSmallGen) == 1);

    // Manifest rows pointing at missing files: data error.
    std::ofstream(dir / "manifest.csv") << "path,label,subject_id\nmissing.csv,CN,S1\n";
    CHECK(run_cli("train-eval --manifest \"" + (dir / "manifest.csv").string() + "\" --out \"" +
                  (dir / "out").string() + "\" --reps 1 --epochs 1") == 2);
}
