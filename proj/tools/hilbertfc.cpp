// hilbertfc: batch front end for the curve-based connectivity pipeline.
//
// Subcommands: gen (synthetic cohorts), extract (volumes -> matrices),
// train-eval (experiment harness), reho (regional homogeneity tables).
// Logs go to stderr, data to files. Exit codes: 0 success, 1 usage,
// 2 data/parse, 3 infeasible packing or splitting.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hfc/common.hpp"
#include "hfc/experiments.hpp"
#include "hfc/features.hpp"
#include "hfc/hilbert.hpp"
#include "hfc/nn.hpp"
#include "hfc/preprocess.hpp"
#include "hfc/synthcohort.hpp"
#include "hfc/volume.hpp"

namespace fs = std::filesystem;
using namespace hfc;

namespace {

constexpr int kOffsetUnset = std::numeric_limits<int>::min();

struct ManifestRow {
    std::string path;
    std::string label;
    std::string subject_id;
};

std::string trim_ws(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(trim_ws(line.substr(start)));
            break;
        }
        out.push_back(trim_ws(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

std::vector<ManifestRow> load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open manifest " + path);
    std::vector<ManifestRow> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string t = trim_ws(line);
        if (t.empty() || t[0] == '#') continue;
        std::vector<std::string> fields = split_csv(t);
        if (fields.size() != 3)
            throw parse_error(path + ":" + std::to_string(lineno) +
                              ": expected path,label,subject_id");
        if (fields[0] == "path" && fields[1] == "label") continue;  // header
        rows.push_back({fields[0], fields[1], fields[2]});
    }
    if (rows.empty()) throw parse_error(path + ": manifest has no entries");
    return rows;
}

void write_manifest(const std::vector<ManifestRow>& rows, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f << "path,label,subject_id\n";
    for (const ManifestRow& r : rows) f << r.path << "," << r.label << "," << r.subject_id << "\n";
    if (!f) throw io_error("failed writing " + path);
}

// Manifest entries are relative to the manifest's own directory.
std::string resolve_path(const std::string& manifest_path, const std::string& entry) {
    fs::path p(entry);
    if (p.is_absolute()) return entry;
    return (fs::path(manifest_path).parent_path() / p).string();
}

void ensure_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw io_error("cannot create output directory " + out + ": " + ec.message());
}

// Section header makes the echo readable by the root --config option.
void write_config_echo(CLI::App* sub, const std::string& out_dir) {
    std::ofstream f(out_dir + "/config.txt");
    if (!f) throw io_error("cannot open " + out_dir + "/config.txt for writing");
    f << "[" << sub->get_name() << "]\n" << sub->config_to_str(true, false);
    if (!f) throw io_error("failed writing " + out_dir + "/config.txt");
}

void write_reho_csv(const std::vector<std::vector<double>>& table,
                    const std::vector<std::string>& subject_ids,
                    const std::vector<std::string>& labels, const SeedAtlas& atlas,
                    const std::string& path) {
    RehoSummary summary = reho_summary(table);
    std::ofstream f(path);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f << "subject_id,label,mean,std_literal,std_sample";
    for (const auto& r : atlas.regions) f << "," << r.name;
    f << "\n";
    for (std::size_t i = 0; i < table.size(); ++i) {
        f << subject_ids[i] << "," << labels[i] << "," << g17(summary.subject_mean[i]) << ","
          << g17(summary.subject_std_literal[i]) << "," << g17(summary.subject_std_sample[i]);
        for (double v : table[i]) f << "," << g17(v);
        f << "\n";
    }
    auto footer = [&](const char* tag, const std::vector<double>& vals) {
        f << tag << ",,,,";
        for (double v : vals) f << "," << g17(v);
        f << "\n";
    };
    footer("region_mean", summary.region_mean);
    footer("region_std_literal", summary.region_std_literal);
    footer("region_std_sample", summary.region_std_sample);
    if (!f) throw io_error("failed writing " + path);
}

struct GenOpts {
    std::string mode = "matrices";
    std::string out;
    std::string format = "internal";
    std::string classes = "CN,AD";
    int per_class = 10;
    int regions = 90;
    int half_length = 50;
    int order = 6;
    int frames = 164;
    int grid_x = 53, grid_y = 63, grid_z = 52;
    double tr = 3.0;
    double separation = 1.0;
    double signal_frac = 0.8;
    double intensity_mean = 12692.0;
    double intensity_std = 2155.0;
    std::uint64_t seed = 1;
};

int run_gen(const GenOpts& o, CLI::App* sub) {
    SynthSpec spec;
    spec.n_per_class = o.per_class;
    spec.classes.clear();
    for (const std::string& c : split_csv(o.classes))
        if (!c.empty()) spec.classes.push_back(c);
    spec.r_regions = o.regions;
    spec.half_length = o.half_length;
    spec.curve_order = o.order;
    spec.grid_nx = o.grid_x;
    spec.grid_ny = o.grid_y;
    spec.grid_nz = o.grid_z;
    spec.nt = o.frames;
    spec.tr_seconds = o.tr;
    spec.separation = o.separation;
    spec.signal_frac = o.signal_frac;
    spec.intensity_mean = o.intensity_mean;
    spec.intensity_std = o.intensity_std;
    spec.master_seed = o.seed;

    ensure_out_dir(o.out);
    CohortGenerator gen(spec);
    write_seed_atlas(gen.atlas(), o.out + "/atlas.csv");

    std::vector<ManifestRow> manifest;
    for (int i = 0; i < gen.subject_count(); ++i) {
        std::string id = gen.subject_id(i);
        std::string name;
        if (o.mode == "matrices") {
            name = id + ".csv";
            write_matrix_csv(gen.gen_matrix(i), o.out + "/" + name);
        } else {
            name = id + (o.format == "nifti" ? ".nii" : ".hvol");
            LabeledVolume lv = gen.gen_volume(i);
            write_volume(lv.vol, o.out + "/" + name,
                         o.format == "nifti" ? VolumeFormat::nifti : VolumeFormat::internal);
        }
        manifest.push_back({name, gen.label_of(i), id});
        std::cerr << "gen: wrote " << name << "\n";
    }
    write_manifest(manifest, o.out + "/manifest.csv");
    write_config_echo(sub, o.out);
    std::cerr << "gen: " << gen.subject_count() << " subjects, " << spec.r_regions
              << " regions, mode " << o.mode << "\n";
    return 0;
}

struct ExtractOpts {
    std::string manifest;
    std::string atlas;
    std::string out;
    int order = 6;
    int half_length = 50;
    int offset_x = kOffsetUnset, offset_y = kOffsetUnset, offset_z = kOffsetUnset;
    double fwhm = 8.0;
    int slice_axis = 2;
    bool with_reho = false;
    bool with_stats = false;
};

int run_extract(const ExtractOpts& o, CLI::App* sub) {
    HilbertCurve curve(o.order);
    SeedAtlas atlas = load_seed_atlas(o.atlas, curve.side());
    std::vector<RoiSegment> segments = extract_segments(curve, atlas, o.half_length);
    std::vector<ManifestRow> rows = load_manifest(o.manifest);
    ensure_out_dir(o.out);

    std::vector<ManifestRow> out_manifest;
    std::vector<Volume3D> averages;
    std::vector<std::vector<double>> reho_table;
    std::vector<std::string> ids, labels;
    GridOffset offset;
    int nx = 0, ny = 0, nz = 0;

    for (std::size_t i = 0; i < rows.size(); ++i) {
        Volume4D vol = read_volume(resolve_path(o.manifest, rows[i].path));
        if (i == 0) {
            nx = vol.nx;
            ny = vol.ny;
            nz = vol.nz;
            GridOffset centered = GridOffset::centered(curve.side(), nx, ny, nz);
            offset.x = o.offset_x == kOffsetUnset ? centered.x : o.offset_x;
            offset.y = o.offset_y == kOffsetUnset ? centered.y : o.offset_y;
            offset.z = o.offset_z == kOffsetUnset ? centered.z : o.offset_z;
        } else if (vol.nx != nx || vol.ny != ny || vol.nz != nz) {
            throw data_error(rows[i].path + ": grid differs from the first volume");
        }

        if (o.slice_axis >= 0 && vol.nt > 1) vol = slice_time_correct(vol, o.slice_axis);
        if (o.fwhm > 0.0) vol = gaussian_smooth(vol, o.fwhm);
        Volume3D avg = time_average(vol);

        std::vector<std::vector<double>> arrays;
        arrays.reserve(segments.size());
        for (const RoiSegment& seg : segments) arrays.push_back(roi_signal_array(avg, seg, offset));
        CorrelationMatrix m = correlation_matrix(arrays, rows[i].subject_id, rows[i].label);
        m.half_length = o.half_length;
        std::string name = rows[i].subject_id + ".csv";
        write_matrix_csv(m, o.out + "/" + name);
        out_manifest.push_back({name, rows[i].label, rows[i].subject_id});

        if (o.with_reho) {
            std::vector<double> per_region;
            per_region.reserve(segments.size());
            for (const RoiSegment& seg : segments)
                per_region.push_back(reho_region(reho_pairwise(vol, seg, offset)));
            reho_table.push_back(std::move(per_region));
        }
        if (o.with_stats) averages.push_back(std::move(avg));
        ids.push_back(rows[i].subject_id);
        labels.push_back(rows[i].label);
        std::cerr << "extract: " << rows[i].subject_id << " -> " << name << "\n";
    }

    write_manifest(out_manifest, o.out + "/manifest.csv");
    if (o.with_reho) write_reho_csv(reho_table, ids, labels, atlas, o.out + "/reho.csv");
    if (o.with_stats)
        write_cohort_stats_csv(cohort_stats(averages, segments, offset), o.out + "/cohort_");
    write_config_echo(sub, o.out);
    std::cerr << "extract: " << rows.size() << " subjects, " << segments.size() << " regions\n";
    return 0;
}

struct TrainEvalOpts {
    std::string manifest;
    std::string out;
    std::string arch = "net4";
    std::string class_a = "CN";
    std::string class_b = "AD";
    int half_length = 50;
    int epochs = 200;
    int batch = 4;
    int reps = 30;
    double lr = 1e-4;
    double test_fraction = 0.20;
    double balance_tol = 0.20;
    std::uint64_t seed = 1;
};

int run_train_eval(const TrainEvalOpts& o) {
    std::vector<ManifestRow> rows = load_manifest(o.manifest);
    std::vector<CorrelationMatrix> dataset;
    dataset.reserve(rows.size());
    for (const ManifestRow& r : rows) {
        CorrelationMatrix m = read_matrix_csv(resolve_path(o.manifest, r.path));
        m.label = r.label;
        m.subject_id = r.subject_id;
        dataset.push_back(std::move(m));
    }

    ExperimentConfig cfg;
    cfg.arch = o.arch;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.lr = o.lr;
    cfg.repetitions = o.reps;
    cfg.test_fraction = o.test_fraction;
    cfg.balance_tol = o.balance_tol;
    cfg.master_seed = o.seed;
    cfg.class_a = o.class_a;
    cfg.class_b = o.class_b;
    cfg.half_length = o.half_length;
    cfg.extra_config.emplace_back("manifest", o.manifest);

    // Record the model's core size in the echo before the run starts.
    int side = dataset.empty() ? 0 : dataset.front().r;
    Model probe = build_model(o.arch, side > 0 ? side : 1);
    cfg.extra_config.emplace_back("core-params", std::to_string(probe.core_param_count()));

    ExperimentReport report = run_experiment(dataset, cfg);
    emit_report(report, o.out);
    std::cerr << "train-eval: ACC " << report.acc.mean << " +/- " << report.acc.stddev << ", SE "
              << report.se.mean << " +/- " << report.se.stddev << ", SP " << report.sp.mean
              << " +/- " << report.sp.stddev << " over " << o.reps << " reps\n";
    return 0;
}

struct RehoOpts {
    std::string manifest;
    std::string atlas;
    std::string out;
    int order = 6;
    int half_length = 50;
    int offset_x = kOffsetUnset, offset_y = kOffsetUnset, offset_z = kOffsetUnset;
};

int run_reho(const RehoOpts& o, CLI::App* sub) {
    HilbertCurve curve(o.order);
    SeedAtlas atlas = load_seed_atlas(o.atlas, curve.side());
    std::vector<RoiSegment> segments = extract_segments(curve, atlas, o.half_length);
    std::vector<ManifestRow> rows = load_manifest(o.manifest);
    ensure_out_dir(o.out);

    std::vector<std::vector<double>> table;
    std::vector<std::string> ids, labels;
    GridOffset offset;
    int nx = 0, ny = 0, nz = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Volume4D vol = read_volume(resolve_path(o.manifest, rows[i].path));
        if (i == 0) {
            nx = vol.nx;
            ny = vol.ny;
            nz = vol.nz;
            GridOffset centered = GridOffset::centered(curve.side(), nx, ny, nz);
            offset.x = o.offset_x == kOffsetUnset ? centered.x : o.offset_x;
            offset.y = o.offset_y == kOffsetUnset ? centered.y : o.offset_y;
            offset.z = o.offset_z == kOffsetUnset ? centered.z : o.offset_z;
        } else if (vol.nx != nx || vol.ny != ny || vol.nz != nz) {
            throw data_error(rows[i].path + ": grid differs from the first volume");
        }
        std::vector<double> per_region;
        per_region.reserve(segments.size());
        for (const RoiSegment& seg : segments)
            per_region.push_back(reho_region(reho_pairwise(vol, seg, offset)));
        table.push_back(std::move(per_region));
        ids.push_back(rows[i].subject_id);
        labels.push_back(rows[i].label);
        std::cerr << "reho: " << rows[i].subject_id << "\n";
    }

    write_reho_csv(table, ids, labels, atlas, o.out + "/reho.csv");
    write_config_echo(sub, o.out);
    std::cerr << "reho: " << rows.size() << " subjects, " << segments.size() << " regions\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hilbert-curve functional connectivity pipeline"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a previous run's config echo");
    app.allow_config_extras(CLI::config_extras_mode::ignore);

    GenOpts g;
    CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic labeled cohort");
    gen->fallthrough();
    gen->add_option("--mode", g.mode, "matrices | volumes")
        ->check(CLI::IsMember({"matrices", "volumes"}))
        ->capture_default_str();
    gen->add_option("--out", g.out, "Output directory")->required();
    gen->add_option("--format", g.format, "Volume file format: internal | nifti")
        ->check(CLI::IsMember({"internal", "nifti"}))
        ->capture_default_str();
    gen->add_option("--per-class", g.per_class, "Subjects per class")->capture_default_str();
    gen->add_option("--classes", g.classes, "Comma-separated class names")->capture_default_str();
    gen->add_option("--regions", g.regions, "Number of regions")->capture_default_str();
    gen->add_option("--half-length", g.half_length, "Segment half length")->capture_default_str();
    gen->add_option("--order", g.order, "Curve order")->capture_default_str();
    gen->add_option("--frames", g.frames, "Time samples per volume")->capture_default_str();
    gen->add_option("--grid-x", g.grid_x, "Grid size, x")->capture_default_str();
    gen->add_option("--grid-y", g.grid_y, "Grid size, y")->capture_default_str();
    gen->add_option("--grid-z", g.grid_z, "Grid size, z")->capture_default_str();
    gen->add_option("--tr", g.tr, "Repetition time, seconds")->capture_default_str();
    gen->add_option("--separation", g.separation, "Class separation in [0,1]")
        ->capture_default_str();
    gen->add_option("--signal-frac", g.signal_frac, "Latent share of matrix arrays")
        ->capture_default_str();
    gen->add_option("--intensity-mean", g.intensity_mean, "Calibration mean")
        ->capture_default_str();
    gen->add_option("--intensity-std", g.intensity_std, "Calibration std")->capture_default_str();
    gen->add_option("--seed", g.seed, "Master seed")->capture_default_str();

    ExtractOpts x;
    CLI::App* extract = app.add_subcommand("extract", "Volumes to correlation matrices");
    extract->fallthrough();
    extract->add_option("--manifest", x.manifest, "Volume manifest (path,label,subject_id)")
        ->required();
    extract->add_option("--atlas", x.atlas, "Seed atlas file")->required();
    extract->add_option("--out", x.out, "Output directory")->required();
    extract->add_option("--order", x.order, "Curve order")->capture_default_str();
    extract->add_option("--half-length", x.half_length, "Segment half length")
        ->capture_default_str();
    extract->add_option("--offset-x", x.offset_x, "Cube-to-grid offset, x (default centered)");
    extract->add_option("--offset-y", x.offset_y, "Cube-to-grid offset, y (default centered)");
    extract->add_option("--offset-z", x.offset_z, "Cube-to-grid offset, z (default centered)");
    extract->add_option("--fwhm", x.fwhm, "Smoothing FWHM in mm (0 disables)")
        ->capture_default_str();
    extract->add_option("--slice-axis", x.slice_axis, "Slice axis for timing correction (-1 disables)")
        ->capture_default_str();
    extract->add_flag("--with-reho", x.with_reho, "Also write a ReHo table");
    extract->add_flag("--with-stats", x.with_stats, "Also write cohort intensity stats");

    TrainEvalOpts t;
    CLI::App* train_eval = app.add_subcommand("train-eval", "Run the experiment harness");
    train_eval->fallthrough();
    train_eval->add_option("--manifest", t.manifest, "Matrix manifest")->required();
    train_eval->add_option("--out", t.out, "Output directory")->required();
    train_eval->add_option("--arch", t.arch, "net4 | net2")
        ->check(CLI::IsMember({"net4", "net2"}))
        ->capture_default_str();
    train_eval->add_option("--class-a", t.class_a, "Negative class label")->capture_default_str();
    train_eval->add_option("--class-b", t.class_b, "Positive (disease) class label")
        ->capture_default_str();
    train_eval->add_option("--half-length", t.half_length, "Segment half length (metadata)")
        ->capture_default_str();
    train_eval->add_option("--epochs", t.epochs, "Training epochs")->capture_default_str();
    train_eval->add_option("--batch", t.batch, "Batch size")->capture_default_str();
    train_eval->add_option("--reps", t.reps, "Repetitions")->capture_default_str();
    train_eval->add_option("--lr", t.lr, "Adam learning rate")->capture_default_str();
    train_eval->add_option("--test-fraction", t.test_fraction, "Held-out fraction")
        ->capture_default_str();
    train_eval->add_option("--balance-tol", t.balance_tol, "Training class-fraction tolerance")
        ->capture_default_str();
    train_eval->add_option("--seed", t.seed, "Master seed")->capture_default_str();

    RehoOpts r;
    CLI::App* reho = app.add_subcommand("reho", "Regional homogeneity tables");
    reho->fallthrough();
    reho->add_option("--manifest", r.manifest, "Volume manifest")->required();
    reho->add_option("--atlas", r.atlas, "Seed atlas file")->required();
    reho->add_option("--out", r.out, "Output directory")->required();
    reho->add_option("--order", r.order, "Curve order")->capture_default_str();
    reho->add_option("--half-length", r.half_length, "Segment half length")->capture_default_str();
    reho->add_option("--offset-x", r.offset_x, "Cube-to-grid offset, x (default centered)");
    reho->add_option("--offset-y", r.offset_y, "Cube-to-grid offset, y (default centered)");
    reho->add_option("--offset-z", r.offset_z, "Cube-to-grid offset, z (default centered)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return run_gen(g, gen);
        if (extract->parsed()) return run_extract(x, extract);
        if (train_eval->parsed()) return run_train_eval(t);
        if (reho->parsed()) return run_reho(r, reho);
    } catch (const infeasible_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const data_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
