#include "hfc/synthcohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace hfc {

namespace {

constexpr std::uint64_t kAtlasKey = 0x61746c73;    // atlas center selection
constexpr std::uint64_t kCohortKey = 0x636f686f;   // cohort-level draws
constexpr std::uint64_t kSubjectKey = 0x73756273;  // per-subject stream root

double sigma_delta_of(const SynthSpec& s) {
    double rest = s.intensity_std * s.intensity_std - s.sigma_base * s.sigma_base -
                  s.sigma_signal * s.sigma_signal - s.sigma_subject * s.sigma_subject;
    if (rest < 0.0)
        throw config_error(
            "synth spec: intensity_std is smaller than the configured component sigmas allow");
    return std::sqrt(rest);
}

void validate_spec(const SynthSpec& s) {
    if (s.n_per_class < 1) throw config_error("synth spec: n_per_class must be >= 1");
    if (s.classes.empty()) throw config_error("synth spec: no classes");
    for (std::size_t i = 0; i < s.classes.size(); ++i) {
        if (s.classes[i].empty()) throw config_error("synth spec: empty class name");
        for (std::size_t j = i + 1; j < s.classes.size(); ++j)
            if (s.classes[i] == s.classes[j])
                throw config_error("synth spec: duplicate class name '" + s.classes[i] + "'");
    }
    if (s.r_regions < 1) throw config_error("synth spec: r_regions must be >= 1");
    if (s.half_length < 0) throw config_error("synth spec: half_length must be >= 0");
    if (s.grid_nx < 1 || s.grid_ny < 1 || s.grid_nz < 1)
        throw config_error("synth spec: grid dims must be positive");
    int side = 1 << s.curve_order;
    if (s.grid_nx > side || s.grid_ny > side || s.grid_nz > side)
        throw config_error("synth spec: grid does not fit inside the order-" +
                           std::to_string(s.curve_order) + " curve cube (side " +
                           std::to_string(side) + ")");
    if (s.nt < 1) throw config_error("synth spec: nt must be >= 1");
    if (!(s.tr_seconds > 0.0)) throw config_error("synth spec: tr must be positive");
    if (!(s.intensity_std > 0.0)) throw config_error("synth spec: intensity_std must be positive");
    if (s.sigma_base < 0.0 || s.sigma_signal < 0.0 || s.sigma_subject < 0.0)
        throw config_error("synth spec: component sigmas must be non-negative");
    if (!(s.separation >= 0.0 && s.separation <= 1.0))
        throw config_error("synth spec: separation must lie in [0, 1]");
    if (!(s.signal_frac >= 0.0 && s.signal_frac <= 1.0))
        throw config_error("synth spec: signal_frac must lie in [0, 1]");
    if (s.factors < 1) throw config_error("synth spec: factors must be >= 1");
    if (s.temporal_amp < 0.0) throw config_error("synth spec: temporal_amp must be >= 0");
    if (!(s.voxel_mm > 0.0)) throw config_error("synth spec: voxel_mm must be positive");
    sigma_delta_of(s);
}

void normalize_row(std::vector<double>& w) {
    double norm = 0.0;
    for (double v : w) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (double& v : w) v /= norm;
}

// F x L factor patterns, row-major, one independent draw per cell.
std::vector<double> draw_factors(Rng& rng, int factors, int len) {
    std::vector<double> g(std::size_t(factors) * std::size_t(len));
    for (double& v : g) v = rng.normal();
    return g;
}

}  // namespace

SeedAtlas gen_seed_atlas(const SynthSpec& spec, const HilbertCurve& curve) {
    validate_spec(spec);
    if (curve.order() != spec.curve_order)
        throw config_error("gen_seed_atlas: curve order does not match SynthSpec.curve_order");
    int side = curve.side();
    GridOffset off = GridOffset::centered(side, spec.grid_nx, spec.grid_ny, spec.grid_nz);
    auto in_grid = [&](const Coord3& c) {
        int gx = c.x - off.x, gy = c.y - off.y, gz = c.z - off.z;
        return gx >= 0 && gx < spec.grid_nx && gy >= 0 && gy < spec.grid_ny && gz >= 0 &&
               gz < spec.grid_nz;
    };

    // Collect segment centers packed at stride 2h+1 inside each maximal
    // in-grid run of curve indices; any subset is pairwise disjoint.
    std::uint64_t h = std::uint64_t(spec.half_length);
    std::uint64_t stride = 2 * h + 1;
    std::vector<std::uint64_t> candidates;
    std::uint64_t in_cells = 0;
    std::uint64_t run_start = 0;
    bool in_run = false;
    std::uint64_t total = curve.total_cells();
    for (std::uint64_t i = 0; i <= total; ++i) {
        bool ok = i < total && in_grid(curve.index_to_coord(i));
        if (ok) ++in_cells;
        if (ok && !in_run) {
            run_start = i;
            in_run = true;
        } else if (!ok && in_run) {
            std::uint64_t run_end = i - 1;
            for (std::uint64_t c = run_start + h; c + h <= run_end; c += stride)
                candidates.push_back(c);
            in_run = false;
        }
    }

    if (candidates.size() < std::size_t(spec.r_regions))
        throw infeasible_error("cannot pack " + std::to_string(spec.r_regions) +
                               " disjoint segments of length " + std::to_string(stride) +
                               " into the grid: only " + std::to_string(candidates.size()) +
                               " candidate centers across " + std::to_string(in_cells) +
                               " in-grid cells");

    Rng rng(derive_seed(spec.master_seed, kAtlasKey));
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int k = 0; k < spec.r_regions; ++k) {
        std::size_t j = std::size_t(k) + std::size_t(rng.uniform_int(
                                              std::uint64_t(order.size() - std::size_t(k))));
        std::swap(order[std::size_t(k)], order[j]);
    }
    std::vector<std::uint64_t> chosen;
    for (int k = 0; k < spec.r_regions; ++k) chosen.push_back(candidates[order[std::size_t(k)]]);
    std::sort(chosen.begin(), chosen.end());

    SeedAtlas atlas;
    for (int k = 0; k < spec.r_regions; ++k) {
        char name[16];
        std::snprintf(name, sizeof name, "R%03d", k + 1);
        atlas.regions.push_back({k + 1, name, curve.index_to_coord(chosen[std::size_t(k)])});
    }
    return atlas;
}

CohortGenerator::CohortGenerator(SynthSpec spec)
    : spec_(std::move(spec)),
      curve_((validate_spec(spec_), spec_.curve_order)),
      atlas_(gen_seed_atlas(spec_, curve_)),
      segments_(extract_segments(curve_, atlas_, spec_.half_length)),
      offset_(GridOffset::centered(curve_.side(), spec_.grid_nx, spec_.grid_ny, spec_.grid_nz)),
      sigma_delta_(sigma_delta_of(spec_)) {
    int r = spec_.r_regions;
    int len = spec_.segment_length();
    int f = spec_.factors;
    Rng rng(derive_seed(spec_.master_seed, kCohortKey));

    base_.assign(std::size_t(r), std::vector<double>(std::size_t(len)));
    for (auto& row : base_)
        for (double& v : row) v = rng.normal(0.0, spec_.sigma_base);

    // Class 0 keeps the raw loadings; class c blends toward its own
    // independent draw by `separation`, so separation 0 collapses every
    // class onto the same distribution.
    std::vector<std::vector<double>> wa(std::size_t(r), std::vector<double>(std::size_t(f), 0.0));
    for (auto& row : wa) {
        for (double& v : row) v = rng.normal();
        normalize_row(row);
    }
    weights_.resize(spec_.classes.size());
    weights_[0] = wa;
    for (std::size_t c = 1; c < spec_.classes.size(); ++c) {
        std::vector<std::vector<double>> wb(std::size_t(r), std::vector<double>(std::size_t(f), 0.0));
        for (auto& row : wb) {
            for (double& v : row) v = rng.normal();
            normalize_row(row);
        }
        double s = spec_.separation;
        weights_[c].assign(std::size_t(r), std::vector<double>(std::size_t(f)));
        for (int j = 0; j < r; ++j) {
            auto& mixed = weights_[c][std::size_t(j)];
            double norm = 0.0;
            for (int k = 0; k < f; ++k) {
                mixed[std::size_t(k)] =
                    (1.0 - s) * wa[std::size_t(j)][std::size_t(k)] + s * wb[std::size_t(j)][std::size_t(k)];
                norm += mixed[std::size_t(k)] * mixed[std::size_t(k)];
            }
            if (norm < 1e-18)  // opposite draws cancelled; fall back to the fresh one
                mixed = wb[std::size_t(j)];
            else
                normalize_row(mixed);
        }
    }
}

int CohortGenerator::class_of(int subject) const {
    if (subject < 0 || subject >= subject_count())
        throw config_error("subject index " + std::to_string(subject) + " out of range");
    return subject / spec_.n_per_class;
}

const std::string& CohortGenerator::label_of(int subject) const {
    return spec_.classes[std::size_t(class_of(subject))];
}

std::string CohortGenerator::subject_id(int subject) const {
    int k = subject % spec_.n_per_class;
    char buf[16];
    std::snprintf(buf, sizeof buf, "_%03d", k + 1);
    return label_of(subject) + buf;
}

Rng CohortGenerator::subject_stream(int subject) const {
    return Rng(derive_seed(derive_seed(spec_.master_seed, kSubjectKey), std::uint64_t(subject)));
}

std::vector<std::vector<double>> CohortGenerator::subject_vi(Rng& rng, int cls) const {
    int r = spec_.r_regions;
    int len = spec_.segment_length();
    int f = spec_.factors;
    double a = rng.normal(0.0, spec_.sigma_subject);
    std::vector<double> g = draw_factors(rng, f, len);
    std::vector<std::vector<double>> vi(std::size_t(r), std::vector<double>(std::size_t(len), 0.0));
    for (int j = 0; j < r; ++j) {
        const auto& w = weights_[std::size_t(cls)][std::size_t(j)];
        for (int v = 0; v < len; ++v) {
            double mix = 0.0;
            for (int k = 0; k < f; ++k)
                mix += w[std::size_t(k)] * g[std::size_t(k) * std::size_t(len) + std::size_t(v)];
            vi[std::size_t(j)][std::size_t(v)] = spec_.intensity_mean + a +
                                                 base_[std::size_t(j)][std::size_t(v)] +
                                                 spec_.sigma_signal * mix +
                                                 rng.normal(0.0, sigma_delta_);
        }
    }
    return vi;
}

LabeledVolume CohortGenerator::gen_volume(int subject) const {
    int cls = class_of(subject);
    Rng rng = subject_stream(subject).derive(1);

    LabeledVolume out;
    out.label = label_of(subject);
    out.subject_id = subject_id(subject);
    Volume4D& vol = out.vol;
    vol.nx = spec_.grid_nx;
    vol.ny = spec_.grid_ny;
    vol.nz = spec_.grid_nz;
    vol.nt = spec_.nt;
    vol.voxel_mm = {spec_.voxel_mm, spec_.voxel_mm, spec_.voxel_mm};
    vol.tr_seconds = spec_.tr_seconds;
    vol.data.resize(vol.size());

    // Background: one draw per voxel, constant across frames.
    std::size_t fsize = vol.frame_size();
    for (std::size_t i = 0; i < fsize; ++i) {
        double v = rng.normal(spec_.intensity_mean, spec_.intensity_std);
        for (int t = 0; t < spec_.nt; ++t) vol.data[i + fsize * std::size_t(t)] = v;
    }

    std::vector<std::vector<double>> vi = subject_vi(rng, cls);

    // Zero-mean temporal structure on top of the intensity profile: a
    // shared region course plus per-voxel noise, both demeaned over frames
    // so the time average reproduces vi up to accumulation rounding.
    int nt = spec_.nt;
    std::vector<double> course(static_cast<std::size_t>(nt)), noise(static_cast<std::size_t>(nt));
    for (std::size_t j = 0; j < segments_.size(); ++j) {
        const RoiSegment& seg = segments_[j];
        double cmean = 0.0;
        for (int t = 0; t < nt; ++t) {
            course[std::size_t(t)] = rng.normal();
            cmean += course[std::size_t(t)];
        }
        cmean /= double(nt);
        for (int t = 0; t < nt; ++t) course[std::size_t(t)] -= cmean;
        for (std::size_t v = 0; v < seg.voxels.size(); ++v) {
            double nmean = 0.0;
            for (int t = 0; t < nt; ++t) {
                noise[std::size_t(t)] = rng.normal();
                nmean += noise[std::size_t(t)];
            }
            nmean /= double(nt);
            const Coord3& c = seg.voxels[v];
            std::size_t vox = vol.idx(c.x - offset_.x, c.y - offset_.y, c.z - offset_.z, 0);
            double base_val = vi[j][v];
            for (int t = 0; t < nt; ++t)
                vol.data[vox + fsize * std::size_t(t)] =
                    base_val + spec_.temporal_amp *
                                   (course[std::size_t(t)] + (noise[std::size_t(t)] - nmean));
        }
    }
    return out;
}

Volume3D CohortGenerator::gen_average_volume(int subject) const {
    int cls = class_of(subject);
    Rng rng = subject_stream(subject).derive(1);

    Volume3D vol;
    vol.nx = spec_.grid_nx;
    vol.ny = spec_.grid_ny;
    vol.nz = spec_.grid_nz;
    vol.voxel_mm = {spec_.voxel_mm, spec_.voxel_mm, spec_.voxel_mm};
    vol.data.resize(vol.size());
    for (double& v : vol.data) v = rng.normal(spec_.intensity_mean, spec_.intensity_std);

    std::vector<std::vector<double>> vi = subject_vi(rng, cls);
    for (std::size_t j = 0; j < segments_.size(); ++j) {
        const RoiSegment& seg = segments_[j];
        for (std::size_t v = 0; v < seg.voxels.size(); ++v) {
            const Coord3& c = seg.voxels[v];
            vol.at(c.x - offset_.x, c.y - offset_.y, c.z - offset_.z) = vi[j][v];
        }
    }
    return vol;
}

CorrelationMatrix CohortGenerator::gen_matrix(int subject) const {
    int cls = class_of(subject);
    Rng rng = subject_stream(subject).derive(2);

    int r = spec_.r_regions;
    int len = spec_.segment_length();
    int f = spec_.factors;
    double sl = std::sqrt(spec_.signal_frac);
    double sn = std::sqrt(1.0 - spec_.signal_frac);
    std::vector<double> g = draw_factors(rng, f, len);
    std::vector<std::vector<double>> arrays(std::size_t(r), std::vector<double>(std::size_t(len), 0.0));
    for (int j = 0; j < r; ++j) {
        const auto& w = weights_[std::size_t(cls)][std::size_t(j)];
        for (int v = 0; v < len; ++v) {
            double mix = 0.0;
            for (int k = 0; k < f; ++k)
                mix += w[std::size_t(k)] * g[std::size_t(k) * std::size_t(len) + std::size_t(v)];
            arrays[std::size_t(j)][std::size_t(v)] = sl * mix + sn * rng.normal();
        }
    }
    CorrelationMatrix m = correlation_matrix(arrays, subject_id(subject), label_of(subject));
    m.half_length = spec_.half_length;
    return m;
}

std::vector<LabeledVolume> gen_cohort_volumes(const SynthSpec& spec) {
    CohortGenerator gen(spec);
    std::vector<LabeledVolume> out;
    out.reserve(std::size_t(gen.subject_count()));
    for (int i = 0; i < gen.subject_count(); ++i) out.push_back(gen.gen_volume(i));
    return out;
}

std::vector<CorrelationMatrix> gen_cohort_matrices(const SynthSpec& spec) {
    CohortGenerator gen(spec);
    std::vector<CorrelationMatrix> out;
    out.reserve(std::size_t(gen.subject_count()));
    for (int i = 0; i < gen.subject_count(); ++i) out.push_back(gen.gen_matrix(i));
    return out;
}

}  // namespace hfc
