#include "hfc/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hfc/common.hpp"

namespace hfc {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
    char sep = line.find(',') != std::string::npos ? ',' : '\t';
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

bool parse_int(const std::string& s, int& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size()) return false;
    out = int(v);
    return true;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

std::string meta_path_for(const std::string& csv_path) {
    std::size_t slash = csv_path.find_last_of("/\\");
    std::size_t dot = csv_path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return csv_path + ".meta";
    return csv_path.substr(0, dot) + ".meta";
}

}  // namespace

SeedAtlas load_seed_atlas(const std::string& path, int cube_side) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open atlas " + path);
    SeedAtlas atlas;
    std::string line;
    int lineno = 0;
    bool first_data = true;
    while (std::getline(f, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::vector<std::string> fields = split_fields(t);
        if (fields.size() != 5)
            throw parse_error(path + ":" + std::to_string(lineno) +
                              ": expected 5 fields id,name,x,y,z");
        SeedAtlas::Region r;
        if (!parse_int(fields[0], r.id)) {
            if (first_data) {  // header row
                first_data = false;
                continue;
            }
            throw parse_error(path + ":" + std::to_string(lineno) + ": bad region id '" +
                              fields[0] + "'");
        }
        first_data = false;
        r.name = fields[1];
        if (!parse_int(fields[2], r.seed.x) || !parse_int(fields[3], r.seed.y) ||
            !parse_int(fields[4], r.seed.z))
            throw parse_error(path + ":" + std::to_string(lineno) + ": bad seed coordinate");
        for (const SeedAtlas::Region& prev : atlas.regions)
            if (prev.id == r.id)
                throw parse_error(path + ":" + std::to_string(lineno) + ": duplicate region id " +
                                  std::to_string(r.id));
        if (r.seed.x < 0 || r.seed.x >= cube_side || r.seed.y < 0 || r.seed.y >= cube_side ||
            r.seed.z < 0 || r.seed.z >= cube_side)
            throw bounds_error(path + ":" + std::to_string(lineno) + ": seed for region " +
                               std::to_string(r.id) + " outside cube of side " +
                               std::to_string(cube_side));
        atlas.regions.push_back(std::move(r));
    }
    if (atlas.regions.empty()) throw parse_error(path + ": atlas has no regions");
    return atlas;
}

void write_seed_atlas(const SeedAtlas& atlas, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f << "id,name,x,y,z\n";
    for (const SeedAtlas::Region& r : atlas.regions)
        f << r.id << "," << r.name << "," << r.seed.x << "," << r.seed.y << "," << r.seed.z
          << "\n";
    if (!f) throw io_error("failed writing " + path);
}

RoiSegment extract_segment(const HilbertCurve& curve, const Coord3& seed, int half_length,
                           int region_id) {
    if (half_length < 0) throw config_error("extract_segment: half_length must be >= 0");
    std::uint64_t s = curve.coord_to_index(seed);
    std::uint64_t h = std::uint64_t(half_length);
    if (s < h || s + h >= curve.total_cells())
        throw bounds_error("segment for region " + std::to_string(region_id) +
                           " runs off the curve: center index " + std::to_string(s) +
                           " with half length " + std::to_string(half_length));
    RoiSegment seg;
    seg.region_id = region_id;
    seg.seed_index = s;
    seg.half_length = half_length;
    seg.voxels.reserve(std::size_t(2 * half_length + 1));
    for (std::uint64_t i = s - h; i <= s + h; ++i) seg.voxels.push_back(curve.index_to_coord(i));
    return seg;
}

std::vector<RoiSegment> extract_segments(const HilbertCurve& curve, const SeedAtlas& atlas,
                                         int half_length) {
    std::vector<RoiSegment> out;
    out.reserve(atlas.regions.size());
    for (const SeedAtlas::Region& r : atlas.regions)
        out.push_back(extract_segment(curve, r.seed, half_length, r.id));
    return out;
}

OverlapReport check_overlaps(const std::vector<RoiSegment>& segments) {
    OverlapReport rep;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        for (std::size_t j = i + 1; j < segments.size(); ++j) {
            std::int64_t lo = std::max<std::int64_t>(std::int64_t(segments[i].first_index()),
                                                     std::int64_t(segments[j].first_index()));
            std::int64_t hi = std::min<std::int64_t>(std::int64_t(segments[i].last_index()),
                                                     std::int64_t(segments[j].last_index()));
            if (hi >= lo)
                rep.pairs.push_back({segments[i].region_id, segments[j].region_id,
                                     std::uint64_t(hi - lo + 1)});
        }
    }
    return rep;
}

std::vector<double> roi_signal_array(const Volume3D& avg, const RoiSegment& segment,
                                     const GridOffset& cube_to_grid) {
    std::vector<double> out;
    out.reserve(segment.voxels.size());
    for (const Coord3& c : segment.voxels) {
        int gx = c.x - cube_to_grid.x;
        int gy = c.y - cube_to_grid.y;
        int gz = c.z - cube_to_grid.z;
        if (gx < 0 || gx >= avg.nx || gy < 0 || gy >= avg.ny || gz < 0 || gz >= avg.nz)
            throw bounds_error("region " + std::to_string(segment.region_id) + " voxel (" +
                               std::to_string(c.x) + "," + std::to_string(c.y) + "," +
                               std::to_string(c.z) + ") falls outside the data grid");
        out.push_back(avg.at(gx, gy, gz));
    }
    return out;
}

double pearson_spatial(std::span<const double> v, std::span<const double> w, bool* degenerate) {
    if (degenerate) *degenerate = false;
    if (v.size() != w.size()) throw config_error("pearson_spatial: length mismatch");
    std::size_t n = v.size();
    if (n < 2) throw config_error("pearson_spatial: need at least 2 samples");

    auto [vmin, vmax] = std::minmax_element(v.begin(), v.end());
    auto [wmin, wmax] = std::minmax_element(w.begin(), w.end());
    if (*vmin == *vmax || *wmin == *wmax) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }

    double mv = 0.0, mw = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mv += v[i];
        mw += w[i];
    }
    mv /= double(n);
    mw /= double(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double a = v[i] - mv;
        double b = w[i] - mw;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if (sxx == 0.0 || syy == 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationMatrix correlation_matrix(const std::vector<std::vector<double>>& arrays,
                                     const std::string& subject_id, const std::string& label) {
    if (arrays.empty()) throw config_error("correlation_matrix: no region arrays");
    std::size_t len = arrays.front().size();
    if (len < 2) throw config_error("correlation_matrix: arrays need at least 2 samples");
    for (const auto& a : arrays)
        if (a.size() != len) throw config_error("correlation_matrix: array length mismatch");

    int r = int(arrays.size());
    CorrelationMatrix m;
    m.r = r;
    m.subject_id = subject_id;
    m.label = label;
    m.values.assign(std::size_t(r) * std::size_t(r), 0.0);

    for (int j = 0; j < r; ++j) {
        m.at(j, j) = 1.0;
        for (int k = j + 1; k < r; ++k) {
            bool degen = false;
            double rho = pearson_spatial(arrays[std::size_t(j)], arrays[std::size_t(k)], &degen);
            m.at(j, k) = rho;
            m.at(k, j) = rho;
            (void)degen;
        }
    }
    for (int j = 0; j < r; ++j) {
        const auto& a = arrays[std::size_t(j)];
        auto [lo, hi] = std::minmax_element(a.begin(), a.end());
        if (*lo == *hi) m.degenerate_regions.push_back(j);
    }
    return m;
}

void write_matrix_csv(const CorrelationMatrix& m, const std::string& path) {
    if (m.r < 1 || m.values.size() != std::size_t(m.r) * std::size_t(m.r))
        throw config_error("write_matrix_csv: malformed matrix");
    std::ofstream f(path);
    if (!f) throw io_error("cannot open " + path + " for writing");
    for (int j = 0; j < m.r; ++j) {
        for (int k = 0; k < m.r; ++k) {
            if (k) f << ",";
            f << g17(m.at(j, k));
        }
        f << "\n";
    }
    if (!f) throw io_error("failed writing " + path);

    std::string mp = meta_path_for(path);
    std::ofstream mf(mp);
    if (!mf) throw io_error("cannot open " + mp + " for writing");
    mf << "subject_id=" << m.subject_id << "\n";
    mf << "label=" << m.label << "\n";
    mf << "half_length=" << m.half_length << "\n";
    mf << "r=" << m.r << "\n";
    mf << "degenerate_regions=";
    for (std::size_t i = 0; i < m.degenerate_regions.size(); ++i) {
        if (i) mf << ",";
        mf << m.degenerate_regions[i];
    }
    mf << "\n";
    if (!mf) throw io_error("failed writing " + mp);
}

CorrelationMatrix read_matrix_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open matrix " + path);
    CorrelationMatrix m;
    std::string line;
    int lineno = 0;
    std::size_t width = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty()) continue;
        std::vector<std::string> fields = split_fields(t);
        if (width == 0) width = fields.size();
        if (fields.size() != width)
            throw parse_error(path + ":" + std::to_string(lineno) + ": ragged row, expected " +
                              std::to_string(width) + " values");
        for (const std::string& s : fields) {
            double v = 0.0;
            if (!parse_double(s, v))
                throw parse_error(path + ":" + std::to_string(lineno) + ": bad value '" + s + "'");
            m.values.push_back(v);
        }
    }
    if (width == 0) throw parse_error(path + ": empty matrix file");
    if (m.values.size() != width * width)
        throw parse_error(path + ": expected a square matrix, got " +
                          std::to_string(m.values.size() / width) + " rows of " +
                          std::to_string(width));
    m.r = int(width);

    std::ifstream mf(meta_path_for(path));
    if (mf) {
        while (std::getline(mf, line)) {
            std::size_t eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = trim(line.substr(0, eq));
            std::string val = trim(line.substr(eq + 1));
            if (key == "subject_id") {
                m.subject_id = val;
            } else if (key == "label") {
                m.label = val;
            } else if (key == "half_length") {
                int hl = 0;
                if (parse_int(val, hl)) m.half_length = hl;
            } else if (key == "degenerate_regions" && !val.empty()) {
                for (const std::string& s : split_fields(val)) {
                    int idx = 0;
                    if (parse_int(s, idx)) m.degenerate_regions.push_back(idx);
                }
            }
        }
    }
    return m;
}

std::vector<std::vector<double>> reho_pairwise(const Volume4D& vol, const RoiSegment& segment,
                                               const GridOffset& cube_to_grid,
                                               std::vector<int>* degenerate) {
    if (vol.nt < 2) throw config_error("reho_pairwise: need at least 2 frames");
    if (vol.data.size() != vol.size()) throw config_error("reho_pairwise: data size mismatch");
    std::size_t n = segment.voxels.size();
    std::size_t nt = std::size_t(vol.nt);
    std::size_t fsize = vol.frame_size();

    // Centered series and their sums of squares, one row per segment voxel.
    std::vector<double> centered(n * nt);
    std::vector<double> sumsq(n, 0.0);
    std::vector<char> constant(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const Coord3& c = segment.voxels[i];
        int gx = c.x - cube_to_grid.x;
        int gy = c.y - cube_to_grid.y;
        int gz = c.z - cube_to_grid.z;
        if (gx < 0 || gx >= vol.nx || gy < 0 || gy >= vol.ny || gz < 0 || gz >= vol.nz)
            throw bounds_error("region " + std::to_string(segment.region_id) + " voxel (" +
                               std::to_string(c.x) + "," + std::to_string(c.y) + "," +
                               std::to_string(c.z) + ") falls outside the data grid");
        std::size_t base = vol.idx(gx, gy, gz, 0);
        double mean = 0.0, lo = vol.data[base], hi = lo;
        for (std::size_t t = 0; t < nt; ++t) {
            double v = vol.data[base + fsize * t];
            mean += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        mean /= double(nt);
        if (lo == hi) {
            constant[i] = 1;
            if (degenerate) degenerate->push_back(int(i));
            continue;
        }
        double* row = centered.data() + i * nt;
        for (std::size_t t = 0; t < nt; ++t) {
            row[t] = vol.data[base + fsize * t] - mean;
            sumsq[i] += row[t] * row[t];
        }
    }

    std::vector<std::vector<double>> pc(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        if (constant[i]) continue;
        pc[i][i] = 1.0;
        const double* ri = centered.data() + i * nt;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (constant[j]) continue;
            const double* rj = centered.data() + j * nt;
            double dot = 0.0;
            for (std::size_t t = 0; t < nt; ++t) dot += ri[t] * rj[t];
            double rho = std::clamp(dot / std::sqrt(sumsq[i] * sumsq[j]), -1.0, 1.0);
            pc[i][j] = rho;
            pc[j][i] = rho;
        }
    }
    return pc;
}

double reho_region(const std::vector<std::vector<double>>& pc) {
    if (pc.empty()) throw config_error("reho_region: empty matrix");
    std::size_t n = pc.size();
    double sum = 0.0;
    for (const auto& row : pc) {
        if (row.size() != n) throw config_error("reho_region: matrix is not square");
        for (double v : row) sum += v;
    }
    return sum / (double(n) * double(n));
}

namespace {

void mean_and_spreads(const std::vector<double>& xs, double& mean, double& lit, double& samp) {
    std::size_t n = xs.size();
    mean = 0.0;
    for (double v : xs) mean += v;
    mean /= double(n);
    double ss = 0.0;
    for (double v : xs) ss += (v - mean) * (v - mean);
    lit = std::sqrt(ss) / double(n);
    samp = n > 1 ? std::sqrt(ss / double(n - 1)) : 0.0;
}

}  // namespace

RehoSummary reho_summary(const std::vector<std::vector<double>>& table) {
    if (table.empty()) throw config_error("reho_summary: empty table");
    std::size_t regions = table.front().size();
    if (regions == 0) throw config_error("reho_summary: empty rows");
    for (const auto& row : table)
        if (row.size() != regions) throw config_error("reho_summary: ragged table");

    RehoSummary s;
    for (const auto& row : table) {
        double m, lit, samp;
        mean_and_spreads(row, m, lit, samp);
        s.subject_mean.push_back(m);
        s.subject_std_literal.push_back(lit);
        s.subject_std_sample.push_back(samp);
    }
    std::vector<double> col(table.size());
    for (std::size_t j = 0; j < regions; ++j) {
        for (std::size_t i = 0; i < table.size(); ++i) col[i] = table[i][j];
        double m, lit, samp;
        mean_and_spreads(col, m, lit, samp);
        s.region_mean.push_back(m);
        s.region_std_literal.push_back(lit);
        s.region_std_sample.push_back(samp);
    }
    return s;
}

}  // namespace hfc
