#include "seqci/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "seqci/common.hpp"

namespace seqci {

using ordered_json = nlohmann::ordered_json;

namespace {

[[noreturn]] void fail_unit(int unit, const std::string& what) {
    throw DataError("dataset: unit " + std::to_string(unit) + ": " + what);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& ctx) {
    double v = 0.0;
    const auto* begin = s.data();
    const auto* end = s.data() + s.size();
    auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        throw DataError("parse error: bad number '" + s + "' in " + ctx);
    }
    return v;
}

long parse_long(const std::string& s, const std::string& ctx) {
    long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw DataError("parse error: bad integer '" + s + "' in " + ctx);
    }
    return v;
}

}  // namespace

void validate_dataset(const Dataset& ds) {
    if (ds.units.empty()) throw DataError("dataset: must contain at least one unit");
    if (ds.d_r < 1) throw DataError("dataset: embedding dimension must be >= 1");
    if (ds.s_max < 1) throw DataError("dataset: s_max must be >= 1");
    for (int i = 0; i < ds.n(); ++i) {
        const Trajectory& t = ds.units[static_cast<std::size_t>(i)];
        if (t.w.empty()) fail_unit(i, "segment count must be >= 1");
        if (t.w.size() != t.r.size()) {
            fail_unit(i, "treatment path length " + std::to_string(t.w.size()) +
                             " != embedding path length " + std::to_string(t.r.size()));
        }
        if (t.s_len() > ds.s_max) {
            fail_unit(i, "segment count " + std::to_string(t.s_len()) + " exceeds s_max " +
                             std::to_string(ds.s_max));
        }
        if (!std::isfinite(t.y)) fail_unit(i, "non-finite outcome");
        for (std::size_t s = 0; s < t.w.size(); ++s) {
            if (t.w[s] != 0 && t.w[s] != 1) {
                fail_unit(i, "segment " + std::to_string(s + 1) + ": treatment must be 0 or 1");
            }
            if (t.r[s].size() != ds.d_r) {
                fail_unit(i, "segment " + std::to_string(s + 1) + ": embedding dimension " +
                                 std::to_string(t.r[s].size()) + " != d_r " +
                                 std::to_string(ds.d_r));
            }
            if (!t.r[s].allFinite()) {
                fail_unit(i, "segment " + std::to_string(s + 1) + ": non-finite embedding");
            }
        }
    }
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_dataset: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("load_dataset: empty file " + path);
    ordered_json header;
    try {
        header = ordered_json::parse(line);
    } catch (const std::exception& e) {
        throw DataError("load_dataset: line 1: " + std::string(e.what()));
    }
    if (!header.contains("format") || header["format"] != "seqci.dataset") {
        throw DataError("load_dataset: line 1: missing or unknown format tag");
    }
    if (!header.contains("version") || header["version"].get<int>() != 1) {
        throw DataError("load_dataset: line 1: unsupported version");
    }
    Dataset ds;
    try {
        ds.d_r = header.at("d_r").get<int>();
        ds.s_max = header.at("s_max").get<int>();
    } catch (const std::exception& e) {
        throw DataError("load_dataset: line 1: " + std::string(e.what()));
    }
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw DataError("load_dataset: line " + std::to_string(line_no) + ": " +
                            std::string(e.what()));
        }
        Trajectory t;
        try {
            t.y = j.at("y").get<double>();
            t.w = j.at("w").get<std::vector<int>>();
            for (const auto& row : j.at("r")) {
                Vector v(row.size());
                Eigen::Index k = 0;
                for (const auto& x : row) v[k++] = x.get<double>();
                t.r.push_back(std::move(v));
            }
        } catch (const std::exception& e) {
            throw DataError("load_dataset: line " + std::to_string(line_no) + ": " +
                            std::string(e.what()));
        }
        ds.units.push_back(std::move(t));
    }
    validate_dataset(ds);
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    validate_dataset(ds);
    std::ofstream out(path);
    if (!out) throw DataError("save_dataset: cannot open " + path + " for writing");
    ordered_json header;
    header["format"] = "seqci.dataset";
    header["version"] = 1;
    header["d_r"] = ds.d_r;
    header["s_max"] = ds.s_max;
    out << header.dump() << '\n';
    for (const Trajectory& t : ds.units) {
        ordered_json j;
        j["y"] = t.y;
        j["w"] = t.w;
        ordered_json r = ordered_json::array();
        for (const Vector& v : t.r) {
            ordered_json row = ordered_json::array();
            for (Eigen::Index k = 0; k < v.size(); ++k) row.push_back(v[k]);
            r.push_back(std::move(row));
        }
        j["r"] = std::move(r);
        out << j.dump() << '\n';
    }
    if (!out) throw DataError("save_dataset: write failed for " + path);
}

Dataset ingest_embeddings(const std::string& embeddings_path, const std::string& outcomes_path,
                          const std::string& treatments_path) {
    // Embeddings: JSON-lines of per-unit vector lists.
    std::ifstream emb(embeddings_path);
    if (!emb) throw DataError("ingest: cannot open " + embeddings_path);
    std::vector<std::vector<Vector>> r_units;
    std::string line;
    int line_no = 0;
    while (std::getline(emb, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw DataError("ingest: " + embeddings_path + " line " + std::to_string(line_no) +
                            ": " + std::string(e.what()));
        }
        if (!j.is_array()) {
            throw DataError("ingest: " + embeddings_path + " line " + std::to_string(line_no) +
                            ": expected a list of embedding vectors");
        }
        std::vector<Vector> segs;
        for (const auto& row : j) {
            Vector v(row.size());
            Eigen::Index k = 0;
            for (const auto& x : row) v[k++] = x.get<double>();
            segs.push_back(std::move(v));
        }
        r_units.push_back(std::move(segs));
    }
    const int n = static_cast<int>(r_units.size());

    // Outcomes: unit_id,y
    std::ifstream oc(outcomes_path);
    if (!oc) throw DataError("ingest: cannot open " + outcomes_path);
    std::vector<double> y;
    line_no = 0;
    while (std::getline(oc, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("unit_id", 0) == 0) continue;  // header
        auto fields = split_csv_line(line);
        if (fields.size() != 2) {
            throw DataError("ingest: " + outcomes_path + " line " + std::to_string(line_no) +
                            ": expected unit_id,y");
        }
        const long id = parse_long(fields[0], outcomes_path);
        if (id != static_cast<long>(y.size())) {
            throw DataError("ingest: " + outcomes_path + " line " + std::to_string(line_no) +
                            ": unit ids must be 0-based and consecutive");
        }
        y.push_back(parse_double(fields[1], outcomes_path));
    }
    if (static_cast<int>(y.size()) != n) {
        throw DataError("ingest: outcome count " + std::to_string(y.size()) +
                        " does not match embedding unit count " + std::to_string(n));
    }

    // Treatments: unit_id,segment_index,w (1-based segment index).
    std::ifstream tr(treatments_path);
    if (!tr) throw DataError("ingest: cannot open " + treatments_path);
    std::vector<std::vector<int>> w(static_cast<std::size_t>(n));
    line_no = 0;
    while (std::getline(tr, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("unit_id", 0) == 0) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 3) {
            throw DataError("ingest: " + treatments_path + " line " + std::to_string(line_no) +
                            ": expected unit_id,segment_index,w");
        }
        const long id = parse_long(fields[0], treatments_path);
        const long seg = parse_long(fields[1], treatments_path);
        const long wv = parse_long(fields[2], treatments_path);
        if (id < 0 || id >= n) {
            throw DataError("ingest: " + treatments_path + " line " + std::to_string(line_no) +
                            ": unit id " + std::to_string(id) + " out of range (n=" +
                            std::to_string(n) + ")");
        }
        auto& wu = w[static_cast<std::size_t>(id)];
        if (seg != static_cast<long>(wu.size()) + 1) {
            throw DataError("ingest: " + treatments_path + " line " + std::to_string(line_no) +
                            ": segment indices for unit " + std::to_string(id) +
                            " must be 1-based and consecutive");
        }
        if (wv != 0 && wv != 1) {
            throw DataError("ingest: " + treatments_path + " line " + std::to_string(line_no) +
                            ": treatment value " + std::to_string(wv) + " is not binary");
        }
        wu.push_back(static_cast<int>(wv));
    }

    Dataset ds;
    ds.units.reserve(static_cast<std::size_t>(n));
    int s_max = 0;
    int d_r = n > 0 && !r_units[0].empty() ? static_cast<int>(r_units[0][0].size()) : 0;
    for (int i = 0; i < n; ++i) {
        const auto& segs = r_units[static_cast<std::size_t>(i)];
        const auto& wu = w[static_cast<std::size_t>(i)];
        if (segs.size() != wu.size()) {
            throw DataError("ingest: unit " + std::to_string(i) + ": " +
                            std::to_string(wu.size()) + " treatment rows vs " +
                            std::to_string(segs.size()) + " embedding segments");
        }
        Trajectory t;
        t.y = y[static_cast<std::size_t>(i)];
        t.w = wu;
        t.r = segs;
        s_max = std::max(s_max, t.s_len());
        ds.units.push_back(std::move(t));
    }
    ds.d_r = d_r;
    ds.s_max = s_max;
    validate_dataset(ds);
    return ds;
}

}  // namespace seqci
