#include "seqci/intervention.hpp"

#include <cmath>
#include <fstream>

#include "seqci/common.hpp"
#include "seqci/csv.hpp"

namespace seqci {

void InterventionSpec::validate() const {
    if (delta.empty()) throw ConfigError("intervention: delta vector must be non-empty");
    for (double d : delta) {
        if (!(d > 0.0) || !std::isfinite(d)) {
            throw ConfigError("intervention: every delta_s must lie in (0, inf)");
        }
    }
}

std::string HistoryKey::pattern() const {
    std::string out;
    for (int i = len - 1; i >= 0; --i) out += ((bits >> i) & 1u) ? '1' : '0';
    return out;
}

HistoryKey HistoryKey::of_prefix(const std::vector<int>& w, int len) {
    HistoryKey k;
    k.len = len;
    for (int i = 0; i < len; ++i) {
        k.bits = (k.bits << 1) | static_cast<std::uint32_t>(w[static_cast<std::size_t>(i)] & 1);
    }
    return k;
}

void PTables::set(int s, HistoryKey key, Cell cell) {
    if (s < 1) throw ShapeError("ptables: position must be >= 1");
    if (static_cast<int>(by_position_.size()) < s) by_position_.resize(static_cast<std::size_t>(s));
    by_position_[static_cast<std::size_t>(s - 1)][key] = cell;
}

std::optional<PTables::Cell> PTables::lookup(int s, HistoryKey key) const {
    if (s < 1 || s > s_max()) return std::nullopt;
    const auto& m = by_position_[static_cast<std::size_t>(s - 1)];
    const auto it = m.find(key);
    if (it == m.end()) return std::nullopt;
    return it->second;
}

double PTables::p_or_throw(int s, HistoryKey key) const {
    const auto cell = lookup(s, key);
    if (!cell) {
        throw MissingStratumError("missing treatment-history stratum at position " +
                                  std::to_string(s) + ", pattern '" + key.pattern() + "'");
    }
    return cell->p_hat;
}

const std::map<HistoryKey, PTables::Cell>& PTables::at_position(int s) const {
    if (s < 1 || s > s_max()) throw ShapeError("ptables: position out of range");
    return by_position_[static_cast<std::size_t>(s - 1)];
}

void PTables::write_csv(const std::string& path) const {
    CsvWriter csv(path);
    csv.row("s", "pattern", "count", "p_hat");
    for (int s = 1; s <= s_max(); ++s) {
        for (const auto& [key, cell] : at_position(s)) {
            csv.row(s, key.pattern(), cell.count, cell.p_hat);
        }
    }
}

double q_shift(double delta_s, double p) {
    if (!(delta_s > 0.0) || !std::isfinite(delta_s)) {
        throw ShapeError("q_shift: delta must lie in (0, inf)");
    }
    if (!(p >= 0.0 && p <= 1.0)) throw ShapeError("q_shift: p must lie in [0, 1]");
    if (p == 0.0) return 0.0;
    if (p == 1.0) return 1.0;
    if (delta_s == 1.0) return p;  // observed mechanism, exactly
    return delta_s * p / (delta_s * p + 1.0 - p);
}

double dq_weight(int w, double delta_s, double p) {
    if (w != 0 && w != 1) throw ShapeError("dq_weight: w must be 0 or 1");
    const double q = q_shift(delta_s, p);
    return w == 1 ? q : 1.0 - q;
}

double odds_ratio(double delta_s, double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ShapeError("odds_ratio: undefined for degenerate p in {0, 1}");
    }
    const double q = q_shift(delta_s, p);
    return (q / (1.0 - q)) * ((1.0 - p) / p);
}

PTables fit_p_tables(const Dataset& split) {
    if (split.units.empty()) throw DataError("fit_p_tables: empty split");
    PTables tables;
    for (int s = 1; s <= split.s_max; ++s) {
        std::map<HistoryKey, std::pair<long, long>> counts;  // key -> (n, n_treated)
        for (const Trajectory& t : split.units) {
            if (t.s_len() < s) continue;
            const HistoryKey key = HistoryKey::of_prefix(t.w, s - 1);
            auto& c = counts[key];
            ++c.first;
            c.second += t.w[static_cast<std::size_t>(s - 1)];
        }
        for (const auto& [key, c] : counts) {
            tables.set(s, key,
                       {c.first, static_cast<double>(c.second) / static_cast<double>(c.first)});
        }
    }
    return tables;
}

}  // namespace seqci
