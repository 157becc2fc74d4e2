// Incremental stochastic-intervention math: the odds-shifted assignment
// probability q_s, the intervention mass dQ_s, and saturated estimation of
// treatment-history probabilities from data.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqci/dataset.hpp"

namespace seqci {

// Incremental-parameter vector, one entry per segment position.
struct InterventionSpec {
    std::vector<double> delta;  // each in (0, inf), length = dataset s_max

    static InterventionSpec uniform(double d, int s_max) {
        return InterventionSpec{std::vector<double>(static_cast<std::size_t>(s_max), d)};
    }
    int size() const { return static_cast<int>(delta.size()); }
    void validate() const;
};

// Treatment-history key: the bits of (w_1, ..., w_len) with w_1 as MSB.
struct HistoryKey {
    std::uint32_t bits = 0;
    int len = 0;

    // Unique over (len, bits): prepend a sentinel 1 above the MSB.
    std::uint64_t packed() const { return (std::uint64_t{1} << len) | bits; }
    bool operator<(const HistoryKey& o) const { return packed() < o.packed(); }
    bool operator==(const HistoryKey& o) const { return packed() == o.packed(); }
    std::string pattern() const;  // "" for the empty history, else e.g. "101"

    static HistoryKey of_prefix(const std::vector<int>& w, int len);
};

// Saturated treatment-history probabilities p_s(w_{1..s-1}) with counts,
// estimated among units with at least s segments.
class PTables {
public:
    struct Cell {
        long count = 0;    // units with this history and S_i >= s
        double p_hat = 0;  // share of those with W_s = 1
    };

    void set(int s, HistoryKey key, Cell cell);
    std::optional<Cell> lookup(int s, HistoryKey key) const;
    // As lookup().p_hat but throws MissingStratumError when absent.
    double p_or_throw(int s, HistoryKey key) const;
    int s_max() const { return static_cast<int>(by_position_.size()); }
    const std::map<HistoryKey, Cell>& at_position(int s) const;

    // Audit CSV: s,pattern,count,p_hat.
    void write_csv(const std::string& path) const;

private:
    std::vector<std::map<HistoryKey, Cell>> by_position_;  // index s-1
};

// q_s(delta; p) = delta*p / (delta*p + 1 - p). Endpoints are exact:
// p=0 -> 0, p=1 -> 1 for any delta.
double q_shift(double delta_s, double p);

// Intervention mass at w: q for w=1, 1-q for w=0.
double dq_weight(int w, double delta_s, double p);

// [q/(1-q)] * [(1-p)/p]; analytically equal to delta. Throws for p in {0,1}.
double odds_ratio(double delta_s, double p);

// Exact empirical frequencies per (position, history pattern) among units
// with S_i >= s.
PTables fit_p_tables(const Dataset& split);

}  // namespace seqci
