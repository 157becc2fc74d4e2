// Monte-Carlo study driver: simulates replications, estimates over a delta
// grid against a shared oracle truth, and reduces bias / RMSE / coverage /
// CI-length metrics. Also the delta-sweep runner used on ingested data.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqci/dgp.hpp"
#include "seqci/estimator.hpp"

namespace seqci {

struct McStudyConfig {
    std::vector<int> sample_sizes = {2000, 3000, 4000, 5000};
    std::vector<double> delta_grid = {0.5, 0.75, 1.0, 1.25, 1.5, 2.0};  // uniform across positions
    int reps = 200;
    DgpConfig dgp;
    EstimatorConfig estimator;  // k_folds defaults to 2 for MC studies
    int n_oracle = 5000;
    int n_truth = 5000;
    std::uint64_t base_seed = 1;
    int workers = 1;

    McStudyConfig() { estimator.k_folds = 2; }
    void validate() const;
};

struct McMetricsRow {
    int n = 0;
    double delta = 0.0;
    double bias = 0.0;
    double rmse = 0.0;
    double coverage = 0.0;
    double avg_ci_length = 0.0;
    int reps_completed = 0;
    int reps_failed = 0;
};

struct McStudyResult {
    std::vector<McMetricsRow> rows;        // ordered by (sample size, delta)
    std::vector<double> psi_true;          // per delta-grid entry
    std::vector<double> psi_true_se;
    std::uint64_t oracle_hash = 0;         // hash of the shared truth table
    double failed_fraction = 0.0;          // worst (n, delta) cell
};

// Deterministic in cfg.base_seed for any worker count: replication r of
// sample-size index a uses the rng stream (base_seed, a, r), and results are
// reduced in task order. Throws EstimationError when more than 10% of the
// replications of any (n, delta) cell fail.
McStudyResult run_mc_study(const McStudyConfig& cfg);

void write_mc_metrics_csv(const McStudyResult& res, const std::string& path);
// Shared-truth audit table: delta_1..delta_smax, psi_true, mc_se, n_truth.
void write_oracle_csv(const std::vector<InterventionSpec>& deltas,
                      const std::vector<OraclePsi>& oracle, const std::string& path);

enum class SweepMode { Uniform, Position };

struct SweepConfig {
    SweepMode mode = SweepMode::Uniform;
    int target_position = 1;    // 1-based; used by Position mode
    std::vector<double> grid;   // delta values, all > 0; sorted before estimation
    EstimatorConfig estimator;  // k_folds defaults to 10
    std::uint64_t seed = 1;
};

// Position-targeted sweeps set delta to the grid value at the target
// position and 1 elsewhere. Rows come back sorted by the swept value.
std::vector<EstimateResult> run_delta_sweep(const Dataset& ds, const SweepConfig& cfg);

void write_sweep_csv(const std::vector<EstimateResult>& results, const SweepConfig& cfg,
                     const std::string& path);
// Full estimate rows: delta_1..delta_smax, psi_hat, se, ci_low, ci_high, n,
// missing_strata, overlap_projections.
void write_estimates_csv(const std::vector<EstimateResult>& results, const std::string& path);

// Stable 64-bit FNV-1a, used for config and oracle-table hashes.
std::uint64_t fnv1a(const std::string& bytes);

// Log-uniform grid over [lo, hi] with the given point count.
std::vector<double> log_grid(double lo, double hi, int points);

}  // namespace seqci
