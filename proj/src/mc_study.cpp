#include "seqci/mc_study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "seqci/common.hpp"
#include "seqci/csv.hpp"

namespace seqci {

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<double> log_grid(double lo, double hi, int points) {
    if (!(lo > 0.0) || !(hi > lo) || points < 2) {
        throw ConfigError("log_grid: need 0 < lo < hi and points >= 2");
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(points));
    const double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < points; ++i) {
        out.push_back(std::exp(llo + (lhi - llo) * i / (points - 1)));
    }
    return out;
}

void McStudyConfig::validate() const {
    if (reps < 1) throw ConfigError("mc-study: reps must be >= 1");
    if (sample_sizes.empty() || delta_grid.empty()) {
        throw ConfigError("mc-study: sample_sizes and delta_grid must be non-empty");
    }
    for (int n : sample_sizes) {
        if (n < estimator.k_folds) throw ConfigError("mc-study: sample size below k_folds");
    }
    for (double d : delta_grid) {
        if (!(d > 0.0)) throw ConfigError("mc-study: delta values must be positive");
    }
    if (n_oracle < 1 || n_truth < 1) throw ConfigError("mc-study: oracle sizes must be >= 1");
    if (workers < 1) throw ConfigError("mc-study: workers must be >= 1");
    dgp.validate();
}

namespace {

struct RepOutcome {
    // Per delta-grid entry: psi_hat/ci bounds, or failed flag.
    std::vector<double> psi, ci_low, ci_high;
    std::vector<char> ok;
};

}  // namespace

McStudyResult run_mc_study(const McStudyConfig& cfg) {
    cfg.validate();
    const DgpStructure structure = build_structure(cfg.dgp);
    const Rng root(cfg.base_seed);

    std::vector<InterventionSpec> deltas;
    deltas.reserve(cfg.delta_grid.size());
    for (double d : cfg.delta_grid) {
        deltas.push_back(InterventionSpec::uniform(d, cfg.dgp.s_max));
    }

    // Shared oracle: one p-table sample, one truth value per delta.
    Rng oracle_rng = root.split(0xACE);
    const PTables oracle_p = fit_oracle_p(cfg.dgp, structure, cfg.n_oracle, oracle_rng);
    std::vector<OraclePsi> truth;
    truth.reserve(deltas.size());
    for (std::size_t j = 0; j < deltas.size(); ++j) {
        Rng truth_rng = root.split(0xBEE0 + j);
        truth.push_back(
            oracle_psi(cfg.dgp, structure, oracle_p, deltas[j], cfg.n_truth, truth_rng));
    }

    // Replication tasks, parallel over a worker pool; rng streams and the
    // reduction order depend only on task indices.
    struct Task {
        int n_index;
        int rep;
    };
    std::vector<Task> tasks;
    tasks.reserve(cfg.sample_sizes.size() * static_cast<std::size_t>(cfg.reps));
    for (std::size_t a = 0; a < cfg.sample_sizes.size(); ++a) {
        for (int r = 0; r < cfg.reps; ++r) tasks.push_back({static_cast<int>(a), r});
    }
    std::vector<RepOutcome> outcomes(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= tasks.size()) return;
            const Task task = tasks[idx];
            const std::uint64_t task_id =
                (static_cast<std::uint64_t>(task.n_index) << 32) |
                static_cast<std::uint64_t>(task.rep);
            Rng task_rng = root.split(0x5117).split(task_id);
            RepOutcome& out = outcomes[idx];
            out.psi.assign(deltas.size(), 0.0);
            out.ci_low.assign(deltas.size(), 0.0);
            out.ci_high.assign(deltas.size(), 0.0);
            out.ok.assign(deltas.size(), 0);
            try {
                Rng sim_rng = task_rng.split(1);
                auto [ds, truth_unused] = simulate_dataset(
                    cfg.dgp, structure, cfg.sample_sizes[static_cast<std::size_t>(task.n_index)],
                    sim_rng);
                const auto grid =
                    estimate_grid_outcomes(ds, deltas, cfg.estimator, task_rng.split(2));
                for (std::size_t j = 0; j < grid.size(); ++j) {
                    if (grid[j].result) {
                        out.psi[j] = grid[j].result->psi_hat;
                        out.ci_low[j] = grid[j].result->ci_low;
                        out.ci_high[j] = grid[j].result->ci_high;
                        out.ok[j] = 1;
                    }
                }
            } catch (const Error&) {
                // whole replication failed; all deltas stay marked failed
            }
        }
    };
    {
        std::vector<std::thread> pool;
        const int nw = std::min<int>(cfg.workers, static_cast<int>(tasks.size()));
        pool.reserve(static_cast<std::size_t>(nw));
        for (int t = 0; t < nw; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    McStudyResult res;
    res.psi_true.reserve(truth.size());
    res.psi_true_se.reserve(truth.size());
    std::string truth_bytes;
    for (const auto& t : truth) {
        res.psi_true.push_back(t.psi);
        res.psi_true_se.push_back(t.mc_se);
        truth_bytes += format_double(t.psi) + "," + format_double(t.mc_se) + ";";
    }
    res.oracle_hash = fnv1a(truth_bytes);

    for (std::size_t a = 0; a < cfg.sample_sizes.size(); ++a) {
        for (std::size_t j = 0; j < deltas.size(); ++j) {
            McMetricsRow row;
            row.n = cfg.sample_sizes[a];
            row.delta = cfg.delta_grid[j];
            double sum_err = 0.0, sum_sq = 0.0, covered = 0.0, len = 0.0;
            int done = 0;
            for (std::size_t idx = 0; idx < tasks.size(); ++idx) {
                if (tasks[idx].n_index != static_cast<int>(a)) continue;
                const RepOutcome& o = outcomes[idx];
                if (!o.ok[j]) continue;
                ++done;
                const double err = o.psi[j] - truth[j].psi;
                sum_err += err;
                sum_sq += err * err;
                covered += (o.ci_low[j] <= truth[j].psi && truth[j].psi <= o.ci_high[j]) ? 1 : 0;
                len += o.ci_high[j] - o.ci_low[j];
            }
            row.reps_completed = done;
            row.reps_failed = cfg.reps - done;
            if (done > 0) {
                row.bias = sum_err / done;
                row.rmse = std::sqrt(sum_sq / done);
                row.coverage = covered / done;
                row.avg_ci_length = len / done;
            }
            res.failed_fraction = std::max(
                res.failed_fraction, static_cast<double>(row.reps_failed) / cfg.reps);
            res.rows.push_back(row);
        }
    }
    if (res.failed_fraction > 0.10) {
        throw EstimationError("mc-study: more than 10% of replications failed (worst cell " +
                              format_double(res.failed_fraction) + ")");
    }
    return res;
}

void write_mc_metrics_csv(const McStudyResult& res, const std::string& path) {
    CsvWriter csv(path);
    csv.row("n", "delta", "bias", "rmse", "coverage", "avg_ci_length", "reps_completed",
            "reps_failed");
    for (const auto& r : res.rows) {
        csv.row(r.n, r.delta, r.bias, r.rmse, r.coverage, r.avg_ci_length, r.reps_completed,
                r.reps_failed);
    }
}

void write_oracle_csv(const std::vector<InterventionSpec>& deltas,
                      const std::vector<OraclePsi>& oracle, const std::string& path) {
    if (deltas.empty() || deltas.size() != oracle.size()) {
        throw ShapeError("write_oracle_csv: delta/oracle size mismatch");
    }
    CsvWriter csv(path);
    {
        std::string header;
        for (int s = 1; s <= deltas[0].size(); ++s) {
            header += "delta_" + std::to_string(s) + ",";
        }
        csv.row(header + "psi_true,mc_se,n_truth");
    }
    for (std::size_t j = 0; j < deltas.size(); ++j) {
        std::string line;
        for (double d : deltas[j].delta) line += format_double(d) + ",";
        line += format_double(oracle[j].psi) + "," + format_double(oracle[j].mc_se) + "," +
                std::to_string(oracle[j].n_truth);
        csv.row(line);
    }
}

std::vector<EstimateResult> run_delta_sweep(const Dataset& ds, const SweepConfig& cfg) {
    if (cfg.grid.empty()) throw ConfigError("sweep: empty grid");
    for (double g : cfg.grid) {
        if (!(g > 0.0)) throw ConfigError("sweep: grid values must be positive");
    }
    if (cfg.mode == SweepMode::Position &&
        (cfg.target_position < 1 || cfg.target_position > ds.s_max)) {
        throw ConfigError("sweep: target position out of range for dataset s_max");
    }
    std::vector<double> grid = cfg.grid;
    std::sort(grid.begin(), grid.end());
    std::vector<InterventionSpec> deltas;
    deltas.reserve(grid.size());
    for (double g : grid) {
        InterventionSpec spec = InterventionSpec::uniform(1.0, ds.s_max);
        if (cfg.mode == SweepMode::Uniform) {
            spec = InterventionSpec::uniform(g, ds.s_max);
        } else {
            spec.delta[static_cast<std::size_t>(cfg.target_position - 1)] = g;
        }
        deltas.push_back(std::move(spec));
    }
    return estimate_grid(ds, deltas, cfg.estimator, Rng(cfg.seed));
}

void write_sweep_csv(const std::vector<EstimateResult>& results, const SweepConfig& cfg,
                     const std::string& path) {
    CsvWriter csv(path);
    csv.row("delta", "psi_hat", "ci_low", "ci_high", "target_position");
    const int pos = cfg.mode == SweepMode::Position ? cfg.target_position : 0;  // 0 = all
    for (const auto& r : results) {
        const double swept =
            cfg.mode == SweepMode::Position
                ? r.delta[static_cast<std::size_t>(cfg.target_position - 1)]
                : r.delta[0];
        csv.row(swept, r.psi_hat, r.ci_low, r.ci_high, pos);
    }
}

void write_estimates_csv(const std::vector<EstimateResult>& results, const std::string& path) {
    if (results.empty()) throw ShapeError("write_estimates_csv: no rows");
    CsvWriter csv(path);
    {
        std::string header;
        for (std::size_t s = 1; s <= results[0].delta.size(); ++s) {
            header += "delta_" + std::to_string(s) + ",";
        }
        csv.row(header + "psi_hat,se,ci_low,ci_high,n,missing_strata,overlap_projections");
    }
    for (const auto& r : results) {
        std::string line;
        for (double d : r.delta) line += format_double(d) + ",";
        line += format_double(r.psi_hat) + "," +
                format_double(r.sigma_hat / std::sqrt(static_cast<double>(r.n))) + "," +
                format_double(r.ci_low) + "," + format_double(r.ci_high) + "," +
                std::to_string(r.n) + "," + std::to_string(r.missing_strata) + "," +
                std::to_string(r.overlap_projections);
        csv.row(line);
    }
}

}  // namespace seqci
