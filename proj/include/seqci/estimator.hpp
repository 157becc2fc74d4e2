// Cross-fitted estimation of average outcomes under incremental stochastic
// interventions: joint deconfounder/outcome architecture, per-position
// propensities, backward pseudo-outcome recursion, influence-function
// evaluation, and Wald intervals.
#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "seqci/dataset.hpp"
#include "seqci/dgp.hpp"
#include "seqci/intervention.hpp"
#include "seqci/mlp.hpp"

namespace seqci {

// Feature geometry shared by the outcome head and the per-position nuisance
// nets. Ragged histories are padded to s_max with explicit presence masks:
//   [w_1..w_smax | w mask | f_1..f_smax (d_f each) | f mask | S]
struct FeatureLayout {
    int s_max = 0;
    int d_f = 0;
    int d_r = 0;

    int encoder_dim() const { return d_r + s_max; }  // embedding + one-hot position
    int f_block() const { return 2 * s_max; }
    int f_mask_block() const { return 2 * s_max + s_max * d_f; }
    int history_dim() const { return 3 * s_max + s_max * d_f + 1; }
};

struct DeconfounderArch {
    std::vector<int> encoder_hidden = {64, 32};
    std::vector<int> head_hidden = {128, 64};
    int d_f = 32;
};

// Jointly trained encoder (shared across segments) plus outcome head.
struct DeconfounderModel {
    Mlp encoder;  // (r, one-hot s) -> f
    Mlp head;     // padded history features -> scalar outcome prediction
    FeatureLayout layout;
};

// Per-segment deconfounder outputs for a set of units, unit-major rows.
struct EncodedData {
    Matrix f;                  // (sum of s_len) x d_f
    std::vector<int> offset;   // unit -> first row in f
    int row(int unit, int s) const { return offset[static_cast<std::size_t>(unit)] + s - 1; }
};

DeconfounderModel fit_deconfounder(const Dataset& ds, const std::vector<int>& train_units,
                                   const DeconfounderArch& arch, const TrainConfig& cfg,
                                   Rng& rng);

// Deconfounder outputs f(r, s) for every segment of every unit, dropout off.
EncodedData encode_units(const DeconfounderModel& model, const Dataset& ds);
// Convenience single-trajectory variant.
std::vector<Vector> encode_path(const DeconfounderModel& model, const Trajectory& traj);

// Head evaluation with the final treatment entry replaced by w.
double head_counterfactual(const DeconfounderModel& model, const Dataset& ds,
                           const EncodedData& enc, int unit, int w);

// Per-position propensity: logistic net, or a constant when the position has
// fewer than two treatment classes in the training folds.
struct PropensityModel {
    bool degenerate = false;
    double constant = 0.0;
    std::optional<Mlp> net;
};

std::vector<PropensityModel> fit_propensities(const Dataset& ds,
                                              const std::vector<int>& train_units,
                                              const EncodedData& enc, const FeatureLayout& lay,
                                              const std::vector<int>& hidden,
                                              const TrainConfig& cfg, Rng& rng);

// Raw propensity values for every unit/position (NaN where s > S_i).
Matrix predict_propensities(const Dataset& ds, const std::vector<PropensityModel>& models,
                            const EncodedData& enc, const FeatureLayout& lay);

// Relative-overlap projection: pi clipped so pi >= c*p and 1-pi >= c*(1-p).
// Degenerate strata (p exactly 0 or 1) snap pi to p, the only value
// consistent with p being the stratum mean of pi.
double project_overlap(double pi_value, double p_value, double c);

// omega weight for one segment: [delta W p/pi + (1-W)(1-p)/(1-pi)] / (delta p + 1 - p)
// with pi already overlap-projected; ratios are taken as exactly 1 when
// pi == p so degenerate strata contribute weight 1.
double omega_value(int w, double delta_s, double p, double pi_projected);

// Read-side nuisance bundle used by the influence evaluator. Implemented by
// the fitted per-fold objects and by exact test oracles.
class Nuisances {
public:
    virtual ~Nuisances() = default;
    virtual double p_hat(int s, HistoryKey key) const = 0;        // may throw MissingStratumError
    virtual double pi_hat(int unit, int s) const = 0;             // raw, pre-projection
    virtual double m_hat(int unit, int s, int w) const = 0;       // counterfactual outcome model
    virtual double tilde_m(int s, HistoryKey key, int w) const = 0;  // may throw
};

struct InfluenceDiagnostics {
    long overlap_projections = 0;
};

// omega weight for segment s of a trajectory under the given nuisances.
double omega(const Trajectory& traj, int unit, int s, const Nuisances& nu, double delta_s,
             double c_overlap, InfluenceDiagnostics* diag = nullptr);

// Uncentered influence contribution (the centered influence function plus
// Psi); the estimating equation sets Psi_hat to the mean of these.
double influence_contribution(const Trajectory& traj, int unit, const Nuisances& nu,
                              const InterventionSpec& delta, double c_overlap,
                              InfluenceDiagnostics* diag = nullptr);

// Outputs of the backward pseudo-outcome recursion for one (fold, delta):
// counterfactual outcome-model values per unit/position and the saturated
// tilde-m stratum tables (index s-1, values [w=0, w=1]).
struct BackwardSet {
    Matrix m1, m0;  // n x s_max, NaN where undefined
    std::vector<std::map<HistoryKey, std::array<double, 2>>> tilde_m;
};

struct EstimatorConfig {
    DeconfounderArch arch;
    TrainConfig deconf_train{300, 1024, 3e-5, 0, 0.1};
    TrainConfig nuisance_train{200, 1024, 1e-3, 5, 0.2};
    std::vector<int> nuisance_hidden = {128, 64};
    int k_folds = 10;
    double c_overlap = 0.01;
};

struct EstimateResult {
    std::vector<double> delta;
    double psi_hat = 0.0;
    double sigma_hat = 0.0;  // sqrt of mean squared centered contribution
    double ci_low = 0.0;
    double ci_high = 0.0;
    long n = 0;
    std::vector<double> contributions;  // uncentered, unit order
    long missing_strata = 0;            // evaluation-side lookups that failed
    long overlap_projections = 0;
};

// Shared evaluator: contributions of every unit under its fold's nuisances,
// reduced in unit order. fold_of[i] selects per_fold[fold_of[i]].
EstimateResult evaluate_contributions(const Dataset& ds, const InterventionSpec& delta,
                                      const std::vector<const Nuisances*>& per_fold,
                                      const std::vector<int>& fold_of, double c_overlap);

// One grid entry: either a result or the error that stopped it (missing
// strata are per-delta; training failures abort the whole grid).
struct EstimateOutcome {
    std::optional<EstimateResult> result;
    std::string error;
};

// Full K-fold cross-fitted estimator over a grid of interventions.
// delta-independent nuisances (deconfounder, propensities, p-tables) are fit
// once per fold; the backward recursion objects are refit per delta. The
// result is deterministic in (dataset, cfg, rng seed).
std::vector<EstimateOutcome> estimate_grid_outcomes(const Dataset& ds,
                                                    const std::vector<InterventionSpec>& deltas,
                                                    const EstimatorConfig& cfg, const Rng& rng);

// As estimate_grid_outcomes but any per-delta failure throws.
std::vector<EstimateResult> estimate_grid(const Dataset& ds,
                                          const std::vector<InterventionSpec>& deltas,
                                          const EstimatorConfig& cfg, const Rng& rng);

EstimateResult estimate(const Dataset& ds, const InterventionSpec& delta,
                        const EstimatorConfig& cfg, const Rng& rng);

// Backward recursion (per fold, per delta): the final-position values are
// head evaluations at counterfactual final treatments; lower positions are
// pooled regressions of the pseudo-outcomes with the observed treatment as a
// feature. tilde-m strata are means of (prod omega) * m over training units
// with S_i >= s, per history pattern.
BackwardSet fit_backward(const Dataset& ds, const std::vector<int>& train_units,
                         const DeconfounderModel& model, const EncodedData& enc,
                         const PTables& ptab, const Matrix& pi_vals,
                         const InterventionSpec& delta, const EstimatorConfig& cfg, Rng& rng);

// Fold assignment: shuffled contiguous blocks, sizes differing by at most 1.
std::vector<int> assign_folds(int n, int k, Rng& rng);

// p-tables over a subset of units (fit_p_tables over the training folds).
PTables fit_p_tables_subset(const Dataset& ds, const std::vector<int>& units);

}  // namespace seqci
