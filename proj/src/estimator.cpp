#include "seqci/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "seqci/common.hpp"
#include "seqci/detail/features.hpp"

namespace seqci {

namespace {

constexpr double kZ975 = 1.959964;

// delta*p + 1 - p; exactly 1 at delta = 1 (the observed mechanism).
double shift_denom(double delta_s, double p) {
    return delta_s == 1.0 ? 1.0 : delta_s * p + 1.0 - p;
}

double mix_pseudo_outcome(double delta_s, double p, double m1, double m0) {
    return (delta_s * p * m1 + (1.0 - p) * m0) / shift_denom(delta_s, p);
}

MlpSpec nuisance_spec(int in, const std::vector<int>& hidden, OutputActivation act,
                      double dropout, std::uint64_t seed) {
    MlpSpec spec;
    spec.widths.push_back(in);
    spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
    spec.widths.push_back(1);
    spec.output = act;
    spec.dropout_rate = dropout;
    spec.seed = seed;
    return spec;
}

}  // namespace

std::vector<int> assign_folds(int n, int k, Rng& rng) {
    if (k < 2) throw ConfigError("cross-fitting requires k_folds >= 2");
    if (n < k) throw EstimationError("fold too small: n < k_folds");
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    std::vector<int> fold_of(static_cast<std::size_t>(n));
    const int base = n / k, extra = n % k;
    int pos = 0;
    for (int f = 0; f < k; ++f) {
        const int size = base + (f < extra ? 1 : 0);
        for (int j = 0; j < size; ++j) {
            fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(pos++)])] = f;
        }
    }
    return fold_of;
}

PTables fit_p_tables_subset(const Dataset& ds, const std::vector<int>& units) {
    if (units.empty()) throw DataError("fit_p_tables: empty split");
    Dataset view;
    view.d_r = ds.d_r;
    view.s_max = ds.s_max;
    view.units.reserve(units.size());
    for (int i : units) view.units.push_back(ds.units[static_cast<std::size_t>(i)]);
    return fit_p_tables(view);
}

std::vector<PropensityModel> fit_propensities(const Dataset& ds,
                                              const std::vector<int>& train_units,
                                              const EncodedData& enc, const FeatureLayout& lay,
                                              const std::vector<int>& hidden,
                                              const TrainConfig& cfg, Rng& rng) {
    std::vector<PropensityModel> models(static_cast<std::size_t>(ds.s_max));
    for (int s = 1; s <= ds.s_max; ++s) {
        std::vector<int> rows;
        long treated = 0;
        for (int i : train_units) {
            const Trajectory& t = ds.units[static_cast<std::size_t>(i)];
            if (t.s_len() < s) continue;
            rows.push_back(i);
            treated += t.w[static_cast<std::size_t>(s - 1)];
        }
        PropensityModel& pm = models[static_cast<std::size_t>(s - 1)];
        if (rows.empty()) {
            pm.degenerate = true;
            pm.constant = 0.5;  // position never observed in training; unused downstream
            continue;
        }
        if (treated == 0 || treated == static_cast<long>(rows.size())) {
            pm.degenerate = true;
            pm.constant = static_cast<double>(treated) / static_cast<double>(rows.size());
            continue;
        }
        Matrix x(static_cast<Eigen::Index>(rows.size()), lay.history_dim());
        Matrix y(static_cast<Eigen::Index>(rows.size()), 1);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const Trajectory& t = ds.units[static_cast<std::size_t>(rows[r])];
            detail::fill_history_row(lay, t, rows[r], enc, s - 1, s,
                                     x.row(static_cast<Eigen::Index>(r)));
            y(static_cast<Eigen::Index>(r), 0) = t.w[static_cast<std::size_t>(s - 1)];
        }
        Rng net_rng = rng.split(static_cast<std::uint64_t>(s));
        Mlp net = mlp_init(nuisance_spec(lay.history_dim(), hidden, OutputActivation::Logistic,
                                         cfg.dropout_rate, net_rng.split(0).seed()));
        Rng train_rng = net_rng.split(1);
        pm.net = train(std::move(net), x, y, Loss::Logistic, cfg, train_rng);
    }
    return models;
}

double project_overlap(double pi_value, double p_value, double c) {
    if (p_value <= 0.0) return 0.0;
    if (p_value >= 1.0) return 1.0;
    const double lo = c * p_value;
    const double hi = 1.0 - c * (1.0 - p_value);
    return std::clamp(pi_value, lo, hi);
}

double omega_value(int w, double delta_s, double p, double pi_projected) {
    const double denom = delta_s == 1.0 ? 1.0 : delta_s * p + 1.0 - p;
    const double r1 = pi_projected == p ? 1.0 : p / pi_projected;
    const double r0 = pi_projected == p ? 1.0 : (1.0 - p) / (1.0 - pi_projected);
    return (w == 1 ? delta_s * r1 : r0) / denom;
}

double omega(const Trajectory& traj, int unit, int s, const Nuisances& nu, double delta_s,
             double c_overlap, InfluenceDiagnostics* diag) {
    const HistoryKey key = HistoryKey::of_prefix(traj.w, s - 1);
    const double p = nu.p_hat(s, key);
    const double pi_raw = nu.pi_hat(unit, s);
    const double pi = project_overlap(pi_raw, p, c_overlap);
    if (diag != nullptr && pi != pi_raw) ++diag->overlap_projections;
    return omega_value(traj.w[static_cast<std::size_t>(s - 1)], delta_s, p, pi);
}

double influence_contribution(const Trajectory& traj, int unit, const Nuisances& nu,
                              const InterventionSpec& delta, double c_overlap,
                              InfluenceDiagnostics* diag) {
    double acc = 0.0;
    double prod_omega = 1.0;
    for (int s = 1; s <= traj.s_len(); ++s) {
        const double d = delta.delta[static_cast<std::size_t>(s - 1)];
        const int w = traj.w[static_cast<std::size_t>(s - 1)];
        const HistoryKey key = HistoryKey::of_prefix(traj.w, s - 1);
        const double p = nu.p_hat(s, key);
        const double pi_raw = nu.pi_hat(unit, s);
        const double pi = project_overlap(pi_raw, p, c_overlap);
        if (diag != nullptr && pi != pi_raw) ++diag->overlap_projections;
        const double denom = d == 1.0 ? 1.0 : d * p + 1.0 - p;
        const double m1 = nu.m_hat(unit, s, 1);
        const double m0 = nu.m_hat(unit, s, 0);
        // Augmentation bracket; the p=0 / p=1 prefactors zero the branch whose
        // inverse-probability factor would be degenerate.
        double bracket = 0.0;
        if (p > 0.0) {
            bracket += d * p * m1 * (1.0 - (w == 1 ? 1.0 / pi : 0.0));
        }
        if (p < 1.0) {
            bracket += (1.0 - p) * m0 * (1.0 - (w == 0 ? 1.0 / (1.0 - pi) : 0.0));
        }
        acc += prod_omega * bracket / denom;
        // Correction for the estimated treatment-history probabilities.
        const double tm1 = nu.tilde_m(s, key, 1);
        const double tm0 = nu.tilde_m(s, key, 0);
        acc += d * (w - p) * (tm1 - tm0) / (denom * denom);
        prod_omega *= omega_value(w, d, p, pi);
    }
    return acc + prod_omega * traj.y;
}

namespace {

// Per-fold, per-delta nuisance values assembled by the fitting pipeline.
struct FoldNuisances final : Nuisances {
    const PTables* ptab = nullptr;
    const Matrix* pi = nullptr;  // n x s_max, NaN where undefined
    const Matrix* m1 = nullptr;
    const Matrix* m0 = nullptr;
    const std::vector<std::map<HistoryKey, std::array<double, 2>>>* tm = nullptr;

    double p_hat(int s, HistoryKey key) const override { return ptab->p_or_throw(s, key); }

    double pi_hat(int unit, int s) const override {
        const double v = (*pi)(unit, s - 1);
        if (std::isnan(v)) {
            throw EstimationError("propensity undefined at unit " + std::to_string(unit) +
                                  ", position " + std::to_string(s));
        }
        return v;
    }

    double m_hat(int unit, int s, int w) const override {
        const double v = w == 1 ? (*m1)(unit, s - 1) : (*m0)(unit, s - 1);
        if (std::isnan(v)) {
            throw EstimationError("outcome model undefined at unit " + std::to_string(unit) +
                                  ", position " + std::to_string(s));
        }
        return v;
    }

    double tilde_m(int s, HistoryKey key, int w) const override {
        const auto& table = (*tm)[static_cast<std::size_t>(s - 1)];
        const auto it = table.find(key);
        if (it == table.end()) {
            throw MissingStratumError("missing tilde-m stratum at position " + std::to_string(s) +
                                      ", pattern '" + key.pattern() + "'");
        }
        return it->second[static_cast<std::size_t>(w)];
    }
};

}  // namespace

// Head evaluations at the final position, per-position pooled regressions of
// the pseudo-outcomes, and the saturated tilde-m projection.
BackwardSet fit_backward(const Dataset& ds, const std::vector<int>& train_units,
                         const DeconfounderModel& model, const EncodedData& enc,
                         const PTables& ptab, const Matrix& pi_vals,
                         const InterventionSpec& delta, const EstimatorConfig& cfg, Rng& rng) {
    const FeatureLayout& lay = model.layout;
    const int n = ds.n();
    const int s_max = ds.s_max;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    BackwardSet out;
    out.m1 = Matrix::Constant(n, s_max, nan);
    out.m0 = Matrix::Constant(n, s_max, nan);
    out.tilde_m.resize(static_cast<std::size_t>(s_max));

    std::vector<char> in_train(static_cast<std::size_t>(n), 0);
    for (int i : train_units) in_train[static_cast<std::size_t>(i)] = 1;

    // Head evaluations with the final treatment set counterfactually; these
    // are the m values at each unit's own final position.
    {
        Matrix x1(n, lay.history_dim()), x0(n, lay.history_dim());
        for (int i = 0; i < n; ++i) {
            const Trajectory& t = ds.units[static_cast<std::size_t>(i)];
            detail::fill_history_row(lay, t, i, enc, t.s_len(), t.s_len(), x1.row(i));
            x0.row(i) = x1.row(i);
            x1(i, t.s_len() - 1) = 1.0;
            x0(i, t.s_len() - 1) = 0.0;
        }
        const Matrix mu1 = forward_batch(model.head, x1);
        const Matrix mu0 = forward_batch(model.head, x0);
        for (int i = 0; i < n; ++i) {
            const int s_len = ds.units[static_cast<std::size_t>(i)].s_len();
            out.m1(i, s_len - 1) = mu1(i, 0);
            out.m0(i, s_len - 1) = mu0(i, 0);
        }
    }

    // Backward recursion over positions. ytilde[i] holds the pseudo-outcome
    // one level above the position currently being fit.
    std::vector<double> ytilde(static_cast<std::size_t>(n), nan);
    for (int i : train_units) {
        const Trajectory& t = ds.units[static_cast<std::size_t>(i)];
        const int sl = t.s_len();
        const double p = ptab.p_or_throw(sl, HistoryKey::of_prefix(t.w, sl - 1));
        ytilde[static_cast<std::size_t>(i)] = mix_pseudo_outcome(
            delta.delta[static_cast<std::size_t>(sl - 1)], p, out.m1(i, sl - 1), out.m0(i, sl - 1));
    }

    for (int s = s_max - 1; s >= 1; --s) {
        std::vector<int> fit_rows;  // training units with S_i >= s+1
        std::vector<int> pred_rows;  // all units with S_i > s needing predictions
        for (int i = 0; i < n; ++i) {
            const int sl = ds.units[static_cast<std::size_t>(i)].s_len();
            if (sl > s) {
                pred_rows.push_back(i);
                if (in_train[static_cast<std::size_t>(i)]) fit_rows.push_back(i);
            }
        }
        if (pred_rows.empty()) continue;
        if (fit_rows.empty()) continue;  // evaluation will fail loudly if needed
        const int mdim = lay.history_dim() + 1;  // history features plus W_s
        Matrix x(static_cast<Eigen::Index>(fit_rows.size()), mdim);
        Matrix y(static_cast<Eigen::Index>(fit_rows.size()), 1);
        for (std::size_t r = 0; r < fit_rows.size(); ++r) {
            const int i = fit_rows[r];
            const Trajectory& t = ds.units[static_cast<std::size_t>(i)];
            detail::fill_history_row(lay, t, i, enc, s - 1, s,
                                     x.row(static_cast<Eigen::Index>(r)).head(lay.history_dim()));
            x(static_cast<Eigen::Index>(r), mdim - 1) = t.w[static_cast<std::size_t>(s - 1)];
            y(static_cast<Eigen::Index>(r), 0) = ytilde[static_cast<std::size_t>(i)];
        }
        Rng net_rng = rng.split(static_cast<std::uint64_t>(s));
        Mlp net = mlp_init(nuisance_spec(mdim, cfg.nuisance_hidden, OutputActivation::Identity,
                                         cfg.nuisance_train.dropout_rate, net_rng.split(0).seed()));
        Rng train_rng = net_rng.split(1);
        net = train(std::move(net), x, y, Loss::Squared, cfg.nuisance_train, train_rng);

        // Counterfactual predictions m_s(H, w) for units above this level.
        Matrix px(static_cast<Eigen::Index>(pred_rows.size()), mdim);
        for (std::size_t r = 0; r < pred_rows.size(); ++r) {
            const int i = pred_rows[r];
            const Trajectory& t = ds.units[static_cast<std::size_t>(i)];
            detail::fill_history_row(lay, t, i, enc, s - 1, s,
                                     px.row(static_cast<Eigen::Index>(r)).head(lay.history_dim()));
            px(static_cast<Eigen::Index>(r), mdim - 1) = 1.0;
        }
        const Matrix pred1 = forward_batch(net, px);
        px.col(mdim - 1).setZero();
        const Matrix pred0 = forward_batch(net, px);
        for (std::size_t r = 0; r < pred_rows.size(); ++r) {
            const int i = pred_rows[r];
            out.m1(i, s - 1) = pred1(static_cast<Eigen::Index>(r), 0);
            out.m0(i, s - 1) = pred0(static_cast<Eigen::Index>(r), 0);
        }
        // Pseudo-outcomes one level down for the training units.
        for (int i : train_units) {
            const Trajectory& t = ds.units[static_cast<std::size_t>(i)];
            if (t.s_len() < s) continue;
            const double p = ptab.p_or_throw(s, HistoryKey::of_prefix(t.w, s - 1));
            ytilde[static_cast<std::size_t>(i)] = mix_pseudo_outcome(
                delta.delta[static_cast<std::size_t>(s - 1)], p, out.m1(i, s - 1),
                out.m0(i, s - 1));
        }
    }

    // Saturated tilde-m projection over the training folds, weighted by the
    // running omega products of the observed paths.
    std::vector<double> prod(static_cast<std::size_t>(n), 1.0);
    for (int s = 1; s <= s_max; ++s) {
        std::map<HistoryKey, std::array<double, 3>> sums;  // w=1 sum, w=0 sum, count
        for (int i : train_units) {
            const Trajectory& t = ds.units[static_cast<std::size_t>(i)];
            if (t.s_len() < s) continue;
            const HistoryKey key = HistoryKey::of_prefix(t.w, s - 1);
            auto& cell = sums[key];
            cell[0] += prod[static_cast<std::size_t>(i)] * out.m1(i, s - 1);
            cell[1] += prod[static_cast<std::size_t>(i)] * out.m0(i, s - 1);
            cell[2] += 1.0;
            const double p = ptab.p_or_throw(s, key);
            const double pi = project_overlap(pi_vals(i, s - 1), p, cfg.c_overlap);
            prod[static_cast<std::size_t>(i)] *= omega_value(
                t.w[static_cast<std::size_t>(s - 1)], delta.delta[static_cast<std::size_t>(s - 1)],
                p, pi);
        }
        auto& table = out.tilde_m[static_cast<std::size_t>(s - 1)];
        for (const auto& [key, cell] : sums) {
            table[key] = {cell[1] / cell[2], cell[0] / cell[2]};  // [w=0, w=1]
        }
    }
    return out;
}

Matrix predict_propensities(const Dataset& ds, const std::vector<PropensityModel>& models,
                            const EncodedData& enc, const FeatureLayout& lay) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Matrix pi_vals = Matrix::Constant(ds.n(), ds.s_max, nan);
    for (int s = 1; s <= ds.s_max; ++s) {
        const PropensityModel& pm = models[static_cast<std::size_t>(s - 1)];
        std::vector<int> rows;
        for (int i = 0; i < ds.n(); ++i) {
            if (ds.units[static_cast<std::size_t>(i)].s_len() >= s) rows.push_back(i);
        }
        if (rows.empty()) continue;
        if (pm.degenerate) {
            for (int i : rows) pi_vals(i, s - 1) = pm.constant;
            continue;
        }
        Matrix x(static_cast<Eigen::Index>(rows.size()), lay.history_dim());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const Trajectory& t = ds.units[static_cast<std::size_t>(rows[r])];
            detail::fill_history_row(lay, t, rows[r], enc, s - 1, s,
                                     x.row(static_cast<Eigen::Index>(r)));
        }
        const Matrix out = forward_batch(*pm.net, x);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            pi_vals(rows[r], s - 1) = out(static_cast<Eigen::Index>(r), 0);
        }
    }
    return pi_vals;
}

EstimateResult evaluate_contributions(const Dataset& ds, const InterventionSpec& delta,
                                      const std::vector<const Nuisances*>& per_fold,
                                      const std::vector<int>& fold_of, double c_overlap) {
    EstimateResult res;
    res.delta = delta.delta;
    res.n = ds.n();
    res.contributions.assign(static_cast<std::size_t>(ds.n()), 0.0);
    InfluenceDiagnostics diag;
    long missing = 0;
    std::string first_missing;
    for (int i = 0; i < ds.n(); ++i) {
        const Nuisances* nu = per_fold[static_cast<std::size_t>(fold_of[static_cast<std::size_t>(i)])];
        try {
            res.contributions[static_cast<std::size_t>(i)] = influence_contribution(
                ds.units[static_cast<std::size_t>(i)], i, *nu, delta, c_overlap, &diag);
        } catch (const MissingStratumError& e) {
            if (missing == 0) first_missing = e.what();
            ++missing;
        }
    }
    if (missing > 0) {
        throw MissingStratumError(std::to_string(missing) + " unit(s) hit missing strata (" +
                                  first_missing + ")");
    }
    res.overlap_projections = diag.overlap_projections;
    double sum = 0.0;
    for (double v : res.contributions) sum += v;
    res.psi_hat = sum / static_cast<double>(ds.n());
    double ss = 0.0;
    for (double v : res.contributions) {
        const double c = v - res.psi_hat;
        ss += c * c;
    }
    res.sigma_hat = std::sqrt(ss / static_cast<double>(ds.n()));
    const double half = kZ975 * res.sigma_hat / std::sqrt(static_cast<double>(ds.n()));
    res.ci_low = res.psi_hat - half;
    res.ci_high = res.psi_hat + half;
    return res;
}

std::vector<EstimateOutcome> estimate_grid_outcomes(const Dataset& ds,
                                                    const std::vector<InterventionSpec>& deltas,
                                                    const EstimatorConfig& cfg, const Rng& rng) {
    validate_dataset(ds);
    if (deltas.empty()) throw ConfigError("estimate: empty delta grid");
    for (const auto& d : deltas) {
        d.validate();
        if (d.size() != ds.s_max) {
            throw ConfigError("estimate: delta length " + std::to_string(d.size()) +
                              " != dataset s_max " + std::to_string(ds.s_max));
        }
    }
    Rng fold_rng = rng.split(0xF01d);
    const std::vector<int> fold_of = assign_folds(ds.n(), cfg.k_folds, fold_rng);

    struct PerDelta {
        std::vector<double> contributions;
        long overlap_projections = 0;
        long missing = 0;
        std::string first_missing;
    };
    std::vector<PerDelta> acc(deltas.size());
    for (auto& a : acc) a.contributions.assign(static_cast<std::size_t>(ds.n()), 0.0);

    for (int k = 0; k < cfg.k_folds; ++k) {
        std::vector<int> train_idx, eval_idx;
        for (int i = 0; i < ds.n(); ++i) {
            (fold_of[static_cast<std::size_t>(i)] == k ? eval_idx : train_idx).push_back(i);
        }
        if (train_idx.empty() || eval_idx.empty()) {
            throw EstimationError("fold too small to fit nuisances (k=" + std::to_string(k) + ")");
        }
        Rng krng = rng.split(1000 + static_cast<std::uint64_t>(k));
        Rng deconf_rng = krng.split(1);
        const DeconfounderModel model =
            fit_deconfounder(ds, train_idx, cfg.arch, cfg.deconf_train, deconf_rng);
        const EncodedData enc = encode_units(model, ds);
        const PTables ptab = fit_p_tables_subset(ds, train_idx);
        Rng pi_rng = krng.split(2);
        const auto pi_models = fit_propensities(ds, train_idx, enc, model.layout,
                                                cfg.nuisance_hidden, cfg.nuisance_train, pi_rng);
        const Matrix pi_vals = predict_propensities(ds, pi_models, enc, model.layout);

        for (std::size_t j = 0; j < deltas.size(); ++j) {
            Rng bw_rng = krng.split(100 + static_cast<std::uint64_t>(j));
            const BackwardSet bw = fit_backward(ds, train_idx, model, enc, ptab, pi_vals,
                                                deltas[j], cfg, bw_rng);
            FoldNuisances nu;
            nu.ptab = &ptab;
            nu.pi = &pi_vals;
            nu.m1 = &bw.m1;
            nu.m0 = &bw.m0;
            nu.tm = &bw.tilde_m;
            InfluenceDiagnostics diag;
            for (int i : eval_idx) {
                try {
                    acc[j].contributions[static_cast<std::size_t>(i)] =
                        influence_contribution(ds.units[static_cast<std::size_t>(i)], i, nu,
                                               deltas[j], cfg.c_overlap, &diag);
                } catch (const MissingStratumError& e) {
                    if (acc[j].missing == 0) acc[j].first_missing = e.what();
                    ++acc[j].missing;
                }
            }
            acc[j].overlap_projections += diag.overlap_projections;
        }
    }

    std::vector<EstimateOutcome> outcomes(deltas.size());
    for (std::size_t j = 0; j < deltas.size(); ++j) {
        if (acc[j].missing > 0) {
            outcomes[j].result.reset();
            outcomes[j].error = std::to_string(acc[j].missing) + " unit(s) hit missing strata (" +
                                acc[j].first_missing + ")";
            continue;
        }
        EstimateResult res;
        res.delta = deltas[j].delta;
        res.n = ds.n();
        res.contributions = std::move(acc[j].contributions);
        res.overlap_projections = acc[j].overlap_projections;
        double sum = 0.0;
        for (double v : res.contributions) sum += v;
        res.psi_hat = sum / static_cast<double>(ds.n());
        double ss = 0.0;
        for (double v : res.contributions) {
            const double c = v - res.psi_hat;
            ss += c * c;
        }
        res.sigma_hat = std::sqrt(ss / static_cast<double>(ds.n()));
        const double half = kZ975 * res.sigma_hat / std::sqrt(static_cast<double>(ds.n()));
        res.ci_low = res.psi_hat - half;
        res.ci_high = res.psi_hat + half;
        outcomes[j].result = std::move(res);
    }
    return outcomes;
}

std::vector<EstimateResult> estimate_grid(const Dataset& ds,
                                          const std::vector<InterventionSpec>& deltas,
                                          const EstimatorConfig& cfg, const Rng& rng) {
    auto outcomes = estimate_grid_outcomes(ds, deltas, cfg, rng);
    std::vector<EstimateResult> results;
    results.reserve(outcomes.size());
    for (auto& o : outcomes) {
        if (!o.result) throw MissingStratumError(o.error);
        results.push_back(std::move(*o.result));
    }
    return results;
}

EstimateResult estimate(const Dataset& ds, const InterventionSpec& delta,
                        const EstimatorConfig& cfg, const Rng& rng) {
    return estimate_grid(ds, {delta}, cfg, rng)[0];
}

}  // namespace seqci
