// Exact nuisance oracles for the discrete desk instance: a small DGP whose
// confounder loadings are zeroed so every nuisance (propensities, backward
// outcome recursion, stratum projections) has a closed form over discrete
// (segment count, treatment history) arguments. Implements the same
// Nuisances interface the fitted pipeline uses, so the influence evaluator
// is exercised unchanged while the learned components are replaced by an
// independent implementation.
#pragma once

#include <array>
#include <cstdint>
#include <map>

#include "seqci/dgp.hpp"
#include "seqci/estimator.hpp"

namespace seqci::testsupport {

struct DeskInstance {
    DgpConfig cfg;
    DgpStructure structure;       // gamma1 = gamma2 = 0 surgery applied
    PTables ptables;              // saturated oracle sample
    std::vector<double> s_prob;   // P(S = t), index t-1, t = 1..s_max
};

DeskInstance make_desk_instance(std::uint64_t seed, int n_oracle);

class DiscreteOracleNuisances final : public Nuisances {
public:
    // pi_shift displaces the propensity away from its true value (used by
    // the orthogonality test); 0 gives the exact oracle.
    DiscreteOracleNuisances(const DeskInstance& desk, const Dataset& ds,
                            const InterventionSpec& delta, double pi_shift = 0.0);

    double p_hat(int s, HistoryKey key) const override;
    double pi_hat(int unit, int s) const override;
    double m_hat(int unit, int s, int w) const override;
    double tilde_m(int s, HistoryKey key, int w) const override;

    // Exact m_s(S, history, w) for the desk outcome Y = sum tau_s W_s + eps.
    double m_exact(int s_total, int s, HistoryKey hist, int w) const;

private:
    double pseudo_outcome(int s_total, int s, HistoryKey hist) const;

    const DeskInstance* desk_;
    const Dataset* ds_;
    InterventionSpec delta_;
    double pi_shift_;
    mutable std::map<std::uint64_t, double> memo_;
};

}  // namespace seqci::testsupport
