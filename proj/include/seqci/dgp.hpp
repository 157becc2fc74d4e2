// Synthetic data-generating process and the Monte-Carlo oracle: observed
// treatment-sequence probabilities from an independent sample, and the true
// average outcome under an incremental stochastic intervention.
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "seqci/dataset.hpp"
#include "seqci/intervention.hpp"
#include "seqci/linalg.hpp"
#include "seqci/rng.hpp"

namespace seqci {

struct DgpConfig {
    int d_r = 512;  // embedding dimension (d_w + d_u)
    int d_w = 256;  // treatment block
    int d_u = 256;  // confounder block
    int p_u = 16;   // confounder feature dimension
    int s_min = 2;
    double lambda = 2.5;  // Poisson rate for extra segments
    int s_max = 5;
    double sigma_diag = 1.0;
    double sigma_offdiag = 0.2;
    double a_scale = 0.8;     // sd of the diagonal autoregressive entries
    double tau_base = 0.6;    // tau_s = tau_base * tau_decay^(s-1)
    double tau_decay = 0.95;
    double gamma2_scale = 0.3;
    std::uint64_t structure_seed = 20240901;  // fixes A, b, C, gamma across replications
    std::uint64_t noise_seed = 1;             // varies per replication

    void validate() const;
};

// Structure drawn once per structure_seed and shared by every replication.
struct DgpStructure {
    int d_r = 0, d_w = 0, d_u = 0, p_u = 0, s_max = 0;
    Vector a;                    // diagonal of the autoregressive matrix
    Vector b;                    // treatment projection, length d_w
    Matrix C;                    // confounder projection, p_u x d_u
    std::vector<Vector> gamma1;  // outcome loadings per position, length p_u
    std::vector<Vector> gamma2;  // quadratic loadings per position
    Vector tau;                  // treatment effects per position
    CholFactor chol_sigma;       // factor of the compound-symmetry covariance
};

DgpStructure build_structure(const DgpConfig& cfg);

// Deterministic treatment feature 1{b . r_w > 0} of an embedding.
int treatment_feature(const DgpStructure& st, const Vector& r);
// Confounding feature tanh(C r_u) of an embedding.
Vector confounding_feature(const DgpStructure& st, const Vector& r);
// Outcome formula given the latent pieces; reconstruction is exact.
double outcome_from(const DgpStructure& st, const std::vector<int>& w,
                    const std::vector<Vector>& u, double eps);

std::pair<Dataset, LatentTruth> simulate_dataset(const DgpConfig& cfg, const DgpStructure& st,
                                                 int n, Rng& rng);

// Saturated observed treatment-sequence probabilities approximated on an
// independent Monte-Carlo sample.
PTables fit_oracle_p(const DgpConfig& cfg, const DgpStructure& st, int n_oracle, Rng& rng);

struct OraclePsi {
    double psi = 0.0;
    double mc_se = 0.0;
    long n_truth = 0;
};

// True Psi(delta): potential outcomes simulated with treatments drawn from
// the shifted law q_s(delta_s; p_s) while the embedding/confounder paths
// evolve untouched. Histories missing from ptables raise
// MissingStratumError (they are unreachable-support failures, not noise).
OraclePsi oracle_psi(const DgpConfig& cfg, const DgpStructure& st, const PTables& ptables,
                     const InterventionSpec& delta, int n_truth, Rng& rng);

}  // namespace seqci
