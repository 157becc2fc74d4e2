#include "seqci/dgp.hpp"

#include <cmath>
#include <string>

#include "seqci/common.hpp"

namespace seqci {

void DgpConfig::validate() const {
    if (d_r < 1 || d_w < 1 || d_u < 1 || p_u < 1) {
        throw ConfigError("dgp: all dimensions must be positive");
    }
    if (d_w + d_u != d_r) throw ConfigError("dgp: d_w + d_u must equal d_r");
    if (s_min < 1 || s_max < s_min) throw ConfigError("dgp: need 1 <= s_min <= s_max");
    if (!(lambda >= 0.0)) throw ConfigError("dgp: lambda must be non-negative");
    if (!(sigma_diag > 0.0)) throw ConfigError("dgp: sigma_diag must be positive");
}

DgpStructure build_structure(const DgpConfig& cfg) {
    cfg.validate();
    DgpStructure st;
    st.d_r = cfg.d_r;
    st.d_w = cfg.d_w;
    st.d_u = cfg.d_u;
    st.p_u = cfg.p_u;
    st.s_max = cfg.s_max;
    Rng rng = Rng(cfg.structure_seed).split(0x5d9cULL);

    st.a.resize(cfg.d_r);
    for (Eigen::Index j = 0; j < st.a.size(); ++j) st.a[j] = cfg.a_scale * rng.normal();

    const double proj_sd = std::sqrt(1.0 / static_cast<double>(cfg.d_r));
    st.b.resize(cfg.d_w);
    for (Eigen::Index j = 0; j < st.b.size(); ++j) st.b[j] = proj_sd * rng.normal();

    st.C.resize(cfg.p_u, cfg.d_u);
    for (Eigen::Index j = 0; j < st.C.size(); ++j) st.C.data()[j] = proj_sd * rng.normal();

    const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(cfg.p_u));
    st.gamma1.resize(static_cast<std::size_t>(cfg.s_max));
    st.gamma2.resize(static_cast<std::size_t>(cfg.s_max));
    for (int s = 0; s < cfg.s_max; ++s) {
        Vector g1(cfg.p_u), g2(cfg.p_u);
        for (Eigen::Index j = 0; j < g1.size(); ++j) g1[j] = rng.normal();
        for (Eigen::Index j = 0; j < g2.size(); ++j) g2[j] = rng.normal();
        st.gamma1[static_cast<std::size_t>(s)] = inv_sqrt_p * g1;
        st.gamma2[static_cast<std::size_t>(s)] = cfg.gamma2_scale * (inv_sqrt_p * g2).eval();
    }

    st.tau.resize(cfg.s_max);
    for (int s = 0; s < cfg.s_max; ++s) {
        st.tau[s] = cfg.tau_base * std::pow(cfg.tau_decay, s);
    }

    Matrix sigma = Matrix::Constant(cfg.d_r, cfg.d_r, cfg.sigma_offdiag);
    sigma.diagonal().setConstant(cfg.sigma_diag);
    st.chol_sigma = cholesky(sigma);
    return st;
}

int treatment_feature(const DgpStructure& st, const Vector& r) {
    return st.b.dot(r.head(st.d_w)) > 0.0 ? 1 : 0;
}

Vector confounding_feature(const DgpStructure& st, const Vector& r) {
    return (st.C * r.tail(st.d_u)).array().tanh();
}

double outcome_from(const DgpStructure& st, const std::vector<int>& w,
                    const std::vector<Vector>& u, double eps) {
    double y = eps;
    for (std::size_t s = 0; s < w.size(); ++s) {
        y += st.tau[static_cast<Eigen::Index>(s)] * w[s];
        y += st.gamma1[s].dot(u[s]);
        y += st.gamma2[s].dot(u[s].cwiseProduct(u[s]));
    }
    return y;
}

namespace {

int draw_length(const DgpConfig& cfg, Rng& rng) {
    return std::min(cfg.s_max, cfg.s_min + sample_poisson(cfg.lambda, rng));
}

// Advance the embedding path one step: first segment is MVN(0, Sigma),
// later segments are tanh(A r_prev) + MVN(0, Sigma).
Vector next_embedding(const DgpStructure& st, const Vector* prev, Rng& rng) {
    Vector r = sample_mvn(Vector::Zero(st.d_r), st.chol_sigma, rng);
    if (prev != nullptr) r += (st.a.array() * prev->array()).tanh().matrix();
    return r;
}

}  // namespace

std::pair<Dataset, LatentTruth> simulate_dataset(const DgpConfig& cfg, const DgpStructure& st,
                                                 int n, Rng& rng) {
    cfg.validate();
    if (n < 1) throw ConfigError("simulate_dataset: n must be >= 1");
    Dataset ds;
    ds.d_r = cfg.d_r;
    ds.s_max = cfg.s_max;
    ds.units.reserve(static_cast<std::size_t>(n));
    LatentTruth truth;
    truth.u.reserve(static_cast<std::size_t>(n));
    truth.epsilon.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int s_len = draw_length(cfg, rng);
        Trajectory t;
        t.w.reserve(static_cast<std::size_t>(s_len));
        t.r.reserve(static_cast<std::size_t>(s_len));
        std::vector<Vector> u_path;
        u_path.reserve(static_cast<std::size_t>(s_len));
        for (int s = 0; s < s_len; ++s) {
            Vector r = next_embedding(st, s == 0 ? nullptr : &t.r.back(), rng);
            t.w.push_back(treatment_feature(st, r));
            u_path.push_back(confounding_feature(st, r));
            t.r.push_back(std::move(r));
        }
        const double eps = rng.normal();
        t.y = outcome_from(st, t.w, u_path, eps);
        ds.units.push_back(std::move(t));
        truth.u.push_back(std::move(u_path));
        truth.epsilon.push_back(eps);
    }
    return {std::move(ds), std::move(truth)};
}

PTables fit_oracle_p(const DgpConfig& cfg, const DgpStructure& st, int n_oracle, Rng& rng) {
    cfg.validate();
    if (n_oracle < 1) throw ConfigError("fit_oracle_p: n_oracle must be >= 1");
    // Counting pass; embeddings are not retained.
    struct Counts {
        long n = 0, treated = 0;
    };
    std::vector<std::map<HistoryKey, Counts>> counts(static_cast<std::size_t>(cfg.s_max));
    std::vector<int> w;
    for (int i = 0; i < n_oracle; ++i) {
        const int s_len = draw_length(cfg, rng);
        Vector r;
        w.clear();
        for (int s = 0; s < s_len; ++s) {
            r = next_embedding(st, s == 0 ? nullptr : &r, rng);
            const int ws = treatment_feature(st, r);
            auto& c = counts[static_cast<std::size_t>(s)][HistoryKey::of_prefix(w, s)];
            ++c.n;
            c.treated += ws;
            w.push_back(ws);
        }
    }
    PTables tables;
    for (int s = 1; s <= cfg.s_max; ++s) {
        for (const auto& [key, c] : counts[static_cast<std::size_t>(s - 1)]) {
            tables.set(s, key,
                       {c.n, static_cast<double>(c.treated) / static_cast<double>(c.n)});
        }
    }
    return tables;
}

OraclePsi oracle_psi(const DgpConfig& cfg, const DgpStructure& st, const PTables& ptables,
                     const InterventionSpec& delta, int n_truth, Rng& rng) {
    cfg.validate();
    delta.validate();
    if (delta.size() != cfg.s_max) {
        throw ConfigError("oracle_psi: delta length " + std::to_string(delta.size()) +
                          " != s_max " + std::to_string(cfg.s_max));
    }
    if (n_truth < 1) throw ConfigError("oracle_psi: n_truth must be >= 1");
    double sum = 0.0, sumsq = 0.0;
    std::vector<int> w;
    std::vector<Vector> u_path;
    for (int i = 0; i < n_truth; ++i) {
        const int s_len = draw_length(cfg, rng);
        Vector r;
        w.clear();
        u_path.clear();
        for (int s = 0; s < s_len; ++s) {
            r = next_embedding(st, s == 0 ? nullptr : &r, rng);
            // Treatment drawn from the shifted law given the intervened history.
            const double p = ptables.p_or_throw(s + 1, HistoryKey::of_prefix(w, s));
            const double q = q_shift(delta.delta[static_cast<std::size_t>(s)], p);
            w.push_back(sample_bernoulli(q, rng));
            u_path.push_back(confounding_feature(st, r));
        }
        const double y = outcome_from(st, w, u_path, rng.normal());
        sum += y;
        sumsq += y * y;
    }
    OraclePsi out;
    out.n_truth = n_truth;
    out.psi = sum / static_cast<double>(n_truth);
    const double var =
        std::max(0.0, sumsq / static_cast<double>(n_truth) - out.psi * out.psi);
    out.mc_se = std::sqrt(var / static_cast<double>(n_truth));
    return out;
}

}  // namespace seqci
