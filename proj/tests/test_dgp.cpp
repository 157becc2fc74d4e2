#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "seqci/common.hpp"
#include "seqci/dgp.hpp"

using namespace seqci;

namespace {

DgpConfig small_cfg() {
    DgpConfig cfg;
    cfg.d_r = 8;
    cfg.d_w = 4;
    cfg.d_u = 4;
    cfg.p_u = 2;
    cfg.s_max = 3;
    cfg.structure_seed = 404;
    return cfg;
}

}  // namespace

TEST_CASE("build_structure: deterministic in the structure seed") {
    const DgpConfig cfg = small_cfg();
    const DgpStructure a = build_structure(cfg), b = build_structure(cfg);
    CHECK((a.a - b.a).norm() == 0.0);
    CHECK((a.b - b.b).norm() == 0.0);
    CHECK((a.C - b.C).norm() == 0.0);
    for (int s = 0; s < cfg.s_max; ++s) {
        CHECK((a.gamma1[s] - b.gamma1[s]).norm() == 0.0);
        CHECK((a.gamma2[s] - b.gamma2[s]).norm() == 0.0);
    }
    DgpConfig other = cfg;
    other.structure_seed = 405;
    CHECK((build_structure(other).b - a.b).norm() > 0.0);
}

TEST_CASE("build_structure: projection variance ~ 1/d_r across seeds") {
    DgpConfig cfg;  // defaults: d_r = 512
    double sumsq = 0.0;
    long count = 0;
    for (int seed = 0; seed < 20; ++seed) {
        cfg.structure_seed = 1000 + static_cast<std::uint64_t>(seed);
        const DgpStructure st = build_structure(cfg);
        sumsq += st.b.squaredNorm();
        count += st.b.size();
    }
    const double var = sumsq / static_cast<double>(count);
    const double target = 1.0 / 512.0;
    CHECK(var > target / 1.5);
    CHECK(var < target * 1.5);
}

TEST_CASE("build_structure: gamma2 scaling is exactly the configured factor") {
    DgpConfig base = small_cfg();
    DgpConfig unscaled = base;
    unscaled.gamma2_scale = 1.0;
    const DgpStructure s1 = build_structure(base);
    const DgpStructure s2 = build_structure(unscaled);
    for (int s = 0; s < base.s_max; ++s) {
        const Vector scaled = 0.3 * s2.gamma2[s];  // materialize: no FMA contraction
        CHECK((s1.gamma2[s] - scaled).norm() == 0.0);
        CHECK((s1.gamma1[s] - s2.gamma1[s]).norm() == 0.0);
    }
}

TEST_CASE("simulate: segment counts within bounds; lambda=0 degenerates") {
    const DgpConfig cfg = small_cfg();
    const DgpStructure st = build_structure(cfg);
    Rng rng(7);
    auto [ds, truth] = simulate_dataset(cfg, st, 500, rng);
    CHECK(ds.n() == 500);
    for (const auto& t : ds.units) {
        CHECK(t.s_len() >= cfg.s_min);
        CHECK(t.s_len() <= cfg.s_max);
    }
    DgpConfig degenerate = cfg;
    degenerate.lambda = 0.0;
    Rng rng2(8);
    auto [ds0, truth0] = simulate_dataset(degenerate, st, 200, rng2);
    for (const auto& t : ds0.units) CHECK(t.s_len() == 2);
}

TEST_CASE("simulate: treatments re-derive from stored embeddings exactly") {
    const DgpConfig cfg = small_cfg();
    const DgpStructure st = build_structure(cfg);
    Rng rng(9);
    auto [ds, truth] = simulate_dataset(cfg, st, 300, rng);
    for (const auto& t : ds.units) {
        for (int s = 0; s < t.s_len(); ++s) {
            CHECK(treatment_feature(st, t.r[static_cast<std::size_t>(s)]) ==
                  t.w[static_cast<std::size_t>(s)]);
        }
    }
}

TEST_CASE("separability: treatment and confounder blocks do not interact") {
    const DgpConfig cfg = small_cfg();
    const DgpStructure st = build_structure(cfg);
    Rng rng(10);
    Vector r(cfg.d_r);
    for (int i = 0; i < cfg.d_r; ++i) r[i] = rng.normal();
    const int w_before = treatment_feature(st, r);
    const Vector u_before = confounding_feature(st, r);
    Vector r_wmod = r;
    for (int i = 0; i < cfg.d_w; ++i) r_wmod[i] += 10.0;  // treatment block only
    CHECK((confounding_feature(st, r_wmod) - u_before).norm() == 0.0);
    Vector r_umod = r;
    for (int i = cfg.d_w; i < cfg.d_r; ++i) r_umod[i] += 10.0;  // confounder block only
    CHECK(treatment_feature(st, r_umod) == w_before);
}

TEST_CASE("simulate: outcome reconstructs from latent truth to 1e-12") {
    const DgpConfig cfg = small_cfg();
    const DgpStructure st = build_structure(cfg);
    Rng rng(11);
    auto [ds, truth] = simulate_dataset(cfg, st, 200, rng);
    for (int i = 0; i < ds.n(); ++i) {
        const double y = outcome_from(st, ds.units[static_cast<std::size_t>(i)].w,
                                      truth.u[static_cast<std::size_t>(i)],
                                      truth.epsilon[static_cast<std::size_t>(i)]);
        CHECK(std::abs(y - ds.units[static_cast<std::size_t>(i)].y) <= 1e-12);
    }
}

TEST_CASE("simulate: truncation mass matches the Poisson tail within 3 SEs") {
    DgpConfig cfg = small_cfg();
    cfg.d_r = 2;
    cfg.d_w = 1;
    cfg.d_u = 1;
    cfg.p_u = 1;
    cfg.s_max = 5;
    const DgpStructure st = build_structure(cfg);
    Rng rng(12);
    const int n = 100000;
    auto [ds, truth] = simulate_dataset(cfg, st, n, rng);
    long at_max = 0;
    for (const auto& t : ds.units) at_max += t.s_len() == 5 ? 1 : 0;
    // P(S = 5) = P(Poisson(2.5) >= 3)
    const double lam = 2.5;
    const double p_lt3 = std::exp(-lam) * (1.0 + lam + lam * lam / 2.0);
    const double target = 1.0 - p_lt3;
    const double se = std::sqrt(target * (1.0 - target) / n);
    CHECK(std::abs(static_cast<double>(at_max) / n - target) <= 3.0 * se);
}

TEST_CASE("fit_oracle_p: determinism and agreement with direct counting") {
    const DgpConfig cfg = small_cfg();
    const DgpStructure st = build_structure(cfg);
    Rng r1(77), r2(77);
    const PTables a = fit_oracle_p(cfg, st, 20000, r1);
    const PTables b = fit_oracle_p(cfg, st, 20000, r2);
    for (int s = 1; s <= cfg.s_max; ++s) {
        const auto& ma = a.at_position(s);
        REQUIRE(ma.size() == b.at_position(s).size());
        for (const auto& [key, cell] : ma) {
            const auto other = b.lookup(s, key);
            REQUIRE(other.has_value());
            CHECK(other->p_hat == cell.p_hat);
        }
    }
    // Same law as a simulated dataset: counts agree within Monte-Carlo noise.
    Rng r3(78);
    auto [ds, truth] = simulate_dataset(cfg, st, 20000, r3);
    const PTables c = fit_p_tables(ds);
    const auto pa = a.lookup(1, HistoryKey{});
    const auto pc = c.lookup(1, HistoryKey{});
    REQUIRE((pa.has_value() && pc.has_value()));
    const double se = std::sqrt(0.25 / 20000.0) * 2.0;
    CHECK(std::abs(pa->p_hat - pc->p_hat) <= 4.0 * se);
}

TEST_CASE("fit_oracle_p: zero projection makes position 1 degenerate") {
    const DgpConfig cfg = small_cfg();
    DgpStructure st = build_structure(cfg);
    st.b.setZero();  // b . r = 0 is never > 0, so W is identically 0
    Rng rng(79);
    const PTables tab = fit_oracle_p(cfg, st, 5000, rng);
    const auto p1 = tab.lookup(1, HistoryKey{});
    REQUIRE(p1.has_value());
    CHECK(p1->p_hat == 0.0);
}

TEST_CASE("oracle_psi: delta=1 reproduces the observational mean") {
    const DgpConfig cfg = small_cfg();
    const DgpStructure st = build_structure(cfg);
    Rng rng(80);
    const PTables tab = fit_oracle_p(cfg, st, 50000, rng);
    Rng rng2(81);
    const OraclePsi psi = oracle_psi(cfg, st, tab, InterventionSpec::uniform(1.0, cfg.s_max),
                                     50000, rng2);
    Rng rng3(82);
    auto [ds, truth] = simulate_dataset(cfg, st, 50000, rng3);
    double mean = 0.0, sumsq = 0.0;
    for (const auto& t : ds.units) mean += t.y;
    mean /= ds.n();
    for (const auto& t : ds.units) sumsq += (t.y - mean) * (t.y - mean);
    const double se_data = std::sqrt(sumsq / ds.n() / ds.n());
    const double se = std::sqrt(se_data * se_data + psi.mc_se * psi.mc_se);
    CHECK(std::abs(psi.psi - mean) <= 3.0 * se);
}

TEST_CASE("oracle_psi: null treatment effect flattens the dose response") {
    const DgpConfig cfg = small_cfg();
    DgpStructure st = build_structure(cfg);
    st.tau.setZero();  // test-only surgery
    Rng rng(83);
    const PTables tab = fit_oracle_p(cfg, st, 50000, rng);
    Rng ra(84), rb(85);
    const OraclePsi lo = oracle_psi(cfg, st, tab, InterventionSpec::uniform(0.5, cfg.s_max),
                                    50000, ra);
    const OraclePsi hi = oracle_psi(cfg, st, tab, InterventionSpec::uniform(2.0, cfg.s_max),
                                    50000, rb);
    const double se = std::sqrt(lo.mc_se * lo.mc_se + hi.mc_se * hi.mc_se);
    CHECK(std::abs(hi.psi - lo.psi) <= 3.0 * se);
}

TEST_CASE("oracle_psi: increasing treatment odds raises the mean outcome") {
    const DgpConfig cfg = small_cfg();  // all tau_s > 0
    const DgpStructure st = build_structure(cfg);
    Rng rng(86);
    const PTables tab = fit_oracle_p(cfg, st, 50000, rng);
    Rng ra(87), rb(88);
    const OraclePsi lo = oracle_psi(cfg, st, tab, InterventionSpec::uniform(0.5, cfg.s_max),
                                    50000, ra);
    const OraclePsi hi = oracle_psi(cfg, st, tab, InterventionSpec::uniform(2.0, cfg.s_max),
                                    50000, rb);
    CHECK(hi.psi - lo.psi > 3.0 * std::sqrt(lo.mc_se * lo.mc_se + hi.mc_se * hi.mc_se));
}

TEST_CASE("oracle_psi: unreachable history raises a missing-stratum error") {
    const DgpConfig cfg = small_cfg();
    const DgpStructure st = build_structure(cfg);
    PTables sparse;
    sparse.set(1, HistoryKey{}, {100, 0.5});  // nothing at s >= 2
    Rng rng(89);
    CHECK_THROWS_AS(oracle_psi(cfg, st, sparse, InterventionSpec::uniform(1.0, cfg.s_max), 100,
                               rng),
                    MissingStratumError);
}
