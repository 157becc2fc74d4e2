#include "seqci/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "seqci/common.hpp"
#include "seqci/config.hpp"
#include "seqci/csv.hpp"
#include "seqci/dataset.hpp"
#include "seqci/dgp.hpp"
#include "seqci/mc_study.hpp"

namespace seqci {

namespace {

namespace fs = std::filesystem;

struct RunContext {
    std::string config_path;
    std::string out_dir = ".";

    fs::path out(const std::string& name) const { return fs::path(out_dir) / name; }
};

void write_manifest(const RunContext& ctx, const std::string& command, std::uint64_t seed,
                    const ConfigJson& effective, const std::vector<std::string>& outputs,
                    std::optional<std::uint64_t> oracle_hash = std::nullopt) {
    ConfigJson manifest;
    manifest["tool"] = "seqci";
    manifest["version"] = kVersion;
    manifest["command"] = command;
    manifest["seed"] = seed;
    manifest["config_hash"] = config_hash(effective);
    if (oracle_hash) manifest["oracle_hash"] = *oracle_hash;
    manifest["outputs"] = outputs;
    const std::string text = manifest.dump(2) + "\n";
    std::ofstream out(ctx.out("manifest.json"));
    if (!out) throw DataError("cannot write manifest to " + ctx.out_dir);
    out << text;
    std::cout << text;
}

int cmd_simulate(const RunContext& ctx, std::optional<int> n_override,
                 std::optional<std::uint64_t> seed_override) {
    const ConfigJson root = load_config_file(ctx.config_path);
    check_sections(root, {"dgp", "simulate"});
    DgpConfig dgp = parse_dgp(root);
    int n = 1000;
    std::uint64_t seed = dgp.noise_seed;
    if (root.contains("simulate")) {
        check_keys(root.at("simulate"), {"n", "seed"}, "simulate");
        if (root.at("simulate").contains("n")) n = root.at("simulate").at("n").get<int>();
        if (root.at("simulate").contains("seed")) {
            seed = root.at("simulate").at("seed").get<std::uint64_t>();
        }
    }
    if (n_override) n = *n_override;
    if (seed_override) seed = *seed_override;
    const DgpStructure st = build_structure(dgp);
    Rng rng = Rng(seed).split(0x51);
    auto [ds, truth] = simulate_dataset(dgp, st, n, rng);
    save_dataset(ds, ctx.out("dataset.jsonl").string());
    ConfigJson effective;
    effective["dgp"] = dump_dgp(dgp);
    effective["simulate"] = ConfigJson{{"n", n}, {"seed", seed}};
    write_manifest(ctx, "simulate", seed, effective, {"dataset.jsonl"});
    return 0;
}

int cmd_oracle(const RunContext& ctx, std::optional<std::uint64_t> seed_override,
               bool dump_ptables) {
    const ConfigJson root = load_config_file(ctx.config_path);
    check_sections(root, {"dgp", "oracle"});
    DgpConfig dgp = parse_dgp(root);
    std::vector<double> grid = {0.5, 0.75, 1.0, 1.25, 1.5, 2.0};
    int n_oracle = 5000, n_truth = 5000;
    std::uint64_t seed = 1;
    if (root.contains("oracle")) {
        const ConfigJson& obj = root.at("oracle");
        check_keys(obj, {"delta_grid", "n_oracle", "n_truth", "seed"}, "oracle");
        if (obj.contains("delta_grid")) grid = obj.at("delta_grid").get<std::vector<double>>();
        if (obj.contains("n_oracle")) n_oracle = obj.at("n_oracle").get<int>();
        if (obj.contains("n_truth")) n_truth = obj.at("n_truth").get<int>();
        if (obj.contains("seed")) seed = obj.at("seed").get<std::uint64_t>();
    }
    if (seed_override) seed = *seed_override;
    const DgpStructure st = build_structure(dgp);
    const Rng rng(seed);
    Rng p_rng = rng.split(0xACE);
    const PTables ptab = fit_oracle_p(dgp, st, n_oracle, p_rng);
    std::vector<InterventionSpec> deltas;
    std::vector<OraclePsi> truth;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        deltas.push_back(InterventionSpec::uniform(grid[j], dgp.s_max));
        Rng t_rng = rng.split(0xBEE0 + j);
        truth.push_back(oracle_psi(dgp, st, ptab, deltas.back(), n_truth, t_rng));
    }
    write_oracle_csv(deltas, truth, ctx.out("oracle.csv").string());
    std::vector<std::string> outputs = {"oracle.csv"};
    if (dump_ptables) {
        ptab.write_csv(ctx.out("ptables.csv").string());
        outputs.push_back("ptables.csv");
    }
    ConfigJson effective;
    effective["dgp"] = dump_dgp(dgp);
    effective["oracle"] = ConfigJson{
        {"delta_grid", grid}, {"n_oracle", n_oracle}, {"n_truth", n_truth}, {"seed", seed}};
    write_manifest(ctx, "oracle", seed, effective, outputs);
    return 0;
}

int cmd_estimate(const RunContext& ctx, const std::string& data_path,
                 std::vector<double> delta_flags, std::optional<std::uint64_t> seed_override) {
    const ConfigJson root = load_config_file(ctx.config_path);
    check_sections(root, {"estimator", "estimate"});
    EstimatorConfig est = parse_estimator(root);
    std::vector<double> delta_values;
    std::uint64_t seed = 1;
    if (root.contains("estimate")) {
        const ConfigJson& obj = root.at("estimate");
        check_keys(obj, {"delta", "delta_uniform", "seed"}, "estimate");
        if (obj.contains("delta")) delta_values = obj.at("delta").get<std::vector<double>>();
        if (obj.contains("delta_uniform")) {
            delta_values.assign(1, obj.at("delta_uniform").get<double>());
        }
        if (obj.contains("seed")) seed = obj.at("seed").get<std::uint64_t>();
    }
    if (!delta_flags.empty()) delta_values = std::move(delta_flags);
    if (seed_override) seed = *seed_override;
    if (delta_values.empty()) delta_values = {1.0};
    const Dataset ds = load_dataset(data_path);
    InterventionSpec spec;
    if (delta_values.size() == 1) {
        spec = InterventionSpec::uniform(delta_values[0], ds.s_max);
    } else {
        spec.delta = delta_values;
    }
    const EstimateResult res = estimate(ds, spec, est, Rng(seed));
    write_estimates_csv({res}, ctx.out("estimate.csv").string());
    ConfigJson effective;
    effective["estimator"] = dump_estimator(est);
    effective["estimate"] = ConfigJson{{"delta", spec.delta}, {"seed", seed}};
    write_manifest(ctx, "estimate", seed, effective, {"estimate.csv"});
    return 0;
}

int cmd_sweep(const RunContext& ctx, const std::string& data_path,
              std::optional<std::uint64_t> seed_override) {
    const ConfigJson root = load_config_file(ctx.config_path);
    check_sections(root, {"estimator", "sweep"});
    SweepConfig cfg = parse_sweep(root);
    if (seed_override) cfg.seed = *seed_override;
    if (cfg.grid.empty()) cfg.grid = {0.5, 0.75, 1.0, 1.25, 1.5, 2.0};
    const Dataset ds = load_dataset(data_path);
    const auto results = run_delta_sweep(ds, cfg);
    write_sweep_csv(results, cfg, ctx.out("sweep.csv").string());
    ConfigJson effective;
    effective["sweep"] = dump_sweep(cfg);
    write_manifest(ctx, "sweep", cfg.seed, effective, {"sweep.csv"});
    return 0;
}

int cmd_mc_study(const RunContext& ctx, std::optional<int> reps_override,
                 std::optional<int> workers_override,
                 std::optional<std::uint64_t> seed_override) {
    const ConfigJson root = load_config_file(ctx.config_path);
    check_sections(root, {"dgp", "estimator", "mc"});
    McStudyConfig cfg = parse_mc_study(root);
    if (reps_override) cfg.reps = *reps_override;
    if (workers_override) cfg.workers = *workers_override;
    if (seed_override) cfg.base_seed = *seed_override;
    const McStudyResult res = run_mc_study(cfg);
    write_mc_metrics_csv(res, ctx.out("mc_metrics.csv").string());
    std::vector<InterventionSpec> deltas;
    std::vector<OraclePsi> truth;
    for (std::size_t j = 0; j < cfg.delta_grid.size(); ++j) {
        deltas.push_back(InterventionSpec::uniform(cfg.delta_grid[j], cfg.dgp.s_max));
        truth.push_back(OraclePsi{res.psi_true[j], res.psi_true_se[j],
                                  static_cast<long>(cfg.n_truth)});
    }
    write_oracle_csv(deltas, truth, ctx.out("oracle.csv").string());
    write_manifest(ctx, "mc-study", cfg.base_seed, dump_mc_study(cfg),
                   {"mc_metrics.csv", "oracle.csv"}, res.oracle_hash);
    return 0;
}

int cmd_ingest_check(const RunContext& ctx, const std::string& embeddings,
                     const std::string& outcomes, const std::string& treatments,
                     const std::string& write_path) {
    const Dataset ds = ingest_embeddings(embeddings, outcomes, treatments);
    std::cout << "ingest ok: n=" << ds.n() << " d_r=" << ds.d_r << " s_max=" << ds.s_max
              << "\n";
    std::vector<std::string> outputs;
    if (!write_path.empty()) {
        save_dataset(ds, write_path);
        outputs.push_back(write_path);
    }
    ConfigJson effective;
    effective["ingest"] = ConfigJson{{"n", ds.n()}, {"d_r", ds.d_r}, {"s_max", ds.s_max}};
    write_manifest(ctx, "ingest-check", 0, effective, outputs);
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Cross-fitted estimation of average outcomes under incremental "
                 "stochastic interventions on sequential treatments"};
    app.set_version_flag("--version", std::string("seqci ") + kVersion);
    app.require_subcommand(1);

    RunContext ctx;
    app.add_option("--config", ctx.config_path, "JSON configuration file");
    app.add_option("--out", ctx.out_dir, "Output directory (default .)");

    std::optional<std::uint64_t> seed_override;
    app.add_option("--seed", seed_override, "Override the command's seed");

    auto* sim = app.add_subcommand("simulate", "Write a synthetic dataset");
    std::optional<int> sim_n;
    sim->add_option("--n", sim_n, "Number of units");

    auto* oracle = app.add_subcommand("oracle", "Write oracle truth values for a delta grid");
    bool dump_ptables = false;
    oracle->add_flag("--ptables", dump_ptables, "Also write the oracle p-tables CSV");

    auto* est = app.add_subcommand("estimate", "Cross-fitted estimate on a dataset");
    std::string est_data;
    std::vector<double> est_delta;
    est->add_option("--data", est_data, "Dataset file")->required();
    est->add_option("--delta", est_delta,
                    "Delta (single value = uniform, or one value per position)");

    auto* sweep = app.add_subcommand("sweep", "Delta sweep over a dataset");
    std::string sweep_data;
    sweep->add_option("--data", sweep_data, "Dataset file")->required();

    auto* mc = app.add_subcommand("mc-study", "Monte-Carlo study against the oracle");
    std::optional<int> mc_reps, mc_workers;
    mc->add_option("--reps", mc_reps, "Replications per sample size");
    mc->add_option("--workers", mc_workers, "Worker threads");

    auto* ingest = app.add_subcommand("ingest-check", "Validate an ingestion triple");
    std::string in_emb, in_out, in_trt, in_write;
    ingest->add_option("--embeddings", in_emb, "Embeddings JSONL")->required();
    ingest->add_option("--outcomes", in_out, "Outcomes CSV")->required();
    ingest->add_option("--treatments", in_trt, "Treatments CSV")->required();
    ingest->add_option("--write", in_write, "Write the assembled dataset here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (!ctx.out_dir.empty()) fs::create_directories(ctx.out_dir);
        if (sim->parsed()) return cmd_simulate(ctx, sim_n, seed_override);
        if (oracle->parsed()) return cmd_oracle(ctx, seed_override, dump_ptables);
        if (est->parsed()) return cmd_estimate(ctx, est_data, est_delta, seed_override);
        if (sweep->parsed()) return cmd_sweep(ctx, sweep_data, seed_override);
        if (mc->parsed()) return cmd_mc_study(ctx, mc_reps, mc_workers, seed_override);
        if (ingest->parsed()) return cmd_ingest_check(ctx, in_emb, in_out, in_trt, in_write);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const EstimationError& e) {
        std::cerr << "estimation failure: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

int cli_main(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("seqci");
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace seqci
