#include "seqci/config.hpp"

#include <fstream>

#include "seqci/common.hpp"

namespace seqci {

ConfigJson load_config_file(const std::string& path) {
    if (path.empty()) return ConfigJson::object();
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    try {
        return ConfigJson::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
}

void check_keys(const ConfigJson& obj, std::initializer_list<const char*> allowed,
                const std::string& context) {
    if (!obj.is_object()) throw ConfigError("config: " + context + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (key == a) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("config: unknown key '" + key + "' in " + context);
    }
}

void check_sections(const ConfigJson& root, std::initializer_list<const char*> allowed) {
    check_keys(root, allowed, "config root");
}

namespace {

template <class T>
void read(const ConfigJson& obj, const char* key, T& out, const std::string& context) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const std::exception& e) {
        throw ConfigError("config: bad value for '" + std::string(key) + "' in " + context +
                          ": " + e.what());
    }
}

TrainConfig parse_train(const ConfigJson& obj, const TrainConfig& defaults,
                        const std::string& context) {
    check_keys(obj, {"epochs", "batch_size", "learning_rate", "patience", "dropout_rate"},
               context);
    TrainConfig cfg = defaults;
    read(obj, "epochs", cfg.epochs, context);
    read(obj, "batch_size", cfg.batch_size, context);
    read(obj, "learning_rate", cfg.learning_rate, context);
    read(obj, "patience", cfg.patience, context);
    read(obj, "dropout_rate", cfg.dropout_rate, context);
    return cfg;
}

ConfigJson dump_train(const TrainConfig& cfg) {
    ConfigJson j;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["learning_rate"] = cfg.learning_rate;
    j["patience"] = cfg.patience;
    j["dropout_rate"] = cfg.dropout_rate;
    return j;
}

}  // namespace

DgpConfig parse_dgp(const ConfigJson& root) {
    DgpConfig cfg;
    if (!root.contains("dgp")) return cfg;
    const ConfigJson& obj = root.at("dgp");
    check_keys(obj,
               {"d_r", "d_w", "d_u", "p_u", "s_min", "lambda", "s_max", "sigma_diag",
                "sigma_offdiag", "a_scale", "tau_base", "tau_decay", "gamma2_scale",
                "structure_seed", "noise_seed"},
               "dgp");
    read(obj, "d_r", cfg.d_r, "dgp");
    read(obj, "d_w", cfg.d_w, "dgp");
    read(obj, "d_u", cfg.d_u, "dgp");
    read(obj, "p_u", cfg.p_u, "dgp");
    read(obj, "s_min", cfg.s_min, "dgp");
    read(obj, "lambda", cfg.lambda, "dgp");
    read(obj, "s_max", cfg.s_max, "dgp");
    read(obj, "sigma_diag", cfg.sigma_diag, "dgp");
    read(obj, "sigma_offdiag", cfg.sigma_offdiag, "dgp");
    read(obj, "a_scale", cfg.a_scale, "dgp");
    read(obj, "tau_base", cfg.tau_base, "dgp");
    read(obj, "tau_decay", cfg.tau_decay, "dgp");
    read(obj, "gamma2_scale", cfg.gamma2_scale, "dgp");
    read(obj, "structure_seed", cfg.structure_seed, "dgp");
    read(obj, "noise_seed", cfg.noise_seed, "dgp");
    cfg.validate();
    return cfg;
}

EstimatorConfig parse_estimator(const ConfigJson& root) {
    EstimatorConfig cfg;
    if (!root.contains("estimator")) return cfg;
    const ConfigJson& obj = root.at("estimator");
    check_keys(obj,
               {"encoder_hidden", "head_hidden", "d_f", "nuisance_hidden", "k_folds",
                "c_overlap", "deconf_train", "nuisance_train"},
               "estimator");
    read(obj, "encoder_hidden", cfg.arch.encoder_hidden, "estimator");
    read(obj, "head_hidden", cfg.arch.head_hidden, "estimator");
    read(obj, "d_f", cfg.arch.d_f, "estimator");
    read(obj, "nuisance_hidden", cfg.nuisance_hidden, "estimator");
    read(obj, "k_folds", cfg.k_folds, "estimator");
    read(obj, "c_overlap", cfg.c_overlap, "estimator");
    if (obj.contains("deconf_train")) {
        cfg.deconf_train = parse_train(obj.at("deconf_train"), cfg.deconf_train,
                                       "estimator.deconf_train");
    }
    if (obj.contains("nuisance_train")) {
        cfg.nuisance_train = parse_train(obj.at("nuisance_train"), cfg.nuisance_train,
                                         "estimator.nuisance_train");
    }
    if (cfg.arch.d_f < 1 || cfg.k_folds < 2 || !(cfg.c_overlap >= 0.0)) {
        throw ConfigError("config: estimator values out of range");
    }
    return cfg;
}

McStudyConfig parse_mc_study(const ConfigJson& root) {
    McStudyConfig cfg;
    cfg.dgp = parse_dgp(root);
    cfg.estimator = parse_estimator(root);
    if (!root.contains("estimator") || !root.at("estimator").contains("k_folds")) {
        cfg.estimator.k_folds = 2;  // MC default, matching the simulation protocol
    }
    if (!root.contains("mc")) return cfg;
    const ConfigJson& obj = root.at("mc");
    check_keys(obj,
               {"sample_sizes", "delta_grid", "reps", "n_oracle", "n_truth", "base_seed",
                "workers"},
               "mc");
    read(obj, "sample_sizes", cfg.sample_sizes, "mc");
    read(obj, "delta_grid", cfg.delta_grid, "mc");
    read(obj, "reps", cfg.reps, "mc");
    read(obj, "n_oracle", cfg.n_oracle, "mc");
    read(obj, "n_truth", cfg.n_truth, "mc");
    read(obj, "base_seed", cfg.base_seed, "mc");
    read(obj, "workers", cfg.workers, "mc");
    return cfg;
}

SweepConfig parse_sweep(const ConfigJson& root, int* grid_points_out) {
    SweepConfig cfg;
    cfg.estimator = parse_estimator(root);
    if (!root.contains("sweep")) return cfg;
    const ConfigJson& obj = root.at("sweep");
    check_keys(obj, {"mode", "target_position", "grid", "log_grid", "seed"}, "sweep");
    if (obj.contains("mode")) {
        const std::string mode = obj.at("mode").get<std::string>();
        if (mode == "uniform") {
            cfg.mode = SweepMode::Uniform;
        } else if (mode == "position") {
            cfg.mode = SweepMode::Position;
        } else {
            throw ConfigError("config: sweep.mode must be 'uniform' or 'position'");
        }
    }
    read(obj, "target_position", cfg.target_position, "sweep");
    read(obj, "grid", cfg.grid, "sweep");
    read(obj, "seed", cfg.seed, "sweep");
    if (obj.contains("log_grid")) {
        const ConfigJson& lg = obj.at("log_grid");
        check_keys(lg, {"lo", "hi", "points"}, "sweep.log_grid");
        double lo = 1e-4, hi = 1e4;
        int points = 9;
        read(lg, "lo", lo, "sweep.log_grid");
        read(lg, "hi", hi, "sweep.log_grid");
        read(lg, "points", points, "sweep.log_grid");
        cfg.grid = log_grid(lo, hi, points);
        if (grid_points_out != nullptr) *grid_points_out = points;
    }
    return cfg;
}

ConfigJson dump_dgp(const DgpConfig& cfg) {
    ConfigJson j;
    j["d_r"] = cfg.d_r;
    j["d_w"] = cfg.d_w;
    j["d_u"] = cfg.d_u;
    j["p_u"] = cfg.p_u;
    j["s_min"] = cfg.s_min;
    j["lambda"] = cfg.lambda;
    j["s_max"] = cfg.s_max;
    j["sigma_diag"] = cfg.sigma_diag;
    j["sigma_offdiag"] = cfg.sigma_offdiag;
    j["a_scale"] = cfg.a_scale;
    j["tau_base"] = cfg.tau_base;
    j["tau_decay"] = cfg.tau_decay;
    j["gamma2_scale"] = cfg.gamma2_scale;
    j["structure_seed"] = cfg.structure_seed;
    j["noise_seed"] = cfg.noise_seed;
    return j;
}

ConfigJson dump_estimator(const EstimatorConfig& cfg) {
    ConfigJson j;
    j["encoder_hidden"] = cfg.arch.encoder_hidden;
    j["head_hidden"] = cfg.arch.head_hidden;
    j["d_f"] = cfg.arch.d_f;
    j["nuisance_hidden"] = cfg.nuisance_hidden;
    j["k_folds"] = cfg.k_folds;
    j["c_overlap"] = cfg.c_overlap;
    j["deconf_train"] = dump_train(cfg.deconf_train);
    j["nuisance_train"] = dump_train(cfg.nuisance_train);
    return j;
}

ConfigJson dump_mc_study(const McStudyConfig& cfg) {
    ConfigJson j;
    j["sample_sizes"] = cfg.sample_sizes;
    j["delta_grid"] = cfg.delta_grid;
    j["reps"] = cfg.reps;
    j["n_oracle"] = cfg.n_oracle;
    j["n_truth"] = cfg.n_truth;
    j["base_seed"] = cfg.base_seed;
    // workers is execution parallelism, not part of the statistical run;
    // leaving it out keeps manifests byte-identical across worker counts.
    j["dgp"] = dump_dgp(cfg.dgp);
    j["estimator"] = dump_estimator(cfg.estimator);
    return j;
}

ConfigJson dump_sweep(const SweepConfig& cfg) {
    ConfigJson j;
    j["mode"] = cfg.mode == SweepMode::Uniform ? "uniform" : "position";
    j["target_position"] = cfg.target_position;
    j["grid"] = cfg.grid;
    j["seed"] = cfg.seed;
    j["estimator"] = dump_estimator(cfg.estimator);
    return j;
}

std::uint64_t config_hash(const ConfigJson& effective) { return fnv1a(effective.dump()); }

}  // namespace seqci
