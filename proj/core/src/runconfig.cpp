#include "gridmtl/runconfig.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace gridmtl {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto& [k, v] : j.items()) {
        (void)v;
        bool ok = false;
        for (const char* name : known)
            if (k == name) { ok = true; break; }
        if (!ok) throw ConfigError(where + ": unknown key '" + k + "'");
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    try {
        return j.contains(key) ? j.at(key).get<T>() : fallback;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

std::pair<double, double> get_pair(const json& j, const char* key, std::pair<double, double> fallback,
                                   const std::string& where) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2)
        throw ConfigError(where + ": '" + key + "' must be a two-element array");
    return {v[0].get<double>(), v[1].get<double>()};
}

} // namespace

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config JSON parse failure: ") + e.what());
    }
    check_keys(j,
               {"grid_path", "topologies", "contingency", "sampler", "thresholds", "sim", "model",
                "train", "generation", "output_dir", "seed"},
               "config");

    RunConfig cfg;
    if (!j.contains("grid_path")) throw ConfigError("config: missing required key 'grid_path'");
    cfg.grid_path = j.at("grid_path").get<std::string>();
    cfg.topologies = get_or(j, "topologies", 1);
    if (cfg.topologies < 1) throw ConfigError("config: 'topologies' must be >= 1");
    cfg.output_dir = get_or<std::string>(j, "output_dir", "out");
    cfg.seed = get_or<std::uint64_t>(j, "seed", 0);

    if (j.contains("contingency")) {
        const auto& c = j.at("contingency");
        check_keys(c, {"policy"}, "contingency");
        cfg.contingency_policy = get_or<std::string>(c, "policy", "near_generators");
        if (cfg.contingency_policy != "near_generators")
            throw ConfigError("contingency: unknown policy '" + cfg.contingency_policy + "'");
    }

    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        check_keys(s,
                   {"load_scale_mean", "load_scale_std", "load_scale_bounds", "load_correlation",
                    "pf_range"},
                   "sampler");
        cfg.sampler.load_scale_mean = get_or(s, "load_scale_mean", cfg.sampler.load_scale_mean);
        cfg.sampler.load_scale_std = get_or(s, "load_scale_std", cfg.sampler.load_scale_std);
        cfg.sampler.load_scale_bounds =
            get_pair(s, "load_scale_bounds", cfg.sampler.load_scale_bounds, "sampler");
        cfg.sampler.load_correlation = get_or(s, "load_correlation", cfg.sampler.load_correlation);
        cfg.sampler.pf_range = get_pair(s, "pf_range", cfg.sampler.pf_range, "sampler");
        if (cfg.sampler.load_correlation < 0 || cfg.sampler.load_correlation >= 1)
            throw ConfigError("sampler: 'load_correlation' must lie in [0, 1)");
        if (cfg.sampler.pf_range.first <= 0 || cfg.sampler.pf_range.second > 1 ||
            cfg.sampler.pf_range.first > cfg.sampler.pf_range.second)
            throw ConfigError("sampler: 'pf_range' must lie within (0, 1]");
        if (cfg.sampler.load_scale_std < 0) throw ConfigError("sampler: negative 'load_scale_std'");
    }

    if (j.contains("thresholds")) {
        const auto& t = j.at("thresholds");
        check_keys(t,
                   {"tsi_min_pct", "zeta_min", "band_hz", "v_band_pu", "v_dwell_s", "overload_w",
                    "overload_p", "overload_tau"},
                   "thresholds");
        cfg.thresholds.tsi_min_pct = get_or(t, "tsi_min_pct", cfg.thresholds.tsi_min_pct);
        cfg.thresholds.zeta_min = get_or(t, "zeta_min", cfg.thresholds.zeta_min);
        cfg.thresholds.band_hz = get_pair(t, "band_hz", cfg.thresholds.band_hz, "thresholds");
        cfg.thresholds.v_band_pu = get_pair(t, "v_band_pu", cfg.thresholds.v_band_pu, "thresholds");
        cfg.thresholds.v_dwell_s = get_or(t, "v_dwell_s", cfg.thresholds.v_dwell_s);
        cfg.thresholds.overload_p = get_or(t, "overload_p", cfg.thresholds.overload_p);
        cfg.thresholds.overload_tau = get_or(t, "overload_tau", cfg.thresholds.overload_tau);
        if (t.contains("overload_w")) {
            auto w = t.at("overload_w").get<std::vector<double>>();
            cfg.thresholds.overload_w =
                Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        }
        if (cfg.thresholds.v_band_pu.first >= cfg.thresholds.v_band_pu.second)
            throw ConfigError("thresholds: voltage band lower bound must be below upper bound");
        if (cfg.thresholds.zeta_min <= 0 || cfg.thresholds.v_dwell_s <= 0 ||
            cfg.thresholds.overload_tau <= 0)
            throw ConfigError("thresholds: all thresholds must be positive");
    }

    if (j.contains("sim")) {
        const auto& s = j.at("sim");
        check_keys(s, {"dt_s", "horizon_s", "fault_start_s", "clearing_time_s"}, "sim");
        cfg.sim.dt_s = get_or(s, "dt_s", cfg.sim.dt_s);
        cfg.sim.horizon_s = get_or(s, "horizon_s", cfg.sim.horizon_s);
        cfg.fault_start_s = get_or(s, "fault_start_s", cfg.fault_start_s);
        cfg.clearing_time_s = get_or(s, "clearing_time_s", cfg.clearing_time_s);
        if (cfg.sim.dt_s <= 0) throw ConfigError("sim: 'dt_s' must be positive");
        if (cfg.sim.horizon_s < cfg.fault_start_s + cfg.clearing_time_s)
            throw ConfigError("sim: horizon shorter than fault start plus clearing time");
    }

    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m,
                   {"encoder_layers", "recon_layers", "task_layers", "dropout_rate", "l2_lambda",
                    "recon_weight", "decision_threshold"},
                   "model");
        cfg.model.encoder_layers = get_or(m, "encoder_layers", cfg.model.encoder_layers);
        cfg.model.recon_layers = get_or(m, "recon_layers", cfg.model.recon_layers);
        cfg.model.task_layers = get_or(m, "task_layers", cfg.model.task_layers);
        cfg.model.dropout_rate = get_or(m, "dropout_rate", cfg.model.dropout_rate);
        cfg.model.l2_lambda = get_or(m, "l2_lambda", cfg.model.l2_lambda);
        cfg.model.recon_weight = get_or(m, "recon_weight", cfg.model.recon_weight);
        cfg.model.decision_threshold = get_or(m, "decision_threshold", cfg.model.decision_threshold);
        if (cfg.model.encoder_layers.empty()) throw ConfigError("model: empty 'encoder_layers'");
        if (cfg.model.task_layers.empty() || cfg.model.task_layers.back() != 1)
            throw ConfigError("model: 'task_layers' must end in width 1");
        if (cfg.model.dropout_rate < 0 || cfg.model.dropout_rate >= 1)
            throw ConfigError("model: 'dropout_rate' must lie in [0, 1)");
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t,
                   {"eta0", "gamma", "k_s", "batch_size", "max_epochs", "patience", "weighting",
                    "task_weights", "class_weighting", "val_fraction"},
                   "train");
        cfg.train_cfg.eta0 = get_or(t, "eta0", cfg.train_cfg.eta0);
        cfg.train_cfg.gamma = get_or(t, "gamma", cfg.train_cfg.gamma);
        cfg.train_cfg.k_s = get_or(t, "k_s", cfg.train_cfg.k_s);
        cfg.train_cfg.batch_size = get_or(t, "batch_size", cfg.train_cfg.batch_size);
        cfg.train_cfg.max_epochs = get_or(t, "max_epochs", cfg.train_cfg.max_epochs);
        cfg.train_cfg.patience = get_or(t, "patience", cfg.train_cfg.patience);
        cfg.train_cfg.class_weighting = get_or(t, "class_weighting", cfg.train_cfg.class_weighting);
        cfg.train_cfg.val_fraction = get_or(t, "val_fraction", cfg.train_cfg.val_fraction);
        if (t.contains("weighting")) {
            std::string w = t.at("weighting").get<std::string>();
            if (w == "uniform") cfg.train_cfg.weighting = WeightingMode::Uniform;
            else if (w == "adaptive") cfg.train_cfg.weighting = WeightingMode::Adaptive;
            else throw ConfigError("train: unknown weighting '" + w + "'");
        }
        if (t.contains("task_weights")) {
            auto w = t.at("task_weights").get<std::vector<double>>();
            if (w.size() != 4) throw ConfigError("train: 'task_weights' must have 4 entries");
            for (int i = 0; i < 4; ++i) cfg.train_cfg.task_weights[i] = w[static_cast<std::size_t>(i)];
        }
        if (cfg.train_cfg.gamma <= 0 || cfg.train_cfg.gamma > 1)
            throw ConfigError("train: 'gamma' must lie in (0, 1]");
        if (cfg.train_cfg.patience < 1) throw ConfigError("train: 'patience' must be >= 1");
        if (cfg.train_cfg.batch_size < 1) throw ConfigError("train: 'batch_size' must be >= 1");
        if (cfg.train_cfg.val_fraction <= 0 || cfg.train_cfg.val_fraction >= 1)
            throw ConfigError("train: 'val_fraction' must lie in (0, 1)");
    }

    if (j.contains("generation")) {
        const auto& g = j.at("generation");
        check_keys(g, {"n_per_case", "test_fraction"}, "generation");
        cfg.generation.n_per_case = get_or(g, "n_per_case", cfg.generation.n_per_case);
        cfg.generation.test_fraction = get_or(g, "test_fraction", cfg.generation.test_fraction);
        if (cfg.generation.n_per_case < 1) throw ConfigError("generation: 'n_per_case' must be >= 1");
        if (cfg.generation.test_fraction <= 0 || cfg.generation.test_fraction >= 1)
            throw ConfigError("generation: 'test_fraction' must lie in (0, 1)");
    }

    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

void RunConfig::derive_seeds() {
    sampler.seed = seed;
    model.seed = seed ^ 0xa5a5a5a5a5a5a5a5ull;
    train_cfg.seed = seed ^ 0x5a5a5a5a5a5a5a5aull;
}

std::string RunConfig::echo_json() const {
    json j;
    j["grid_path"] = grid_path;
    j["topologies"] = topologies;
    j["contingency"] = json{{"policy", contingency_policy}};
    j["sampler"] = json{{"load_scale_mean", sampler.load_scale_mean},
                        {"load_scale_std", sampler.load_scale_std},
                        {"load_scale_bounds", {sampler.load_scale_bounds.first, sampler.load_scale_bounds.second}},
                        {"load_correlation", sampler.load_correlation},
                        {"pf_range", {sampler.pf_range.first, sampler.pf_range.second}}};
    std::vector<double> w(thresholds.overload_w.begin(), thresholds.overload_w.end());
    j["thresholds"] = json{{"tsi_min_pct", thresholds.tsi_min_pct},
                           {"zeta_min", thresholds.zeta_min},
                           {"band_hz", {thresholds.band_hz.first, thresholds.band_hz.second}},
                           {"v_band_pu", {thresholds.v_band_pu.first, thresholds.v_band_pu.second}},
                           {"v_dwell_s", thresholds.v_dwell_s},
                           {"overload_w", w},
                           {"overload_p", thresholds.overload_p},
                           {"overload_tau", thresholds.overload_tau}};
    j["sim"] = json{{"dt_s", sim.dt_s},
                    {"horizon_s", sim.horizon_s},
                    {"fault_start_s", fault_start_s},
                    {"clearing_time_s", clearing_time_s}};
    j["model"] = json{{"encoder_layers", model.encoder_layers},
                      {"recon_layers", model.recon_layers},
                      {"task_layers", model.task_layers},
                      {"dropout_rate", model.dropout_rate},
                      {"l2_lambda", model.l2_lambda},
                      {"recon_weight", model.recon_weight},
                      {"decision_threshold", model.decision_threshold}};
    j["train"] = json{{"eta0", train_cfg.eta0},
                      {"gamma", train_cfg.gamma},
                      {"k_s", train_cfg.k_s},
                      {"batch_size", train_cfg.batch_size},
                      {"max_epochs", train_cfg.max_epochs},
                      {"patience", train_cfg.patience},
                      {"weighting", train_cfg.weighting == WeightingMode::Adaptive ? "adaptive" : "uniform"},
                      {"task_weights", train_cfg.task_weights},
                      {"class_weighting", train_cfg.class_weighting},
                      {"val_fraction", train_cfg.val_fraction}};
    j["generation"] = json{{"n_per_case", generation.n_per_case},
                           {"test_fraction", generation.test_fraction}};
    j["output_dir"] = output_dir;
    j["seed"] = seed;
    return j.dump();
}

} // namespace gridmtl
