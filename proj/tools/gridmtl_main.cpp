#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridmtl/evalharness.hpp"
#include "gridmtl/runconfig.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

gridmtl::RunConfig load_config_with_env(const std::string& path) {
    gridmtl::RunConfig cfg = gridmtl::load_run_config(path);
    if (const char* env = std::getenv("GRIDMTL_SEED")) {
        // Env var takes precedence over the config file.
        char* end = nullptr;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw gridmtl::ConfigError("GRIDMTL_SEED is not an unsigned integer");
        cfg.seed = v;
    }
    cfg.derive_seeds();
    return cfg;
}

struct PipelineInputs {
    std::vector<gridmtl::Network> topologies;
    std::vector<std::vector<gridmtl::Contingency>> contingencies;
};

PipelineInputs build_inputs(const gridmtl::RunConfig& cfg) {
    PipelineInputs in;
    gridmtl::Network base = gridmtl::load_network(cfg.grid_path);
    in.topologies = gridmtl::enumerate_topologies(base, cfg.topologies);
    for (const auto& net : in.topologies) {
        auto conts = gridmtl::make_generator_contingencies(net, cfg.fault_start_s, cfg.clearing_time_s);
        if (conts.empty())
            throw gridmtl::Error("no viable contingency for topology " + std::to_string(net.topology_id));
        in.contingencies.push_back(std::move(conts));
    }
    return in;
}

int cmd_generate(const std::string& config_path, int jobs) {
    gridmtl::RunConfig cfg = load_config_with_env(config_path);
    PipelineInputs in = build_inputs(cfg);
    fs::create_directories(cfg.output_dir);

    gridmtl::GenerationReport rep;
    gridmtl::Dataset full = gridmtl::generate_dataset(in.topologies, in.contingencies,
                                                      cfg.generation.n_per_case, cfg.sampler,
                                                      cfg.thresholds, cfg.sim, &rep, jobs);
    full.config_echo = cfg.echo_json();

    auto split_res = gridmtl::split(full, cfg.generation.test_fraction, cfg.seed);
    const fs::path out_dir(cfg.output_dir);
    gridmtl::write_dataset(full, (out_dir / "dataset_full.ds").string());
    gridmtl::write_dataset(split_res.train, (out_dir / "dataset_train.ds").string());
    gridmtl::write_dataset(split_res.test, (out_dir / "dataset_test.ds").string());
    for (const auto& part : gridmtl::split_by_topology(split_res.train)) {
        int tid = part.samples.front().topology_id;
        gridmtl::write_dataset(part, (out_dir / ("dataset_train_topo" + std::to_string(tid) + ".ds")).string());
    }
    for (const auto& part : gridmtl::split_by_topology(split_res.test)) {
        int tid = part.samples.front().topology_id;
        gridmtl::write_dataset(part, (out_dir / ("dataset_test_topo" + std::to_string(tid) + ".ds")).string());
    }

    json report;
    report["config_echo"] = json::parse(cfg.echo_json());
    report["draws_attempted"] = rep.draws_attempted;
    report["draws_discarded_nonconverged"] = rep.draws_discarded_nonconverged;
    report["draws_clamped"] = rep.draws_clamped;
    report["samples"] = rep.samples;
    const char* names[4] = {"static", "small_signal", "voltage", "transient"};
    for (int t = 0; t < 4; ++t) {
        report["class_balance"][names[t]]["secure"] = rep.secure_count[t];
        report["class_balance"][names[t]]["insecure"] = rep.samples - rep.secure_count[t];
    }
    report["class_balance"]["overall"]["secure"] = rep.overall_secure_count;
    report["class_balance"]["overall"]["insecure"] = rep.samples - rep.overall_secure_count;
    report["train_samples"] = split_res.train.samples.size();
    report["test_samples"] = split_res.test.samples.size();
    report["split_warnings"] = split_res.warnings;
    report["dataset_digest"] = gridmtl::to_hex(gridmtl::dataset_digest(full));
    for (const auto& note : rep.notes) report["notes"].push_back(note);
    std::ofstream rep_out(out_dir / "generation_report.json");
    rep_out << report.dump(2) << "\n";

    std::cout << "generated " << rep.samples << " samples ("
              << rep.draws_discarded_nonconverged << " draws discarded, digest "
              << gridmtl::to_hex(gridmtl::dataset_digest(full)) << ")\n";
    return 0;
}

int cmd_train(const std::string& config_path, std::string dataset_path, std::string model_path,
              const std::string& weighting_override) {
    gridmtl::RunConfig cfg = load_config_with_env(config_path);
    if (!weighting_override.empty()) {
        if (weighting_override == "uniform") cfg.train_cfg.weighting = gridmtl::WeightingMode::Uniform;
        else if (weighting_override == "adaptive") cfg.train_cfg.weighting = gridmtl::WeightingMode::Adaptive;
        else throw gridmtl::ConfigError("unknown weighting '" + weighting_override + "'");
    }
    const fs::path out_dir(cfg.output_dir);
    if (dataset_path.empty()) dataset_path = (out_dir / "dataset_train.ds").string();
    if (model_path.empty()) model_path = (out_dir / "model.gmtl").string();
    fs::create_directories(out_dir);

    gridmtl::Dataset raw = gridmtl::read_dataset(dataset_path);
    auto [model, report] = gridmtl::train_on_raw(raw, cfg.train_cfg, cfg.model);
    gridmtl::save_model(model, model_path);

    std::ofstream csv(out_dir / "train_report.csv");
    csv << report.to_csv();
    std::cout << "trained " << report.epochs.size() << " epochs (best " << report.best_epoch
              << "), report digest " << gridmtl::to_hex(report.digest()) << ", model digest "
              << gridmtl::to_hex(gridmtl::model_digest(model)) << "\n";
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

void emit_eval_svg(const gridmtl::MetricsReport& rep, const std::string& name, const fs::path& path) {
    std::vector<std::string> criteria;
    std::vector<double> values;
    const char* names[4] = {"static", "small_signal", "voltage", "transient"};
    for (const auto& m : rep.per_task) {
        criteria.push_back(names[m.task]);
        values.push_back(m.f2);
    }
    criteria.push_back("overall");
    values.push_back(rep.overall.f2);
    gridmtl::write_f2_bar_svg(path.string(), "F2 per criterion", criteria, {{name, values}});
}

int cmd_evaluate(const std::string& config_path, std::string model_path, std::string dataset_path,
                 const std::string& external_preds, std::string out_path, bool plots) {
    gridmtl::RunConfig cfg = load_config_with_env(config_path);
    const fs::path out_dir(cfg.output_dir);
    if (dataset_path.empty()) dataset_path = (out_dir / "dataset_test.ds").string();
    if (out_path.empty()) out_path = (out_dir / "eval_report.csv").string();
    fs::create_directories(out_dir);

    gridmtl::Dataset test = gridmtl::read_dataset(dataset_path);
    gridmtl::MetricsReport rep;
    std::string series_name;
    if (!external_preds.empty()) {
        rep = gridmtl::score_external(external_preds, test, cfg.model.decision_threshold);
        series_name = "external";
    } else {
        if (model_path.empty()) model_path = (out_dir / "model.gmtl").string();
        gridmtl::MtlModel model = gridmtl::load_model(model_path);
        rep = gridmtl::evaluate(model, test);
        series_name = "multi_task";
    }

    std::ofstream csv(out_path);
    csv << rep.to_csv();
    if (plots) emit_eval_svg(rep, series_name, fs::path(out_path).replace_extension(".svg"));
    std::cout << rep.to_csv();
    return 0;
}

int cmd_leaveout(const std::string& config_path, const std::string& mode, std::string data_dir,
                 bool plots) {
    gridmtl::RunConfig cfg = load_config_with_env(config_path);
    if (data_dir.empty()) data_dir = cfg.output_dir;
    const fs::path dir(data_dir);
    fs::create_directories(dir);

    if (mode == "category") {
        gridmtl::Dataset train = gridmtl::read_dataset((dir / "dataset_train.ds").string());
        gridmtl::Dataset test = gridmtl::read_dataset((dir / "dataset_test.ds").string());
        auto table = gridmtl::leave_one_category_out(train, test, cfg.train_cfg, cfg.model);
        std::ofstream csv(dir / "leaveout_category.csv");
        csv << table.to_csv();
        std::cout << table.to_csv();
        if (plots) {
            std::vector<std::string> criteria;
            std::vector<double> multi, single;
            const char* names[4] = {"static", "small_signal", "voltage", "transient"};
            for (const auto& r : table.rows) {
                criteria.push_back(names[r.excluded_task]);
                multi.push_back(r.f2_multi);
                single.push_back(r.f2_single);
            }
            gridmtl::write_f2_bar_svg((dir / "leaveout_category.svg").string(),
                                      "Overall F2 with one criterion excluded", criteria,
                                      {{"single_task", single}, {"multi_task", multi}});
        }
        return 0;
    }
    if (mode == "topology") {
        gridmtl::Dataset full = gridmtl::read_dataset((dir / "dataset_full.ds").string());
        auto parts = gridmtl::split_by_topology(full);
        auto table = gridmtl::leave_one_topology_out(parts, cfg.train_cfg, cfg.model);
        std::ofstream csv(dir / "leaveout_topology.csv");
        csv << table.to_csv();
        std::cout << table.to_csv();
        if (plots) {
            std::vector<std::string> criteria;
            std::vector<double> multi, single;
            for (const auto& r : table.rows) {
                criteria.push_back("topo " + std::to_string(r.topology_id));
                multi.push_back(r.f2_multi);
                single.push_back(r.f2_single);
            }
            gridmtl::write_f2_bar_svg((dir / "leaveout_topology.svg").string(),
                                      "Overall F2 with one topology held out", criteria,
                                      {{"single_task", single}, {"multi_task", multi}});
        }
        return 0;
    }
    throw gridmtl::ConfigError("unknown leaveout mode '" + mode + "'");
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_svg, bool plots) {
    // Combine evaluate-format CSVs into one comparison table / chart.
    std::vector<std::pair<std::string, std::vector<double>>> series;
    std::vector<std::string> criteria;
    for (const auto& path : inputs) {
        std::ifstream in(path);
        if (!in) throw gridmtl::Error("cannot open report input: " + path);
        std::string line;
        std::vector<std::string> names;
        std::vector<double> values;
        while (std::getline(in, line)) {
            if (line.rfind("task,", 0) == 0 || line.rfind("overall,conjunction", 0) == 0) {
                std::istringstream row(line);
                std::string level, task, cell;
                std::getline(row, level, ',');
                std::getline(row, task, ',');
                std::vector<std::string> cells;
                while (std::getline(row, cell, ',')) cells.push_back(cell);
                if (cells.size() < 7) continue;
                names.push_back(level == "overall" ? "overall" : task);
                values.push_back(std::stod(cells.back()));
            }
        }
        if (criteria.empty()) criteria = names;
        series.emplace_back(fs::path(path).stem().string(), values);
        std::cout << path << ":";
        for (std::size_t i = 0; i < names.size(); ++i) std::cout << " " << names[i] << "=" << values[i];
        std::cout << "\n";
    }
    if (plots && !series.empty())
        gridmtl::write_f2_bar_svg(out_svg, "F2 per method per criterion", criteria, series);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Power-system security dataset generation and multi-task assessment"};
    app.require_subcommand(1);

    std::string config_path, dataset_path, model_path, weighting, external_preds, out_path, mode,
        data_dir;
    std::vector<std::string> report_inputs;
    std::string report_svg = "report.svg";
    int jobs = 1;
    bool plots = false;

    auto* gen = app.add_subcommand("generate", "Sample, simulate and label a dataset");
    gen->add_option("--config", config_path, "Run configuration JSON")->required();
    gen->add_option("--jobs", jobs, "Parallel generation workers (default 1)");

    auto* tr = app.add_subcommand("train", "Train the multi-task model");
    tr->add_option("--config", config_path, "Run configuration JSON")->required();
    tr->add_option("--dataset", dataset_path, "Training dataset (default <output_dir>/dataset_train.ds)");
    tr->add_option("--out", model_path, "Model file (default <output_dir>/model.gmtl)");
    tr->add_option("--weighting", weighting, "Override task weighting: uniform|adaptive");

    auto* ev = app.add_subcommand("evaluate", "Score a model or external predictions on a dataset");
    ev->add_option("--config", config_path, "Run configuration JSON")->required();
    ev->add_option("--model", model_path, "Model file (default <output_dir>/model.gmtl)");
    ev->add_option("--dataset", dataset_path, "Dataset (default <output_dir>/dataset_test.ds)");
    ev->add_option("--external", external_preds, "External prediction CSV (sample_id, 4 probabilities)");
    ev->add_option("--out", out_path, "Report CSV path (default <output_dir>/eval_report.csv)");
    ev->add_flag("--plots", plots, "Also write an SVG bar chart");

    auto* lo = app.add_subcommand("leaveout", "Leave-one-category/topology-out studies");
    lo->add_option("--config", config_path, "Run configuration JSON")->required();
    lo->add_option("--mode", mode, "category|topology")->required();
    lo->add_option("--data-dir", data_dir, "Directory with generated datasets (default output_dir)");
    lo->add_flag("--plots", plots, "Also write SVG bar charts");

    auto* rp = app.add_subcommand("report", "Summarize evaluation CSVs");
    rp->add_option("--input", report_inputs, "Evaluation report CSVs")->required();
    rp->add_option("--out-svg", report_svg, "Combined SVG path (with --plots)");
    rp->add_flag("--plots", plots, "Write the combined SVG chart");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_generate(config_path, jobs);
        if (tr->parsed()) return cmd_train(config_path, dataset_path, model_path, weighting);
        if (ev->parsed()) return cmd_evaluate(config_path, model_path, dataset_path, external_preds, out_path, plots);
        if (lo->parsed()) return cmd_leaveout(config_path, mode, data_dir, plots);
        if (rp->parsed()) return cmd_report(report_inputs, report_svg, plots);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const gridmtl::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
