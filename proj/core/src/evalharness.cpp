#include "gridmtl/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace gridmtl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const char* task_name(int t) {
    switch (t) {
        case 0: return "static";
        case 1: return "small_signal";
        case 2: return "voltage";
        case 3: return "transient";
        default: return "overall";
    }
}

TaskMetrics finish(int task, const Confusion& c) {
    TaskMetrics m;
    m.task = task;
    m.confusion = c;
    m.precision = c.precision();
    m.recall = c.recall();
    m.f2 = f2_of(c);
    return m;
}

void append_metrics_row(std::ostringstream& out, const std::string& level, const std::string& name,
                        const TaskMetrics& m) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s,%s,%ld,%ld,%ld,%ld,%.10g,%.10g,%.10g\n", level.c_str(),
                  name.c_str(), m.confusion.tp, m.confusion.fp, m.confusion.tn, m.confusion.fn,
                  m.precision, m.recall, m.f2);
    out << buf;
}

} // namespace

MetricsReport score_probs(const MatrixXd& probs, const Dataset& test_ds, const std::vector<int>& tasks,
                          double threshold) {
    if (test_ds.samples.empty()) throw ValidationError("cannot score an empty dataset");
    if (probs.cols() != static_cast<Eigen::Index>(test_ds.samples.size()) ||
        probs.rows() != static_cast<Eigen::Index>(tasks.size()))
        throw ValidationError("probability matrix shape does not match the dataset");

    std::vector<Confusion> conf(tasks.size());
    Confusion overall;
    for (std::size_t i = 0; i < test_ds.samples.size(); ++i) {
        const Sample& s = test_ds.samples[i];
        bool pred_all = true, true_all = true;
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            bool pred_secure = probs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) >= threshold;
            bool true_secure = s.y.bit(tasks[t]) == 1;
            conf[t].add(!pred_secure, !true_secure);
            pred_all = pred_all && pred_secure;
            true_all = true_all && true_secure;
        }
        overall.add(!pred_all, !true_all);
    }

    MetricsReport rep;
    double macro = 0.0;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        rep.per_task.push_back(finish(tasks[t], conf[t]));
        macro += rep.per_task.back().f2;
    }
    rep.macro_f2 = macro / static_cast<double>(tasks.size());
    rep.overall = finish(-1, overall);
    rep.tp_rate = overall.tp_rate();
    rep.tn_rate = overall.tn_rate();
    return rep;
}

MetricsReport evaluate(const MtlModel& model, const Dataset& test_ds) {
    if (test_ds.samples.empty()) throw ValidationError("cannot evaluate on an empty dataset");
    if (test_ds.norm_stats) throw ValidationError("evaluate expects a raw dataset");
    if (model.schema_hash != test_ds.schema_hash())
        throw SchemaError("model and dataset feature layouts differ");

    const auto n = static_cast<Eigen::Index>(test_ds.samples.size());
    const Eigen::Index m = test_ds.samples.front().x.size();
    const Eigen::Index k = test_ds.samples.front().c.size();
    MatrixXd x(m, n), c(k, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Sample& s = test_ds.samples[static_cast<std::size_t>(i)];
        x.col(i) = (s.x - model.norm_stats->mean).cwiseQuotient(model.norm_stats->stdev);
        c.col(i) = s.c;
    }
    MatrixXd probs = predict_probs(model, x, c);
    return score_probs(probs, test_ds, model.tasks, model.cfg.decision_threshold);
}

MetricsReport score_external(const std::string& pred_csv_path, const Dataset& test_ds, double threshold) {
    std::ifstream in(pred_csv_path);
    if (!in) throw Error("cannot open prediction file: " + pred_csv_path);

    const auto n = static_cast<Eigen::Index>(test_ds.samples.size());
    MatrixXd probs = MatrixXd::Constant(4, n, -1.0);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.rfind("sample_id", 0) == 0) continue;
        long id;
        double p[4];
        if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf", &id, &p[0], &p[1], &p[2], &p[3]) != 5)
            throw ParseError("malformed prediction row: " + line);
        if (id < 0 || id >= n) throw ValidationError("prediction references unknown sample_id " + std::to_string(id));
        for (int t = 0; t < 4; ++t) probs(t, static_cast<Eigen::Index>(id)) = p[t];
    }
    if ((probs.array() < 0.0).any())
        throw ValidationError("prediction file does not cover every sample");
    return score_probs(probs, test_ds, {0, 1, 2, 3}, threshold);
}

std::string MetricsReport::to_csv() const {
    std::ostringstream out;
    out << "level,task,tp,fp,tn,fn,precision,recall,f2\n";
    for (const auto& m : per_task) append_metrics_row(out, "task", task_name(m.task), m);
    append_metrics_row(out, "overall", "conjunction", overall);
    char buf[96];
    std::snprintf(buf, sizeof buf, "overall,macro_average,,,,,,,%.10g\n", macro_f2);
    out << buf;
    std::snprintf(buf, sizeof buf, "overall,rates,,,,,%.10g,%.10g,\n", tp_rate, tn_rate);
    out << buf;
    return out.str();
}

std::pair<MtlModel, TrainReport> train_single_task_baseline(const Dataset& train_ds,
                                                            const TrainConfig& tcfg,
                                                            const ModelConfig& mcfg) {
    ModelConfig cfg = mcfg;
    cfg.head_mode = HeadMode::SingleJoint;
    return train(train_ds, tcfg, cfg);
}

std::pair<MtlModel, TrainReport> train_on_raw(const Dataset& raw_train, const TrainConfig& tcfg,
                                              const ModelConfig& mcfg) {
    return train(normalize(raw_train), tcfg, mcfg);
}

CategoryAblation leave_one_category_out(const Dataset& raw_train, const Dataset& raw_test,
                                        const TrainConfig& tcfg, const ModelConfig& mcfg, int jobs) {
    (void)jobs; // runs are sequential; each one is already deterministic
    CategoryAblation out;
    Dataset norm_train = normalize(raw_train);
    for (int excluded = 0; excluded < 4; ++excluded) {
        ModelConfig cfg = mcfg;
        cfg.active_tasks = mcfg.active_tasks;
        cfg.active_tasks[excluded] = false;

        CategoryAblationRow row;
        row.excluded_task = excluded;
        {
            cfg.head_mode = HeadMode::MultiDecoder;
            auto [model, rep] = train(norm_train, tcfg, cfg);
            row.f2_multi = evaluate(model, raw_test).overall.f2;
        }
        {
            cfg.head_mode = HeadMode::SingleJoint;
            auto [model, rep] = train(norm_train, tcfg, cfg);
            row.f2_single = evaluate(model, raw_test).overall.f2;
        }
        out.rows.push_back(row);
    }
    return out;
}

std::string CategoryAblation::to_csv() const {
    std::ostringstream out;
    out << "excluded_category,f2_single_task,f2_multi_task\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g\n", task_name(r.excluded_task), r.f2_single,
                      r.f2_multi);
        out << buf;
    }
    return out.str();
}

Dataset concat_datasets(const std::vector<Dataset>& parts) {
    if (parts.empty()) throw ValidationError("no datasets to concatenate");
    Dataset out = parts.front();
    out.samples.clear();
    for (const auto& p : parts) {
        if (p.schema_hash() != out.schema_hash())
            throw SchemaError("datasets have different layouts");
        if (p.norm_stats || out.norm_stats)
            throw ValidationError("concatenation expects raw datasets");
        out.samples.insert(out.samples.end(), p.samples.begin(), p.samples.end());
    }
    return out;
}

std::vector<Dataset> split_by_topology(const Dataset& ds) {
    std::map<int, Dataset> groups;
    for (const auto& s : ds.samples) {
        auto [it, fresh] = groups.try_emplace(s.topology_id, ds);
        if (fresh) it->second.samples.clear();
        it->second.samples.push_back(s);
    }
    std::vector<Dataset> out;
    for (auto& [id, part] : groups) out.push_back(std::move(part));
    return out;
}

TopologyAblation leave_one_topology_out(const std::vector<Dataset>& per_topology,
                                        const TrainConfig& tcfg, const ModelConfig& mcfg, int jobs) {
    (void)jobs;
    if (per_topology.size() < 3)
        throw ValidationError("leave-one-topology-out needs at least 3 topologies");

    TopologyAblation out;
    for (std::size_t held = 0; held < per_topology.size(); ++held) {
        std::vector<Dataset> rest;
        for (std::size_t i = 0; i < per_topology.size(); ++i)
            if (i != held) rest.push_back(per_topology[i]);
        Dataset train_raw = concat_datasets(rest);
        const Dataset& test_raw = per_topology[held];

        TopologyAblationRow row;
        row.topology_id = test_raw.samples.empty() ? -1 : test_raw.samples.front().topology_id;

        std::set<long> train_ids;
        for (const auto& s : train_raw.samples) train_ids.insert(s.sample_id);
        for (const auto& s : test_raw.samples)
            if (train_ids.count(s.sample_id)) row.leakage_free = false;

        {
            auto [model, rep] = train_on_raw(train_raw, tcfg, mcfg);
            row.f2_multi = evaluate(model, test_raw).overall.f2;
        }
        {
            ModelConfig cfg = mcfg;
            cfg.head_mode = HeadMode::SingleJoint;
            auto [model, rep] = train_on_raw(train_raw, tcfg, cfg);
            row.f2_single = evaluate(model, test_raw).overall.f2;
        }
        out.rows.push_back(row);
    }

    auto moments = [&](auto getter) {
        double mean = 0.0;
        for (const auto& r : out.rows) mean += getter(r);
        mean /= static_cast<double>(out.rows.size());
        double var = 0.0;
        for (const auto& r : out.rows) var += (getter(r) - mean) * (getter(r) - mean);
        var /= static_cast<double>(out.rows.size());
        return std::make_pair(mean, var);
    };
    std::tie(out.mean_multi, out.var_multi) = moments([](const TopologyAblationRow& r) { return r.f2_multi; });
    std::tie(out.mean_single, out.var_single) =
        moments([](const TopologyAblationRow& r) { return r.f2_single; });
    return out;
}

std::string TopologyAblation::to_csv() const {
    std::ostringstream out;
    out << "held_out_topology,f2_single_task,f2_multi_task,leakage_free\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%d\n", r.topology_id, r.f2_single, r.f2_multi,
                      r.leakage_free ? 1 : 0);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "mean,%.10g,%.10g,\n", mean_single, mean_multi);
    out << buf;
    std::snprintf(buf, sizeof buf, "variance,%.10g,%.10g,\n", var_single, var_multi);
    out << buf;
    return out.str();
}

} // namespace gridmtl
