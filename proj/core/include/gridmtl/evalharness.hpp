#pragma once

#include <string>
#include <vector>

#include "gridmtl/metrics.hpp"
#include "gridmtl/mtl.hpp"

namespace gridmtl {

struct TaskMetrics {
    int task = 0; // absolute task id; -1 for the overall level
    Confusion confusion;
    double precision = 0.0, recall = 0.0, f2 = 0.0;
};

struct MetricsReport {
    std::vector<TaskMetrics> per_task;
    TaskMetrics overall;  // conjunction-level, positive = insecure
    double macro_f2 = 0.0; // mean of per-task F2, reported separately
    double tp_rate = 0.0, tn_rate = 0.0; // overall level

    std::string to_csv() const;
};

/// Score a model on a raw (unnormalized) dataset; the model's attached
/// statistics are applied internally.
MetricsReport evaluate(const MtlModel& model, const Dataset& test_ds);

/// Metrics from an explicit probability matrix (rows follow `tasks`).
MetricsReport score_probs(const Eigen::MatrixXd& probs, const Dataset& test_ds,
                          const std::vector<int>& tasks, double threshold);

/// Score an external prediction file (CSV: sample_id, 4 probabilities)
/// against a raw dataset, using the same conventions as evaluate().
MetricsReport score_external(const std::string& pred_csv_path, const Dataset& test_ds,
                             double threshold = 0.5);

/// Same encoder and losses, one joint decoder with a sigmoid output per
/// task instead of per-task decoders.
std::pair<MtlModel, TrainReport> train_single_task_baseline(const Dataset& train_ds,
                                                            const TrainConfig& tcfg,
                                                            const ModelConfig& mcfg);

/// Normalize a raw dataset and train; convenience used by the studies.
std::pair<MtlModel, TrainReport> train_on_raw(const Dataset& raw_train, const TrainConfig& tcfg,
                                              const ModelConfig& mcfg);

struct CategoryAblationRow {
    int excluded_task = 0;
    double f2_multi = 0.0;
    double f2_single = 0.0;
};

struct CategoryAblation {
    std::vector<CategoryAblationRow> rows; // one per excluded criterion
    std::string to_csv() const;
};

/// Train with one criterion's decoder removed; overall security is the
/// conjunction of the remaining heads against the 3-label truth.
CategoryAblation leave_one_category_out(const Dataset& raw_train, const Dataset& raw_test,
                                        const TrainConfig& tcfg, const ModelConfig& mcfg,
                                        int jobs = 1);

struct TopologyAblationRow {
    int topology_id = 0;
    double f2_multi = 0.0;
    double f2_single = 0.0;
    bool leakage_free = true; // held-out ids absent from the training set
};

struct TopologyAblation {
    std::vector<TopologyAblationRow> rows;
    double mean_multi = 0.0, var_multi = 0.0;
    double mean_single = 0.0, var_single = 0.0;
    std::string to_csv() const;
};

TopologyAblation leave_one_topology_out(const std::vector<Dataset>& per_topology,
                                        const TrainConfig& tcfg, const ModelConfig& mcfg,
                                        int jobs = 1);

Dataset concat_datasets(const std::vector<Dataset>& parts);
std::vector<Dataset> split_by_topology(const Dataset& ds);

/// Grouped bar chart of F2 scores (criteria on the x-axis, one bar group
/// per series), written as a static SVG.
void write_f2_bar_svg(const std::string& path, const std::string& title,
                      const std::vector<std::string>& criteria,
                      const std::vector<std::pair<std::string, std::vector<double>>>& series);

} // namespace gridmtl
