#pragma once

#include <cstdint>
#include <string>

#include "gridmtl/datagen.hpp"
#include "gridmtl/mtl.hpp"

namespace gridmtl {

struct GenerationConfig {
    int n_per_case = 100;      // operating-point draws per topology
    double test_fraction = 0.2;
};

/// One strict JSON file drives the whole pipeline; unknown keys are
/// rejected and the parsed config is echoed into every output artifact.
struct RunConfig {
    std::string grid_path;
    int topologies = 1;
    std::string contingency_policy = "near_generators";
    SamplerConfig sampler;
    LabelThresholds thresholds;
    SimConfig sim;
    double fault_start_s = 1.0;
    double clearing_time_s = 0.083;
    ModelConfig model;
    TrainConfig train_cfg;
    GenerationConfig generation;
    std::string output_dir = "out";
    std::uint64_t seed = 0;

    /// Push the global seed into the nested configs (env override happens
    /// before this).
    void derive_seeds();

    /// Canonical echo with all defaults materialized.
    std::string echo_json() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

} // namespace gridmtl
