#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridmtl/dynamics.hpp"
#include "gridmtl/labeling.hpp"
#include "gridmtl/powerflow.hpp"

namespace gridmtl {

struct SamplerConfig {
    double load_scale_mean = 1.0;
    double load_scale_std = 1.0 / 6.0;
    std::pair<double, double> load_scale_bounds{0.5, 1.5};
    double load_correlation = 0.0; // equicorrelation in [0, 1)
    std::pair<double, double> pf_range{0.95, 1.0};
    std::uint64_t seed = 0;
};

struct LoadDraw {
    Eigen::VectorXd p, q; // per bus
    bool clamped = false; // redraw budget exhausted, values clamped to bounds
};

struct Sample {
    Eigen::VectorXd x;
    Eigen::VectorXd c;
    LabelVector y;
    int topology_id = 0;
    int contingency_id = 0;
    long sample_id = 0; // generation-order id; reassigned to row index on read
};

struct NormStats {
    Eigen::VectorXd mean, stdev;
    std::uint64_t schema_hash = 0; // layout the statistics were computed for
};

struct Dataset {
    std::vector<Sample> samples;
    std::optional<NormStats> norm_stats;
    FeatureLayout layout;
    int cond_dim = 0;
    std::uint64_t seed = 0;
    std::string config_echo; // JSON text, may be empty

    std::string schema_descriptor() const;
    std::uint64_t schema_hash() const { return fnv1a64(schema_descriptor()); }
};

struct GenerationReport {
    long draws_attempted = 0;
    long draws_discarded_nonconverged = 0;
    long draws_clamped = 0;
    long samples = 0;
    long secure_count[4] = {0, 0, 0, 0}; // per criterion
    long overall_secure_count = 0;
    std::vector<std::string> notes;
};

/// Per-bus load scaling from a truncated equicorrelated Gaussian plus a
/// uniform power-factor draw. Fully determined by (cfg.seed, draw_index).
LoadDraw sample_loads(const Network& net, const SamplerConfig& cfg, std::uint64_t draw_index);

/// One fault near each generator, cleared by tripping a line incident to
/// the faulted bus whose removal keeps the network connected.
std::vector<Contingency> make_generator_contingencies(const Network& net, double fault_start_s,
                                                      double clearing_time_s);

/// Full pipeline: sample loads, solve power flow, simulate each
/// contingency, label, assemble. Deterministic for a given seed; `jobs`
/// fans out draws with a generation-order reduction.
Dataset generate_dataset(const std::vector<Network>& nets,
                         const std::vector<std::vector<Contingency>>& contingencies,
                         int n_per_case, const SamplerConfig& cfg, const LabelThresholds& th,
                         const SimConfig& sim_cfg, GenerationReport* report = nullptr, int jobs = 1);

/// Z-score the feature columns. Without `stats`, statistics are computed
/// from the dataset and attached (training use); with `stats`, they are
/// applied (test use). Zero-variance columns map to 0 and record std 1.
Dataset normalize(const Dataset& ds, const std::optional<NormStats>& stats = std::nullopt);

/// Invert an attached normalization.
Dataset denormalize(const Dataset& ds);

struct SplitResult {
    Dataset train, test;
    std::vector<std::string> warnings;
};

/// Stratified (topology_id, overall_secure) shuffle-split.
SplitResult split(const Dataset& ds, double test_fraction, std::uint64_t seed);

void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

/// Digest of the canonical serialized form (determinism checks).
std::uint64_t dataset_digest(const Dataset& ds);

} // namespace gridmtl
