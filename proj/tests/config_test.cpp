#include <doctest.h>

#include <fstream>
#include <sstream>

#include "gridmtl/runconfig.hpp"

using namespace gridmtl;

namespace {

const std::string kFixtures = GRIDMTL_FIXTURE_DIR;

std::string smoke_text() {
    std::ifstream in(kFixtures + "/config_smoke.json");
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    auto pos = text.find("FIXTURES");
    text.replace(pos, 8, kFixtures);
    return text;
}

} // namespace

TEST_CASE("minimal config takes documented defaults") {
    RunConfig cfg = parse_run_config(R"({"grid_path": "g.json"})");
    CHECK(cfg.topologies == 1);
    CHECK(cfg.sampler.load_scale_mean == 1.0);
    CHECK(cfg.sampler.load_scale_bounds.first == 0.5);
    CHECK(cfg.sampler.pf_range.first == 0.95);
    CHECK(cfg.thresholds.tsi_min_pct == 10.0);
    CHECK(cfg.thresholds.zeta_min == 0.03);
    CHECK(cfg.thresholds.band_hz.first == 0.25);
    CHECK(cfg.thresholds.v_band_pu.second == 1.1);
    CHECK(cfg.thresholds.v_dwell_s == 0.5);
    CHECK(cfg.sim.dt_s == 1e-3);
    CHECK(cfg.sim.horizon_s == 10.0);
    CHECK(cfg.fault_start_s == 1.0);
    CHECK(cfg.clearing_time_s == 0.083);
    CHECK(cfg.model.encoder_layers == std::vector<int>{128, 64, 32});
    CHECK(cfg.train_cfg.eta0 == 1e-3);
    CHECK(cfg.train_cfg.gamma == 0.95);
    CHECK(cfg.train_cfg.k_s == 10);
    CHECK(cfg.train_cfg.batch_size == 64);
    CHECK(cfg.train_cfg.max_epochs == 200);
    CHECK(cfg.train_cfg.patience == 10);
    CHECK(cfg.train_cfg.weighting == WeightingMode::Adaptive);
}

TEST_CASE("unknown keys are rejected by name at every level") {
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"grid_path": "g", "grdi_path": 1})"),
                         doctest::Contains("grdi_path"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"grid_path": "g", "sampler": {"stddev": 0.1}})"),
                         doctest::Contains("stddev"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"grid_path": "g", "train": {"lr": 0.1}})"),
                         doctest::Contains("lr"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"grid_path": "g", "model": {"layers": [1]}})"),
                         doctest::Contains("layers"), ConfigError);
}

TEST_CASE("invalid values are config errors") {
    CHECK_THROWS_AS(parse_run_config(R"({"grid_path": "g", "topologies": 0})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"grid_path": "g", "sampler": {"load_correlation": 1.5}})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"grid_path": "g", "train": {"gamma": 0.0}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"grid_path": "g", "model": {"task_layers": [4, 2]}})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"grid_path": "g", "sim": {"horizon_s": 0.5}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("{}"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("not json"), ConfigError);
}

TEST_CASE("seed derivation pushes the global seed into nested configs") {
    RunConfig cfg = parse_run_config(R"({"grid_path": "g", "seed": 99})");
    cfg.derive_seeds();
    CHECK(cfg.sampler.seed == 99);
    CHECK(cfg.model.seed != cfg.train_cfg.seed);

    RunConfig other = parse_run_config(R"({"grid_path": "g", "seed": 100})");
    other.derive_seeds();
    CHECK(other.sampler.seed != cfg.sampler.seed);
}

TEST_CASE("echo round-trips through the parser") {
    RunConfig cfg = parse_run_config(smoke_text());
    std::string echo = cfg.echo_json();
    RunConfig back = parse_run_config(echo);
    CHECK(back.echo_json() == echo);
    CHECK(back.generation.n_per_case == cfg.generation.n_per_case);
    CHECK(back.thresholds.band_hz == cfg.thresholds.band_hz);
    CHECK(back.train_cfg.weighting == cfg.train_cfg.weighting);
}
