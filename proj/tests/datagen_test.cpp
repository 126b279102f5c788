#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "gridmtl/datagen.hpp"

using namespace gridmtl;
using Eigen::VectorXd;

namespace {

const std::string kFixtures = GRIDMTL_FIXTURE_DIR;

Dataset small_dataset(int n_per_case = 8, std::uint64_t seed = 11, int topologies = 1) {
    Network base = load_network(kFixtures + "/grid_3bus.json");
    auto nets = enumerate_topologies(base, topologies);
    SamplerConfig cfg;
    cfg.seed = seed;
    cfg.load_scale_std = 0.12;
    LabelThresholds th;
    th.band_hz = {0.1, 2.5};
    SimConfig sim{1e-3, 1.2};
    std::vector<std::vector<Contingency>> conts;
    for (const auto& net : nets) conts.push_back(make_generator_contingencies(net, 0.1, 0.05));
    return generate_dataset(nets, conts, n_per_case, cfg, th, sim, nullptr, 1);
}

} // namespace

TEST_CASE("degenerate sampler returns exact nominals with power-factor reactive") {
    Network net = load_network(kFixtures + "/wscc9.json");
    SamplerConfig cfg;
    cfg.load_scale_std = 0.0;
    cfg.seed = 5;
    LoadDraw draw = sample_loads(net, cfg, 0);
    for (std::size_t b = 0; b < net.n_buses(); ++b) {
        auto i = static_cast<Eigen::Index>(b);
        CHECK(draw.p[i] == net.buses[b].load_p_nominal);
        if (draw.p[i] > 0) {
            double ratio = draw.q[i] / draw.p[i];
            CHECK(ratio >= 0.0);
            CHECK(ratio <= std::tan(std::acos(0.95)) + 1e-12);
        } else {
            CHECK(draw.q[i] == 0.0);
        }
    }
    CHECK_FALSE(draw.clamped);
}

TEST_CASE("sampled scales respect the envelope and power-factor band") {
    Network net = load_network(kFixtures + "/wscc9.json");
    SamplerConfig cfg;
    cfg.load_scale_std = 0.25; // wide, to exercise the redraw path
    cfg.load_correlation = 0.3;
    cfg.seed = 99;
    const double qp_max = std::tan(std::acos(0.95));
    for (std::uint64_t k = 0; k < 200; ++k) {
        LoadDraw draw = sample_loads(net, cfg, k);
        for (std::size_t b = 0; b < net.n_buses(); ++b) {
            auto i = static_cast<Eigen::Index>(b);
            double nominal = net.buses[b].load_p_nominal;
            if (nominal > 0) {
                CHECK(draw.p[i] >= 0.5 * nominal - 1e-12);
                CHECK(draw.p[i] <= 1.5 * nominal + 1e-12);
                CHECK(draw.q[i] / draw.p[i] <= qp_max + 1e-12);
                CHECK(draw.q[i] >= 0.0);
            }
        }
    }
}

TEST_CASE("draws are a pure function of (seed, draw_index)") {
    Network net = load_network(kFixtures + "/wscc9.json");
    SamplerConfig cfg;
    cfg.seed = 123;
    LoadDraw a = sample_loads(net, cfg, 7);
    LoadDraw b = sample_loads(net, cfg, 7);
    LoadDraw c = sample_loads(net, cfg, 8);
    CHECK(a.p == b.p);
    CHECK(a.q == b.q);
    CHECK(a.p != c.p);
}

TEST_CASE("generator contingencies are adjacent faults with survivable trips") {
    Network net = load_network(kFixtures + "/wscc9.json");
    auto conts = make_generator_contingencies(net, 1.0, 0.083);
    CHECK(conts.size() == net.n_generators());
    for (const auto& c : conts) {
        const Line& l = net.lines[net.line_index(c.tripped_line)];
        CHECK((l.from_bus == c.fault_bus || l.to_bus == c.fault_bus));
        Network probe = net;
        probe.lines[net.line_index(c.tripped_line)].in_service = false;
        CHECK(probe.connected());
    }
}

TEST_CASE("generation counts and determinism") {
    GenerationReport rep;
    Network base = load_network(kFixtures + "/grid_3bus.json");
    auto nets = enumerate_topologies(base, 1);
    auto conts = std::vector<std::vector<Contingency>>{make_generator_contingencies(nets[0], 0.1, 0.05)};
    REQUIRE(conts[0].size() >= 1);
    std::vector<std::vector<Contingency>> single{{conts[0][0]}};

    SamplerConfig cfg;
    cfg.seed = 4;
    cfg.load_scale_std = 0.1;
    LabelThresholds th;
    SimConfig sim{1e-3, 1.2};
    Dataset ds = generate_dataset(nets, single, 10, cfg, th, sim, &rep, 1);
    CHECK(ds.samples.size() == 10);
    CHECK(rep.draws_attempted == 10);
    CHECK(rep.draws_discarded_nonconverged == 0);

    Dataset again = generate_dataset(nets, single, 10, cfg, th, sim, nullptr, 1);
    CHECK(dataset_digest(ds) == dataset_digest(again));

    SUBCASE("parallel fan-out preserves the generation order") {
        Dataset par = generate_dataset(nets, single, 10, cfg, th, sim, nullptr, 4);
        CHECK(dataset_digest(par) == dataset_digest(ds));
    }
}

TEST_CASE("dataset round-trips losslessly and detects corruption") {
    Dataset ds = small_dataset();
    REQUIRE(!ds.samples.empty());
    const std::string path = "datagen_roundtrip.ds";
    write_dataset(ds, path);
    Dataset back = read_dataset(path);

    REQUIRE(back.samples.size() == ds.samples.size());
    CHECK(back.schema_hash() == ds.schema_hash());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(back.samples[i].x == ds.samples[i].x);
        CHECK(back.samples[i].c == ds.samples[i].c);
        CHECK(back.samples[i].y.bit(0) == ds.samples[i].y.bit(0));
        CHECK(back.samples[i].y.bit(3) == ds.samples[i].y.bit(3));
        CHECK(back.samples[i].topology_id == ds.samples[i].topology_id);
        CHECK(back.samples[i].contingency_id == ds.samples[i].contingency_id);
    }
    CHECK(dataset_digest(back) == dataset_digest(ds));

    SUBCASE("truncation is a corruption error, not partial data") {
        std::ifstream in(path, std::ios::binary);
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        std::ofstream out(path, std::ios::binary);
        out << content.substr(0, content.size() - 40);
        out.close();
        CHECK_THROWS_AS(read_dataset(path), Error);
    }
    std::remove(path.c_str());
}

TEST_CASE("normalization is a z-score with zero-variance and schema guards") {
    Dataset ds = small_dataset(12);
    Dataset norm = normalize(ds);
    REQUIRE(norm.norm_stats.has_value());

    const Eigen::Index m = ds.samples.front().x.size();
    const auto n = static_cast<double>(ds.samples.size());
    for (Eigen::Index col = 0; col < m; ++col) {
        double mean = 0, var = 0;
        for (const auto& s : norm.samples) mean += s.x[col];
        mean /= n;
        for (const auto& s : norm.samples) var += (s.x[col] - mean) * (s.x[col] - mean);
        var /= n;
        CHECK(std::abs(mean) < 1e-9);
        bool constant_col = norm.norm_stats->stdev[col] == 1.0 && var == 0.0;
        if (!constant_col) CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
    }

    SUBCASE("constant columns map to zero") {
        // condition-free draws share gen_q at zero-load buses rarely; force one
        Dataset forced = ds;
        for (auto& s : forced.samples) s.x[0] = 42.0;
        Dataset fnorm = normalize(forced);
        for (const auto& s : fnorm.samples) CHECK(s.x[0] == 0.0);
        CHECK(fnorm.norm_stats->stdev[0] == 1.0);
    }
    SUBCASE("train-stats application inverts exactly") {
        Dataset test = small_dataset(6, 77);
        Dataset applied = normalize(test, norm.norm_stats);
        Dataset restored = denormalize(applied);
        for (std::size_t i = 0; i < test.samples.size(); ++i)
            CHECK((restored.samples[i].x - test.samples[i].x).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("mismatched schema hash is refused") {
        NormStats bad = *norm.norm_stats;
        bad.schema_hash = 0xdeadbeef;
        CHECK_THROWS_AS(normalize(ds, bad), SchemaError);
    }
    SUBCASE("double normalization is refused") {
        CHECK_THROWS_AS(normalize(norm), ValidationError);
    }
}

TEST_CASE("stratified split partitions without leakage") {
    Dataset ds = small_dataset(30, 21, 3); // 3 topologies
    auto res = split(ds, 0.2, 9);

    CHECK(res.train.samples.size() + res.test.samples.size() == ds.samples.size());

    std::multiset<long> all_in, all_out;
    std::set<long> train_ids, test_ids;
    for (const auto& s : ds.samples) all_in.insert(s.sample_id);
    for (const auto& s : res.train.samples) {
        all_out.insert(s.sample_id);
        train_ids.insert(s.sample_id);
    }
    for (const auto& s : res.test.samples) {
        all_out.insert(s.sample_id);
        test_ids.insert(s.sample_id);
    }
    CHECK(all_in == all_out); // union equals the input as a multiset
    for (long id : test_ids) CHECK(train_ids.count(id) == 0);

    SUBCASE("topologies with enough samples appear on both sides") {
        std::map<int, int> counts;
        for (const auto& s : ds.samples) counts[s.topology_id]++;
        for (const auto& [topo, count] : counts) {
            if (count < 5) continue;
            int in_train = 0, in_test = 0;
            for (const auto& s : res.train.samples) in_train += s.topology_id == topo;
            for (const auto& s : res.test.samples) in_test += s.topology_id == topo;
            CHECK(in_train > 0);
            CHECK(in_test > 0);
        }
    }
    SUBCASE("fraction lands within per-stratum rounding") {
        double frac = static_cast<double>(res.test.samples.size()) / static_cast<double>(ds.samples.size());
        CHECK(frac > 0.1);
        CHECK(frac < 0.35);
    }
    SUBCASE("split is deterministic in the seed") {
        auto res2 = split(ds, 0.2, 9);
        CHECK(dataset_digest(res2.train) == dataset_digest(res.train));
        auto res3 = split(ds, 0.2, 10);
        CHECK(dataset_digest(res3.train) != dataset_digest(res.train));
    }
}

TEST_CASE("regenerated labels match stored labels") {
    // Rebuild the physics for one stored sample and compare bits.
    Network base = load_network(kFixtures + "/grid_3bus.json");
    auto nets = enumerate_topologies(base, 1);
    auto conts = std::vector<std::vector<Contingency>>{make_generator_contingencies(nets[0], 0.1, 0.05)};
    SamplerConfig cfg;
    cfg.seed = 11;
    cfg.load_scale_std = 0.12;
    LabelThresholds th;
    th.band_hz = {0.1, 2.5};
    SimConfig sim{1e-3, 1.2};
    Dataset ds = generate_dataset(nets, conts, 3, cfg, th, sim, nullptr, 1);

    const Sample& s0 = ds.samples.front();
    LoadDraw draw = sample_loads(nets[0], cfg, 0);
    auto sol = solve_power_flow(nets[0], draw.p, draw.q);
    REQUIRE(sol.converged);
    DynamicInit init = initialize_dynamics(nets[0], sol);
    auto modes = eigenvalues(linearize(init));
    Trajectory traj = simulate(init, conts[0][static_cast<std::size_t>(s0.contingency_id)], sim);
    VectorXd s_max(nets[0].n_lines());
    for (std::size_t li = 0; li < nets[0].n_lines(); ++li)
        s_max[static_cast<Eigen::Index>(li)] = nets[0].lines[li].rating_s_max;
    LabelVector y = label_all(traj, modes, LineFlowSummary{traj.line_s_mean, s_max}, th);
    for (int t = 0; t < 4; ++t) CHECK(y.bit(t) == s0.y.bit(t));
}
