#include "gridmtl/datagen.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace gridmtl {

using Eigen::VectorXd;
using nlohmann::json;

namespace {

std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

/// Run fn(0..n-1) on `jobs` threads; callers own result ordering.
void parallel_cases(int n, int jobs, const std::function<void(int)>& fn) {
    if (jobs <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    auto worker = [&] {
        for (int i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

void append_double(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

std::string serialize_rows(const Dataset& ds) {
    std::string rows;
    rows.reserve(ds.samples.size() * 64);
    for (const auto& s : ds.samples) {
        for (Eigen::Index i = 0; i < s.x.size(); ++i) {
            append_double(rows, s.x[i]);
            rows += ',';
        }
        for (Eigen::Index i = 0; i < s.c.size(); ++i) {
            append_double(rows, s.c[i]);
            rows += ',';
        }
        int bits[4] = {s.y.static_ok, s.y.small_signal_ok, s.y.voltage_ok, s.y.transient_ok};
        for (int b : bits) {
            rows += std::to_string(b);
            rows += ',';
        }
        for (int b : bits) { // per-criterion one-hot: [secure, insecure]
            rows += std::to_string(b);
            rows += ',';
            rows += std::to_string(1 - b);
            rows += ',';
        }
        rows += std::to_string(s.topology_id);
        rows += ',';
        rows += std::to_string(s.contingency_id);
        rows += '\n';
    }
    return rows;
}

json header_json(const Dataset& ds, const std::string& rows) {
    json h;
    h["schema_version"] = 1;
    h["schema_hash"] = to_hex(ds.schema_hash());
    h["layout"] = json::parse(ds.layout.descriptor());
    h["cond_dim"] = ds.cond_dim;
    if (ds.norm_stats) {
        json ns;
        ns["mean"] = std::vector<double>(ds.norm_stats->mean.begin(), ds.norm_stats->mean.end());
        ns["std"] = std::vector<double>(ds.norm_stats->stdev.begin(), ds.norm_stats->stdev.end());
        h["norm_stats"] = ns;
    } else {
        h["norm_stats"] = nullptr;
    }
    h["counts"] = json{{"samples", ds.samples.size()},
                       {"x_dim", ds.layout.total()},
                       {"c_dim", ds.cond_dim}};
    h["seed"] = ds.seed;
    h["config_echo"] = ds.config_echo.empty() ? json(nullptr) : json::parse(ds.config_echo);
    h["payload_fnv"] = to_hex(fnv1a64(rows));
    return h;
}

} // namespace

std::string Dataset::schema_descriptor() const {
    json j;
    j["feature"] = json::parse(layout.descriptor());
    j["cond_dim"] = cond_dim;
    return j.dump();
}

LoadDraw sample_loads(const Network& net, const SamplerConfig& cfg, std::uint64_t draw_index) {
    const auto nb = static_cast<Eigen::Index>(net.n_buses());
    auto rng = seeded_rng(cfg.seed, draw_index);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> pf_dist(cfg.pf_range.first, cfg.pf_range.second);

    LoadDraw draw;
    VectorXd scale(nb);
    const auto [lo, hi] = cfg.load_scale_bounds;
    if (cfg.load_scale_std == 0.0) {
        scale.setConstant(cfg.load_scale_mean);
    } else {
        const double rho = cfg.load_correlation;
        bool ok = false;
        for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
            double common = gauss(rng);
            for (Eigen::Index b = 0; b < nb; ++b) {
                double own = gauss(rng);
                scale[b] = cfg.load_scale_mean +
                           cfg.load_scale_std * (std::sqrt(rho) * common + std::sqrt(1.0 - rho) * own);
            }
            ok = (scale.array() >= lo).all() && (scale.array() <= hi).all();
        }
        if (!ok) {
            scale = scale.cwiseMax(lo).cwiseMin(hi);
            draw.clamped = true;
        }
    }

    draw.p.resize(nb);
    draw.q.resize(nb);
    for (Eigen::Index b = 0; b < nb; ++b) {
        draw.p[b] = scale[b] * net.buses[b].load_p_nominal;
        double pf = pf_dist(rng);
        draw.q[b] = draw.p[b] * std::tan(std::acos(pf));
    }
    return draw;
}

std::vector<Contingency> make_generator_contingencies(const Network& net, double fault_start_s,
                                                      double clearing_time_s) {
    auto lines_at = [&](int bus_id) {
        std::vector<const Line*> out;
        for (const auto& l : net.lines)
            if (l.in_service && (l.from_bus == bus_id || l.to_bus == bus_id)) out.push_back(&l);
        return out;
    };

    std::vector<Contingency> conts;
    std::vector<std::pair<int, int>> seen;
    for (const auto& g : net.generators) {
        auto incident = lines_at(g.bus);
        if (incident.empty()) continue;
        int fault_bus = g.bus;
        if (incident.size() == 1)
            fault_bus = incident[0]->from_bus == g.bus ? incident[0]->to_bus : incident[0]->from_bus;

        int tripped = -1;
        for (const Line* l : lines_at(fault_bus)) {
            Network probe = net;
            probe.lines[net.line_index(l->id)].in_service = false;
            if (probe.connected()) {
                tripped = l->id;
                break;
            }
        }
        if (tripped < 0) continue;
        if (std::find(seen.begin(), seen.end(), std::make_pair(fault_bus, tripped)) != seen.end()) continue;
        seen.emplace_back(fault_bus, tripped);
        conts.push_back(Contingency{fault_bus, fault_start_s, clearing_time_s, tripped});
    }
    return conts;
}

Dataset generate_dataset(const std::vector<Network>& nets,
                         const std::vector<std::vector<Contingency>>& contingencies, int n_per_case,
                         const SamplerConfig& cfg, const LabelThresholds& th, const SimConfig& sim_cfg,
                         GenerationReport* report, int jobs) {
    if (nets.empty()) throw ValidationError("no topologies given");
    if (contingencies.size() != nets.size())
        throw ValidationError("contingency list count does not match topology count");
    if (n_per_case < 1) throw ValidationError("n_per_case must be >= 1");

    Dataset ds;
    ds.layout = make_feature_layout(nets[0]);
    ds.cond_dim = static_cast<int>(nets[0].n_lines() + nets[0].n_buses());
    ds.seed = cfg.seed;
    const std::uint64_t layout_hash = ds.layout.hash();
    for (const auto& net : nets)
        if (make_feature_layout(net).hash() != layout_hash)
            throw ValidationError("topologies do not share one feature layout");

    struct CaseResult {
        std::vector<Sample> samples;
        bool discarded = false;
        bool clamped = false;
    };
    const int t_count = static_cast<int>(nets.size());
    const int n_cases = t_count * n_per_case;
    std::vector<CaseResult> results(n_cases);

    parallel_cases(n_cases, jobs, [&](int case_idx) {
        const int ti = case_idx / n_per_case;
        const Network& net = nets[ti];
        CaseResult& res = results[case_idx];

        LoadDraw draw = sample_loads(net, cfg, static_cast<std::uint64_t>(case_idx));
        res.clamped = draw.clamped;
        PowerFlowSolution sol = solve_power_flow(net, draw.p, draw.q);
        if (!sol.converged) {
            res.discarded = true;
            return;
        }

        DynamicInit init = initialize_dynamics(net, sol);
        auto modes = eigenvalues(linearize(init));
        FeatureVector fv = build_feature_vector(net, sol, draw.p, draw.q);

        Eigen::VectorXd s_max(net.n_lines());
        for (std::size_t li = 0; li < net.n_lines(); ++li)
            s_max[static_cast<Eigen::Index>(li)] = net.lines[li].rating_s_max;

        const auto& conts = contingencies[ti];
        for (std::size_t ci = 0; ci < conts.size(); ++ci) {
            Trajectory traj = simulate(init, conts[ci], sim_cfg);
            LineFlowSummary flows{traj.line_s_mean, s_max};
            Sample s;
            s.x = fv.values;
            s.c = build_condition_vector(net, conts[ci]).values;
            s.y = label_all(traj, modes, flows, th);
            s.topology_id = net.topology_id;
            s.contingency_id = static_cast<int>(ci);
            res.samples.push_back(std::move(s));
        }
    });

    GenerationReport rep;
    for (auto& res : results) {
        ++rep.draws_attempted;
        if (res.discarded) ++rep.draws_discarded_nonconverged;
        if (res.clamped) ++rep.draws_clamped;
        for (auto& s : res.samples) {
            s.sample_id = rep.samples++;
            for (int t = 0; t < 4; ++t) rep.secure_count[t] += s.y.bit(t);
            rep.overall_secure_count += s.y.overall_secure() ? 1 : 0;
            ds.samples.push_back(std::move(s));
        }
    }
    if (report) *report = rep;
    return ds;
}

Dataset normalize(const Dataset& ds, const std::optional<NormStats>& stats) {
    if (ds.norm_stats) throw ValidationError("dataset is already normalized");
    if (ds.samples.empty()) throw ValidationError("cannot normalize an empty dataset");
    const Eigen::Index m = ds.samples.front().x.size();

    NormStats ns;
    if (stats) {
        if (stats->schema_hash != 0 && stats->schema_hash != ds.schema_hash())
            throw SchemaError("normalization statistics were computed for a different layout");
        if (stats->mean.size() != m || stats->stdev.size() != m)
            throw SchemaError("normalization statistics dimension mismatch");
        ns = *stats;
    } else {
        ns.mean = VectorXd::Zero(m);
        ns.stdev = VectorXd::Zero(m);
        for (const auto& s : ds.samples) ns.mean += s.x;
        ns.mean /= static_cast<double>(ds.samples.size());
        for (const auto& s : ds.samples) ns.stdev += (s.x - ns.mean).cwiseAbs2();
        ns.stdev = (ns.stdev / static_cast<double>(ds.samples.size())).cwiseSqrt();
        for (Eigen::Index i = 0; i < m; ++i)
            if (ns.stdev[i] < 1e-12) ns.stdev[i] = 1.0;
        ns.schema_hash = ds.schema_hash();
    }

    Dataset out = ds;
    for (auto& s : out.samples) s.x = (s.x - ns.mean).cwiseQuotient(ns.stdev);
    out.norm_stats = ns;
    return out;
}

Dataset denormalize(const Dataset& ds) {
    if (!ds.norm_stats) throw ValidationError("dataset is not normalized");
    Dataset out = ds;
    for (auto& s : out.samples) s.x = s.x.cwiseProduct(ds.norm_stats->stdev) + ds.norm_stats->mean;
    out.norm_stats.reset();
    return out;
}

SplitResult split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw ValidationError("test fraction must lie in (0, 1)");

    std::map<std::pair<int, int>, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        strata[{s.topology_id, s.y.overall_secure() ? 1 : 0}].push_back(i);
    }

    SplitResult out;
    out.train = ds;
    out.test = ds;
    out.train.samples.clear();
    out.test.samples.clear();

    auto rng = seeded_rng(seed, 0x5711f5eedULL);
    for (auto& [key, idx] : strata) {
        std::shuffle(idx.begin(), idx.end(), rng);
        if (idx.size() < 2) {
            out.warnings.push_back("stratum (topology " + std::to_string(key.first) + ", secure " +
                                   std::to_string(key.second) + ") has fewer than 2 samples; kept in train");
            for (auto i : idx) out.train.samples.push_back(ds.samples[i]);
            continue;
        }
        auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(idx.size())));
        n_test = std::min(std::max<std::size_t>(n_test, 1), idx.size() - 1);
        for (std::size_t k = 0; k < idx.size(); ++k)
            (k < n_test ? out.test : out.train).samples.push_back(ds.samples[idx[k]]);
    }
    return out;
}

void write_dataset(const Dataset& ds, const std::string& path) {
    std::string rows = serialize_rows(ds);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open dataset file for writing: " + path);
    out << header_json(ds, rows).dump() << "\n" << rows;
    if (!out) throw Error("short write to dataset file: " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open dataset file: " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw ParseError("dataset file is empty: " + path);

    json h;
    try {
        h = json::parse(header_line);
    } catch (const json::exception& e) {
        throw ParseError(std::string("dataset header parse failure: ") + e.what());
    }
    if (h.value("schema_version", -1) != 1)
        throw SchemaError("unsupported dataset schema_version");

    Dataset ds;
    ds.layout = FeatureLayout::from_descriptor(h.at("layout").dump());
    ds.cond_dim = h.at("cond_dim").get<int>();
    ds.seed = h.at("seed").get<std::uint64_t>();
    if (!h.at("config_echo").is_null()) ds.config_echo = h.at("config_echo").dump();
    if (!h.at("norm_stats").is_null()) {
        NormStats ns;
        auto mean = h.at("norm_stats").at("mean").get<std::vector<double>>();
        auto stdev = h.at("norm_stats").at("std").get<std::vector<double>>();
        ns.mean = Eigen::Map<VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        ns.stdev = Eigen::Map<VectorXd>(stdev.data(), static_cast<Eigen::Index>(stdev.size()));
        ns.schema_hash = ds.schema_hash();
        ds.norm_stats = ns;
    }
    if (h.at("schema_hash").get<std::string>() != to_hex(ds.schema_hash()))
        throw SchemaError("dataset schema_hash does not match its layout descriptor");

    const auto n = h.at("counts").at("samples").get<std::size_t>();
    const auto m = static_cast<Eigen::Index>(h.at("counts").at("x_dim").get<int>());
    const auto k = static_cast<Eigen::Index>(h.at("counts").at("c_dim").get<int>());

    std::ostringstream payload;
    payload << in.rdbuf();
    const std::string rows = payload.str();
    if (to_hex(fnv1a64(rows)) != h.at("payload_fnv").get<std::string>())
        throw Error("dataset payload digest mismatch (file corrupt or truncated): " + path);

    std::istringstream lines(rows);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        Sample s;
        s.x.resize(m);
        s.c.resize(k);
        const char* p = line.c_str();
        char* end = nullptr;
        auto next = [&]() {
            double v = std::strtod(p, &end);
            if (end == p) throw ParseError("malformed dataset row: " + line);
            p = (*end == ',') ? end + 1 : end;
            return v;
        };
        for (Eigen::Index i = 0; i < m; ++i) s.x[i] = next();
        for (Eigen::Index i = 0; i < k; ++i) s.c[i] = next();
        s.y.static_ok = static_cast<int>(next());
        s.y.small_signal_ok = static_cast<int>(next());
        s.y.voltage_ok = static_cast<int>(next());
        s.y.transient_ok = static_cast<int>(next());
        for (int i = 0; i < 8; ++i) next(); // one-hot expansion is derived, not stored state
        s.topology_id = static_cast<int>(next());
        s.contingency_id = static_cast<int>(next());
        s.sample_id = static_cast<long>(ds.samples.size());
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.size() != n)
        throw Error("dataset row count mismatch (file corrupt or truncated): " + path);
    return ds;
}

std::uint64_t dataset_digest(const Dataset& ds) {
    std::string rows = serialize_rows(ds);
    return fnv1a64(header_json(ds, rows).dump() + "\n" + rows);
}

} // namespace gridmtl
