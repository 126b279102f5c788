#include "gridmtl/grid.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace gridmtl {

using nlohmann::json;

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file for digest: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

namespace {

int find_sorted(const std::vector<int>& ids, int id) {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return -1;
    return static_cast<int>(it - ids.begin());
}

Complex complex_from_json(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("re") || !j.contains("im"))
        throw ParseError("expected {\"re\":..,\"im\":..} for " + where);
    for (auto& [k, v] : j.items()) {
        (void)v;
        if (k != "re" && k != "im") throw ParseError("unknown key '" + k + "' in complex value " + where);
    }
    return {j.at("re").get<double>(), j.at("im").get<double>()};
}

json complex_to_json(const Complex& z) {
    return json{{"re", z.real()}, {"im", z.imag()}};
}

void require_keys(const json& j, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional, const std::string& where) {
    for (const char* k : required)
        if (!j.contains(k)) throw ParseError(where + ": missing key '" + std::string(k) + "'");
    for (auto& [k, v] : j.items()) {
        (void)v;
        bool known = false;
        for (const char* r : required)
            if (k == r) { known = true; break; }
        for (const char* o : optional)
            if (k == o) { known = true; break; }
        if (!known) throw ParseError(where + ": unknown key '" + k + "'");
    }
}

void validate(const Network& net) {
    if (net.buses.empty()) throw ValidationError("network has no buses");
    if (net.base_mva <= 0) throw ValidationError("base_mva must be positive");

    int slack_count = 0;
    std::unordered_set<int> bus_ids;
    for (const auto& b : net.buses) {
        if (!bus_ids.insert(b.id).second)
            throw ValidationError("duplicate bus id " + std::to_string(b.id));
        if (b.kind == BusKind::Slack) ++slack_count;
        if (b.kind == BusKind::PQ && (b.load_p_nominal < 0 || b.load_q_nominal < 0))
            throw ValidationError("negative nominal load on PQ bus " + std::to_string(b.id));
        if (b.base_voltage_pu <= 0)
            throw ValidationError("non-positive base voltage on bus " + std::to_string(b.id));
    }
    if (slack_count == 0) throw ValidationError("no slack bus");
    if (slack_count > 1) throw ValidationError("multiple slack buses");

    std::unordered_set<int> line_ids;
    for (const auto& l : net.lines) {
        if (!line_ids.insert(l.id).second)
            throw ValidationError("duplicate line id " + std::to_string(l.id));
        if (!bus_ids.count(l.from_bus) || !bus_ids.count(l.to_bus))
            throw ValidationError("line " + std::to_string(l.id) + " references unknown bus");
        if (l.from_bus == l.to_bus)
            throw ValidationError("line " + std::to_string(l.id) + " connects a bus to itself");
        if (l.series_impedance.real() < 0)
            throw ValidationError("line " + std::to_string(l.id) + " has negative resistance");
        if (std::abs(l.series_impedance) == 0.0)
            throw ValidationError("line " + std::to_string(l.id) + " has zero impedance");
        if (l.rating_s_max <= 0)
            throw ValidationError("line " + std::to_string(l.id) + " has non-positive rating");
    }

    std::unordered_set<int> gen_ids;
    std::unordered_map<int, double> vset_at_bus;
    for (const auto& g : net.generators) {
        if (!gen_ids.insert(g.id).second)
            throw ValidationError("duplicate generator id " + std::to_string(g.id));
        if (!bus_ids.count(g.bus))
            throw ValidationError("generator " + std::to_string(g.id) + " references unknown bus");
        if (g.inertia_h <= 0)
            throw ValidationError("generator " + std::to_string(g.id) + " has non-positive inertia");
        if (g.transient_reactance_xd <= 0)
            throw ValidationError("generator " + std::to_string(g.id) + " has non-positive transient reactance");
        if (g.damping_d < 0)
            throw ValidationError("generator " + std::to_string(g.id) + " has negative damping");
        if (g.p_set < 0 || g.p_set > g.p_max)
            throw ValidationError("generator " + std::to_string(g.id) + " dispatch outside [0, p_max]");
        auto [it, fresh] = vset_at_bus.emplace(g.bus, g.v_set);
        if (!fresh && it->second != g.v_set)
            throw ValidationError("conflicting voltage setpoints at bus " + std::to_string(g.bus));
    }

    // PV and slack buses need a voltage source; PQ buses must not host one.
    std::unordered_set<int> gen_buses;
    for (const auto& g : net.generators) gen_buses.insert(g.bus);
    for (const auto& b : net.buses) {
        if ((b.kind == BusKind::PV || b.kind == BusKind::Slack) && !gen_buses.count(b.id))
            throw ValidationError("bus " + std::to_string(b.id) + " is PV/slack but has no generator");
        if (b.kind == BusKind::PQ && gen_buses.count(b.id))
            throw ValidationError("generator placed on PQ bus " + std::to_string(b.id));
    }

    if (!net.connected()) throw ValidationError("in-service line graph is not connected");
}

void sort_elements(Network& net) {
    std::sort(net.buses.begin(), net.buses.end(), [](auto& a, auto& b) { return a.id < b.id; });
    std::sort(net.lines.begin(), net.lines.end(), [](auto& a, auto& b) { return a.id < b.id; });
    std::sort(net.generators.begin(), net.generators.end(), [](auto& a, auto& b) { return a.id < b.id; });
}

} // namespace

int Network::bus_index(int bus_id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == bus_id) return static_cast<int>(i);
    throw ValidationError("unknown bus id " + std::to_string(bus_id));
}

int Network::line_index(int line_id) const {
    for (std::size_t i = 0; i < lines.size(); ++i)
        if (lines[i].id == line_id) return static_cast<int>(i);
    throw ValidationError("unknown line id " + std::to_string(line_id));
}

int Network::gen_index(int gen_id) const {
    for (std::size_t i = 0; i < generators.size(); ++i)
        if (generators[i].id == gen_id) return static_cast<int>(i);
    throw ValidationError("unknown generator id " + std::to_string(gen_id));
}

int Network::slack_index() const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].kind == BusKind::Slack) return static_cast<int>(i);
    throw ValidationError("no slack bus");
}

bool Network::connected() const {
    if (buses.empty()) return false;
    std::unordered_map<int, std::vector<int>> adj;
    for (const auto& l : lines)
        if (l.in_service) {
            adj[l.from_bus].push_back(l.to_bus);
            adj[l.to_bus].push_back(l.from_bus);
        }
    std::unordered_set<int> seen;
    std::queue<int> q;
    q.push(buses.front().id);
    seen.insert(buses.front().id);
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : adj[u])
            if (seen.insert(v).second) q.push(v);
    }
    return seen.size() == buses.size();
}

Network parse_network(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("grid JSON parse failure: ") + e.what());
    }
    require_keys(j, {"schema_version", "base_mva", "buses", "lines", "generators"}, {"topology_id"}, "grid file");
    if (j.at("schema_version").get<int>() != 1)
        throw ParseError("unsupported grid schema_version (expected 1)");

    Network net;
    net.base_mva = j.at("base_mva").get<double>();
    net.topology_id = j.value("topology_id", 0);

    try {
        for (const auto& jb : j.at("buses")) {
            require_keys(jb,
                         {"id", "kind", "base_voltage_pu", "load_p_nominal", "load_q_nominal", "shunt_admittance"},
                         {}, "bus");
            Bus b;
            b.id = jb.at("id").get<int>();
            std::string kind = jb.at("kind").get<std::string>();
            if (kind == "slack") b.kind = BusKind::Slack;
            else if (kind == "PV") b.kind = BusKind::PV;
            else if (kind == "PQ") b.kind = BusKind::PQ;
            else throw ParseError("bus " + std::to_string(b.id) + ": unknown kind '" + kind + "'");
            b.base_voltage_pu = jb.at("base_voltage_pu").get<double>();
            b.load_p_nominal = jb.at("load_p_nominal").get<double>();
            b.load_q_nominal = jb.at("load_q_nominal").get<double>();
            b.shunt_admittance = complex_from_json(jb.at("shunt_admittance"), "bus shunt");
            net.buses.push_back(b);
        }
        for (const auto& jl : j.at("lines")) {
            require_keys(jl,
                         {"id", "from_bus", "to_bus", "series_impedance", "charging_susceptance", "rating_s_max"},
                         {}, "line");
            Line l;
            l.id = jl.at("id").get<int>();
            l.from_bus = jl.at("from_bus").get<int>();
            l.to_bus = jl.at("to_bus").get<int>();
            l.series_impedance = complex_from_json(jl.at("series_impedance"), "line impedance");
            l.charging_susceptance = jl.at("charging_susceptance").get<double>();
            l.rating_s_max = jl.at("rating_s_max").get<double>();
            net.lines.push_back(l);
        }
        for (const auto& jg : j.at("generators")) {
            require_keys(jg,
                         {"id", "bus", "p_set", "v_set", "inertia_h", "damping_d", "transient_reactance_xd", "p_max"},
                         {}, "generator");
            Generator g;
            g.id = jg.at("id").get<int>();
            g.bus = jg.at("bus").get<int>();
            g.p_set = jg.at("p_set").get<double>();
            g.v_set = jg.at("v_set").get<double>();
            g.inertia_h = jg.at("inertia_h").get<double>();
            g.damping_d = jg.at("damping_d").get<double>();
            g.transient_reactance_xd = jg.at("transient_reactance_xd").get<double>();
            g.p_max = jg.at("p_max").get<double>();
            net.generators.push_back(g);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("grid JSON field error: ") + e.what());
    }

    sort_elements(net);
    validate(net);
    return net;
}

Network load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open grid file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_network(ss.str());
}

std::string to_json(const Network& net) {
    json j;
    j["schema_version"] = 1;
    j["base_mva"] = net.base_mva;
    j["topology_id"] = net.topology_id;
    j["buses"] = json::array();
    for (const auto& b : net.buses) {
        const char* kind = b.kind == BusKind::Slack ? "slack" : (b.kind == BusKind::PV ? "PV" : "PQ");
        j["buses"].push_back(json{{"id", b.id},
                                  {"kind", kind},
                                  {"base_voltage_pu", b.base_voltage_pu},
                                  {"load_p_nominal", b.load_p_nominal},
                                  {"load_q_nominal", b.load_q_nominal},
                                  {"shunt_admittance", complex_to_json(b.shunt_admittance)}});
    }
    j["lines"] = json::array();
    for (const auto& l : net.lines) {
        if (!l.in_service) continue;
        j["lines"].push_back(json{{"id", l.id},
                                  {"from_bus", l.from_bus},
                                  {"to_bus", l.to_bus},
                                  {"series_impedance", complex_to_json(l.series_impedance)},
                                  {"charging_susceptance", l.charging_susceptance},
                                  {"rating_s_max", l.rating_s_max}});
    }
    j["generators"] = json::array();
    for (const auto& g : net.generators) {
        j["generators"].push_back(json{{"id", g.id},
                                       {"bus", g.bus},
                                       {"p_set", g.p_set},
                                       {"v_set", g.v_set},
                                       {"inertia_h", g.inertia_h},
                                       {"damping_d", g.damping_d},
                                       {"transient_reactance_xd", g.transient_reactance_xd},
                                       {"p_max", g.p_max}});
    }
    return j.dump(2);
}

Network remove_line(const Network& net, int line_id) {
    int idx = -1;
    for (std::size_t i = 0; i < net.lines.size(); ++i)
        if (net.lines[i].id == line_id && net.lines[i].in_service) idx = static_cast<int>(i);
    if (idx < 0) throw ValidationError("line " + std::to_string(line_id) + " unknown or already out of service");

    Network out = net;
    out.lines[idx].in_service = false;
    out.topology_id = net.topology_id * 1000 + line_id + 1;
    if (!out.connected())
        throw ValidationError("removing line " + std::to_string(line_id) + " disconnects the network");
    return out;
}

std::vector<int> removable_line_ids(const Network& net) {
    std::vector<int> ids;
    for (const auto& l : net.lines) {
        if (!l.in_service) continue;
        Network probe = net;
        probe.lines[net.line_index(l.id)].in_service = false;
        if (probe.connected()) ids.push_back(l.id);
    }
    return ids;
}

std::vector<Network> enumerate_topologies(const Network& net, int k) {
    if (k < 1) throw ValidationError("topology count must be >= 1");
    std::vector<int> removable = removable_line_ids(net);
    int max_k = static_cast<int>(removable.size()) + 1;
    if (k > max_k)
        throw ValidationError("requested " + std::to_string(k) + " topologies but only " +
                              std::to_string(max_k) + " are achievable");

    std::vector<Network> out;
    out.push_back(net);
    for (int i = 0; i < k - 1; ++i) {
        Network variant = remove_line(net, removable[i]);
        variant.topology_id = i + 1;
        out.push_back(std::move(variant));
    }
    return out;
}

} // namespace gridmtl
