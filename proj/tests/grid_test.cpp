#include <doctest.h>

#include <set>

#include "gridmtl/grid.hpp"

using namespace gridmtl;

namespace {

const std::string kFixtures = GRIDMTL_FIXTURE_DIR;

// Brute-force connectivity oracle, independent of Network::connected().
bool reachable_all(const Network& net) {
    std::set<int> seen{net.buses.front().id};
    bool grew = true;
    while (grew) {
        grew = false;
        for (const auto& l : net.lines) {
            if (!l.in_service) continue;
            if (seen.count(l.from_bus) && !seen.count(l.to_bus)) {
                seen.insert(l.to_bus);
                grew = true;
            }
            if (seen.count(l.to_bus) && !seen.count(l.from_bus)) {
                seen.insert(l.from_bus);
                grew = true;
            }
        }
    }
    return seen.size() == net.buses.size();
}

std::string patch(const std::string& text, const std::string& from, const std::string& to) {
    std::string out = text;
    auto pos = out.find(from);
    REQUIRE(pos != std::string::npos);
    out.replace(pos, from.size(), to);
    return out;
}

std::string nine_bus_text() {
    Network net = load_network(kFixtures + "/wscc9.json");
    return to_json(net);
}

} // namespace

TEST_CASE("well-formed 9-bus file loads with expected element counts") {
    Network net = load_network(kFixtures + "/wscc9.json");
    CHECK(net.n_buses() == 9);
    CHECK(net.n_lines() == 9);
    CHECK(net.n_generators() == 3);
    CHECK(net.buses[net.slack_index()].id == 1);
    CHECK(net.connected());
}

TEST_CASE("two slack buses are rejected") {
    std::string text = patch(nine_bus_text(), "\"kind\": \"PV\"", "\"kind\": \"slack\"");
    CHECK_THROWS_WITH_AS(parse_network(text), doctest::Contains("multiple slack"), ValidationError);
}

TEST_CASE("line referencing an absent bus names the line") {
    std::string text = patch(nine_bus_text(), "\"to_bus\": 5", "\"to_bus\": 99");
    CHECK_THROWS_WITH_AS(parse_network(text), doctest::Contains("line 2"), ValidationError);
}

TEST_CASE("unknown keys and malformed JSON are parse errors") {
    CHECK_THROWS_AS(parse_network("{not json"), ParseError);
    std::string text = patch(nine_bus_text(), "\"base_mva\"", "\"extra\": 1, \"base_mva\"");
    CHECK_THROWS_WITH_AS(parse_network(text), doctest::Contains("unknown key"), ParseError);
}

TEST_CASE("remove_line keeps the original untouched and is connected on cycles") {
    Network net = load_network(kFixtures + "/wscc9.json");
    std::string before = to_json(net);
    Network variant = remove_line(net, 2);
    CHECK(to_json(net) == before); // purity
    CHECK(variant.connected());
    CHECK(reachable_all(variant));
    CHECK(variant.topology_id != net.topology_id);
    int in_service = 0;
    for (const auto& l : variant.lines) in_service += l.in_service ? 1 : 0;
    CHECK(in_service == 8);
}

TEST_CASE("removing a bridge or a missing/inactive line fails") {
    Network net = load_network(kFixtures + "/wscc9.json");
    // line 1 (bus 1 to 4) is the slack generator's only connection
    CHECK_THROWS_WITH_AS(remove_line(net, 1), doctest::Contains("disconnects"), ValidationError);
    CHECK_THROWS_AS(remove_line(net, 42), ValidationError);
    Network variant = remove_line(net, 2);
    CHECK_THROWS_AS(remove_line(variant, 2), ValidationError);
}

TEST_CASE("enumerate_topologies returns base plus connected variants in line order") {
    Network net = load_network(kFixtures + "/wscc9.json");

    auto base_only = enumerate_topologies(net, 1);
    CHECK(base_only.size() == 1);
    CHECK(to_json(base_only[0]) == to_json(net));

    auto four = enumerate_topologies(net, 4);
    REQUIRE(four.size() == 4);
    for (const auto& n : four) {
        CHECK(n.connected());
        CHECK(reachable_all(n));
    }
    // Oracle: brute-force bridge detection gives the removable set.
    std::vector<int> removable;
    for (const auto& l : net.lines) {
        Network probe = net;
        probe.lines[net.line_index(l.id)].in_service = false;
        if (reachable_all(probe)) removable.push_back(l.id);
    }
    for (std::size_t i = 1; i < four.size(); ++i) {
        int removed = -1;
        for (const auto& l : four[i].lines)
            if (!l.in_service) removed = l.id;
        CHECK(removed == removable[i - 1]);
        CHECK(four[i].topology_id == static_cast<int>(i));
    }

    // Determinism across runs.
    auto again = enumerate_topologies(net, 4);
    for (std::size_t i = 0; i < four.size(); ++i) CHECK(to_json(four[i]) == to_json(again[i]));
}

TEST_CASE("enumerate_topologies reports the achievable maximum") {
    Network net = load_network(kFixtures + "/wscc9.json");
    int max_k = static_cast<int>(removable_line_ids(net).size()) + 1;
    CHECK_THROWS_WITH_AS(enumerate_topologies(net, max_k + 1), doctest::Contains(std::to_string(max_k).c_str()),
                         ValidationError);

    // A radial network has only bridges.
    std::string radial = R"({
      "schema_version": 1, "base_mva": 100.0,
      "buses": [
        {"id": 1, "kind": "slack", "base_voltage_pu": 1.0, "load_p_nominal": 0, "load_q_nominal": 0, "shunt_admittance": {"re": 0, "im": 0}},
        {"id": 2, "kind": "PQ", "base_voltage_pu": 1.0, "load_p_nominal": 0.1, "load_q_nominal": 0, "shunt_admittance": {"re": 0, "im": 0}},
        {"id": 3, "kind": "PQ", "base_voltage_pu": 1.0, "load_p_nominal": 0.1, "load_q_nominal": 0, "shunt_admittance": {"re": 0, "im": 0}}
      ],
      "lines": [
        {"id": 1, "from_bus": 1, "to_bus": 2, "series_impedance": {"re": 0.01, "im": 0.1}, "charging_susceptance": 0, "rating_s_max": 1.0},
        {"id": 2, "from_bus": 2, "to_bus": 3, "series_impedance": {"re": 0.01, "im": 0.1}, "charging_susceptance": 0, "rating_s_max": 1.0}
      ],
      "generators": [
        {"id": 1, "bus": 1, "p_set": 0.1, "v_set": 1.0, "inertia_h": 3.0, "damping_d": 1.0, "transient_reactance_xd": 0.2, "p_max": 1.0}
      ]})";
    Network rnet = parse_network(radial);
    CHECK_THROWS_AS(enumerate_topologies(rnet, 2), ValidationError);
}

TEST_CASE("fixture networks all validate") {
    for (const char* name : {"/grid_3bus.json", "/wscc9.json", "/smib.json", "/grid_39bus.json"}) {
        Network net = load_network(kFixtures + name);
        CHECK(net.connected());
    }
}
