#pragma once

#include <complex>
#include <string>
#include <vector>

#include "gridmtl/common.hpp"

namespace gridmtl {

using Complex = std::complex<double>;

enum class BusKind { Slack, PV, PQ };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double base_voltage_pu = 1.0;
    double load_p_nominal = 0.0; // pu
    double load_q_nominal = 0.0; // pu
    Complex shunt_admittance{0.0, 0.0}; // pu
};

struct Line {
    int id = 0;
    int from_bus = 0;
    int to_bus = 0;
    Complex series_impedance{0.0, 0.0}; // pu
    double charging_susceptance = 0.0;  // pu, total line charging
    double rating_s_max = 0.0;          // pu apparent power
    bool in_service = true;
};

struct Generator {
    int id = 0;
    int bus = 0;
    double p_set = 0.0;                 // pu
    double v_set = 1.0;                 // pu
    double inertia_h = 1.0;             // s
    double damping_d = 0.0;             // pu
    double transient_reactance_xd = 0.1; // pu
    double p_max = 1.0;                 // pu
};

/// Immutable grid model. Element lists are kept in ascending-id order;
/// index lookups below refer to positions in those sorted lists.
struct Network {
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<Generator> generators;
    int topology_id = 0;
    double base_mva = 100.0;

    int bus_index(int bus_id) const;   // throws ValidationError on unknown id
    int line_index(int line_id) const;
    int gen_index(int gen_id) const;

    std::size_t n_buses() const { return buses.size(); }
    std::size_t n_lines() const { return lines.size(); }
    std::size_t n_generators() const { return generators.size(); }

    int slack_index() const; // bus index of the slack bus

    /// True if the graph over in-service lines connects all buses.
    bool connected() const;
};

/// Parse and validate a grid JSON file (schema_version 1).
Network load_network(const std::string& path);

/// Parse and validate a grid JSON document given as a string.
Network parse_network(const std::string& json_text);

/// Serialize back to the grid JSON schema. Out-of-service lines are
/// omitted from the output only when drop_out_of_service is set; by
/// default the full line list is written with in-service state implied
/// by membership (the schema has no in_service field, so round-trips
/// are only supported for fully in-service networks).
std::string to_json(const Network& net);

/// Returns a copy with the line out of service and a fresh topology_id
/// (parent_id * 1000 + line_id + 1). The input is not modified.
Network remove_line(const Network& net, int line_id);

/// Base network plus up to k-1 single-line-removal variants, each
/// connected, ordered by ascending removed-line id. Variants are
/// renumbered topology_id = 1..k-1 (base keeps its own id).
std::vector<Network> enumerate_topologies(const Network& net, int k);

/// Line ids whose removal keeps the in-service graph connected.
std::vector<int> removable_line_ids(const Network& net);

} // namespace gridmtl
