#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gridmtl/grid.hpp"

namespace gridmtl {

struct Contingency; // dynamics.hpp

struct PowerFlowSolution {
    Eigen::VectorXd v_mag;  // per bus, pu
    Eigen::VectorXd v_ang;  // per bus, rad
    Eigen::VectorXd gen_p;  // per generator, pu
    Eigen::VectorXd gen_q;  // per generator, pu
    Eigen::VectorXd line_flow_p_from, line_flow_q_from; // per line, sending end
    Eigen::VectorXd line_flow_p_to, line_flow_q_to;     // per line, receiving end
    bool converged = false;
    bool singular_jacobian = false;
    int iterations = 0;
    double max_mismatch = 0.0;              // pu, infinity norm at exit
    std::vector<double> mismatch_history;   // per accepted iterate
};

struct PowerFlowOptions {
    double tolerance = 1e-8; // pu, infinity norm
    int max_iterations = 30;
};

/// Ordered segment descriptor for the flat feature vector.
struct FeatureLayout {
    std::vector<std::pair<std::string, int>> segments; // (name, width) in order
    std::vector<int> gen_ids, bus_ids, line_ids;       // ascending element ids

    int total() const;
    int segment_offset(const std::string& name) const; // -1 if absent
    std::string descriptor() const;                    // canonical JSON string
    std::uint64_t hash() const { return fnv1a64(descriptor()); }
    static FeatureLayout from_descriptor(const std::string& json_text);
};

struct FeatureVector {
    Eigen::VectorXd values;
    FeatureLayout layout;
};

/// One-hot tripped-line segment followed by one-hot faulted-bus segment.
struct ConditionVector {
    Eigen::VectorXd values; // length = n_lines + n_buses
};

/// Bus admittance matrix over in-service lines plus bus shunts,
/// indexed by bus position (ascending id).
Eigen::MatrixXcd build_admittance(const Network& net);

/// Newton-Raphson power flow in polar coordinates from a flat start.
/// load_p/load_q are per-bus demands (full bus vector, ascending id).
/// Never throws on non-convergence: inspect .converged / .singular_jacobian.
PowerFlowSolution solve_power_flow(const Network& net, const Eigen::VectorXd& load_p,
                                   const Eigen::VectorXd& load_q,
                                   const PowerFlowOptions& opts = {});

/// Per-line sending-end apparent power |S| (pu); zero for out-of-service
/// lines. Throws ValidationError if the solution did not converge.
Eigen::VectorXd compute_line_flows(const Network& net, const PowerFlowSolution& sol);

FeatureLayout make_feature_layout(const Network& net);

/// Flat feature vector: gen P, gen Q, load P, load Q, line P, line Q
/// (sending end), bus |V|, bus angle. Deterministic ascending-id order.
FeatureVector build_feature_vector(const Network& net, const PowerFlowSolution& sol,
                                   const Eigen::VectorXd& load_p, const Eigen::VectorXd& load_q);

ConditionVector build_condition_vector(const Network& net, const std::optional<Contingency>& cont);

/// Mismatch vector and analytic Jacobian at a given state; exposed for
/// finite-difference verification.
struct MismatchModel {
    Eigen::VectorXd mismatch; // [dP at non-slack; dQ at PQ]
    Eigen::MatrixXd jacobian; // d(calc)/d(state), state = [theta at non-slack; v at PQ]
};
MismatchModel evaluate_mismatch(const Network& net, const Eigen::VectorXd& load_p,
                                const Eigen::VectorXd& load_q, const Eigen::VectorXd& v_mag,
                                const Eigen::VectorXd& v_ang);

} // namespace gridmtl
