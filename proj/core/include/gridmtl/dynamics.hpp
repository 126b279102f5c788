#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/LU>

#include "gridmtl/grid.hpp"
#include "gridmtl/powerflow.hpp"

namespace gridmtl {

/// System frequency; the modeled systems are 60 Hz.
inline constexpr double kOmegaSync = 2.0 * 3.14159265358979323846 * 60.0; // rad/s

/// Three-phase bus fault cleared by tripping one incident line.
struct Contingency {
    int fault_bus = 0;
    double fault_start_s = 1.0;
    double clearing_time_s = 0.083;
    int tripped_line = 0;
};

struct SimConfig {
    double dt_s = 1e-3;
    double horizon_s = 10.0;
};

/// One network state (pre-fault, fault-on or post-fault), reduced to
/// generator internal nodes with constant-impedance loads folded in.
struct ReducedNetwork {
    Eigen::MatrixXcd y_reduced;                  // n_gen x n_gen
    Eigen::MatrixXcd y_link;                     // n_bus x n_gen coupling block
    Eigen::PartialPivLU<Eigen::MatrixXcd> bus_solver; // factorized bus block
};

struct DynamicInit {
    Eigen::VectorXcd internal_emf; // E' per generator at delta0
    Eigen::VectorXd delta0;        // rad
    Eigen::VectorXd p_mech;        // pu
    Eigen::VectorXd inertia_2h;    // 2*H per generator
    Eigen::VectorXd damping;       // D per generator
    ReducedNetwork pre_fault;

    // Assembly state needed to derive fault-on / post-fault conditions.
    Eigen::MatrixXcd y_bus_loaded; // pre-fault bus admittance incl. load admittances
    Eigen::VectorXcd gen_branch_y; // 1/(j xd') per generator
    std::vector<int> gen_bus;      // bus index per generator
    Network net;
};

struct Trajectory {
    Eigen::VectorXd time_s;
    Eigen::MatrixXd delta;       // steps x generators, rad
    Eigen::MatrixXd omega_dev;   // steps x generators, pu speed deviation
    Eigen::MatrixXd bus_v_mag;   // steps x buses, pu
    bool divergent = false;
    int post_clear_index = 0;    // first row at/after fault clearing (0 if no fault)
    Eigen::VectorXd line_s_mean; // per line, mean |S| over the post-clearing window
    double dt_s = 0.0;
};

/// Classical-model initialization from a converged power flow:
/// E' behind xd', constant-impedance load conversion, Kron reduction.
DynamicInit initialize_dynamics(const Network& net, const PowerFlowSolution& sol);

/// Reduced model for an explicit network state. Passing a fault bus adds
/// the large fault shunt; passing a tripped line removes that line.
ReducedNetwork make_reduced(const DynamicInit& init, std::optional<int> fault_bus_id,
                            std::optional<int> tripped_line_id);

/// Fixed-step RK4 integration of the swing equations with network
/// switching at fault application and clearing. A non-finite state
/// truncates the trajectory and sets the divergent flag.
Trajectory simulate(const DynamicInit& init, const std::optional<Contingency>& cont,
                    const SimConfig& cfg);

/// Small-signal state matrix [[0, w_s I], [-M^-1 K, -M^-1 D]] at delta0
/// on the pre-fault reduced network; K is the analytic Jacobian of the
/// electrical power with respect to rotor angles.
Eigen::MatrixXd linearize(const DynamicInit& init);

/// Electrical power at each generator internal node for given angles.
Eigen::VectorXd electrical_power(const ReducedNetwork& red, const Eigen::VectorXd& emf_mag,
                                 const Eigen::VectorXd& delta);

/// All eigenvalues of a real square matrix.
std::vector<std::complex<double>> eigenvalues(const Eigen::MatrixXd& a);

/// (damping ratio, frequency in Hz) of a mode. Real eigenvalues map to
/// frequency 0 with zeta = -sign(Re); a zero eigenvalue maps to (0, 0).
std::pair<double, double> mode_damping(const std::complex<double>& lambda);

/// Opt-in trajectory dump: time, delta per generator, v_mag per bus.
void write_trajectory_csv(const Trajectory& traj, const Network& net, const std::string& path);

} // namespace gridmtl
