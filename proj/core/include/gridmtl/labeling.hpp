#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "gridmtl/dynamics.hpp"

namespace gridmtl {

/// Four binary stability bits; 1 = secure.
struct LabelVector {
    int static_ok = 1;
    int small_signal_ok = 1;
    int voltage_ok = 1;
    int transient_ok = 1;

    bool overall_secure() const { return static_ok && small_signal_ok && voltage_ok && transient_ok; }
    int bit(int task) const;
};

struct LabelThresholds {
    double tsi_min_pct = 10.0;
    double zeta_min = 0.03;
    std::pair<double, double> band_hz{0.25, 1.0};
    std::pair<double, double> v_band_pu{0.8, 1.1};
    double v_dwell_s = 0.5;
    Eigen::VectorXd overload_w; // empty = uniform 1/N_l
    double overload_p = 2.0;
    double overload_tau = 1.0;
};

/// Transient stability index in percent from the maximum pairwise rotor
/// angle separation (degrees) over the whole trajectory. Divergent
/// trajectories pin to -100.
double tsi(const Trajectory& traj);

int label_transient(const Trajectory& traj, const LabelThresholds& th);

/// 0 iff an oscillatory mode inside the frequency band has damping ratio
/// below the minimum. The rigid-body mode (|lambda| < 1e-9) is ignored.
int label_small_signal(const std::vector<std::complex<double>>& modes, const LabelThresholds& th);

/// 0 iff any bus stays continuously outside the voltage band for longer
/// than the dwell, counted from the post-clearing row onward.
int label_voltage(const Trajectory& traj, const LabelThresholds& th);

/// f_x = sum_i w_i (s_mean_i / s_max_i)^p.
double overload_index(const Eigen::VectorXd& s_mean, const Eigen::VectorXd& s_max,
                      const Eigen::VectorXd& w, double p);

int label_static(const Eigen::VectorXd& s_mean, const Eigen::VectorXd& s_max,
                 const LabelThresholds& th);

struct LineFlowSummary {
    Eigen::VectorXd s_mean; // post-clearing mean apparent flow per line
    Eigen::VectorXd s_max;  // line ratings
};

LabelVector label_all(const Trajectory& traj, const std::vector<std::complex<double>>& modes,
                      const LineFlowSummary& flows, const LabelThresholds& th);

} // namespace gridmtl
