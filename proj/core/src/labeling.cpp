#include "gridmtl/labeling.hpp"

#include <cmath>

namespace gridmtl {

int LabelVector::bit(int task) const {
    switch (task) {
        case 0: return static_ok;
        case 1: return small_signal_ok;
        case 2: return voltage_ok;
        case 3: return transient_ok;
        default: throw ValidationError("task index out of range");
    }
}

double tsi(const Trajectory& traj) {
    const Eigen::Index ng = traj.delta.cols();
    if (ng < 2) throw ValidationError("TSI requires at least two generators");
    if (traj.delta.rows() < 1) throw ValidationError("TSI requires a non-empty trajectory");
    if (traj.divergent) return -100.0;

    double max_sep = 0.0;
    for (Eigen::Index r = 0; r < traj.delta.rows(); ++r) {
        double lo = traj.delta.row(r).minCoeff();
        double hi = traj.delta.row(r).maxCoeff();
        max_sep = std::max(max_sep, hi - lo);
    }
    double sep_deg = max_sep * 180.0 / 3.14159265358979323846;
    return (360.0 - sep_deg) / (360.0 + sep_deg) * 100.0;
}

int label_transient(const Trajectory& traj, const LabelThresholds& th) {
    return tsi(traj) < th.tsi_min_pct ? 0 : 1;
}

int label_small_signal(const std::vector<std::complex<double>>& modes, const LabelThresholds& th) {
    for (const auto& lam : modes) {
        if (std::abs(lam) < 1e-9) continue;        // rigid-body mode
        if (std::abs(lam.imag()) < 1e-12) continue; // not oscillatory
        auto [zeta, freq] = mode_damping(lam);
        if (freq < th.band_hz.first || freq > th.band_hz.second) continue;
        if (zeta < th.zeta_min) return 0;
    }
    return 1;
}

int label_voltage(const Trajectory& traj, const LabelThresholds& th) {
    const Eigen::Index rows = traj.bus_v_mag.rows();
    if (rows == 0) return 1;
    const int start = traj.post_clear_index;
    for (Eigen::Index b = 0; b < traj.bus_v_mag.cols(); ++b) {
        double run_s = 0.0;
        bool in_run = false;
        for (Eigen::Index r = start; r < rows; ++r) {
            double v = traj.bus_v_mag(r, b);
            bool outside = v < th.v_band_pu.first || v > th.v_band_pu.second;
            if (outside) {
                if (in_run) run_s += traj.dt_s; // span between consecutive offender samples
                in_run = true;
                if (run_s > th.v_dwell_s) return 0;
            } else {
                in_run = false;
                run_s = 0.0;
            }
        }
    }
    return 1;
}

double overload_index(const Eigen::VectorXd& s_mean, const Eigen::VectorXd& s_max,
                      const Eigen::VectorXd& w, double p) {
    if (s_mean.size() != s_max.size() || s_mean.size() != w.size())
        throw ValidationError("overload index inputs have mismatched lengths");
    double fx = 0.0;
    for (Eigen::Index i = 0; i < s_mean.size(); ++i) {
        if (s_max[i] <= 0) throw ValidationError("non-positive line rating");
        double ratio = s_mean[i] / s_max[i];
        fx += w[i] * std::pow(ratio, p);
    }
    return fx;
}

int label_static(const Eigen::VectorXd& s_mean, const Eigen::VectorXd& s_max, const LabelThresholds& th) {
    Eigen::VectorXd w = th.overload_w;
    if (w.size() == 0)
        w = Eigen::VectorXd::Constant(s_mean.size(), 1.0 / static_cast<double>(s_mean.size()));
    double fx = overload_index(s_mean, s_max, w, th.overload_p);
    if (fx > th.overload_tau) return 0;
    for (Eigen::Index i = 0; i < s_mean.size(); ++i)
        if (s_mean[i] > s_max[i]) return 0; // hard per-line limit
    return 1;
}

LabelVector label_all(const Trajectory& traj, const std::vector<std::complex<double>>& modes,
                      const LineFlowSummary& flows, const LabelThresholds& th) {
    LabelVector y;
    y.static_ok = label_static(flows.s_mean, flows.s_max, th);
    y.small_signal_ok = label_small_signal(modes, th);
    y.voltage_ok = label_voltage(traj, th);
    y.transient_ok = label_transient(traj, th);
    return y;
}

} // namespace gridmtl
