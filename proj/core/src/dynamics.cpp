#include "gridmtl/dynamics.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Eigenvalues>

namespace gridmtl {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

namespace {

constexpr double kFaultShunt = 1e6; // pu, bolted three-phase fault

/// Kron-reduce an assembled bus block against the generator branches.
ReducedNetwork reduce(const MatrixXcd& y_ll, const VectorXcd& gen_y, const std::vector<int>& gen_bus) {
    const auto ng = static_cast<Eigen::Index>(gen_bus.size());
    const Eigen::Index nb = y_ll.rows();

    MatrixXcd y_gl = MatrixXcd::Zero(ng, nb);
    for (Eigen::Index g = 0; g < ng; ++g) y_gl(g, gen_bus[g]) = -gen_y[g];

    ReducedNetwork red;
    red.bus_solver.compute(y_ll);
    Eigen::FullPivLU<MatrixXcd> rank_check(y_ll);
    if (!rank_check.isInvertible())
        throw ValidationError("singular load-bus admittance block in network reduction");

    MatrixXcd y_lg = y_gl.transpose();
    MatrixXcd inv_ylg = red.bus_solver.solve(y_lg); // Y_ll^{-1} Y_lg
    red.y_reduced = MatrixXcd::Zero(ng, ng);
    for (Eigen::Index g = 0; g < ng; ++g) red.y_reduced(g, g) = gen_y[g];
    red.y_reduced -= y_gl * inv_ylg;
    red.y_link = y_lg;
    return red;
}

struct SwingModel {
    const DynamicInit* init;
    const ReducedNetwork* active;
    VectorXd emf_mag;

    VectorXd deriv(const VectorXd& state) const {
        const Eigen::Index ng = emf_mag.size();
        VectorXd delta = state.head(ng);
        VectorXd omega = state.tail(ng);
        VectorXd pe = electrical_power(*active, emf_mag, delta);
        VectorXd out(2 * ng);
        out.head(ng) = kOmegaSync * omega;
        out.tail(ng) = (init->p_mech - pe - init->damping.cwiseProduct(omega)).cwiseQuotient(init->inertia_2h);
        return out;
    }
};

VectorXcd recover_bus_voltages(const ReducedNetwork& red, const VectorXcd& emf) {
    // 0 = Y_lg E + Y_ll V  =>  V = -Y_ll^{-1} Y_lg E
    return red.bus_solver.solve((-red.y_link * emf).eval());
}

} // namespace

Eigen::VectorXd electrical_power(const ReducedNetwork& red, const VectorXd& emf_mag, const VectorXd& delta) {
    const Eigen::Index ng = emf_mag.size();
    VectorXcd e(ng);
    for (Eigen::Index i = 0; i < ng; ++i) e[i] = std::polar(emf_mag[i], delta[i]);
    VectorXcd current = red.y_reduced * e;
    VectorXd pe(ng);
    for (Eigen::Index i = 0; i < ng; ++i) pe[i] = (e[i] * std::conj(current[i])).real();
    return pe;
}

DynamicInit initialize_dynamics(const Network& net, const PowerFlowSolution& sol) {
    if (!sol.converged) throw ValidationError("dynamic initialization requires a converged power flow");

    const auto nb = static_cast<Eigen::Index>(net.n_buses());
    const auto ng = static_cast<Eigen::Index>(net.n_generators());

    DynamicInit init;
    init.net = net;
    init.gen_bus.resize(ng);
    init.gen_branch_y.resize(ng);
    init.internal_emf.resize(ng);
    init.delta0.resize(ng);
    init.inertia_2h.resize(ng);
    init.damping.resize(ng);

    // Net complex injection at each bus, to back out the load actually served.
    MatrixXcd y_bus = build_admittance(net);
    VectorXcd v(nb);
    for (Eigen::Index i = 0; i < nb; ++i) v[i] = std::polar(sol.v_mag[i], sol.v_ang[i]);
    VectorXcd inj = v.cwiseProduct((y_bus * v).conjugate());

    VectorXcd s_gen_at_bus = VectorXcd::Zero(nb);
    for (Eigen::Index g = 0; g < ng; ++g) {
        int b = net.bus_index(net.generators[g].bus);
        s_gen_at_bus[b] += Complex(sol.gen_p[g], sol.gen_q[g]);
    }

    // Constant-impedance conversion of the served load.
    init.y_bus_loaded = y_bus;
    for (Eigen::Index b = 0; b < nb; ++b) {
        Complex s_load = s_gen_at_bus[b] - inj[b];
        double vm2 = std::norm(v[b]);
        init.y_bus_loaded(b, b) += std::conj(s_load) / vm2;
    }

    for (Eigen::Index g = 0; g < ng; ++g) {
        const Generator& gen = net.generators[g];
        int b = net.bus_index(gen.bus);
        init.gen_bus[g] = b;
        Complex xd(0.0, gen.transient_reactance_xd);
        init.gen_branch_y[g] = 1.0 / xd;
        Complex s(sol.gen_p[g], sol.gen_q[g]);
        Complex i_term = std::conj(s / v[b]);
        init.internal_emf[g] = v[b] + xd * i_term;
        init.delta0[g] = std::arg(init.internal_emf[g]);
        init.inertia_2h[g] = 2.0 * gen.inertia_h;
        init.damping[g] = gen.damping_d;
    }

    // Generator branches terminate on the bus block.
    MatrixXcd y_ll = init.y_bus_loaded;
    for (Eigen::Index g = 0; g < ng; ++g) y_ll(init.gen_bus[g], init.gen_bus[g]) += init.gen_branch_y[g];
    init.pre_fault = reduce(y_ll, init.gen_branch_y, init.gen_bus);

    VectorXd emf_mag = init.internal_emf.cwiseAbs();
    init.p_mech = electrical_power(init.pre_fault, emf_mag, init.delta0);
    return init;
}

ReducedNetwork make_reduced(const DynamicInit& init, std::optional<int> fault_bus_id,
                            std::optional<int> tripped_line_id) {
    MatrixXcd y_ll = init.y_bus_loaded;
    if (tripped_line_id) {
        const Line& l = init.net.lines[init.net.line_index(*tripped_line_id)];
        if (!l.in_service)
            throw ValidationError("contingency trips out-of-service line " + std::to_string(l.id));
        int f = init.net.bus_index(l.from_bus);
        int t = init.net.bus_index(l.to_bus);
        Complex ys = 1.0 / l.series_impedance;
        Complex ych(0.0, l.charging_susceptance / 2.0);
        y_ll(f, f) -= ys + ych;
        y_ll(t, t) -= ys + ych;
        y_ll(f, t) += ys;
        y_ll(t, f) += ys;
    }
    if (fault_bus_id) {
        int b = init.net.bus_index(*fault_bus_id);
        y_ll(b, b) += kFaultShunt;
    }
    for (std::size_t g = 0; g < init.gen_bus.size(); ++g)
        y_ll(init.gen_bus[g], init.gen_bus[g]) += init.gen_branch_y[static_cast<Eigen::Index>(g)];
    return reduce(y_ll, init.gen_branch_y, init.gen_bus);
}

Trajectory simulate(const DynamicInit& init, const std::optional<Contingency>& cont, const SimConfig& cfg) {
    if (cfg.dt_s <= 0) throw ValidationError("simulation step must be positive");
    const auto ng = static_cast<Eigen::Index>(init.gen_bus.size());
    const auto nb = static_cast<Eigen::Index>(init.net.n_buses());
    const auto nl = static_cast<Eigen::Index>(init.net.n_lines());

    int k_fault = -1, k_clear = 0;
    ReducedNetwork fault_on, post_fault;
    if (cont) {
        if (cont->clearing_time_s <= 0) throw ValidationError("clearing time must be positive");
        if (cfg.horizon_s < cont->fault_start_s + cont->clearing_time_s)
            throw ValidationError("horizon shorter than fault start plus clearing time");
        const Line& l = init.net.lines[init.net.line_index(cont->tripped_line)];
        if (l.from_bus != cont->fault_bus && l.to_bus != cont->fault_bus)
            throw ValidationError("fault bus is not adjacent to the tripped line");
        k_fault = static_cast<int>(std::lround(cont->fault_start_s / cfg.dt_s));
        k_clear = static_cast<int>(std::lround((cont->fault_start_s + cont->clearing_time_s) / cfg.dt_s));
        fault_on = make_reduced(init, cont->fault_bus, std::nullopt);
        post_fault = make_reduced(init, std::nullopt, cont->tripped_line);
    }

    const int n_steps = static_cast<int>(std::lround(cfg.horizon_s / cfg.dt_s));
    Trajectory traj;
    traj.dt_s = cfg.dt_s;
    traj.time_s.resize(n_steps + 1);
    traj.delta.resize(n_steps + 1, ng);
    traj.omega_dev.resize(n_steps + 1, ng);
    traj.bus_v_mag.resize(n_steps + 1, nb);
    traj.post_clear_index = cont ? k_clear : 0;

    SwingModel model{&init, &init.pre_fault, init.internal_emf.cwiseAbs()};

    VectorXd state(2 * ng);
    state.head(ng) = init.delta0;
    state.tail(ng).setZero();

    VectorXd s_accum = VectorXd::Zero(nl);
    long s_count = 0;

    // Apparent sending-end flows from recovered complex bus voltages; the
    // tripped line reads zero once the post-fault network is active.
    auto accumulate_flows = [&](const VectorXcd& vbus, bool tripped_active) {
        for (Eigen::Index li = 0; li < nl; ++li) {
            const Line& l = init.net.lines[li];
            if (!l.in_service) continue;
            if (tripped_active && cont && l.id == cont->tripped_line) continue;
            int f = init.net.bus_index(l.from_bus);
            int t = init.net.bus_index(l.to_bus);
            Complex ys = 1.0 / l.series_impedance;
            Complex ych(0.0, l.charging_susceptance / 2.0);
            Complex sf = vbus[f] * std::conj((vbus[f] - vbus[t]) * ys + vbus[f] * ych);
            s_accum[li] += std::abs(sf);
        }
        ++s_count;
    };

    int rows = 0;
    for (int k = 0; k <= n_steps; ++k) {
        const bool in_fault = cont && k >= k_fault && k < k_clear;
        const bool post = cont && k >= k_clear;
        model.active = in_fault ? &fault_on : (post ? &post_fault : &init.pre_fault);

        if (!state.allFinite()) {
            traj.divergent = true;
            break;
        }

        VectorXcd emf(ng);
        for (Eigen::Index i = 0; i < ng; ++i) emf[i] = std::polar(model.emf_mag[i], state[i]);
        VectorXcd vbus = recover_bus_voltages(*model.active, emf);

        traj.time_s[rows] = k * cfg.dt_s;
        traj.delta.row(rows) = state.head(ng);
        traj.omega_dev.row(rows) = state.tail(ng);
        traj.bus_v_mag.row(rows) = vbus.cwiseAbs();
        ++rows;

        if (!cont || post) accumulate_flows(vbus, post);
        if (k == n_steps) break;

        // Classic RK4; the active network is held fixed across the step.
        const double h = cfg.dt_s;
        VectorXd k1 = model.deriv(state);
        VectorXd k2 = model.deriv(state + 0.5 * h * k1);
        VectorXd k3 = model.deriv(state + 0.5 * h * k2);
        VectorXd k4 = model.deriv(state + h * k3);
        state += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    traj.time_s.conservativeResize(rows);
    traj.delta.conservativeResize(rows, ng);
    traj.omega_dev.conservativeResize(rows, ng);
    traj.bus_v_mag.conservativeResize(rows, nb);
    traj.line_s_mean = s_count > 0 ? VectorXd(s_accum / static_cast<double>(s_count)) : VectorXd::Zero(nl);
    if (traj.post_clear_index >= rows) traj.post_clear_index = rows > 0 ? rows - 1 : 0;
    return traj;
}

Eigen::MatrixXd linearize(const DynamicInit& init) {
    const auto ng = static_cast<Eigen::Index>(init.gen_bus.size());
    VectorXd emf_mag = init.internal_emf.cwiseAbs();
    const MatrixXcd& y = init.pre_fault.y_reduced;

    // K_ij = dPe_i/ddelta_j at delta0.
    MatrixXd k = MatrixXd::Zero(ng, ng);
    for (Eigen::Index i = 0; i < ng; ++i) {
        for (Eigen::Index j = 0; j < ng; ++j) {
            if (i == j) continue;
            double dth = init.delta0[i] - init.delta0[j];
            double g = y(i, j).real(), b = y(i, j).imag();
            k(i, j) = emf_mag[i] * emf_mag[j] * (g * std::sin(dth) - b * std::cos(dth));
            k(i, i) -= k(i, j);
        }
    }

    MatrixXd a = MatrixXd::Zero(2 * ng, 2 * ng);
    a.topRightCorner(ng, ng) = kOmegaSync * MatrixXd::Identity(ng, ng);
    a.bottomLeftCorner(ng, ng) = -(k.array().colwise() / init.inertia_2h.array()).matrix();
    a.bottomRightCorner(ng, ng) = (-init.damping.cwiseQuotient(init.inertia_2h)).asDiagonal();
    return a;
}

std::vector<std::complex<double>> eigenvalues(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw ValidationError("eigenvalues of a non-square matrix");
    Eigen::EigenSolver<MatrixXd> solver(a, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success)
        throw Error("eigenvalue iteration did not converge");
    std::vector<std::complex<double>> out(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) out[i] = solver.eigenvalues()[i];
    return out;
}

std::pair<double, double> mode_damping(const std::complex<double>& lambda) {
    double mag = std::abs(lambda);
    double freq_hz = std::abs(lambda.imag()) / (2.0 * 3.14159265358979323846);
    double zeta = mag > 0.0 ? -lambda.real() / mag : 0.0;
    return {zeta, freq_hz};
}

void write_trajectory_csv(const Trajectory& traj, const Network& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open trajectory dump file: " + path);
    out << "time_s";
    for (const auto& g : net.generators) out << ",delta_" << g.id;
    for (const auto& b : net.buses) out << ",vmag_" << b.id;
    out << "\n";
    char buf[32];
    for (Eigen::Index r = 0; r < traj.time_s.size(); ++r) {
        std::snprintf(buf, sizeof buf, "%.9g", traj.time_s[r]);
        out << buf;
        for (Eigen::Index c = 0; c < traj.delta.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", traj.delta(r, c));
            out << ',' << buf;
        }
        for (Eigen::Index c = 0; c < traj.bus_v_mag.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", traj.bus_v_mag(r, c));
            out << ',' << buf;
        }
        out << "\n";
    }
}

} // namespace gridmtl
