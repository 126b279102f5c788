#include "gridmtl/powerflow.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridmtl/dynamics.hpp"

namespace gridmtl {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::MatrixXcd build_admittance(const Network& net) {
    const auto n = static_cast<Eigen::Index>(net.n_buses());
    MatrixXcd y = MatrixXcd::Zero(n, n);
    for (const auto& l : net.lines) {
        if (!l.in_service) continue;
        int f = net.bus_index(l.from_bus);
        int t = net.bus_index(l.to_bus);
        Complex ys = 1.0 / l.series_impedance;
        Complex ych(0.0, l.charging_susceptance / 2.0);
        y(f, f) += ys + ych;
        y(t, t) += ys + ych;
        y(f, t) -= ys;
        y(t, f) -= ys;
    }
    for (std::size_t i = 0; i < net.n_buses(); ++i)
        y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += net.buses[i].shunt_admittance;
    return y;
}

namespace {

struct InjectionSpec {
    VectorXd p_spec, q_spec;        // net scheduled injection per bus
    std::vector<int> ang_vars;      // bus indices with free angle (non-slack)
    std::vector<int> vm_vars;       // bus indices with free magnitude (PQ)
};

InjectionSpec make_spec(const Network& net, const VectorXd& load_p, const VectorXd& load_q) {
    const auto n = static_cast<Eigen::Index>(net.n_buses());
    InjectionSpec s;
    s.p_spec = -load_p;
    s.q_spec = -load_q;
    for (const auto& g : net.generators) s.p_spec[net.bus_index(g.bus)] += g.p_set;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (net.buses[i].kind != BusKind::Slack) s.ang_vars.push_back(static_cast<int>(i));
        if (net.buses[i].kind == BusKind::PQ) s.vm_vars.push_back(static_cast<int>(i));
    }
    return s;
}

void calc_injections(const MatrixXcd& y, const VectorXd& v, const VectorXd& ang,
                     VectorXd& p_calc, VectorXd& q_calc) {
    const Eigen::Index n = v.size();
    p_calc.setZero(n);
    q_calc.setZero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double pi = 0, qi = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            double g = y(i, j).real(), b = y(i, j).imag();
            if (g == 0.0 && b == 0.0) continue;
            double dth = ang[i] - ang[j];
            double c = std::cos(dth), s = std::sin(dth);
            pi += v[j] * (g * c + b * s);
            qi += v[j] * (g * s - b * c);
        }
        p_calc[i] = v[i] * pi;
        q_calc[i] = v[i] * qi;
    }
}

MismatchModel evaluate_mismatch_at(const Network& net, const MatrixXcd& y, const InjectionSpec& spec,
                                   const VectorXd& v, const VectorXd& ang) {
    VectorXd p_calc, q_calc;
    calc_injections(y, v, ang, p_calc, q_calc);

    const auto na = static_cast<Eigen::Index>(spec.ang_vars.size());
    const auto nv = static_cast<Eigen::Index>(spec.vm_vars.size());
    MismatchModel m;
    m.mismatch.resize(na + nv);
    for (Eigen::Index r = 0; r < na; ++r) m.mismatch[r] = spec.p_spec[spec.ang_vars[r]] - p_calc[spec.ang_vars[r]];
    for (Eigen::Index r = 0; r < nv; ++r) m.mismatch[na + r] = spec.q_spec[spec.vm_vars[r]] - q_calc[spec.vm_vars[r]];

    // d(calc)/d(state); the mismatch Jacobian is its negation.
    MatrixXd a(na + nv, na + nv);
    auto gij = [&](int i, int j) { return y(i, j).real(); };
    auto bij = [&](int i, int j) { return y(i, j).imag(); };
    for (Eigen::Index r = 0; r < na; ++r) {
        int i = spec.ang_vars[r];
        for (Eigen::Index c = 0; c < na; ++c) {
            int j = spec.ang_vars[c];
            if (i == j) {
                a(r, c) = -q_calc[i] - bij(i, i) * v[i] * v[i];
            } else {
                double dth = ang[i] - ang[j];
                a(r, c) = v[i] * v[j] * (gij(i, j) * std::sin(dth) - bij(i, j) * std::cos(dth));
            }
        }
        for (Eigen::Index c = 0; c < nv; ++c) {
            int j = spec.vm_vars[c];
            if (i == j) {
                a(r, na + c) = p_calc[i] / v[i] + gij(i, i) * v[i];
            } else {
                double dth = ang[i] - ang[j];
                a(r, na + c) = v[i] * (gij(i, j) * std::cos(dth) + bij(i, j) * std::sin(dth));
            }
        }
    }
    for (Eigen::Index r = 0; r < nv; ++r) {
        int i = spec.vm_vars[r];
        for (Eigen::Index c = 0; c < na; ++c) {
            int j = spec.ang_vars[c];
            if (i == j) {
                a(na + r, c) = p_calc[i] - gij(i, i) * v[i] * v[i];
            } else {
                double dth = ang[i] - ang[j];
                a(na + r, c) = -v[i] * v[j] * (gij(i, j) * std::cos(dth) + bij(i, j) * std::sin(dth));
            }
        }
        for (Eigen::Index c = 0; c < nv; ++c) {
            int j = spec.vm_vars[c];
            if (i == j) {
                a(na + r, na + c) = q_calc[i] / v[i] - bij(i, i) * v[i];
            } else {
                double dth = ang[i] - ang[j];
                a(na + r, na + c) = v[i] * (gij(i, j) * std::sin(dth) - bij(i, j) * std::cos(dth));
            }
        }
    }
    m.jacobian = -a;
    return m;
}

void fill_line_flows(const Network& net, PowerFlowSolution& sol) {
    const auto nl = static_cast<Eigen::Index>(net.n_lines());
    sol.line_flow_p_from.setZero(nl);
    sol.line_flow_q_from.setZero(nl);
    sol.line_flow_p_to.setZero(nl);
    sol.line_flow_q_to.setZero(nl);
    for (Eigen::Index li = 0; li < nl; ++li) {
        const Line& l = net.lines[li];
        if (!l.in_service) continue;
        int f = net.bus_index(l.from_bus);
        int t = net.bus_index(l.to_bus);
        Complex vf = std::polar(sol.v_mag[f], sol.v_ang[f]);
        Complex vt = std::polar(sol.v_mag[t], sol.v_ang[t]);
        Complex ys = 1.0 / l.series_impedance;
        Complex ych(0.0, l.charging_susceptance / 2.0);
        Complex sf = vf * std::conj((vf - vt) * ys + vf * ych);
        Complex st = vt * std::conj((vt - vf) * ys + vt * ych);
        sol.line_flow_p_from[li] = sf.real();
        sol.line_flow_q_from[li] = sf.imag();
        sol.line_flow_p_to[li] = st.real();
        sol.line_flow_q_to[li] = st.imag();
    }
}

void allocate_generation(const Network& net, const VectorXd& load_p, const VectorXd& load_q,
                         PowerFlowSolution& sol) {
    VectorXd p_calc, q_calc;
    calc_injections(build_admittance(net), sol.v_mag, sol.v_ang, p_calc, q_calc);
    std::vector<int> gens_at_bus(net.n_buses(), 0);
    for (const auto& g : net.generators) gens_at_bus[net.bus_index(g.bus)]++;

    const auto ng = static_cast<Eigen::Index>(net.n_generators());
    sol.gen_p.setZero(ng);
    sol.gen_q.setZero(ng);
    for (Eigen::Index gi = 0; gi < ng; ++gi) {
        const Generator& g = net.generators[gi];
        int b = net.bus_index(g.bus);
        double share = 1.0 / gens_at_bus[b];
        if (net.buses[b].kind == BusKind::Slack)
            sol.gen_p[gi] = (p_calc[b] + load_p[b]) * share;
        else
            sol.gen_p[gi] = g.p_set;
        sol.gen_q[gi] = (q_calc[b] + load_q[b]) * share;
    }
}

} // namespace

MismatchModel evaluate_mismatch(const Network& net, const VectorXd& load_p, const VectorXd& load_q,
                                const VectorXd& v_mag, const VectorXd& v_ang) {
    return evaluate_mismatch_at(net, build_admittance(net), make_spec(net, load_p, load_q), v_mag, v_ang);
}

PowerFlowSolution solve_power_flow(const Network& net, const VectorXd& load_p, const VectorXd& load_q,
                                   const PowerFlowOptions& opts) {
    const auto n = static_cast<Eigen::Index>(net.n_buses());
    if (load_p.size() != n || load_q.size() != n)
        throw ValidationError("load vector length does not match bus count");
    if ((load_p.array() < 0).any())
        throw ValidationError("negative load");

    MatrixXcd y = build_admittance(net);
    InjectionSpec spec = make_spec(net, load_p, load_q);

    PowerFlowSolution sol;
    sol.v_mag.setOnes(n);
    sol.v_ang.setZero(n);
    // Flat start with setpoint magnitudes on voltage-controlled buses.
    for (const auto& g : net.generators) sol.v_mag[net.bus_index(g.bus)] = g.v_set;

    MismatchModel m = evaluate_mismatch_at(net, y, spec, sol.v_mag, sol.v_ang);
    double norm = m.mismatch.size() ? m.mismatch.cwiseAbs().maxCoeff() : 0.0;
    sol.mismatch_history.push_back(norm);
    sol.max_mismatch = norm;

    for (int it = 0; it < opts.max_iterations && norm >= opts.tolerance; ++it) {
        Eigen::FullPivLU<MatrixXd> lu(m.jacobian);
        if (!lu.isInvertible()) {
            sol.singular_jacobian = true;
            break;
        }
        VectorXd dx = lu.solve(-m.mismatch);
        if (!dx.allFinite()) break;

        const auto na = static_cast<Eigen::Index>(spec.ang_vars.size());
        for (Eigen::Index r = 0; r < na; ++r) sol.v_ang[spec.ang_vars[r]] += dx[r];
        for (std::size_t r = 0; r < spec.vm_vars.size(); ++r)
            sol.v_mag[spec.vm_vars[r]] += dx[na + static_cast<Eigen::Index>(r)];
        sol.iterations = it + 1;

        if ((sol.v_mag.array() <= 0).any() || !sol.v_mag.allFinite() || !sol.v_ang.allFinite()) break;

        m = evaluate_mismatch_at(net, y, spec, sol.v_mag, sol.v_ang);
        norm = m.mismatch.cwiseAbs().maxCoeff();
        sol.mismatch_history.push_back(norm);
        sol.max_mismatch = norm;
    }

    sol.converged = std::isfinite(norm) && norm < opts.tolerance && !sol.singular_jacobian;
    if (sol.converged) {
        fill_line_flows(net, sol);
        allocate_generation(net, load_p, load_q, sol);
    }
    return sol;
}

Eigen::VectorXd compute_line_flows(const Network& net, const PowerFlowSolution& sol) {
    if (!sol.converged) throw ValidationError("line flows requested on a non-converged solution");
    const auto nl = static_cast<Eigen::Index>(net.n_lines());
    VectorXd s(nl);
    for (Eigen::Index li = 0; li < nl; ++li)
        s[li] = std::hypot(sol.line_flow_p_from[li], sol.line_flow_q_from[li]);
    return s;
}

int FeatureLayout::total() const {
    int t = 0;
    for (const auto& [name, w] : segments) t += w;
    return t;
}

int FeatureLayout::segment_offset(const std::string& name) const {
    int off = 0;
    for (const auto& [n, w] : segments) {
        if (n == name) return off;
        off += w;
    }
    return -1;
}

std::string FeatureLayout::descriptor() const {
    nlohmann::json j;
    j["segments"] = nlohmann::json::array();
    for (const auto& [n, w] : segments) j["segments"].push_back({{"name", n}, {"width", w}});
    j["gen_ids"] = gen_ids;
    j["bus_ids"] = bus_ids;
    j["line_ids"] = line_ids;
    return j.dump();
}

FeatureLayout FeatureLayout::from_descriptor(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("layout descriptor parse failure: ") + e.what());
    }
    FeatureLayout lay;
    for (const auto& seg : j.at("segments"))
        lay.segments.emplace_back(seg.at("name").get<std::string>(), seg.at("width").get<int>());
    lay.gen_ids = j.at("gen_ids").get<std::vector<int>>();
    lay.bus_ids = j.at("bus_ids").get<std::vector<int>>();
    lay.line_ids = j.at("line_ids").get<std::vector<int>>();
    return lay;
}

FeatureLayout make_feature_layout(const Network& net) {
    FeatureLayout lay;
    const int g = static_cast<int>(net.n_generators());
    const int b = static_cast<int>(net.n_buses());
    const int f = static_cast<int>(net.n_lines());
    lay.segments = {{"gen_p", g},    {"gen_q", g},    {"load_p", b},  {"load_q", b},
                    {"line_p", f},   {"line_q", f},   {"bus_vmag", b}, {"bus_vang", b}};
    for (const auto& e : net.generators) lay.gen_ids.push_back(e.id);
    for (const auto& e : net.buses) lay.bus_ids.push_back(e.id);
    for (const auto& e : net.lines) lay.line_ids.push_back(e.id);
    return lay;
}

FeatureVector build_feature_vector(const Network& net, const PowerFlowSolution& sol,
                                   const VectorXd& load_p, const VectorXd& load_q) {
    if (!sol.converged) throw ValidationError("feature vector requested on a non-converged solution");
    const auto n = static_cast<Eigen::Index>(net.n_buses());
    if (load_p.size() != n || load_q.size() != n)
        throw ValidationError("load vector length does not match bus count");

    FeatureVector fv;
    fv.layout = make_feature_layout(net);
    fv.values.resize(fv.layout.total());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < sol.gen_p.size(); ++i) fv.values[k++] = sol.gen_p[i];
    for (Eigen::Index i = 0; i < sol.gen_q.size(); ++i) fv.values[k++] = sol.gen_q[i];
    for (Eigen::Index i = 0; i < n; ++i) fv.values[k++] = load_p[i];
    for (Eigen::Index i = 0; i < n; ++i) fv.values[k++] = load_q[i];
    for (Eigen::Index i = 0; i < sol.line_flow_p_from.size(); ++i) fv.values[k++] = sol.line_flow_p_from[i];
    for (Eigen::Index i = 0; i < sol.line_flow_q_from.size(); ++i) fv.values[k++] = sol.line_flow_q_from[i];
    for (Eigen::Index i = 0; i < n; ++i) fv.values[k++] = sol.v_mag[i];
    for (Eigen::Index i = 0; i < n; ++i) fv.values[k++] = sol.v_ang[i];
    return fv;
}

ConditionVector build_condition_vector(const Network& net, const std::optional<Contingency>& cont) {
    const auto nl = static_cast<Eigen::Index>(net.n_lines());
    const auto nb = static_cast<Eigen::Index>(net.n_buses());
    ConditionVector cv;
    cv.values.setZero(nl + nb);
    if (!cont) return cv;

    int li = net.line_index(cont->tripped_line);
    if (!net.lines[li].in_service)
        throw ValidationError("contingency trips out-of-service line " + std::to_string(cont->tripped_line));
    int bi = net.bus_index(cont->fault_bus);
    cv.values[li] = 1.0;
    cv.values[nl + bi] = 1.0;
    return cv;
}

} // namespace gridmtl
