#include <doctest.h>

#include <random>

#include "gridmtl/labeling.hpp"

using namespace gridmtl;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kPi = 3.14159265358979323846;

Trajectory make_traj(const std::vector<std::vector<double>>& deltas_deg, double dt = 1e-3) {
    Trajectory t;
    const auto rows = static_cast<Eigen::Index>(deltas_deg.size());
    const auto ng = static_cast<Eigen::Index>(deltas_deg.front().size());
    t.dt_s = dt;
    t.time_s.resize(rows);
    t.delta.resize(rows, ng);
    t.omega_dev = MatrixXd::Zero(rows, ng);
    t.bus_v_mag = MatrixXd::Ones(rows, 1);
    for (Eigen::Index r = 0; r < rows; ++r) {
        t.time_s[r] = static_cast<double>(r) * dt;
        for (Eigen::Index g = 0; g < ng; ++g)
            t.delta(r, g) = deltas_deg[static_cast<std::size_t>(r)][static_cast<std::size_t>(g)] * kPi / 180.0;
    }
    return t;
}

Trajectory voltage_traj(const std::vector<double>& v, double dt, int post_clear = 0) {
    Trajectory t = make_traj(std::vector<std::vector<double>>(v.size(), {0.0, 0.0}), dt);
    t.bus_v_mag.resize(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) t.bus_v_mag(static_cast<Eigen::Index>(i), 0) = v[i];
    t.post_clear_index = post_clear;
    return t;
}

} // namespace

TEST_CASE("TSI arithmetic") {
    CHECK(tsi(make_traj({{0, 0}, {10, 10}})) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(tsi(make_traj({{0, 0}, {0, 180}})) == doctest::Approx(100.0 / 3.0).epsilon(1e-9));
    // decision boundary: (360 - d) / (360 + d) = 0.1  =>  d = 3240/11
    CHECK(std::abs(tsi(make_traj({{0, 0}, {0, 3240.0 / 11.0}})) - 10.0) < 1e-9);

    Trajectory diverged = make_traj({{0, 0}});
    diverged.divergent = true;
    CHECK(tsi(diverged) == -100.0);

    Trajectory single = make_traj({{0}});
    CHECK_THROWS_AS(tsi(single), ValidationError);
}

TEST_CASE("TSI is monotone decreasing in the separation") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> sep(0.0, 360.0);
    for (int i = 0; i < 200; ++i) {
        double a = sep(rng), b = sep(rng);
        if (a > b) std::swap(a, b);
        double tsi_a = tsi(make_traj({{0, a}}));
        double tsi_b = tsi(make_traj({{0, b}}));
        if (a < b) CHECK(tsi_a > tsi_b);
    }
}

TEST_CASE("transient label threshold semantics") {
    LabelThresholds th;
    CHECK(label_transient(make_traj({{0, 0}}), th) == 1);            // TSI 100
    CHECK(label_transient(make_traj({{0, 3240.0 / 11.0}}), th) == 1); // exactly 10 stays secure
    double just_over = 3240.0 / 11.0 + 0.05;                          // TSI 9.99...
    CHECK(label_transient(make_traj({{0, just_over}}), th) == 0);
}

TEST_CASE("small-signal label on mode lists") {
    LabelThresholds th; // band 0.25..1.0 Hz, zeta_min 3%
    using C = std::complex<double>;
    CHECK(label_small_signal({C(-0.1, kPi), C(-0.1, -kPi)}, th) == 1);   // 3.18% at 0.5 Hz
    CHECK(label_small_signal({C(-0.05, kPi), C(-0.05, -kPi)}, th) == 0); // 1.59% at 0.5 Hz
    CHECK(label_small_signal({C(-0.01, 20 * kPi)}, th) == 1);            // 10 Hz, out of band
    CHECK(label_small_signal({C(0.0, 0.0)}, th) == 1);                   // rigid-body mode ignored

    SUBCASE("conjugate duplication does not change the bit") {
        std::vector<C> base{C(-0.05, kPi)};
        std::vector<C> dup{C(-0.05, kPi), C(-0.05, -kPi), C(-0.05, kPi)};
        CHECK(label_small_signal(base, th) == label_small_signal(dup, th));
    }
}

TEST_CASE("voltage dwell accounting") {
    LabelThresholds th; // band [0.8, 1.1], dwell 0.5 s
    const double dt = 1e-2;

    SUBCASE("all nominal is secure") {
        CHECK(label_voltage(voltage_traj(std::vector<double>(200, 1.0), dt), th) == 1);
    }
    SUBCASE("0.6 s below band is insecure") {
        std::vector<double> v(200, 1.0);
        for (int i = 50; i < 50 + 61; ++i) v[static_cast<std::size_t>(i)] = 0.75; // 0.60 s span
        CHECK(label_voltage(voltage_traj(v, dt), th) == 0);
    }
    SUBCASE("two short non-contiguous dips stay secure") {
        std::vector<double> v(300, 1.0);
        for (int i = 10; i < 10 + 41; ++i) v[static_cast<std::size_t>(i)] = 0.75;  // 0.40 s
        for (int i = 150; i < 150 + 31; ++i) v[static_cast<std::size_t>(i)] = 0.79; // 0.30 s
        CHECK(label_voltage(voltage_traj(v, dt), th) == 1);
    }
    SUBCASE("fault-on window is excluded") {
        std::vector<double> v(200, 0.1); // bolted fault until sample 100
        for (int i = 100; i < 200; ++i) v[static_cast<std::size_t>(i)] = 1.0;
        CHECK(label_voltage(voltage_traj(v, dt, 100), th) == 1);
    }
    SUBCASE("overvoltage counts too") {
        std::vector<double> v(200, 1.0);
        for (int i = 20; i < 20 + 80; ++i) v[static_cast<std::size_t>(i)] = 1.15;
        CHECK(label_voltage(voltage_traj(v, dt), th) == 0);
    }
}

TEST_CASE("overload index arithmetic") {
    VectorXd ones3 = VectorXd::Ones(3);
    VectorXd w = VectorXd::Constant(3, 1.0 / 3.0);
    CHECK(overload_index(ones3, ones3, w, 2.0) == doctest::Approx(1.0).epsilon(1e-12));

    VectorXd s1(1), m1(1), w1(1);
    s1 << 0.5;
    m1 << 1.0;
    w1 << 1.0;
    CHECK(overload_index(s1, m1, w1, 2.0) == doctest::Approx(0.25).epsilon(1e-12));

    VectorXd s2(2), m2(2), w2(2);
    s2 << 0.0, 1.0;
    m2 << 1.0, 1.0;
    w2 << 0.7, 0.3;
    CHECK(overload_index(s2, m2, w2, 7.0) == doctest::Approx(0.3).epsilon(1e-12));

    CHECK_THROWS_AS(overload_index(s1, m2, w2, 2.0), ValidationError);

    SUBCASE("homogeneous in a common flow scale") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(0.1, 2.0);
        for (int trial = 0; trial < 50; ++trial) {
            VectorXd s(4), m(4), ww(4);
            for (int i = 0; i < 4; ++i) {
                s[i] = u(rng);
                m[i] = u(rng) + 0.2;
                ww[i] = u(rng);
            }
            double factor = u(rng) * 3.0;
            double base = overload_index(s, m, ww, 2.0);
            double scaled = overload_index(factor * s, factor * m, ww, 2.0);
            CHECK(scaled == doctest::Approx(base).epsilon(1e-10));
        }
    }
}

TEST_CASE("static label combines the index and the hard per-line limit") {
    LabelThresholds th; // tau = 1, p = 2, uniform weights
    VectorXd rating = VectorXd::Ones(4);

    CHECK(label_static(VectorXd::Constant(4, 0.5), rating, th) == 1); // f_x = 0.25
    CHECK(label_static(VectorXd::Ones(4), rating, th) == 1);          // f_x = 1 is not > tau

    VectorXd one_over = VectorXd::Constant(4, 0.5);
    one_over[2] = 1.01;
    CHECK(label_static(one_over, rating, th) == 0); // hard limit

    CHECK(label_static(VectorXd::Constant(4, 1.2), rating, th) == 0); // f_x > 1
}

TEST_CASE("label_all is the conjunction with the divergence clamp") {
    LabelThresholds th;
    Trajectory good = make_traj({{0, 1}, {0, 2}});
    std::vector<std::complex<double>> quiet_modes{{-1.0, 2.0 * kPi * 0.5}};
    LineFlowSummary flows{VectorXd::Constant(3, 0.4), VectorXd::Ones(3)};

    LabelVector all_pass = label_all(good, quiet_modes, flows, th);
    CHECK(all_pass.overall_secure());

    LabelVector one_fail = all_pass;
    one_fail.small_signal_ok = 0;
    CHECK_FALSE(one_fail.overall_secure());

    Trajectory diverged = good;
    diverged.divergent = true;
    LabelVector y = label_all(diverged, quiet_modes, flows, th);
    CHECK(y.transient_ok == 0);
    CHECK_FALSE(y.overall_secure());
}

TEST_CASE("labelers are pure") {
    LabelThresholds th;
    Trajectory t = make_traj({{0, 10}, {0, 250}});
    std::vector<std::complex<double>> modes{{-0.02, 3.0}};
    LineFlowSummary flows{VectorXd::Constant(2, 0.9), VectorXd::Ones(2)};
    LabelVector a = label_all(t, modes, flows, th);
    LabelVector b = label_all(t, modes, flows, th);
    CHECK(a.static_ok == b.static_ok);
    CHECK(a.small_signal_ok == b.small_signal_ok);
    CHECK(a.voltage_ok == b.voltage_ok);
    CHECK(a.transient_ok == b.transient_ok);
}
