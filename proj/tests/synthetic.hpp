#pragma once

#include <random>

#include "gridmtl/datagen.hpp"

namespace gridmtl::testing {

inline FeatureLayout tiny_layout(int m) {
    FeatureLayout lay;
    lay.segments = {{"gen_p", m}};
    for (int i = 0; i < m; ++i) lay.gen_ids.push_back(i + 1);
    return lay;
}

/// Linearly separable four-task dataset on two features.
inline Dataset separable_dataset(std::size_t n, std::uint64_t seed, int cond_dim = 0) {
    Dataset ds;
    ds.layout = tiny_layout(2);
    ds.cond_dim = cond_dim;
    ds.seed = seed;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.x.resize(2);
        s.x << u(rng), u(rng);
        s.c = Eigen::VectorXd::Zero(cond_dim);
        s.y.static_ok = s.x[0] > 0 ? 1 : 0;
        s.y.small_signal_ok = s.x[1] > 0 ? 1 : 0;
        s.y.voltage_ok = s.x[0] + s.x[1] > 0 ? 1 : 0;
        s.y.transient_ok = s.x[0] - s.x[1] > 0 ? 1 : 0;
        s.topology_id = static_cast<int>(i % 2);
        s.contingency_id = 0;
        s.sample_id = static_cast<long>(i);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

/// Random-feature dataset with an imbalanced, threshold-driven label on
/// every task (insecure fraction ~ 1/(1+ratio)).
inline Dataset imbalanced_dataset(std::size_t n, double ratio, std::uint64_t seed) {
    Dataset ds;
    ds.layout = tiny_layout(4);
    ds.cond_dim = 0;
    ds.seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    const double cut = ratio; // quantile knob; callers pass the z-cut directly
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.x.resize(4);
        for (int f = 0; f < 4; ++f) s.x[f] = g(rng);
        s.c = Eigen::VectorXd::Zero(0);
        double score = 0.8 * s.x[0] + 0.5 * s.x[1] + 0.2 * s.x[2] + 0.05 * g(rng);
        int secure = score < cut ? 1 : 0; // rare high scores are the insecure class
        s.y.static_ok = secure;
        s.y.small_signal_ok = secure;
        s.y.voltage_ok = secure;
        s.y.transient_ok = secure;
        s.topology_id = 0;
        s.contingency_id = 0;
        s.sample_id = static_cast<long>(i);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

} // namespace gridmtl::testing
