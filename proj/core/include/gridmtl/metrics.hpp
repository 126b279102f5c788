#pragma once

#include <cstddef>

namespace gridmtl {

/// Binary confusion counts. Positive class = insecure (the alarm class),
/// so recall measures missed-alarm avoidance.
struct Confusion {
    long tp = 0, fp = 0, tn = 0, fn = 0;

    void add(bool pred_insecure, bool true_insecure) {
        if (pred_insecure && true_insecure) ++tp;
        else if (pred_insecure && !true_insecure) ++fp;
        else if (!pred_insecure && !true_insecure) ++tn;
        else ++fn;
    }
    long total() const { return tp + fp + tn + fn; }
    double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp); }
    double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn); }
    double tp_rate() const { return recall(); }
    double tn_rate() const { return tn + fp == 0 ? 0.0 : static_cast<double>(tn) / (tn + fp); }
};

/// F-beta; emphasis on recall for beta > 1. Zero when the denominator is 0.
inline double f_beta(double precision, double recall, double beta = 2.0) {
    double b2 = beta * beta;
    double denom = b2 * precision + recall;
    return denom == 0.0 ? 0.0 : (1.0 + b2) * precision * recall / denom;
}

inline double f2_of(const Confusion& c) { return f_beta(c.precision(), c.recall(), 2.0); }

} // namespace gridmtl
