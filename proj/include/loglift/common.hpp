#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace loglift {

constexpr double inf = std::numeric_limits<double>::infinity();

// Setup / contract violations.  The CLI maps these to exit code 1.
struct argument_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct oracle_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Stochastic runtime failures.  The CLI maps these to exit code 2.
struct init_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct infeasible_start_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct degenerate_estimate_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// log(e^a + e^b) without overflow; absorbs -inf operands.
inline double log_add_exp(double a, double b) {
    if (a == -inf) return b;
    if (b == -inf) return a;
    double m = a > b ? a : b;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_sum_exp(const std::vector<double>& v) {
    double m = -inf;
    for (double x : v)
        if (x > m) m = x;
    if (m == -inf) return -inf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

inline double sq(double x) { return x * x; }

}  // namespace loglift
