#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "loglift/common.hpp"
#include "loglift/lifted.hpp"
#include "loglift/trace.hpp"

namespace loglift {

// Parameters of one proximal chain.  N (the backward-rejection patience) is
// a double because the budget formulas produce values far beyond 2^63; it is
// only ever compared against a trial counter.
struct ChainConfig {
    double h = 0.0;
    double N = 0.0;
    long long k = 0;
    double M = 1.0;
    double eta = 0.1;
    std::uint64_t seed = 0;
};

struct StepOutcome {
    LiftedPoint point;
    long long trials = 0;
    bool failed = false;
};

struct RunResult {
    LiftedPoint point;
    bool failed = false;
    RunTrace trace;
};

// Library constants with overridable scales.  Defaults reproduce the
// analysis-grade budget formulas; tests and the CLI shrink them to reach
// desk-scale runtimes, and every run records nominal and effective values.
struct ParamScales {
    double C_k = 1.0;          // chain length multiplier
    double C_h_exp = 169.0;    // 13^2, h denominator for the plain lift
    double C_h_ann = 1.44e6;   // 1200^2, h denominator for annealed targets
    double C_N = 1.0;          // rejection patience multiplier
    double loglog_h = 0.0;     // nonzero: h gets the (log log S)^2 numerator
    double C_s = 4.0;          // rounding: sample-count constant
    double C_N_round = 1.0;    // rounding: chain-length constant
    double C_h_round = 1.0;    // rounding: step-size denominator constant
    double m_scale = 1e-8;     // integration: thread-count scale
    double eps_scale = 1e6;    // integration: per-phase accuracy scale
    double cov_norm_hint = -1.0;  // ||cov|| hint for exp budgets; <0 means n
    double q_renyi = 2.0;      // Renyi order in the exp budget

    std::map<std::string, double> to_map() const {
        return {{"C_k", C_k},
                {"C_h_exp", C_h_exp},
                {"C_h_ann", C_h_ann},
                {"C_N", C_N},
                {"loglog_h", loglog_h},
                {"C_s", C_s},
                {"C_N_round", C_N_round},
                {"C_h_round", C_h_round},
                {"m_scale", m_scale},
                {"eps_scale", eps_scale},
                {"cov_norm_hint", cov_norm_hint},
                {"q_renyi", q_renyi}};
    }

    static ParamScales from_map(const std::map<std::string, double>& m) {
        ParamScales s;
        for (const auto& [key, val] : m) {
            if (key == "C_k") s.C_k = val;
            else if (key == "C_h_exp") s.C_h_exp = val;
            else if (key == "C_h_ann") s.C_h_ann = val;
            else if (key == "C_N") s.C_N = val;
            else if (key == "loglog_h") s.loglog_h = val;
            else if (key == "C_s") s.C_s = val;
            else if (key == "C_N_round") s.C_N_round = val;
            else if (key == "C_h_round") s.C_h_round = val;
            else if (key == "m_scale") s.m_scale = val;
            else if (key == "eps_scale") s.eps_scale = val;
            else if (key == "cov_norm_hint") s.cov_norm_hint = val;
            else if (key == "q_renyi") s.q_renyi = val;
            else throw config_error("unknown scale override: " + key);
        }
        return s;
    }
};

}  // namespace loglift
