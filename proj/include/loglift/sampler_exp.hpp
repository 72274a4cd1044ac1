#pragma once

#include <cmath>

#include "loglift/chain.hpp"
#include "loglift/common.hpp"
#include "loglift/lifted.hpp"
#include "loglift/rng.hpp"

namespace loglift {

// Forward half-step: y ~ N(z, h I_{n+1}).  Draw order is the x block then
// the t coordinate; the annealed sampler uses the same order so that its
// sigma2 = inf limit reproduces this chain stream-for-stream.
inline LiftedPoint forward_step(const LiftedPoint& z, double h, Rng& rng) {
    if (!(h > 0.0)) throw argument_error("forward_step: h must be positive");
    int n = static_cast<int>(z.x.size());
    double sh = std::sqrt(h);
    LiftedPoint y;
    y.x = z.x + sh * rng.gaussian(n);
    y.t = z.t + sh * rng.normal();
    return y;
}

// Backward half-step for the plain lift e^{-nt}|_K: rejection from
// N(y - h n e_{n+1}, h I_{n+1}) until the proposal lands in K.  Gives up
// after ceil(N) trials; each trial costs one oracle query.
inline StepOutcome backward_exp(const LiftedBody& K, const LiftedPoint& y, double h,
                                double N, Rng& rng) {
    if (!(h > 0.0)) throw argument_error("backward_exp: h must be positive");
    int n = K.xdim();
    double sh = std::sqrt(h);
    StepOutcome out;
    while (static_cast<double>(out.trials) < N) {
        ++out.trials;
        LiftedPoint z;
        z.x = y.x + sh * rng.gaussian(n);
        z.t = y.t - h * n + sh * rng.normal();
        if (K.contains(z)) {
            out.point = z;
            return out;
        }
    }
    out.failed = true;
    out.point = y;
    return out;
}

// Full chain: k proximal steps from z0.  k = 0 returns z0 untouched with
// zero queries.  A failed backward step aborts the run; the trace still
// reports everything spent up to that point.
inline RunResult ps_exp_run(const LiftedBody& K, const LiftedPoint& z0,
                            const ChainConfig& cfg, Rng& rng) {
    RunResult res;
    res.point = z0;
    res.trace.seed = cfg.seed;
    if (cfg.k == 0) return res;
    long long q0 = K.potential().query_count();
    if (!K.contains(z0))
        throw argument_error("ps_exp_run: start point is not in the body");
    LiftedPoint z = z0;
    for (long long i = 0; i < cfg.k; ++i) {
        LiftedPoint y = forward_step(z, cfg.h, rng);
        StepOutcome s = backward_exp(K, y, cfg.h, cfg.N, rng);
        res.trace.proposals += s.trials;
        if (s.failed) {
            res.failed = true;
            res.trace.failures = 1;
            break;
        }
        z = s.point;
    }
    res.point = z;
    res.trace.queries = K.potential().query_count() - q0;
    return res;
}

inline RunResult ps_exp_run(const LiftedBody& K, const LiftedPoint& z0,
                            const ChainConfig& cfg) {
    Rng rng(cfg.seed);
    return ps_exp_run(K, z0, cfg, rng);
}

// Retry a failed run from the same start, each attempt on its own
// sub-stream.  Traces accumulate across attempts.
inline RunResult ps_exp_with_restarts(const LiftedBody& K, const LiftedPoint& z0,
                                      const ChainConfig& cfg, int max_restarts,
                                      Rng& rng) {
    RunResult agg;
    agg.point = z0;
    agg.failed = true;
    agg.trace.seed = cfg.seed;
    for (int attempt = 0; attempt <= max_restarts; ++attempt) {
        Rng sub = rng.sub("restart", static_cast<std::uint64_t>(attempt));
        RunResult res = ps_exp_run(K, z0, cfg, sub);
        agg.trace.queries += res.trace.queries;
        agg.trace.proposals += res.trace.proposals;
        agg.trace.failures += res.trace.failures;
        if (!res.failed) {
            agg.point = res.point;
            agg.failed = false;
            break;
        }
    }
    return agg;
}

struct BudgetParams {
    double h = 0.0;
    double N = 0.0;
    long long k = 0;
};

// h and N for a given chain length, warmness and failure budget:
//   h = 1 / (C_h_exp n^2 log S),  N = C_N S log^2 S,  S = 16 k M / eta.
// The loglog_h switch replaces the numerator of h by (log log S)^2.
inline BudgetParams exp_params_from_k(int n, long long k, double M, double eta,
                                      const ParamScales& s = {}) {
    if (k <= 0 || M < 1.0 || !(eta > 0.0) || !(eta < 1.0))
        throw argument_error("exp_params_from_k: need k >= 1, M >= 1, eta in (0,1)");
    double S = 16.0 * static_cast<double>(k) * M / eta;
    double lS = std::log(S);
    double num = s.loglog_h != 0.0 ? sq(std::log(lS)) : 1.0;
    BudgetParams out;
    out.h = num / (s.C_h_exp * n * n * lS);
    out.N = s.C_N * S * lS * lS;
    out.k = k;
    return out;
}

// Two-pass budget: the eta-dependent log factor of k needs k itself, so the
// first pass sets it to one and the second pass closes the loop.
inline BudgetParams exp_params(int n, double eps, double eta, double M,
                               const ParamScales& s = {}) {
    if (!(eps > 0.0) || !(eps < 1.0) || M < 1.0)
        throw argument_error("exp_params: need eps in (0,1), M >= 1");
    double cov = s.cov_norm_hint >= 0.0 ? s.cov_norm_hint : static_cast<double>(n);
    double base = s.C_k * s.q_renyi * n * n * std::max(cov, 1.0) *
                  std::max(std::log(M / eps), 1.0);
    double k1 = std::max(base, 1.0);
    double k2 = base * std::max(std::log(16.0 * k1 * M / eta), 1.0);
    long long k = static_cast<long long>(std::ceil(std::max(k2, 1.0)));
    return exp_params_from_k(n, k, M, eta, s);
}

inline ChainConfig make_chain_config(const BudgetParams& p, double M, double eta,
                                     std::uint64_t seed) {
    return {p.h, p.N, p.k, M, eta, seed};
}

}  // namespace loglift
