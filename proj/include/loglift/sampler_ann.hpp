#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "loglift/chain.hpp"
#include "loglift/common.hpp"
#include "loglift/lifted.hpp"
#include "loglift/rng.hpp"
#include "loglift/sampler_exp.hpp"

namespace loglift {

// Annealing target mu_{sigma2, rho} ~ exp(-|x - c|^2 / (2 sigma2) - rho t)
// restricted to the body.  sigma2 = +inf drops the Gaussian factor and
// rho = n recovers the plain lift, so the exp sampler is the terminal
// special case of this family.
struct AnnealParams {
    double sigma2 = inf;
    double rho = 0.0;
    Eigen::VectorXd center;  // empty means the origin

    Eigen::VectorXd center_or_zero(int n) const {
        return center.size() == 0 ? Eigen::VectorXd::Zero(n)
                                  : Eigen::VectorXd(center);
    }
};

// Unnormalized log density of the annealing target (without the body
// indicator).  Used by estimators and the integrator's importance ratios.
inline double log_ann_density(const AnnealParams& p, const LiftedPoint& z) {
    double lp = -p.rho * z.t;
    if (std::isfinite(p.sigma2)) {
        Eigen::VectorXd d =
            p.center.size() == 0 ? Eigen::VectorXd(z.x) : Eigen::VectorXd(z.x - p.center);
        lp -= d.squaredNorm() / (2.0 * p.sigma2);
    }
    return lp;
}

// Backward half-step: rejection from the restricted Gaussian
//   G(w) = N(tau y + (1 - tau) c, tau h I_n) x N(s - rho h, h),
// tau = sigma2 / (sigma2 + h).  tau == 1 (sigma2 = inf) takes the exact
// exp-sampler arithmetic so the two chains agree stream-for-stream.
inline StepOutcome backward_ann(const LiftedBody& K, const AnnealParams& p,
                                const LiftedPoint& w, double h, double N, Rng& rng) {
    if (!(h > 0.0)) throw argument_error("backward_ann: h must be positive");
    if (!(p.sigma2 > 0.0)) throw argument_error("backward_ann: sigma2 must be positive");
    if (p.rho < 0.0) throw argument_error("backward_ann: rho must be nonnegative");
    int n = K.xdim();
    double tau = std::isinf(p.sigma2) ? 1.0 : p.sigma2 / (p.sigma2 + h);
    Eigen::VectorXd mean_x;
    if (tau == 1.0) {
        mean_x = w.x;
    } else {
        mean_x = tau * w.x + (1.0 - tau) * p.center_or_zero(n);
    }
    double mean_t = w.t - p.rho * h;
    double sd_x = std::sqrt(tau * h);
    double sd_t = std::sqrt(h);
    StepOutcome out;
    while (static_cast<double>(out.trials) < N) {
        ++out.trials;
        LiftedPoint z;
        z.x = mean_x + sd_x * rng.gaussian(n);
        z.t = mean_t + sd_t * rng.normal();
        if (K.contains(z)) {
            out.point = z;
            return out;
        }
    }
    out.failed = true;
    out.point = w;
    return out;
}

inline RunResult ps_ann_run(const LiftedBody& K, const AnnealParams& p,
                            const LiftedPoint& z0, const ChainConfig& cfg, Rng& rng) {
    RunResult res;
    res.point = z0;
    res.trace.seed = cfg.seed;
    if (cfg.k == 0) return res;
    long long q0 = K.potential().query_count();
    if (!K.contains(z0))
        throw argument_error("ps_ann_run: start point is not in the body");
    LiftedPoint z = z0;
    for (long long i = 0; i < cfg.k; ++i) {
        LiftedPoint y = forward_step(z, cfg.h, rng);
        StepOutcome s = backward_ann(K, p, y, cfg.h, cfg.N, rng);
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

inline RunResult ps_ann_run(const LiftedBody& K, const AnnealParams& p,
                            const LiftedPoint& z0, const ChainConfig& cfg) {
    Rng rng(cfg.seed);
    return ps_ann_run(K, p, z0, cfg, rng);
}

// h and N for the annealed chain:
//   h = 1 / (C_h_ann n^2 log S),  N = C_N 2 S log^2 S,  S = 16 k M / eta.
inline BudgetParams ann_params_from_k(int n, long long k, double M, double eta,
                                      const ParamScales& s = {}) {
    if (k <= 0 || M < 1.0 || !(eta > 0.0) || !(eta < 1.0))
        throw argument_error("ann_params_from_k: need k >= 1, M >= 1, eta in (0,1)");
    double S = 16.0 * static_cast<double>(k) * M / eta;
    double lS = std::log(S);
    double num = s.loglog_h != 0.0 ? sq(std::log(lS)) : 1.0;
    BudgetParams out;
    out.h = num / (s.C_h_ann * n * n * lS);
    out.N = s.C_N * 2.0 * S * lS * lS;
    out.k = k;
    return out;
}

// Chain length for target mu_{sigma2, rho} at accuracy eps:
//   k = C_k n^2 (sigma2 v l^2) log^2(M R / (eta eps)).
// sigma2 must be finite here; the sigma2 = inf endpoint goes through the
// exp budget instead.
inline BudgetParams ann_params(int n, double sigma2, double l, double R_hint,
                               double M, double eta, double eps,
                               const ParamScales& s = {}) {
    if (!std::isfinite(sigma2) || !(sigma2 > 0.0))
        throw argument_error("ann_params: need finite positive sigma2");
    if (!(eps > 0.0) || M < 1.0 || !(l > 0.0) || !(R_hint > 0.0))
        throw argument_error("ann_params: bad accuracy, warmness or geometry");
    double lg = std::max(std::log(M * R_hint / (eta * eps)), 1.0);
    double kf = s.C_k * n * n * std::max(sigma2, l * l) * lg * lg;
    long long k = static_cast<long long>(std::ceil(std::max(kf, 1.0)));
    return ann_params_from_k(n, k, M, eta, s);
}

}  // namespace loglift
