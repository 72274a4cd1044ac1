#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "loglift/chain.hpp"
#include "loglift/common.hpp"
#include "loglift/lifted.hpp"
#include "loglift/potential.hpp"
#include "loglift/rng.hpp"
#include "loglift/sampler_ann.hpp"
#include "loglift/trace.hpp"

namespace loglift {

// A thread got stuck while being advanced to the next annealing target, or
// an estimate degenerated.  Carries which phase and which thread, plus the
// trace accumulated so far.
class integration_error : public std::runtime_error {
  public:
    integration_error(const std::string& what, int phase, int thread, RunTrace trace)
        : std::runtime_error(what + " (phase " + std::to_string(phase) + ", thread " +
                             std::to_string(thread) + ")"),
          phase_(phase),
          thread_(thread),
          trace_(std::move(trace)) {}

    int phase() const { return phase_; }
    int thread() const { return thread_; }
    const RunTrace& trace() const { return trace_; }

  private:
    int phase_;
    int thread_;
    RunTrace trace_;
};

// log of the closed-form initial integral
//   integral of exp(-n|x|^2/2) 1_I(t) = (2 pi / n)^{n/2} (15 + 13 l)
// over R^n x I with I = [-11, 4 + 13 l].
inline double initial_integral_closed_form(int n, double l) {
    if (n < 1 || !(l > 0.0))
        throw argument_error("initial_integral_closed_form: need n >= 1 and l > 0");
    return 0.5 * n * std::log(2.0 * std::numbers::pi / n) + std::log(15.0 + 13.0 * l);
}

// The annealing schedule: pairs (sigma2, rho) from (1/n, 0) to (inf, n),
// three while-loops.  Fixed by (n, C, eps); the scales only size the thread
// count m and the per-sample accuracy epsilon_sample.
struct PhasePlan {
    std::vector<std::pair<double, double>> phases;
    long long m = 0;
    double epsilon_sample = 0.0;
    double l = 0.0;
    double C = 0.0;
    // Unscaled budget values, recorded alongside the effective ones.
    double m_nominal = 0.0;
    double epsilon_nominal = 0.0;
};

inline PhasePlan phase_plan(int n, double C, double eps, const ParamScales& s = {}) {
    if (n < 1) throw argument_error("phase_plan: need n >= 1");
    if (!(eps > 0.0) || !(eps < 1.0)) throw argument_error("phase_plan: eps must be in (0,1)");
    if (!(C > 0.0) || C * C * n < 1.0)
        throw argument_error("phase_plan: need C > 0 with C^2 n >= 1");

    PhasePlan plan;
    plan.C = C;
    plan.l = std::max(C * C, std::log(8.0 * std::numbers::e / eps));
    const double l = plan.l;
    const double C2n = C * C * n;

    double sigma2 = 1.0 / n;
    double rho = 0.0;
    plan.phases.emplace_back(sigma2, rho);

    // Phase I: grow sigma2 to 1, then switch on the exponential tilt.
    while (sigma2 <= 1.0) {
        if (sigma2 == 1.0) {
            rho = 1.0 / (28.0 * l);
            plan.phases.emplace_back(sigma2, rho);
            break;
        }
        sigma2 = std::min(1.0, sigma2 * (1.0 + 1.0 / n));
        plan.phases.emplace_back(sigma2, 0.0);
    }

    // Phase II: grow rho to n by factors beta, each split into a
    // (sigma2 down, rho up) step and a (sigma2 back up) step.  The final
    // beta lands rho on n exactly.
    while (rho < n) {
        const double beta0 = 1.0 + 1.0 / (28.0 * n * l);
        const bool last = !(beta0 * rho < n);
        const double beta = last ? n / rho : beta0;
        const double rho_next = last ? static_cast<double>(n) : beta * rho;
        plan.phases.emplace_back(sigma2 / beta, rho_next);
        plan.phases.emplace_back(sigma2, rho_next);
        rho = rho_next;
    }

    // Phase III: grow sigma2 to C^2 n, then drop the Gaussian factor.
    while (sigma2 <= C2n) {
        if (sigma2 == C2n) {
            plan.phases.emplace_back(inf, rho);
            break;
        }
        sigma2 = std::min(C2n, sigma2 * (1.0 + sigma2 / C2n));
        plan.phases.emplace_back(sigma2, rho);
    }

    plan.m_nominal =
        1e11 * l * std::log(n * l) * std::log(C2n) / (eps * eps);
    plan.epsilon_nominal =
        eps * eps / (1e15 * C * C * n * l * l * std::pow(std::log(C2n * l), 3));
    plan.m = std::max<long long>(2, static_cast<long long>(std::ceil(s.m_scale * plan.m_nominal)));
    plan.epsilon_sample = std::min(0.5, s.eps_scale * plan.epsilon_nominal);
    return plan;
}

// Fraction of points inside the truncated body; one query per point.
inline double hit_fraction(const LiftedBody& body, const std::vector<LiftedPoint>& pts) {
    if (pts.empty()) throw argument_error("hit_fraction: no points");
    long long hits = 0;
    for (const auto& z : pts)
        if (body.contains(z)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pts.size());
}

// The m annealing threads.  Each thread owns a stream key, so advancing it
// depends only on (its key, the phase index); estimates are symmetric under
// any relabeling of threads.  log_E accumulates one entry per completed
// phase estimate.
struct EstimatorState {
    std::vector<LiftedPoint> threads;
    std::vector<std::uint64_t> thread_keys;
    std::vector<double> log_E;
    RunTrace trace;
};

inline EstimatorState make_estimator_state(std::vector<LiftedPoint> threads,
                                           const Rng& base) {
    EstimatorState st;
    st.thread_keys.reserve(threads.size());
    for (std::size_t s = 0; s < threads.size(); ++s)
        st.thread_keys.push_back(base.sub("thread", s).key());
    st.threads = std::move(threads);
    return st;
}

// One Samp-Est round: advance every thread toward mu ~ f_i with the given
// chain (cfg.k == 0 keeps the points as they are, for threads that already
// follow f_i exactly), then average the one-step-ahead importance ratios
//   Y_s = f_next(Z_s) / f_i(Z_s)
// in log space.  Returns E and appends log E to the state.
inline double samp_est(EstimatorState& st, const LiftedBody& body,
                       const AnnealParams& fi, const AnnealParams& fnext,
                       const ChainConfig& cfg) {
    if (st.threads.empty()) throw argument_error("samp_est: no threads");
    if (st.threads.size() != st.thread_keys.size())
        throw argument_error("samp_est: threads and stream keys disagree");
    const int phase = static_cast<int>(st.log_E.size());
    const long long m = static_cast<long long>(st.threads.size());

    std::vector<double> log_y(st.threads.size());
    for (std::size_t s = 0; s < st.threads.size(); ++s) {
        if (cfg.k > 0) {
            Rng rng_s = Rng(st.thread_keys[s]).sub("phase", static_cast<std::uint64_t>(phase));
            RunResult r = ps_ann_run(body, fi, st.threads[s], cfg, rng_s);
            st.trace.queries += r.trace.queries;
            st.trace.proposals += r.trace.proposals;
            if (r.failed) {
                st.trace.failures += 1;
                throw integration_error("samp_est: thread chain failed", phase,
                                        static_cast<int>(s), st.trace);
            }
            st.threads[s] = r.point;
        }
        log_y[s] = log_ann_density(fnext, st.threads[s]) -
                   log_ann_density(fi, st.threads[s]);
    }
    const double log_E = log_sum_exp(log_y) - std::log(static_cast<double>(m));
    st.log_E.push_back(log_E);
    return std::exp(log_E);
}

struct IntegralResult {
    double log_estimate = -inf;
    double E_minus1 = 0.0;
    std::vector<double> log_E;  // one entry per Samp-Est phase
    PhasePlan plan;
    RunTrace trace;
};

// Algorithm: estimate log of the integral of exp(-V).  The potential is
// recentred at x0 and normalized to min 0, the lift is truncated to
// B_{Rl}(0) x [-11, 4+13l] with R = C sqrt(n), the m threads start as exact
// rejection draws of mu_0 ~ exp(-n|x|^2/2) restricted to the body, and every
// consecutive pair of the phase plan contributes one Samp-Est factor.
// Requires exp(-V) to be well-rounded after recentring: E|x|^2 <= C^2 n.
inline IntegralResult integral(const Potential& p, const Eigen::VectorXd& x0,
                               double C, double eps, Rng& rng,
                               const ParamScales& scales = {}) {
    const int n = p.dim();
    if (static_cast<int>(x0.size()) != n)
        throw argument_error("integral: x0 has wrong dimension");
    const long long q0 = p.query_count();

    IntegralResult res;
    res.plan = phase_plan(n, C, eps, scales);
    const PhasePlan& plan = res.plan;
    const double l = plan.l;
    const double R = C * std::sqrt(static_cast<double>(n));

    // Normalize: shift the argument so x0 is the origin and the minimum
    // value is 0.  The value shift is undone on the way out.
    double v0;
    if (p.metadata().v_min) {
        v0 = *p.metadata().v_min;
    } else {
        v0 = p(x0);
        if (!std::isfinite(v0))
            throw infeasible_start_error("integral: V(x0) is not finite");
    }
    Potential Vt = offset(
        pushforward(p, AffineMap(Eigen::MatrixXd::Identity(n, n), -x0)), -v0);
    Truncation tr;
    tr.center = Eigen::VectorXd::Zero(n);
    tr.radius_x = R * l;
    tr.t_min = -11.0;
    tr.t_max = 4.0 + 13.0 * l;
    const LiftedBody body(Vt, tr);

    // E_{-1}: hit fraction of the first m direct draws from
    // mu_{-1} = N(0, I/n) x Unif[-11, 4+13l]; further draws only top up the
    // thread pool, which is exactly rejection sampling from mu_0.
    std::vector<LiftedPoint> starts;
    starts.reserve(plan.m);
    long long hits = 0, draws = 0;
    const long long max_draws = 10000LL * plan.m;
    const double sd_x = 1.0 / std::sqrt(static_cast<double>(n));
    while (static_cast<long long>(starts.size()) < plan.m) {
        if (draws >= max_draws) {
            res.trace.queries = p.query_count() - q0;
            throw init_error("integral: rejection sampler for mu_0 starved");
        }
        LiftedPoint z{sd_x * rng.gaussian(n), rng.uniform(tr.t_min, tr.t_max)};
        ++draws;
        if (body.contains(z)) {
            if (draws <= plan.m) ++hits;
            starts.push_back(z);
        }
    }
    res.E_minus1 = static_cast<double>(hits) / static_cast<double>(plan.m);
    if (hits == 0) {
        res.trace.queries = p.query_count() - q0;
        throw degenerate_estimate_error("integral: E_{-1} is zero");
    }

    EstimatorState st = make_estimator_state(std::move(starts), rng.sub("threads"));

    const double M_relay = std::exp(2.0);  // consecutive warmness budget
    for (std::size_t j = 0; j + 1 < plan.phases.size(); ++j) {
        const auto [sigma2, rho] = plan.phases[j];
        AnnealParams fi{sigma2, rho, {}};
        AnnealParams fnext{plan.phases[j + 1].first, plan.phases[j + 1].second, {}};
        ChainConfig cfg;
        if (j > 0) {
            BudgetParams bp = ann_params(n, sigma2, l, R * l, M_relay,
                                         plan.epsilon_sample, plan.epsilon_sample, scales);
            // Stability cap on the step size: the backward t-step rejection
            // tail is governed by a = rho * sqrt(h) and is log-convex in a,
            // so keep rho^2 h small.  Binding only at large rho, where the
            // t-coordinate then relaxes in O(1) steps regardless.
            double h_eff =
                rho > 0.0 ? std::min(bp.h, 0.08 / (rho * rho)) : bp.h;
            long long k_eff = bp.k;
            if (rho > 0.0) {
                // The slow mode is the t-tilt with relaxation time
                // tau_t ~ 1/(2 h rho^2) steps; past a few tau_t extra
                // iterations are wasted.
                double tau_t = 1.0 / (2.0 * h_eff * rho * rho);
                k_eff = std::min<long long>(
                    bp.k,
                    std::max<long long>(6, static_cast<long long>(std::ceil(8.0 * tau_t))));
            }
            // Phases that move sigma2 (the few cooling-ramp updates) need the
            // x-block to relax, ~sigma2/h steps; rho-only updates leave the
            // x-marginal in place and skip this.
            double prev_s2 = plan.phases[j - 1].first;
            if (std::abs(std::log(sigma2 / prev_s2)) > 0.01) {
                double k_x = 3.0 * sigma2 / h_eff;
                k_eff = std::max(k_eff,
                                 std::min<long long>(2000, static_cast<long long>(std::ceil(k_x))));
            }
            cfg = ChainConfig{h_eff, bp.N, k_eff, M_relay, plan.epsilon_sample, rng.key()};
        }  // j == 0: threads are exact mu_0 draws already, no chain needed
        const long long q_before = p.query_count();
        const long long prop_before = st.trace.proposals;
        double E;
        try {
            E = samp_est(st, body, fi, fnext, cfg);
        } catch (const integration_error& e) {
            res.trace.absorb(st.trace);
            res.trace.queries = p.query_count() - q0;
            throw integration_error("integral: thread chain failed", e.phase(),
                                    e.thread(), res.trace);
        }
        PhaseLogEntry ple;
        ple.index = static_cast<int>(j);
        ple.label = "samp_est";
        ple.sigma2 = sigma2;
        ple.rho = rho;
        ple.h = cfg.h;
        ple.k = cfg.k;
        ple.N = cfg.N;
        ple.queries = p.query_count() - q_before;
        ple.proposals = st.trace.proposals - prop_before;
        res.trace.phase_log.push_back(ple);
        if (!(E > 0.0)) {
            res.trace.absorb(st.trace);
            res.trace.queries = p.query_count() - q0;
            throw degenerate_estimate_error("integral: estimate collapsed to zero at phase " +
                                            std::to_string(j));
        }
    }

    res.log_E = st.log_E;
    double sum_log_E = 0.0;
    for (double le : st.log_E) sum_log_E += le;
    res.log_estimate = std::log(static_cast<double>(n)) +
                       initial_integral_closed_form(n, l) + std::log(res.E_minus1) +
                       sum_log_E - v0;

    res.trace.proposals = st.trace.proposals;
    res.trace.seed = rng.key();
    res.trace.queries = p.query_count() - q0;
    res.trace.nominal_params["m"] = plan.m_nominal;
    res.trace.nominal_params["epsilon_sample"] = plan.epsilon_nominal;
    res.trace.effective_params["m"] = static_cast<double>(plan.m);
    res.trace.effective_params["epsilon_sample"] = plan.epsilon_sample;
    res.trace.notes.push_back("phases=" + std::to_string(plan.phases.size()) +
                              " E_minus1=" + std::to_string(res.E_minus1));
    return res;
}

// Integrate exp(-V) after applying an affine change of variables y = F x
// (for example a rounding map): the integral of the pushforward potential
// overcounts by |det F|, so subtract log|det F|.
inline IntegralResult integral_under_map(const Potential& p, const AffineMap& F,
                                         const Eigen::VectorXd& x0, double C,
                                         double eps, Rng& rng,
                                         const ParamScales& scales = {}) {
    Potential W = pushforward(p, F);
    IntegralResult res = integral(W, F.apply(x0), C, eps, rng, scales);
    res.log_estimate -= F.log_abs_det();
    res.trace.notes.push_back("change of variables: log|det| correction applied");
    return res;
}

}  // namespace loglift
