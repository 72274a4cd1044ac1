#pragma once

// Tilted Gaussian Cooling: produce a warm sample from the exponential lift
// pi-bar of a well-rounded logconcave density, starting from nothing more
// than a feasible point x0.  The run is a deterministic schedule of annealed
// proximal-sampler phases
//
//     mu_{sigma^2, rho}(x, t)  ∝  exp(-||x - x0||^2 / (2 sigma^2) - rho t)
//
// restricted to the truncated lift K-bar, driven from (sigma^2, rho) =
// (1/n, 1/l) up to (l^2 R^2, n), followed by one exponential-lift phase that
// lands on pi-bar itself.  Each consecutive pair of schedule targets is
// mutually warm (bounded density ratio), so every phase starts warm and the
// per-phase budgets stay polynomial.

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
#include "loglift/rng.hpp"
#include "loglift/sampler_ann.hpp"
#include "loglift/sampler_exp.hpp"
#include "loglift/trace.hpp"

namespace loglift {

// A cooling phase failed (inner sampler exhausted its budget).  Carries the
// index of the failing entry in the run's phase log plus everything logged
// up to and including the failure, so callers can still emit the trace.
class cooling_error : public std::runtime_error {
  public:
    cooling_error(const std::string& what, int phase_index, RunTrace trace)
        : std::runtime_error(what), phase_index_(phase_index), trace_(std::move(trace)) {}

    int phase_index() const { return phase_index_; }
    const RunTrace& trace() const { return trace_; }

  private:
    int phase_index_;
    RunTrace trace_;
};

enum class CoolingPhase { Init, PhaseI, PhaseII, Terminate };

inline const char* phase_name(CoolingPhase p) {
    switch (p) {
        case CoolingPhase::Init: return "init";
        case CoolingPhase::PhaseI: return "phase_I";
        case CoolingPhase::PhaseII: return "phase_II";
        case CoolingPhase::Terminate: return "terminate";
    }
    return "unknown";
}

// One state of the cooling schedule: the annealing target mu_{sigma2, rho}
// centred at x0, tagged with the phase that the state belongs to.  l and R
// are carried along because the update rules depend on them.
struct CoolingSchedule {
    double l = 0.0;
    double sigma2 = 0.0;
    double rho = 0.0;
    CoolingPhase phase = CoolingPhase::Init;
    double R = 0.0;
};

// First annealing target after rejection initialization: mu_{1/n, 1/l}.
inline CoolingSchedule initial_schedule(int n, double l, double R) {
    if (n < 1) throw argument_error("initial_schedule: need n >= 1");
    if (!(l > 0.0) || !(R > 0.0))
        throw argument_error("initial_schedule: need l > 0 and R > 0");
    return {l, 1.0 / n, 1.0 / l, CoolingPhase::Init, R};
}

// One deterministic schedule step.
//
// Phase I (variance growing to 1, tilt growing to n):
//   sigma^2 <- sigma^2 (1 + 1/n)      until sigma^2 >= 1 (kept, then frozen)
//   rho     <- min(n, rho (1 + 1/(l n)))
// Phase II (variance growing to l^2 R^2 at full tilt rho = n):
//   sigma^2 <- min(l^2 R^2, sigma^2 (1 + sigma^2 / (l^2 R^2)))
//
// The returned state is tagged with the phase it belongs to: PhaseII once
// both Phase I legs have finished, Terminate once sigma^2 hits l^2 R^2.
inline CoolingSchedule schedule_update(const CoolingSchedule& s, int n) {
    if (s.phase == CoolingPhase::Terminate)
        throw argument_error("schedule_update: schedule already terminated");
    if (n < 1) throw argument_error("schedule_update: need n >= 1");
    if (!(s.l > 0.0) || !(s.R > 0.0) || !(s.sigma2 > 0.0) || !(s.rho > 0.0))
        throw argument_error("schedule_update: schedule state not positive");

    const double cap = s.l * s.l * s.R * s.R;
    CoolingSchedule out = s;
    if (s.phase == CoolingPhase::Init || s.phase == CoolingPhase::PhaseI) {
        if (s.sigma2 < 1.0) out.sigma2 = s.sigma2 * (1.0 + 1.0 / n);
        if (s.rho < n) out.rho = std::min(double(n), s.rho * (1.0 + 1.0 / (s.l * n)));
        out.phase = (out.sigma2 >= 1.0 && out.rho >= n) ? CoolingPhase::PhaseII
                                                        : CoolingPhase::PhaseI;
    } else {  // PhaseII
        out.sigma2 = std::min(cap, s.sigma2 * (1.0 + s.sigma2 / cap));
    }
    if (out.phase == CoolingPhase::PhaseII && out.sigma2 >= cap)
        out.phase = CoolingPhase::Terminate;
    return out;
}

// The full deterministic sequence of annealing targets, from mu_{1/n, 1/l}
// through the final (capped) state mu_{l^2 R^2, n} inclusive.  Every entry is
// the target of one annealed proximal-sampler run; the terminal exponential
// phase comes after and is not listed here.
inline std::vector<CoolingSchedule> schedule_sequence(int n, double l, double R) {
    std::vector<CoolingSchedule> seq;
    seq.push_back(initial_schedule(n, l, R));
    // ~ n l log(n l) phase-I steps plus ~ l^2 R^2 phase-II steps; anything
    // beyond this bound means the parameters are out of the tractable range.
    const double predicted = 8.0 * (n * l * std::log(n * l + 2.0) + l * l * R * R + 64.0);
    const std::size_t limit = predicted > 1e8 ? std::size_t(1e8) : std::size_t(predicted);
    while (seq.back().phase != CoolingPhase::Terminate) {
        seq.push_back(schedule_update(seq.back(), n));
        if (seq.size() > limit)
            throw config_error("schedule_sequence: schedule for n=" + std::to_string(n) +
                               ", l=" + std::to_string(l) + ", R=" + std::to_string(R) +
                               " exceeds " + std::to_string(limit) + " phases");
    }
    return seq;
}

// Rejection initialization: draw z0 ~ exp(-n ||x - x0||^2 / 2) restricted to
// K-bar, by proposing x ~ N(x0, n^{-1} I) and t ~ Unif(V(x0)/n - 10,
// V(x0)/n + 5 + 13 l] until (x, t) lands in the body.  Fails with init_error
// after ceil(10^4 l) trials; with a feasible, nearly-minimizing x0 the
// acceptance probability is a constant.
inline std::pair<LiftedPoint, RunTrace> tgc_init(const LiftedBody& body,
                                                 const Eigen::VectorXd& x0, double l,
                                                 Rng& rng) {
    if (!(l > 0.0)) throw argument_error("tgc_init: need l > 0");
    const int n = body.xdim();
    if (x0.size() != n) throw argument_error("tgc_init: x0 has wrong dimension");

    RunTrace trace;
    trace.seed = rng.key();
    const long long q0 = body.potential().query_count();
    const double v0 = body.potential()(x0);
    if (!std::isfinite(v0))
        throw infeasible_start_error("tgc_init: V(x0) is not finite");

    const double t_lo = v0 / n - 10.0;
    const double t_hi = v0 / n + 5.0 + 13.0 * l;
    const double sd = 1.0 / std::sqrt(double(n));
    const long long budget = static_cast<long long>(std::ceil(1e4 * l));

    LiftedPoint z;
    for (long long trial = 0; trial < budget; ++trial) {
        z.x = x0 + sd * rng.gaussian(n);
        z.t = rng.uniform(t_lo, t_hi);
        trace.proposals += 1;
        if (body.contains(z)) {
            trace.queries = body.potential().query_count() - q0;
            return {z, trace};
        }
    }
    trace.queries = body.potential().query_count() - q0;
    trace.failures = 1;
    throw init_error("tgc_init: no acceptance in " + std::to_string(budget) +
                     " trials (" + std::to_string(trace.queries) +
                     " oracle queries); x0 is likely far from the minimizer");
}

struct TgcResult {
    LiftedPoint point;   // one sample whose law is eps-close to pi-bar
    RunTrace trace;      // per-phase budgets, queries, proposals, failures
    LiftedBody body;     // the truncated lift the sample lives on
};

// Run the full cooling pipeline on V: truncate the lift around x0 at scale
// (R, l = log(6/eps)), rejection-initialize, anneal through the schedule,
// and finish with one exponential-lift phase targeting pi-bar to accuracy
// eps/3.  The failure budget eta is split equally across all phases (the
// annealing runs plus the terminal run).  Inner-sampler budget exhaustion
// raises cooling_error carrying the partial trace.
inline TgcResult tgc_run(const Potential& V, const Eigen::VectorXd& x0, double R,
                         double eps, double eta, Rng& rng,
                         const ParamScales& scales = {}) {
    if (!(eps > 0.0 && eps < 1.0))
        throw argument_error("tgc_run: need eps in (0, 1)");
    if (!(eta > 0.0 && eta < 1.0))
        throw argument_error("tgc_run: need eta in (0, 1)");
    if (!(R > 0.0)) throw argument_error("tgc_run: need R > 0");

    const int n = V.dim();
    const double l = std::log(6.0 / eps);
    LiftedBody body = truncate_with_l(V, x0, R, l);

    const std::vector<CoolingSchedule> seq = schedule_sequence(n, l, R);
    const int phases = static_cast<int>(seq.size()) + 1;  // + terminal run
    const double eta_phase = eta / phases;
    const double M_relay = 2.0 * std::sqrt(std::numbers::e);
    const double M_init = std::exp(13.0 + 5.0 / l);

    RunTrace trace;
    trace.seed = rng.key();
    trace.nominal_params = ParamScales{}.to_map();
    trace.effective_params = scales.to_map();
    trace.notes.push_back("tgc: l=" + std::to_string(l) + " R=" + std::to_string(R) +
                          " phases=" + std::to_string(phases));

    auto [z, init_trace] = tgc_init(body, x0, l, rng);
    {
        PhaseLogEntry e;
        e.index = 0;
        e.label = "rejection_init";
        e.sigma2 = 1.0 / n;  // the rejection draw targets mu_{1/n, 0}
        e.rho = 0.0;
        e.h = 0.0;
        e.k = 0;
        e.N = double(init_trace.proposals);
        e.queries = init_trace.queries;
        e.proposals = init_trace.proposals;
        e.failures = init_trace.failures;
        trace.queries += init_trace.queries;
        trace.proposals += init_trace.proposals;
        trace.phase_log.push_back(e);
    }

    AnnealParams target;
    target.center = x0;
    for (std::size_t j = 0; j < seq.size(); ++j) {
        target.sigma2 = seq[j].sigma2;
        target.rho = seq[j].rho;
        const double M = (j == 0) ? M_init : M_relay;
        const BudgetParams b =
            ann_params(n, seq[j].sigma2, l, R, M, eta_phase, std::numbers::ln2, scales);
        const ChainConfig cfg = make_chain_config(b, M, eta_phase, rng.key());
        const RunResult r = ps_ann_run(body, target, z, cfg, rng);

        PhaseLogEntry e;
        e.index = static_cast<int>(j) + 1;
        e.label = phase_name(seq[j].phase);
        e.sigma2 = seq[j].sigma2;
        e.rho = seq[j].rho;
        e.h = cfg.h;
        e.k = cfg.k;
        e.N = cfg.N;
        e.queries = r.trace.queries;
        e.proposals = r.trace.proposals;
        e.failures = r.trace.failures;
        if (j > 0 && seq[j].phase == CoolingPhase::PhaseI) {
            if (seq[j].sigma2 == seq[j - 1].sigma2) e.note = "sigma2 done; rho continuing";
            else if (seq[j].rho == seq[j - 1].rho) e.note = "rho done; sigma2 continuing";
        }
        trace.queries += r.trace.queries;
        trace.proposals += r.trace.proposals;
        trace.failures += r.trace.failures;
        trace.phase_log.push_back(e);
        if (r.failed)
            throw cooling_error("tgc_run: annealed phase " + std::to_string(e.index) +
                                    " (sigma2=" + std::to_string(e.sigma2) +
                                    ", rho=" + std::to_string(e.rho) +
                                    ") exhausted its budget",
                                e.index, trace);
        z = r.point;
    }

    // Terminal phase: from mu_{l^2 R^2, n} to pi-bar via the exponential lift.
    {
        const BudgetParams b = exp_params(n, eps / 3.0, eta_phase, M_relay, scales);
        const ChainConfig cfg = make_chain_config(b, M_relay, eta_phase, rng.key());
        const RunResult r = ps_exp_run(body, z, cfg, rng);

        PhaseLogEntry e;
        e.index = static_cast<int>(seq.size()) + 1;
        e.label = "terminate";
        e.sigma2 = inf;
        e.rho = double(n);
        e.h = cfg.h;
        e.k = cfg.k;
        e.N = cfg.N;
        e.queries = r.trace.queries;
        e.proposals = r.trace.proposals;
        e.failures = r.trace.failures;
        trace.queries += r.trace.queries;
        trace.proposals += r.trace.proposals;
        trace.failures += r.trace.failures;
        trace.phase_log.push_back(e);
        if (r.failed)
            throw cooling_error("tgc_run: terminal exponential phase exhausted its budget",
                                e.index, trace);
        z = r.point;
    }

    return {z, std::move(trace), std::move(body)};
}

}  // namespace loglift
