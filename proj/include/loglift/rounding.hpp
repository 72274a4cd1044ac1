#pragma once

// Isotropic rounding.  `isotropize` makes one well-rounded grounded
// distribution near-isotropic by alternating sampling, covariance
// estimation, and subspace doubling; `round_logconcave` drives it through
// the three-step outer pipeline (ball-truncated cores nu_r of growing
// radius, then the grounded distribution nu, then pi itself) to produce an
// affine map under which the X-marginal of exp(-V) is approximately
// isotropic.

#include <algorithm>
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
#include "loglift/estimators.hpp"
#include "loglift/lifted.hpp"
#include "loglift/potential.hpp"
#include "loglift/rng.hpp"
#include "loglift/sampler_exp.hpp"
#include "loglift/tgc.hpp"
#include "loglift/trace.hpp"

namespace loglift {

// A rounding stage failed (warm start or inner sampler exhausted its
// budget).  Carries the stage label and everything logged so far.
class rounding_error : public std::runtime_error {
  public:
    rounding_error(const std::string& what, std::string stage, RunTrace trace)
        : std::runtime_error(what), stage_(std::move(stage)), trace_(std::move(trace)) {}

    const std::string& stage() const { return stage_; }
    const RunTrace& trace() const { return trace_; }

  private:
    std::string stage_;
    RunTrace trace_;
};

// State of the outer rounding loop: the accumulated affine map, the current
// ball-truncation radius, the loop index, and the lift the stage ran on.
struct RoundingState {
    AffineMap F;
    double r = 1.0;
    int i = 0;
    LiftedBody body;
};

// M = I + P with P the orthogonal projector onto the span of eigenvectors
// of cov_est with eigenvalue at most n (ties included): directions where
// the distribution is still thin get doubled.
inline Eigen::MatrixXd scaling_map(const Eigen::MatrixXd& cov_est, int n) {
    if (cov_est.rows() != cov_est.cols())
        throw argument_error("scaling_map: matrix must be square");
    const double scale = std::max(1.0, cov_est.lpNorm<Eigen::Infinity>());
    if ((cov_est - cov_est.transpose()).lpNorm<Eigen::Infinity>() > 1e-8 * scale)
        throw argument_error("scaling_map: matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov_est);
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(cov_est.rows(), cov_est.cols());
    for (int j = 0; j < cov_est.rows(); ++j)
        if (es.eigenvalues()(j) <= double(n))
            M += es.eigenvectors().col(j) * es.eigenvectors().col(j).transpose();
    return M;
}

// Whitening map x -> cov^{-1/2} (x - mean) via the symmetric PSD root,
// with eigenvalues clamped at 1e-12 so finite-sample degeneracies stay
// invertible.
inline AffineMap whitening_map(const Eigen::MatrixXd& cov, const Eigen::VectorXd& mean) {
    if (cov.rows() != cov.cols() || cov.rows() != mean.size())
        throw argument_error("whitening_map: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    Eigen::VectorXd inv_root =
        es.eigenvalues().cwiseMax(1e-12).cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd A =
        es.eigenvectors() * inv_root.asDiagonal() * es.eigenvectors().transpose();
    return AffineMap(A, -A * mean);
}

// Deterministic sequence of inner-loop radii: r_1 = 1, and r almost doubles
// (factor 2(1 - 1/log n), with the log clamped at 3 for small n) while
// r^2 <= n.
inline std::vector<double> isotropize_radii(int n) {
    if (n < 1) throw argument_error("isotropize_radii: need n >= 1");
    std::vector<double> rs;
    double r = 1.0;
    while (r * r <= double(n)) {
        rs.push_back(r);
        r = 2.0 * r * (1.0 - 1.0 / std::max(3.0, std::log(double(n))));
    }
    return rs;
}

// Per-stage chain budgets: sample count, thinning length, and step size.
struct RoundBudget {
    long long k = 0;
    long long N_thin = 1;
    double h = 0.0;
};

// Inner-loop stage at radius r: k ~ r^2 polylog n samples, thinning
// N ~ r^{-2} n^3 log n, step size h ~ r^2 / (n^2 log(r n)).
inline RoundBudget round_loop_budget(int n, double r, const ParamScales& s = {}) {
    if (n < 1 || !(r > 0.0)) throw argument_error("round_loop_budget: bad arguments");
    const double lg = std::log(double(n) + 1.0);
    RoundBudget b;
    b.k = static_cast<long long>(std::ceil(s.C_s * r * r * lg * lg * lg));
    b.N_thin = static_cast<long long>(
        std::ceil(s.C_N_round * double(n) * n * n * lg / (r * r)));
    b.h = r * r / (s.C_h_round * double(n) * n * std::log(r * n + 2.0));
    b.k = std::max(b.k, 2LL);
    b.N_thin = std::max(b.N_thin, 1LL);
    return b;
}

// Final estimation stage: k ~ n polylog n samples, thinning N ~ n^2 log n,
// step size h ~ 1 / (n^2 log n).
inline RoundBudget round_final_budget(int n, const ParamScales& s = {}) {
    if (n < 1) throw argument_error("round_final_budget: need n >= 1");
    const double lg = std::log(double(n) + 1.0);
    RoundBudget b;
    b.k = static_cast<long long>(std::ceil(s.C_s * double(n) * lg * lg * lg));
    b.N_thin = static_cast<long long>(std::ceil(s.C_N_round * double(n) * n * lg));
    b.h = 1.0 / (s.C_h_round * double(n) * n * lg);
    b.k = std::max(b.k, 2LL);
    b.N_thin = std::max(b.N_thin, 1LL);
    return b;
}

// Total chain iterations of one isotropize call, used to budget the
// per-call failure probability.
inline double isotropize_step_total(int n, const ParamScales& s = {}) {
    double total = 0.0;
    for (double r : isotropize_radii(n)) {
        const RoundBudget b = round_loop_budget(n, r, s);
        total += double(b.k) * double(b.N_thin);
    }
    const RoundBudget f = round_final_budget(n, s);
    total += double(f.k) * double(f.N_thin);
    return total;
}

namespace detail {

inline ChainConfig round_kernel(int n, const RoundBudget& b, double eta, uint64_t seed,
                                const ParamScales& s) {
    // Patience for the backward rejection comes from the generic budget at
    // the stage's total step count; the step size is the rounding one.
    BudgetParams p = exp_params_from_k(n, std::max(b.k * b.N_thin, 1LL), 2.0, eta, s);
    return ChainConfig{b.h, p.N, 0, 2.0, eta, seed};
}

inline void log_round_stage(RunTrace& trace, int index, const std::string& label,
                            const RoundBudget& b, const RunTrace& sub,
                            const std::string& note) {
    PhaseLogEntry e;
    e.index = index;
    e.label = label;
    e.sigma2 = 0.0;
    e.rho = 0.0;
    e.h = b.h;
    e.k = b.k;
    e.N = double(b.N_thin);
    e.queries = sub.queries;
    e.proposals = sub.proposals;
    e.failures = sub.failures;
    e.note = note;
    trace.queries += sub.queries;
    trace.proposals += sub.proposals;
    trace.failures += sub.failures;
    trace.phase_log.push_back(e);
}

}  // namespace detail

// Isotropize one well-rounded grounded distribution.  `p` is the grounded
// potential U (min U >= 0, support = ground set, B_1(x0) inside it,
// E||X - x0||^2 <= R^2; x0 and R read from metadata); `body` is its lift
// {U - 11n <= nt}.  Returns the affine x-map F with F_# mu near-isotropic,
// plus the run trace.  eta_call <= 0 means budget it as 1/(steps * n^2).
inline std::pair<AffineMap, RunTrace> isotropize(const Potential& p,
                                                 const LiftedBody& body, Rng& rng,
                                                 const ParamScales& scales = {},
                                                 double eta_call = -1.0) {
    const int n = p.dim();
    if (!p.metadata().x0)
        throw argument_error("isotropize: potential needs x0 metadata");
    if (!p.metadata().R)
        throw config_error("isotropize: potential needs radius metadata");
    if (body.xdim() != n) throw argument_error("isotropize: body dimension mismatch");
    const Eigen::VectorXd x0 = *p.metadata().x0;
    const double R = *p.metadata().R;

    if (eta_call <= 0.0)
        eta_call = std::clamp(1.0 / (isotropize_step_total(n, scales) * n * n),
                              1e-12, 0.5);

    RunTrace trace;
    trace.seed = rng.key();
    trace.nominal_params = ParamScales{}.to_map();
    trace.effective_params = scales.to_map();
    const long long q0 = p.query_count();

    // Warm start for mu: one cooling run on the lifted potential.
    LiftedPoint z0;
    LiftedBody K = body;
    try {
        TgcResult warm = tgc_run(body.potential(), x0, R, std::numbers::ln2 / 2.0,
                                 eta_call, rng, scales);
        z0 = warm.point;
        K = warm.body;
        RunTrace sub;
        sub.queries = warm.trace.queries;
        sub.proposals = warm.trace.proposals;
        sub.failures = warm.trace.failures;
        detail::log_round_stage(trace, 0, "warm_start", RoundBudget{}, sub,
                                "tgc phases=" + std::to_string(warm.trace.phase_log.size()));
    } catch (const cooling_error& e) {
        trace.absorb(e.trace());
        throw rounding_error(std::string("isotropize: warm start failed: ") + e.what(),
                             "warm_start", trace);
    }

    AffineMap F = AffineMap::identity(n);
    const std::vector<double> radii = isotropize_radii(n);
    for (std::size_t i = 0; i < radii.size(); ++i) {
        const RoundBudget b = round_loop_budget(n, radii[i], scales);
        const ThinnedChainSpec spec{detail::round_kernel(n, b, eta_call, rng.key(), scales),
                                    b.N_thin, b.k};
        const CollectResult cr = collect_thinned(K, z0, spec, rng);
        if (cr.failed) {
            trace.absorb(cr.trace);
            throw rounding_error("isotropize: sampler failed in loop " +
                                     std::to_string(i + 1),
                                 "loop_" + std::to_string(i + 1), trace);
        }
        std::vector<Eigen::VectorXd> xs;
        xs.reserve(cr.samples.size());
        for (const auto& z : cr.samples) xs.push_back(z.x);
        const auto [mean, cov] = estimate_mean_cov(xs);
        const Eigen::MatrixXd M = scaling_map(cov, n);
        const int rank = static_cast<int>(std::lround(M.trace())) - n;
        const double cov_norm =
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().maxCoeff();

        detail::log_round_stage(trace, static_cast<int>(i) + 1, "isotropize_loop", b,
                                cr.trace,
                                "r=" + std::to_string(radii[i]) +
                                    " rankP=" + std::to_string(rank) +
                                    " tr_cov=" + std::to_string(cov.trace()) +
                                    " norm_cov=" + std::to_string(cov_norm));

        const AffineMap Mi(M, Eigen::VectorXd::Zero(n));
        K = pushforward(K, LiftedAffine{Mi, 0.0});
        z0.x = Mi.apply(z0.x);
        F = Mi.compose(F);
    }

    // Final pass: estimate the mean and covariance accurately and whiten.
    const RoundBudget fb = round_final_budget(n, scales);
    const ThinnedChainSpec spec{detail::round_kernel(n, fb, eta_call, rng.key(), scales),
                                fb.N_thin, fb.k};
    const CollectResult cr = collect_thinned(K, z0, spec, rng);
    if (cr.failed) {
        trace.absorb(cr.trace);
        throw rounding_error("isotropize: sampler failed in the final estimation pass",
                             "final", trace);
    }
    std::vector<Eigen::VectorXd> xs;
    xs.reserve(cr.samples.size());
    for (const auto& z : cr.samples) xs.push_back(z.x);
    const auto [mean, cov] = estimate_mean_cov(xs);
    const double cov_norm =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().maxCoeff();
    detail::log_round_stage(trace, static_cast<int>(radii.size()) + 1, "final_whitening",
                            fb, cr.trace,
                            "tr_cov=" + std::to_string(cov.trace()) +
                                " norm_cov=" + std::to_string(cov_norm));

    F = whitening_map(cov, mean).compose(F);
    trace.queries = p.query_count() - q0;  // ground truth from the shared counter
    return {F, trace};
}

// Full rounding pipeline for exp(-V) given a feasible center x0 and a
// second-moment radius R (E_pi ||X - x0||^2 <= R^2).  Returns the affine
// x-map T with T_# pi^X approximately isotropic, plus the run trace.
inline std::pair<AffineMap, RunTrace> round_logconcave(const Potential& p,
                                                       const Eigen::VectorXd& x0,
                                                       double R, Rng& rng,
                                                       const ParamScales& scales = {}) {
    const int n = p.dim();
    if (x0.size() != n) throw argument_error("round_logconcave: x0 dimension mismatch");
    if (!(R > 0.0)) throw argument_error("round_logconcave: need R > 0");

    RunTrace trace;
    trace.seed = rng.key();
    trace.nominal_params = ParamScales{}.to_map();
    trace.effective_params = scales.to_map();
    const long long q0 = p.query_count();

    // Normalize min V to zero (metadata when available, V(x0) otherwise) and
    // record the ground-set potential.
    const double v_shift = p.metadata().v_min ? *p.metadata().v_min : p(x0);
    Potential Vt = offset(p, -v_shift);
    Vt.metadata().v_min = 0.0;
    Vt.metadata().x0 = x0;
    const Potential Vg = ground_restrict(Vt);

    const double delta = 1.0 + 1.0 / std::sqrt(double(n));
    const double D = 2.0 * R * std::log(400.0);
    // Second-moment radius of a stage input: the 4F map sends the previous
    // near-isotropic core to covariance ~ 16 I and the delta-grown core is at
    // most delta^2 wider, so E||X - x0||^2 <= (4 delta)^2 n = (4(sqrt n + 1))^2.
    const double R_stage = 4.0 * (std::sqrt(double(n)) + 1.0);
    const int outer_count = static_cast<int>(std::floor(std::log(D) / std::log(delta))) + 1;
    const double eta_call =
        std::clamp(1.0 / (isotropize_step_total(n, scales) * (outer_count + 3) * n * n),
                   1e-12, 0.5);

    // One grounded stage: the ball-truncated core of radius r (r = inf means
    // the whole ground set), pushed through H.
    auto stage_input = [&](double r, const AffineMap& H, double R_meta) {
        Potential U = std::isfinite(r)
                          ? restrict_to(Vg, [x0, r](const Eigen::VectorXd& x) {
                                return (x - x0).norm() <= r;
                            })
                          : Vg;
        U = pushforward(U, H);
        U.metadata().x0 = H.apply(x0);
        U.metadata().v_min = 0.0;
        U.metadata().R = R_meta;
        return U;
    };
    auto run_stage = [&](const std::string& label, const Potential& U) {
        const LiftedBody body(offset(U, -11.0 * n));
        try {
            auto [G, tr] = isotropize(U, body, rng, scales, eta_call);
            trace.absorb(tr);
            trace.notes.push_back(label + ": queries=" + std::to_string(tr.queries));
            return G;
        } catch (const rounding_error& e) {
            trace.absorb(e.trace());
            throw rounding_error("round_logconcave " + label + ": " + e.what(), label,
                                 trace);
        }
    };
    auto scaled4 = [](const AffineMap& F) {
        return AffineMap(4.0 * F.matrix(), 4.0 * F.shift());
    };

    // Step 1(a): isotropize the radius-1 core (its own well-roundedness
    // constant is a small absolute one; we take R = 2).
    AffineMap F = run_stage("step1a", stage_input(1.0, AffineMap::identity(n), 2.0));
    RoundingState st{F, 1.0, 1, LiftedBody(offset(Vg, -11.0 * n))};

    // Step 1(b): grow the ball by delta per iteration up to D, scaling the
    // accumulated map by 4 before each re-isotropization.
    int outer_done = 0;
    while (st.r <= D) {
        const double r_next = delta * st.r;
        const AffineMap H = scaled4(st.F);
        const AffineMap G = run_stage("step1b_" + std::to_string(st.i),
                                      stage_input(r_next, H, R_stage));
        st.F = G.compose(H);
        st.r = r_next;
        st.i += 1;
        outer_done += 1;
    }
    if (outer_done != outer_count)
        throw config_error("round_logconcave: outer loop miscount");

    // Step 2: the full grounded distribution.
    {
        const AffineMap H = scaled4(st.F);
        const AffineMap G = run_stage("step2", stage_input(inf, H, R_stage));
        st.F = G.compose(H);
        st.i += 1;
    }

    // Step 3: pi itself.  Warm-start on the pushforward of the untruncated
    // potential, then one accurate estimation pass and a final whitening.
    // The chain runs on F#pi — the unit-scale image — and the collected
    // samples are rescaled by 4, which is an exact draw from (4F)#pi; the
    // fixed final step size then matches the chain's body scale instead of
    // fighting the 16x covariance of the scaled pushforward.
    {
        const AffineMap H = st.F;
        const double R3 = R_stage / 4.0;
        Potential W = pushforward(Vt, H);
        W.metadata().x0 = H.apply(x0);
        W.metadata().R = R3;
        W = offset(W, -11.0 * n);
        const Eigen::VectorXd c = H.apply(x0);
        try {
            const TgcResult warm =
                tgc_run(W, c, R3, std::numbers::ln2 / 2.0, eta_call, rng, scales);
            RunTrace sub;
            sub.queries = warm.trace.queries;
            sub.proposals = warm.trace.proposals;
            sub.failures = warm.trace.failures;
            detail::log_round_stage(trace, st.i + 1, "step3_warm_start", RoundBudget{},
                                    sub, "tgc phases=" +
                                             std::to_string(warm.trace.phase_log.size()));

            const RoundBudget fb = round_final_budget(n, scales);
            const ThinnedChainSpec spec{
                detail::round_kernel(n, fb, eta_call, rng.key(), scales), fb.N_thin,
                fb.k};
            // The estimation pass feeds the headline whitening map, so unlike
            // the loop stages (whose estimates are re-corrected downstream) it
            // cannot tolerate a residually cold start: advance the chain a few
            // thinning windows before collecting.
            LiftedPoint z3 = warm.point;
            ChainConfig burn = spec.kernel;
            burn.k = 4 * fb.N_thin;
            const RunResult br = ps_exp_run(warm.body, z3, burn, rng);
            if (!br.failed) z3 = br.point;
            CollectResult cr = collect_thinned(warm.body, z3, spec, rng);
            cr.trace.queries += br.trace.queries;
            cr.trace.proposals += br.trace.proposals;
            if (cr.failed) {
                trace.absorb(cr.trace);
                throw rounding_error("round_logconcave step3: sampler failed", "step3",
                                     trace);
            }
            std::vector<Eigen::VectorXd> xs;
            xs.reserve(cr.samples.size());
            for (const auto& z : cr.samples) xs.push_back(4.0 * z.x);
            const auto [mean, cov] = estimate_mean_cov(xs);
            detail::log_round_stage(trace, st.i + 2, "step3_whitening", fb, cr.trace,
                                    "tr_cov=" + std::to_string(cov.trace()));
            st.F = whitening_map(cov, mean).compose(scaled4(H));
        } catch (const cooling_error& e) {
            trace.absorb(e.trace());
            throw rounding_error(std::string("round_logconcave step3: warm start failed: ") +
                                     e.what(),
                                 "step3", trace);
        }
    }

    trace.queries = p.query_count() - q0;
    trace.notes.push_back("outer loops=" + std::to_string(outer_done) +
                          " D=" + std::to_string(D));
    return {st.F, trace};
}

}  // namespace loglift
