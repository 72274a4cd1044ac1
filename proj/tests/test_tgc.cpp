#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "loglift/estimators.hpp"
#include "loglift/reference.hpp"
#include "loglift/tgc.hpp"

using namespace loglift;
using Eigen::VectorXd;

namespace {

// Desk-scale overrides for end-to-end cooling runs: generous step sizes and
// per-phase step counts far below the analysis-grade budgets, with patience
// N left effectively unlimited.
ParamScales desk_scales() {
    ParamScales s;
    s.C_k = 0.15;
    s.C_h_ann = 0.4;
    s.C_h_exp = 0.4;
    s.q_renyi = 12.0;
    s.loglog_h = 0.0;
    return s;
}

}  // namespace

TEST_CASE("cooling schedule update follows the phase rules") {
    const double l = 3.0, R = 2.0;

    CoolingSchedule s0 = initial_schedule(4, l, R);
    REQUIRE(s0.sigma2 == Catch::Approx(0.25).epsilon(1e-15));
    REQUIRE(s0.rho == Catch::Approx(1.0 / 3.0).epsilon(1e-15));
    REQUIRE(s0.phase == CoolingPhase::Init);

    // Phase I variance leg: sigma2 multiplies by (1 + 1/n).
    CoolingSchedule s1 = schedule_update(s0, 4);
    REQUIRE(s1.sigma2 == Catch::Approx(0.3125).epsilon(1e-15));
    REQUIRE(s1.rho == Catch::Approx((1.0 / 3.0) * (1.0 + 1.0 / 12.0)).epsilon(1e-15));
    REQUIRE(s1.phase == CoolingPhase::PhaseI);

    // The variance leg freezes once it crosses 1 (overshoot kept), while the
    // tilt leg keeps moving.
    CoolingSchedule frozen = s1;
    frozen.sigma2 = 1.2;
    CoolingSchedule s2 = schedule_update(frozen, 4);
    REQUIRE(s2.sigma2 == 1.2);
    REQUIRE(s2.rho > frozen.rho);

    // The tilt leg caps at n exactly.
    CoolingSchedule near_cap = s1;
    near_cap.sigma2 = 1.2;
    near_cap.rho = 3.999;
    CoolingSchedule s3 = schedule_update(near_cap, 4);
    REQUIRE(s3.rho == 4.0);
    REQUIRE(s3.phase == CoolingPhase::PhaseII);

    // Phase II: sigma2 <- min(l^2 R^2, sigma2 (1 + sigma2 / (l^2 R^2))).
    const double cap = l * l * R * R;
    CoolingSchedule p2{l, cap / 2.0, 4.0, CoolingPhase::PhaseII, R};
    CoolingSchedule s4 = schedule_update(p2, 4);
    REQUIRE(s4.sigma2 == Catch::Approx(0.75 * cap).epsilon(1e-15));
    REQUIRE(s4.phase == CoolingPhase::PhaseII);

    CoolingSchedule p3{l, 0.9 * cap, 4.0, CoolingPhase::PhaseII, R};
    CoolingSchedule s5 = schedule_update(p3, 4);
    REQUIRE(s5.sigma2 == cap);
    REQUIRE(s5.phase == CoolingPhase::Terminate);

    REQUIRE_THROWS_AS(schedule_update(s5, 4), argument_error);
    REQUIRE_THROWS_AS(schedule_update(s0, 0), argument_error);
    REQUIRE_THROWS_AS(initial_schedule(0, l, R), argument_error);
    REQUIRE_THROWS_AS(initial_schedule(2, -1.0, R), argument_error);
}

TEST_CASE("schedule sequence is monotone, deterministic, and threshold-driven") {
    struct Case {
        int n;
        double eps;
    };
    for (Case c : {Case{1, 0.1}, Case{3, 0.1}, Case{4, 0.3}}) {
        const double l = std::log(6.0 / c.eps);
        const double R = std::sqrt(double(c.n));
        const double cap = l * l * R * R;
        auto seq = schedule_sequence(c.n, l, R);

        REQUIRE(seq.front().sigma2 == 1.0 / c.n);
        REQUIRE(seq.front().rho == 1.0 / l);
        REQUIRE(seq.back().phase == CoolingPhase::Terminate);
        REQUIRE(seq.back().sigma2 == cap);
        REQUIRE(seq.back().rho == double(c.n));

        bool seen_phase2 = false;
        for (size_t j = 0; j + 1 < seq.size(); ++j) {
            REQUIRE(seq[j].phase != CoolingPhase::Terminate);
            REQUIRE(seq[j + 1].sigma2 >= seq[j].sigma2);
            REQUIRE(seq[j + 1].rho >= seq[j].rho);
            REQUIRE(seq[j].rho <= double(c.n));
            REQUIRE(seq[j].sigma2 <= cap);
            if (seq[j].phase == CoolingPhase::PhaseII) {
                seen_phase2 = true;
                REQUIRE(seq[j].sigma2 >= 1.0);
                REQUIRE(seq[j].rho == double(c.n));
            } else if (seen_phase2) {
                FAIL("phase went backwards");
            }
        }

        // Bit-for-bit deterministic.
        auto again = schedule_sequence(c.n, l, R);
        REQUIRE(again.size() == seq.size());
        for (size_t j = 0; j < seq.size(); ++j) {
            REQUIRE(again[j].sigma2 == seq[j].sigma2);
            REQUIRE(again[j].rho == seq[j].rho);
            REQUIRE(again[j].phase == seq[j].phase);
        }
    }
}

TEST_CASE("schedule length matches an independent recurrence at n=3") {
    const int n = 3;
    const double eps = 0.1;
    const double l = std::log(6.0 / eps);
    const double R = std::sqrt(3.0);
    auto seq = schedule_sequence(n, l, R);

    // Replay the published update rules in plain arithmetic.
    const double cap = l * l * R * R;
    double sigma2 = 1.0 / n, rho = 1.0 / l;
    size_t count = 1;
    while (!(sigma2 >= 1.0 && rho >= n)) {
        if (sigma2 < 1.0) sigma2 *= 1.0 + 1.0 / n;
        if (rho < n) rho = std::min(double(n), rho * (1.0 + 1.0 / (l * n)));
        ++count;
    }
    while (sigma2 < cap) {
        sigma2 = std::min(cap, sigma2 * (1.0 + sigma2 / cap));
        ++count;
    }
    REQUIRE(seq.size() == count);

    // Within the coarse phase-count bound n l log(n l) + l^2 R^2 log(l R).
    const double bound = n * l * std::log(n * l) + cap * std::log(l * R) + 10.0;
    REQUIRE(double(seq.size()) <= bound);

    // Doubling in Phase II takes at most ceil(cap / sigma0^2) * ln 2 + 1 steps.
    size_t first2 = 0;
    while (seq[first2].phase != CoolingPhase::PhaseII) ++first2;
    const double sigma0 = seq[first2].sigma2;
    const double goal = std::min(2.0 * sigma0, cap);
    size_t steps = 0;
    for (size_t j = first2; seq[j].sigma2 < goal; ++j) ++steps;
    REQUIRE(double(steps) <= std::ceil(cap / sigma0) * std::numbers::ln2 + 1.0);
}

TEST_CASE("rejection initialization lands in the body at constant acceptance") {
    const int n = 5;
    const double l = 2.0;
    Potential V = ball_indicator(VectorXd::Zero(n), 10.0);
    LiftedBody body = truncate_with_l(V, VectorXd::Zero(n), 10.0, l);
    Rng rng(2024);

    long long accepted = 0, proposals = 0;
    for (int i = 0; i < 2000; ++i) {
        auto [z, tr] = tgc_init(body, VectorXd::Zero(n), l, rng);
        proposals += tr.proposals;
        accepted += 1;
        if (i < 10) REQUIRE(body.contains(z));
        REQUIRE(tr.queries >= tr.proposals);
    }
    // Geometry: x always lands (ball radius 10 vs proposal scale 1/sqrt(5)),
    // t accepts on the (0, 31] part of the (-10, 31] window, so the
    // acceptance rate should sit near 31/41, comfortably above 1/2.
    double rate = double(accepted) / double(proposals);
    REQUIRE(rate >= 0.5);
    REQUIRE(rate <= 0.9);
}

TEST_CASE("rejection initialization failure modes") {
    // Infeasible start: V(x0) = inf.
    Potential V = ball_indicator(VectorXd::Zero(2), 1.0);
    LiftedBody body = truncate_with_l(V, VectorXd::Zero(2), 5.0, 1.0);
    Rng rng(7);
    VectorXd far(2);
    far << 5.0, 0.0;
    REQUIRE_THROWS_AS(tgc_init(body, far, 1.0, rng), infeasible_start_error);

    // Acceptance probability ~ 1e-7: the 10^4 l trial budget runs out.
    Potential needle = ball_indicator(VectorXd::Zero(1), 1e-7);
    LiftedBody nbody = truncate_with_l(needle, VectorXd::Zero(1), 5.0, 1.0);
    Rng rng2(8);
    REQUIRE_THROWS_AS(tgc_init(nbody, VectorXd::Zero(1), 1.0, rng2), init_error);

    REQUIRE_THROWS_AS(tgc_init(body, VectorXd::Zero(2), -1.0, rng), argument_error);
}

TEST_CASE("initialization x-marginal matches the quadrature CDF at n=1") {
    // Body: standard Gaussian lift truncated at x0 = 0, R = 3, l = 2, so the
    // x-ball is [-6, 6] and the t-window is (-10, 31].  The initialization
    // target exp(-x^2/2) 1[K-bar] has x-marginal density proportional to
    // exp(-x^2/2) (31 - x^2/2) on [-6, 6].
    const double l = 2.0;
    Potential V = std_gaussian(1);
    LiftedBody body = truncate_with_l(V, VectorXd::Zero(1), 3.0, l);
    const double t_max = 5.0 + 13.0 * l;

    const int G = 20001;
    const double lo = -6.0, hi = 6.0;
    std::vector<double> xs_grid(G), cdf_grid(G);
    double acc = 0.0;
    double prev = 0.0;
    for (int i = 0; i < G; ++i) {
        double x = lo + (hi - lo) * i / (G - 1);
        double w = std::exp(-0.5 * x * x) * (t_max - 0.5 * x * x);
        if (i > 0) acc += 0.5 * (w + prev);
        xs_grid[i] = x;
        cdf_grid[i] = acc;
        prev = w;
    }
    for (double& c : cdf_grid) c /= acc;
    auto cdf = [&](double x) {
        if (x <= lo) return 0.0;
        if (x >= hi) return 1.0;
        double u = (x - lo) / (hi - lo) * (G - 1);
        size_t i = static_cast<size_t>(u);
        double f = u - double(i);
        return cdf_grid[i] * (1.0 - f) + cdf_grid[i + 1] * f;
    };

    Rng rng(11);
    std::vector<double> draws;
    draws.reserve(10000);
    for (int i = 0; i < 10000; ++i) {
        auto [z, tr] = tgc_init(body, VectorXd::Zero(1), l, rng);
        draws.push_back(z.x(0));
    }
    REQUIRE(ks_test(draws, cdf) > 0.01);
}

TEST_CASE("consecutive schedule targets are mutually warm at n=1") {
    const double eps = 0.1;
    const double l = std::log(6.0 / eps);
    const double R = 1.0;
    Potential V = std_gaussian(1);
    LiftedBody body = truncate_with_l(V, VectorXd::Zero(1), R, l);
    auto seq = schedule_sequence(1, l, R);
    REQUIRE(seq.size() >= 20);

    const double M_relay = 2.0 * std::sqrt(std::numbers::e);
    auto params = [](const CoolingSchedule& s) {
        AnnealParams p;
        p.sigma2 = s.sigma2;
        p.rho = s.rho;
        return p;
    };
    for (size_t j = 0; j + 1 < seq.size(); ++j) {
        double m2 = ann_warmness_estimate(body, params(seq[j]), params(seq[j + 1]), 600);
        INFO("boundary " << j << ": sigma2 " << seq[j].sigma2 << " -> " << seq[j + 1].sigma2
                         << ", rho " << seq[j].rho << " -> " << seq[j + 1].rho);
        REQUIRE(m2 >= 1.0 - 1e-6);  // second moment of a unit-mean weight
        REQUIRE(m2 <= M_relay);
    }

    // The initialization handoff (mu_{1/n, 0} to the first schedule target)
    // is covered by the larger constant exp(13 + 5/l) used for that phase.
    AnnealParams init_law;
    init_law.sigma2 = 1.0;
    init_law.rho = 0.0;
    double m2_init = ann_warmness_estimate(body, init_law, params(seq.front()), 600);
    REQUIRE(m2_init > M_relay);  // genuinely not covered by the relay constant
    REQUIRE(m2_init <= std::exp(13.0 + 5.0 / l));

    // Termination handoff: d pi-bar / d mu_{l^2 R^2, n} = exp(x^2 / (2 l^2 R^2))
    // is at most sqrt(e) on the truncated body.
    AnnealParams last = params(seq.back());
    AnnealParams pi_bar;
    pi_bar.sigma2 = inf;
    pi_bar.rho = 1.0;
    double m2_term = ann_warmness_estimate(body, pi_bar, last, 600);
    REQUIRE(m2_term <= M_relay);
}

TEST_CASE("end-to-end cooling run matches the exact lifted law at n=1") {
    Potential V = std_gaussian(1);
    const double eps = 0.3, eta = 0.1, R = 1.0;
    const double l = std::log(6.0 / eps);
    auto seq = schedule_sequence(1, l, R);

    Rng rng(314159);
    const int runs = 1200;
    std::vector<VectorXd> got, want;
    got.reserve(runs);
    want.reserve(runs);
    RunTrace first_trace;
    for (int i = 0; i < runs; ++i) {
        Rng sub = rng.sub("tgc", static_cast<uint64_t>(i));
        TgcResult res = tgc_run(V, VectorXd::Zero(1), R, eps, eta, sub, desk_scales());
        REQUIRE(res.body.contains(res.point));
        VectorXd v(2);
        v << res.point.x(0), res.point.t;
        got.push_back(v);
        if (i == 0) first_trace = res.trace;

        Rng oracle = rng.sub("oracle", static_cast<uint64_t>(i));
        LiftedPoint w = exact_lifted_sample(res.body, oracle);
        VectorXd u(2);
        u << w.x(0), w.t;
        want.push_back(u);
    }

    Rng perm(99);
    TwoSampleResult ts = two_sample_test(got, want, 400, perm);
    REQUIRE(ts.p_energy > 0.005);
    for (double p : ts.ks_p) REQUIRE(p > 0.005);

    // Trace structure: rejection init + one entry per annealing target + the
    // terminal exponential phase.
    REQUIRE(first_trace.phase_log.size() == seq.size() + 2);
    REQUIRE(first_trace.phase_log.front().label == "rejection_init");
    REQUIRE(first_trace.phase_log.back().label == "terminate");
    long long total = 0;
    for (size_t j = 0; j < first_trace.phase_log.size(); ++j) {
        const auto& e = first_trace.phase_log[j];
        REQUIRE(e.index == static_cast<int>(j));
        REQUIRE(e.queries > 0);
        total += e.queries;
        if (j >= 1 && j + 1 < first_trace.phase_log.size()) {
            REQUIRE(e.sigma2 == seq[j - 1].sigma2);
            REQUIRE(e.rho == seq[j - 1].rho);
            REQUIRE(e.k > 0);
            REQUIRE(e.h > 0.0);
        }
    }
    REQUIRE(total == first_trace.queries);
}

TEST_CASE("cooling runs are reproducible and schedule-deterministic") {
    Potential V = std_gaussian(2);
    const double eps = 0.45, eta = 0.2, R = std::sqrt(2.0);
    const double l = std::log(6.0 / eps);
    auto seq = schedule_sequence(2, l, R);

    Rng a(555), b(555), c(777);
    TgcResult ra = tgc_run(V, VectorXd::Zero(2), R, eps, eta, a, desk_scales());
    TgcResult rb = tgc_run(V, VectorXd::Zero(2), R, eps, eta, b, desk_scales());
    TgcResult rc = tgc_run(V, VectorXd::Zero(2), R, eps, eta, c, desk_scales());

    // Same seed: identical output and identical work.
    REQUIRE(ra.point.x == rb.point.x);
    REQUIRE(ra.point.t == rb.point.t);
    REQUIRE(ra.trace.queries == rb.trace.queries);

    // Different seed: different randomness, identical parameter schedule.
    REQUIRE(ra.trace.phase_log.size() == seq.size() + 2);
    REQUIRE(rc.trace.phase_log.size() == ra.trace.phase_log.size());
    for (size_t j = 0; j < ra.trace.phase_log.size(); ++j) {
        REQUIRE(ra.trace.phase_log[j].sigma2 == rc.trace.phase_log[j].sigma2);
        REQUIRE(ra.trace.phase_log[j].rho == rc.trace.phase_log[j].rho);
        REQUIRE(ra.trace.phase_log[j].h == rc.trace.phase_log[j].h);
        REQUIRE(ra.trace.phase_log[j].k == rc.trace.phase_log[j].k);
    }
    REQUIRE(rc.body.contains(rc.point));

    // Effective and nominal scale maps are both recorded.
    REQUIRE(ra.trace.nominal_params.at("C_h_ann") == ParamScales{}.C_h_ann);
    REQUIRE(ra.trace.effective_params.at("C_h_ann") == desk_scales().C_h_ann);
}

TEST_CASE("cooling budget exhaustion raises cooling_error with the partial trace") {
    Potential V = std_gaussian(1);
    ParamScales starved = desk_scales();
    starved.C_h_ann = 1e-9;  // absurd step size: proposals always miss the body
    starved.C_N = 1e-9;      // and at most one backward trial is allowed

    Rng rng(4242);
    try {
        tgc_run(V, VectorXd::Zero(1), 1.0, 0.3, 0.1, rng, starved);
        FAIL("expected cooling_error");
    } catch (const cooling_error& e) {
        REQUIRE(e.phase_index() == 1);
        REQUIRE(e.trace().phase_log.size() == 2);  // init + the failed phase
        REQUIRE(e.trace().phase_log.back().failures >= 1);
        REQUIRE(e.trace().queries > 0);
        REQUIRE(std::string(e.what()).find("phase") != std::string::npos);
    }

    Rng rng2(1);
    REQUIRE_THROWS_AS(tgc_run(V, VectorXd::Zero(1), 1.0, 0.0, 0.1, rng2), argument_error);
    REQUIRE_THROWS_AS(tgc_run(V, VectorXd::Zero(1), 1.0, 0.3, 1.5, rng2), argument_error);
    REQUIRE_THROWS_AS(tgc_run(V, VectorXd::Zero(1), 0.0, 0.3, 0.1, rng2), argument_error);
}
