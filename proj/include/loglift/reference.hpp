#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "loglift/common.hpp"
#include "loglift/lifted.hpp"
#include "loglift/rng.hpp"
#include "loglift/sampler_ann.hpp"

namespace loglift {

// Deterministic trapezoid grid over a box, dimensions 1 to 3.  Meant as an
// independent check on anything the samplers produce, so it shares no code
// with them.
struct QuadratureGrid {
    std::vector<std::pair<double, double>> bounds;
    int points_per_dim = 400;
};

// log of integral exp(g(x)) dx over the grid box.  Streaming log-sum-exp,
// guarded at 1e8 total nodes.
inline double quad_log_integral(const std::function<double(const Eigen::VectorXd&)>& g,
                                const QuadratureGrid& grid) {
    int d = static_cast<int>(grid.bounds.size());
    if (d < 1 || d > 3)
        throw argument_error("quad_log_integral: dimension must be 1, 2 or 3");
    int P = grid.points_per_dim;
    if (P < 2) throw argument_error("quad_log_integral: need at least 2 points per dim");
    double total = std::pow(static_cast<double>(P), d);
    if (total > 1e8) throw argument_error("quad_log_integral: grid exceeds 1e8 nodes");

    std::vector<double> step(d);
    for (int i = 0; i < d; ++i) {
        if (!(grid.bounds[i].second > grid.bounds[i].first))
            throw argument_error("quad_log_integral: empty bounds");
        step[i] = (grid.bounds[i].second - grid.bounds[i].first) / (P - 1);
    }

    // Streaming log-sum-exp: rescale the running sum when the max moves.
    double m = -inf, s = 0.0;
    std::vector<int> idx(d, 0);
    Eigen::VectorXd x(d);
    while (true) {
        double logw = 0.0;
        for (int i = 0; i < d; ++i) {
            x(i) = grid.bounds[i].first + step[i] * idx[i];
            if (idx[i] == 0 || idx[i] == P - 1) logw += std::log(0.5);
        }
        double lv = g(x) + logw;
        if (lv > m) {
            if (m != -inf) s *= std::exp(m - lv);
            m = lv;
            s += 1.0;
        } else if (lv != -inf) {
            s += std::exp(lv - m);
        }
        int i = 0;
        while (i < d && ++idx[i] == P) idx[i++] = 0;
        if (i == d) break;
    }
    double log_vol = 0.0;
    for (int i = 0; i < d; ++i) log_vol += std::log(step[i]);
    if (m == -inf) return -inf;
    return m + std::log(s) + log_vol;
}

// Exact sampler for an annealing target over a truncated body.  Written to
// be independent of the chain samplers: the t coordinate factorizes given x
// (truncated exponential over [V(x)/n, t_max], drawn by inverse CDF), and x
// follows by rejection with the t-slab weight
//   w(x) ~ integral over the slab of e^{-rho t} dt,
// proposed from the target's own Gaussian factor (or uniformly on the x-ball
// when sigma2 = inf).  Dimension of x at most 2; truncation must be bounded.
inline LiftedPoint exact_ann_sample(const LiftedBody& body, const AnnealParams& p,
                                    Rng& rng) {
    int n = body.xdim();
    if (n > 2) throw argument_error("exact_ann_sample: only dimensions 1 and 2");
    if (!body.truncation())
        throw argument_error("exact_ann_sample: body must be truncated");
    const Truncation& tr = *body.truncation();
    if (!std::isfinite(tr.radius_x) || !std::isfinite(tr.t_min) ||
        !std::isfinite(tr.t_max))
        throw argument_error("exact_ann_sample: truncation must be bounded");
    const Potential& V = body.potential();
    Eigen::VectorXd c = p.center_or_zero(n);
    // Global floor of the slab lower ends, for normalizing the weight.
    double L = V.metadata().v_min ? std::max(tr.t_min, *V.metadata().v_min / n)
                                  : tr.t_min;
    const long long max_trials = 10000000;
    for (long long trial = 1; trial <= max_trials; ++trial) {
        // Propose x; the Gaussian factor of the target cancels against the
        // proposal, leaving only the slab weight.
        Eigen::VectorXd x(n);
        if (std::isfinite(p.sigma2)) {
            x = c + std::sqrt(p.sigma2) * rng.gaussian(n);
            if ((x - tr.center).norm() > tr.radius_x) continue;
        } else {
            // Uniform on the x-ball (n <= 2).
            if (n == 1) {
                x(0) = tr.center(0) + tr.radius_x * (2.0 * rng.unif01() - 1.0);
            } else {
                double r = tr.radius_x * std::sqrt(rng.unif01());
                double a = 2.0 * std::numbers::pi * rng.unif01();
                x(0) = tr.center(0) + r * std::cos(a);
                x(1) = tr.center(1) + r * std::sin(a);
            }
        }
        double v = V(x);
        double lo = std::max(v / n, tr.t_min);
        if (!(lo < tr.t_max)) continue;
        double w;
        if (p.rho > 0.0) {
            double E = std::exp(-p.rho * (tr.t_max - L));
            w = (std::exp(-p.rho * (lo - L)) - E) / (1.0 - E);
        } else {
            w = (tr.t_max - lo) / (tr.t_max - L);
        }
        if (rng.unif01() > w) continue;
        LiftedPoint z;
        z.x = x;
        if (p.rho > 0.0) {
            double u = rng.unif01();
            z.t = lo - std::log1p(-u * (1.0 - std::exp(-p.rho * (tr.t_max - lo)))) / p.rho;
        } else {
            z.t = rng.uniform(lo, tr.t_max);
        }
        if (!body.contains(z))
            throw oracle_error("exact_ann_sample: inconsistent membership");
        return z;
    }
    throw oracle_error("exact_ann_sample: acceptance rate below 1e-6");
}

// Exact sampler for e^{-nt} over the truncated body (the rho = n,
// sigma2 = inf annealing endpoint).
inline LiftedPoint exact_lifted_sample(const LiftedBody& body, Rng& rng) {
    AnnealParams p;
    p.sigma2 = inf;
    p.rho = static_cast<double>(body.xdim());
    return exact_ann_sample(body, p, rng);
}

// Warmness of one annealing target with respect to another, estimated as the
// importance-weight second moment
//
//   E_{mu_b}[ (d mu_a / d mu_b)^2 ]  =  1 + chi^2(mu_a || mu_b)  >=  1,
//
// computed by grid quadrature of both normalized densities over the
// truncated body.  This is the quantity an importance-weight estimate of the
// warmness constant concentrates around; x-dimension 1 only, truncation must
// be bounded.
inline double ann_warmness_estimate(const LiftedBody& body, const AnnealParams& a,
                                    const AnnealParams& b, int points_per_dim = 800) {
    if (body.xdim() != 1)
        throw argument_error("ann_warmness_estimate: x-dimension must be 1");
    const auto& tr = body.truncation();
    if (!tr || !std::isfinite(tr->radius_x) || !std::isfinite(tr->t_min) ||
        !std::isfinite(tr->t_max))
        throw argument_error("ann_warmness_estimate: truncation must be bounded");

    const double cx = tr->center(0);
    const QuadratureGrid grid{
        {{cx - tr->radius_x, cx + tr->radius_x}, {tr->t_min, tr->t_max}}, points_per_dim};
    auto masked = [&body](auto&& f) {
        return [&body, f](const Eigen::VectorXd& v) {
            LiftedPoint z;
            z.x = v.head(1);
            z.t = v(1);
            return body.contains(z) ? f(z) : -inf;
        };
    };
    const double log_za = quad_log_integral(
        masked([&a](const LiftedPoint& z) { return log_ann_density(a, z); }), grid);
    const double log_zb = quad_log_integral(
        masked([&b](const LiftedPoint& z) { return log_ann_density(b, z); }), grid);
    const double log_second = quad_log_integral(
        masked([&a, &b](const LiftedPoint& z) {
            return 2.0 * log_ann_density(a, z) - log_ann_density(b, z);
        }),
        grid);
    if (!std::isfinite(log_za) || !std::isfinite(log_zb) || !std::isfinite(log_second))
        throw degenerate_estimate_error("ann_warmness_estimate: degenerate grid masses");
    return std::exp(log_second - 2.0 * log_za + log_zb);
}

// One-dimensional truncated Gaussian by direct rejection.
inline double truncated_gaussian_1d(double mean, double sd, double lo, double hi,
                                    Rng& rng) {
    if (!(sd > 0.0) || !(hi > lo))
        throw argument_error("truncated_gaussian_1d: bad parameters");
    for (long long trial = 0; trial < 10000000; ++trial) {
        double x = mean + sd * rng.normal();
        if (x >= lo && x <= hi) return x;
    }
    throw oracle_error("truncated_gaussian_1d: acceptance rate below 1e-6");
}

}  // namespace loglift
