#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "loglift/common.hpp"
#include "loglift/potential.hpp"
#include "loglift/rng.hpp"

namespace loglift {

// Point of the lifted space R^n x R.
struct LiftedPoint {
    Eigen::VectorXd x;
    double t = 0.0;
};

// Axis-aligned truncation of the lift: an x-ball around `center` and a
// t-window.  Infinite fields disable the corresponding check.
struct Truncation {
    Eigen::VectorXd center;
    double radius_x = inf;
    double t_min = -inf;
    double t_max = inf;
};

// The lifted body K = {(x, t) : V(x) <= n t}, optionally truncated.
// Membership always costs exactly one oracle query.
class LiftedBody {
  public:
    explicit LiftedBody(Potential V, std::optional<Truncation> trunc = std::nullopt)
        : V_(std::move(V)), trunc_(std::move(trunc)) {}

    int xdim() const { return V_.dim(); }

    bool contains(const LiftedPoint& z) const {
        double v = V_(z.x);  // the one query, taken unconditionally
        if (v > xdim() * z.t) return false;
        if (trunc_) {
            if (z.t < trunc_->t_min || z.t > trunc_->t_max) return false;
            if (std::isfinite(trunc_->radius_x) &&
                (z.x - trunc_->center).norm() > trunc_->radius_x)
                return false;
        }
        return true;
    }

    const Potential& potential() const { return V_; }
    const std::optional<Truncation>& truncation() const { return trunc_; }
    std::optional<Truncation>& truncation() { return trunc_; }

  private:
    Potential V_;
    std::optional<Truncation> trunc_;
};

// Exact lift of x: t = V(x)/n - log(u)/n with u ~ Unif(0, 1], so that
// (x, t) follows e^{-nt} above x.  One oracle query.
inline LiftedPoint lift_sample(const Potential& V, const Eigen::VectorXd& x, Rng& rng) {
    double v = V(x);
    if (!std::isfinite(v))
        throw infeasible_start_error("lift_sample: V(x) is not finite");
    int n = V.dim();
    return {x, v / n - std::log(rng.unif01()) / n};
}

// Truncation with an explicit tail parameter l:
//   x-ball of radius R*l around x0, t <= V(x0)/n + 5 + 13 l.
// The floor sits below (min V)/n, so it never cuts mass of K; it only
// bounds proposal windows.  Costs one query (V(x0)).
inline LiftedBody truncate_with_l(const Potential& V, const Eigen::VectorXd& x0,
                                  double R, double l) {
    if (!(R > 0.0) || !(l > 0.0))
        throw argument_error("truncate_with_l: need R > 0 and l > 0");
    double v0 = V(x0);
    if (!std::isfinite(v0))
        throw infeasible_start_error("truncate_with_l: V(x0) is not finite");
    int n = V.dim();
    double floor =
        V.metadata().v_min ? *V.metadata().v_min / n - 10.0 : v0 / n - 10.0;
    Truncation tr;
    tr.center = x0;
    tr.radius_x = R * l;
    tr.t_min = floor;
    tr.t_max = v0 / n + 5.0 + 13.0 * l;
    return LiftedBody(V, tr);
}

// Standard truncation at accuracy eps: l = log(2e/eps).
inline LiftedBody truncate(const Potential& V, const Eigen::VectorXd& x0, double eps) {
    if (!(eps > 0.0) || !(eps < 1.0))
        throw argument_error("truncate: need 0 < eps < 1");
    double R = V.metadata().R ? *V.metadata().R : inf;
    if (!std::isfinite(R))
        throw config_error("truncate: potential has no radius metadata");
    return truncate_with_l(V, x0, R, std::log(2.0 * std::numbers::e / eps));
}

// Affine map of the lifted space acting on x only, plus a t shift.
struct LiftedAffine {
    AffineMap xmap;
    double t_shift = 0.0;

    LiftedPoint apply(const LiftedPoint& z) const {
        return {xmap.apply(z.x), z.t + t_shift};
    }
    LiftedPoint apply_inverse(const LiftedPoint& z) const {
        return {xmap.apply_inverse(z.x), z.t - t_shift};
    }
};

// Pushforward of a lifted body under a lifted affine map.  The new
// potential is W(y) = V(F^{-1} y) + n * t_shift, so {W <= n t'} equals the
// image of {V <= n t}.  A non-isometric x-map turns the ball truncation
// into an ellipsoid, which gets folded into the membership predicate.
inline LiftedBody pushforward(const LiftedBody& body, const LiftedAffine& F) {
    int n = body.xdim();
    Potential W = pushforward(body.potential(), F.xmap);
    if (F.t_shift != 0.0) W = offset(W, n * F.t_shift);

    std::optional<Truncation> tr;
    if (body.truncation()) {
        tr = *body.truncation();
        tr->t_min += F.t_shift;
        tr->t_max += F.t_shift;
        Eigen::MatrixXd gram =
            F.xmap.matrix().transpose() * F.xmap.matrix() -
            Eigen::MatrixXd::Identity(n, n);
        bool isometry = gram.lpNorm<Eigen::Infinity>() < 1e-10;
        if (isometry || !std::isfinite(tr->radius_x)) {
            tr->center = F.xmap.apply(tr->center);
        } else {
            AffineMap m = F.xmap;
            Eigen::VectorXd c = tr->center;
            double r = tr->radius_x;
            W = restrict_to(W, [m, c, r](const Eigen::VectorXd& y) {
                return (m.apply_inverse(y) - c).norm() <= r;
            });
            tr->center = F.xmap.apply(tr->center);
            tr->radius_x = inf;
        }
    }
    return LiftedBody(std::move(W), std::move(tr));
}

// Standard translation (x, t) -> (x - x0, t - V(x0)/n - 11).  Apply with
// `pushforward` to move the body.  Costs one query.
inline LiftedAffine standard_translation(const Potential& V, const Eigen::VectorXd& x0) {
    double v0 = V(x0);
    if (!std::isfinite(v0))
        throw infeasible_start_error("standard_translation: V(x0) is not finite");
    int n = V.dim();
    return {AffineMap(Eigen::MatrixXd::Identity(n, n), -x0), -v0 / n - 11.0};
}

// Heuristic probe: do 100 points of the unit sphere around x0 stay in the
// ground set?
inline bool unit_ball_in_ground_set(const Potential& V, const Eigen::VectorXd& x0,
                                    Rng& rng) {
    int n = V.dim();
    for (int i = 0; i < 100; ++i) {
        Eigen::VectorXd u = rng.gaussian(n);
        double norm = u.norm();
        if (norm == 0.0) continue;
        if (!ground_set_contains(V, x0 + u / norm)) return false;
    }
    return true;
}

}  // namespace loglift
