#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "loglift/common.hpp"
#include "loglift/trace.hpp"

namespace loglift {

struct PotentialMetadata {
    std::optional<Eigen::VectorXd> x0;  // reference point, typically near the minimizer
    std::optional<double> R;            // effective support radius around x0
    std::optional<double> v_min;        // min V, needed for ground-set queries
};

class AffineMap;
class Potential;
inline Potential pushforward(const Potential& p, const AffineMap& F);
inline Potential restrict_to(const Potential& p,
                             std::function<bool(const Eigen::VectorXd&)> pred);
inline Potential add(const Potential& p, const Potential& q);
inline Potential offset(const Potential& p, double c);
inline Potential ground_restrict(const Potential& p);

// Evaluation oracle for a convex potential V: R^n -> R u {+inf}.
// Infeasibility is IEEE +inf, never a large finite float, so comparisons
// absorb it without special cases.  Each evaluation bumps the query counter
// by exactly one; wrappers built by pushforward/restrict_to share the
// counter of the wrapped oracle.
class Potential {
  public:
    using Fn = std::function<double(const Eigen::VectorXd&)>;

    Potential(int dim, Fn f, PotentialMetadata meta = {})
        : dim_(dim),
          f_(std::move(f)),
          count_(std::make_shared<std::atomic<long long>>(0)),
          meta_(std::move(meta)) {}

    int dim() const { return dim_; }

    double operator()(const Eigen::VectorXd& x) const {
        if (static_cast<int>(x.size()) != dim_)
            throw argument_error("potential: expected dimension " +
                                 std::to_string(dim_) + ", got " +
                                 std::to_string(x.size()));
        count_->fetch_add(1, std::memory_order_relaxed);
        double v = f_(x);
        if (std::isnan(v)) throw oracle_error("potential returned NaN");
        return v;
    }

    long long query_count() const { return count_->load(); }
    void reset_query_count() const { count_->store(0); }

    const PotentialMetadata& metadata() const { return meta_; }
    PotentialMetadata& metadata() { return meta_; }

  private:
    Potential(int dim, Fn f, std::shared_ptr<std::atomic<long long>> count,
              PotentialMetadata meta)
        : dim_(dim), f_(std::move(f)), count_(std::move(count)), meta_(std::move(meta)) {}

    double raw(const Eigen::VectorXd& x) const { return f_(x); }

    friend Potential pushforward(const Potential&, const AffineMap&);
    friend Potential restrict_to(const Potential&,
                                 std::function<bool(const Eigen::VectorXd&)>);
    friend Potential add(const Potential&, const Potential&);
    friend Potential offset(const Potential&, double);
    friend Potential ground_restrict(const Potential&);

    int dim_;
    Fn f_;
    std::shared_ptr<std::atomic<long long>> count_;
    PotentialMetadata meta_;
};

inline double evaluate(const Potential& p, const Eigen::VectorXd& x) { return p(x); }

// Membership in the ground set {V - min V <= 10 n}.  Costs one query.
inline bool ground_set_contains(const Potential& p, const Eigen::VectorXd& x) {
    if (!p.metadata().v_min)
        throw config_error("ground_set_contains: potential has no v_min metadata");
    return p(x) - *p.metadata().v_min <= 10.0 * p.dim();
}

// Invertible affine map x -> A x + b.  Singularity is rejected at
// construction so downstream pushforwards never have to re-check.
class AffineMap {
  public:
    AffineMap(Eigen::MatrixXd A, Eigen::VectorXd b)
        : A_(std::move(A)), b_(std::move(b)), lu_(A_) {
        if (A_.rows() != A_.cols())
            throw argument_error("affine map: matrix must be square");
        if (b_.size() != A_.rows())
            throw argument_error("affine map: shift size does not match matrix");
        if (!lu_.isInvertible())
            throw argument_error("affine map: matrix is singular");
    }

    static AffineMap identity(int n) {
        return AffineMap(Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Zero(n));
    }

    int dim() const { return static_cast<int>(A_.rows()); }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return A_ * x + b_; }

    Eigen::VectorXd apply_inverse(const Eigen::VectorXd& y) const {
        return lu_.solve(y - b_);
    }

    // this o inner: x -> A (A_in x + b_in) + b.
    AffineMap compose(const AffineMap& inner) const {
        return AffineMap(A_ * inner.A_, A_ * inner.b_ + b_);
    }

    double log_abs_det() const {
        return std::log(std::abs(lu_.determinant()));
    }

    const Eigen::MatrixXd& matrix() const { return A_; }
    const Eigen::VectorXd& shift() const { return b_; }

  private:
    Eigen::MatrixXd A_;
    Eigen::VectorXd b_;
    Eigen::FullPivLU<Eigen::MatrixXd> lu_;
};

// W = V o F^{-1}.  Queries delegate to the wrapped oracle's counter.
inline Potential pushforward(const Potential& p, const AffineMap& F) {
    if (F.dim() != p.dim())
        throw argument_error("pushforward: map dimension does not match potential");
    PotentialMetadata meta = p.metadata();
    if (meta.x0) meta.x0 = F.apply(*meta.x0);
    if (meta.R) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(F.matrix());
        meta.R = *meta.R * svd.singularValues()(0);
    }
    return Potential(
        p.dim(), [p, F](const Eigen::VectorXd& y) { return p.raw(F.apply_inverse(y)); },
        p.count_, std::move(meta));
}

// V + (+inf outside pred).  V is always evaluated first so the query count
// of a membership test does not depend on where the point lies.
inline Potential restrict_to(const Potential& p,
                             std::function<bool(const Eigen::VectorXd&)> pred) {
    return Potential(
        p.dim(),
        [p, pred = std::move(pred)](const Eigen::VectorXd& x) {
            double v = p.raw(x);
            return pred(x) ? v : inf;
        },
        p.count_, p.metadata());
}

// V + c, sharing V's counter.
inline Potential offset(const Potential& p, double c) {
    PotentialMetadata meta = p.metadata();
    if (meta.v_min) meta.v_min = *meta.v_min + c;
    return Potential(
        p.dim(), [p, c](const Eigen::VectorXd& x) { return p.raw(x) + c; },
        p.count_, std::move(meta));
}

// V restricted to its own ground set {V - v_min <= 10 n}: +inf outside.
// Needs v_min metadata.  One query per evaluation, counter shared.
inline Potential ground_restrict(const Potential& p) {
    if (!p.metadata().v_min)
        throw config_error("ground_restrict: potential has no v_min metadata");
    const double cap = *p.metadata().v_min + 10.0 * p.dim();
    return Potential(
        p.dim(),
        [p, cap](const Eigen::VectorXd& x) {
            double v = p.raw(x);
            return v <= cap ? v : inf;
        },
        p.count_, p.metadata());
}

// V + W with a fresh counter; the operands' counters do not move.
inline Potential add(const Potential& p, const Potential& q) {
    if (p.dim() != q.dim()) throw argument_error("add: dimension mismatch");
    PotentialMetadata meta = p.metadata();
    if (!meta.v_min && q.metadata().v_min) meta.v_min = q.metadata().v_min;
    if (!meta.R && q.metadata().R) meta.R = q.metadata().R;
    if (!meta.x0 && q.metadata().x0) meta.x0 = q.metadata().x0;
    return Potential(
        p.dim(), [p, q](const Eigen::VectorXd& x) { return p.raw(x) + q.raw(x); },
        std::move(meta));
}

// --- built-in potentials ---

// V(x) = v0 + (x-c)' Q (x-c) / 2 for symmetric positive definite Q.
inline Potential quadratic(const Eigen::MatrixXd& Q, const Eigen::VectorXd& center,
                           double v0 = 0.0) {
    if (Q.rows() != Q.cols() || Q.rows() != center.size())
        throw argument_error("quadratic: shape mismatch");
    PotentialMetadata meta;
    meta.x0 = center;
    meta.v_min = v0;
    Eigen::LLT<Eigen::MatrixXd> llt(Q);
    if (llt.info() == Eigen::Success) {
        double tr_inv = llt.solve(Eigen::MatrixXd::Identity(Q.rows(), Q.cols())).trace();
        meta.R = 8.0 * std::sqrt(tr_inv);
    }
    return Potential(
        static_cast<int>(center.size()),
        [Q, center, v0](const Eigen::VectorXd& x) {
            Eigen::VectorXd d = x - center;
            return v0 + 0.5 * d.dot(Q * d);
        },
        std::move(meta));
}

inline Potential std_gaussian(int n) {
    return quadratic(Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Zero(n));
}

// Indicator of the axis box [lo, hi] (0 inside, +inf outside).
inline Potential box_indicator(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    if (lo.size() != hi.size() || ((hi - lo).array() <= 0.0).any())
        throw argument_error("box_indicator: need lo < hi componentwise");
    PotentialMetadata meta;
    meta.x0 = 0.5 * (lo + hi);
    meta.v_min = 0.0;
    meta.R = 0.5 * (hi - lo).norm();
    return Potential(
        static_cast<int>(lo.size()),
        [lo, hi](const Eigen::VectorXd& x) {
            return ((x.array() >= lo.array()) && (x.array() <= hi.array())).all()
                       ? 0.0
                       : inf;
        },
        std::move(meta));
}

inline Potential ball_indicator(const Eigen::VectorXd& center, double radius) {
    if (radius <= 0.0) throw argument_error("ball_indicator: radius must be positive");
    PotentialMetadata meta;
    meta.x0 = center;
    meta.v_min = 0.0;
    meta.R = radius;
    return Potential(
        static_cast<int>(center.size()),
        [center, radius](const Eigen::VectorXd& x) {
            return (x - center).norm() <= radius ? 0.0 : inf;
        },
        std::move(meta));
}

// V(x) = max_i (a_i' x + b_i); rows of A are the slopes.
inline Potential max_affine(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    if (A.rows() != b.size() || A.rows() == 0)
        throw argument_error("max_affine: need one offset per row");
    return Potential(static_cast<int>(A.cols()),
                     [A, b](const Eigen::VectorXd& x) {
                         return (A * x + b).maxCoeff();
                     });
}

// --- derivative-free minimizer ---

struct MinimizeResult {
    Eigen::VectorXd x;
    double value = inf;
    RunTrace trace;
};

namespace detail {

// Golden-section line search for convex g on a bracket [a, b].
// Evaluations are charged to the caller's budget through `left`.
template <class G>
double golden_min(G&& g, double a, double b, double tol, long long& left) {
    constexpr double phi = 0.6180339887498949;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double g1 = g(x1), g2 = g(x2);
    left -= 2;
    while (b - a > tol && left > 0) {
        if (g1 <= g2) {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - phi * (b - a);
            g1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + phi * (b - a);
            g2 = g(x2);
        }
        --left;
    }
    return 0.5 * (a + b);
}

}  // namespace detail

// Cyclic coordinate descent with expanding brackets, for convex V.
// Stops on sweep improvement < tol or when the query budget runs out.
inline MinimizeResult minimize_coordinate_descent(const Potential& p,
                                                  Eigen::VectorXd x,
                                                  double tol = 1e-6,
                                                  long long budget = 100000) {
    if (static_cast<int>(x.size()) != p.dim())
        throw argument_error("minimize: start point has wrong dimension");
    MinimizeResult res;
    long long start_queries = p.query_count();
    long long left = budget;
    double fx = p(x);
    --left;
    if (!std::isfinite(fx))
        throw infeasible_start_error("minimize: start point has infinite potential");

    for (int sweep = 0; sweep < 200 && left > 0; ++sweep) {
        double f_before = fx;
        for (int i = 0; i < p.dim() && left > 0; ++i) {
            auto g = [&](double s) {
                Eigen::VectorXd y = x;
                y(i) += s;
                return p(y);
            };
            // Expand until the potential increases in both directions.
            double step = 1.0;
            double lo = -step, hi = step;
            double glo = g(lo), ghi = g(hi);
            left -= 2;
            while (glo < fx && left > 0 && std::isfinite(lo)) {
                lo *= 2.0;
                glo = g(lo);
                --left;
            }
            while (ghi < fx && left > 0 && std::isfinite(hi)) {
                hi *= 2.0;
                ghi = g(hi);
                --left;
            }
            double s = detail::golden_min(g, lo, hi, tol, left);
            Eigen::VectorXd y = x;
            y(i) += s;
            double fy = p(y);
            --left;
            if (fy < fx) {
                x = y;
                fx = fy;
            }
        }
        if (f_before - fx < tol) break;
    }
    res.x = x;
    res.value = fx;
    res.trace.queries = p.query_count() - start_queries;
    res.trace.effective_params["budget"] = static_cast<double>(budget);
    res.trace.effective_params["tol"] = tol;
    if (left <= 0) res.trace.notes.push_back("minimize: query budget exhausted");
    return res;
}

}  // namespace loglift
