#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "loglift/common.hpp"
#include "loglift/estimators.hpp"
#include "loglift/lifted.hpp"
#include "loglift/potential.hpp"
#include "loglift/reference.hpp"
#include "loglift/rng.hpp"

using namespace loglift;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("rng streams are deterministic and properly ranged") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());

    Rng c(42);
    for (int i = 0; i < 10000; ++i) {
        double u = c.unif01();
        REQUIRE(u > 0.0);
        REQUIRE(u <= 1.0);
    }

    SECTION("sub-streams differ by name and index but replay exactly") {
        Rng root(7);
        Rng s1 = root.sub("chain", 0), s2 = root.sub("chain", 1), s3 = root.sub("phase", 0);
        REQUIRE(s1.next_u64() != s2.next_u64());
        Rng s1b = Rng(7).sub("chain", 0);
        Rng s1c = Rng(7).sub("chain", 0);
        for (int i = 0; i < 100; ++i) REQUIRE(s1b.next_u64() == s1c.next_u64());
        REQUIRE(Rng(7).sub("chain", 0).next_u64() != s3.next_u64());
    }

    SECTION("normal moments") {
        Rng r(123);
        double s = 0.0, s2 = 0.0;
        const int m = 40000;
        for (int i = 0; i < m; ++i) {
            double g = r.normal();
            s += g;
            s2 += g * g;
        }
        REQUIRE(std::abs(s / m) < 0.02);
        REQUIRE(std::abs(s2 / m - 1.0) < 0.03);
    }
}

TEST_CASE("potential evaluation counts queries exactly once") {
    Potential p = std_gaussian(2);
    REQUIRE(p.query_count() == 0);
    VectorXd x = VectorXd::Zero(2);
    REQUIRE(p(x) == 0.0);
    REQUIRE(p.query_count() == 1);
    REQUIRE(evaluate(p, x) == 0.0);
    REQUIRE(p.query_count() == 2);

    VectorXd bad = VectorXd::Zero(3);
    REQUIRE_THROWS_AS(p(bad), argument_error);
    REQUIRE(p.query_count() == 2);

    p.reset_query_count();
    REQUIRE(p.query_count() == 0);
}

TEST_CASE("infeasibility is IEEE infinity") {
    VectorXd lo = VectorXd::Constant(2, -1.0), hi = VectorXd::Constant(2, 1.0);
    Potential b = box_indicator(lo, hi);
    REQUIRE(b(VectorXd::Zero(2)) == 0.0);
    REQUIRE(std::isinf(b(VectorXd::Constant(2, 3.0))));
}

TEST_CASE("built-in potentials are convex on 1000 random triples") {
    Rng rng(2024);
    MatrixXd Q(2, 2);
    Q << 2.0, 0.3, 0.3, 1.0;
    VectorXd lo = VectorXd::Constant(2, -2.0), hi = VectorXd::Constant(2, 2.0);
    MatrixXd A(3, 2);
    A << 1.0, 0.0, -1.0, 0.5, 0.2, -1.0;
    VectorXd bvec(3);
    bvec << 0.0, 0.5, -0.25;
    std::vector<Potential> pots;
    pots.push_back(quadratic(Q, VectorXd::Ones(2)));
    pots.push_back(box_indicator(lo, hi));
    pots.push_back(ball_indicator(VectorXd::Zero(2), 1.5));
    pots.push_back(max_affine(A, bvec));
    pots.push_back(add(quadratic(Q, VectorXd::Zero(2)), box_indicator(lo, hi)));

    for (const Potential& p : pots) {
        for (int i = 0; i < 1000; ++i) {
            VectorXd x = 3.0 * rng.gaussian(2), y = 3.0 * rng.gaussian(2);
            double lam = 0.1 + 0.8 * rng.unif01();
            double lhs = p(lam * x + (1.0 - lam) * y);
            double rhs = lam * p(x) + (1.0 - lam) * p(y);
            REQUIRE(lhs <= rhs + 1e-9);
        }
    }
}

TEST_CASE("ground set membership needs v_min") {
    MatrixXd A(1, 2);
    A << 1.0, 1.0;
    VectorXd b(1);
    b << 0.0;
    Potential p = max_affine(A, b);  // no metadata
    REQUIRE_THROWS_AS(ground_set_contains(p, VectorXd::Zero(2)), config_error);

    Potential g = std_gaussian(2);  // v_min = 0, threshold 10 n = 20
    REQUIRE(ground_set_contains(g, VectorXd::Zero(2)));
    VectorXd far = VectorXd::Constant(2, 10.0);  // V = 100 > 20
    REQUIRE_FALSE(ground_set_contains(g, far));
}

TEST_CASE("affine maps round-trip and reject singular matrices") {
    Rng rng(5);
    MatrixXd A = MatrixXd::Identity(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) A(i, j) += 0.3 * rng.normal();
    VectorXd b = rng.gaussian(4);
    AffineMap F(A, b);
    for (int i = 0; i < 50; ++i) {
        VectorXd x = rng.gaussian(4);
        VectorXd back = F.apply_inverse(F.apply(x));
        REQUIRE((back - x).norm() <= 1e-10 * (1.0 + x.norm()));
    }
    REQUIRE(std::abs(F.log_abs_det() - std::log(std::abs(A.determinant()))) < 1e-9);

    MatrixXd S = MatrixXd::Zero(3, 3);
    S(0, 0) = 1.0;
    REQUIRE_THROWS_AS(AffineMap(S, VectorXd::Zero(3)), argument_error);
}

TEST_CASE("pushforward delegates queries and composes contravariantly") {
    Rng rng(11);
    Potential p = quadratic(MatrixXd::Identity(3, 3), VectorXd::Zero(3));
    MatrixXd A = MatrixXd::Identity(3, 3), B = MatrixXd::Identity(3, 3);
    A(0, 1) = 0.5;
    B(2, 0) = -0.7;
    B(1, 1) = 2.0;
    AffineMap F(A, VectorXd::Ones(3)), G(B, -VectorXd::Ones(3));

    Potential w = pushforward(p, F);
    long long before = p.query_count();
    VectorXd y = rng.gaussian(3);
    double wy = w(y);
    REQUIRE(p.query_count() == before + 1);
    REQUIRE(wy == Catch::Approx(p(F.apply_inverse(y))).margin(1e-12));

    Potential lhs = pushforward(pushforward(p, F), G);
    Potential rhs = pushforward(p, G.compose(F));
    for (int i = 0; i < 100; ++i) {
        VectorXd z = 2.0 * rng.gaussian(3);
        REQUIRE(std::abs(lhs(z) - rhs(z)) <= 1e-9 * (1.0 + std::abs(rhs(z))));
    }
}

TEST_CASE("offset and restrict_to share the wrapped counter") {
    Potential p = std_gaussian(2);
    Potential shifted = offset(p, 3.0);
    Potential gated = restrict_to(p, [](const VectorXd& x) { return x(0) >= 0.0; });

    REQUIRE(shifted(VectorXd::Zero(2)) == 3.0);
    REQUIRE(p.query_count() == 1);
    REQUIRE(gated(VectorXd::Zero(2)) == 0.0);
    REQUIRE(p.query_count() == 2);
    REQUIRE(std::isinf(gated(-VectorXd::Ones(2))));
    REQUIRE(p.query_count() == 3);  // V evaluated even when the gate rejects
    REQUIRE(*shifted.metadata().v_min == 3.0);
}

TEST_CASE("coordinate descent minimizer") {
    SECTION("coupled quadratic") {
        MatrixXd Q(3, 3);
        Q << 3.0, 0.4, 0.0, 0.4, 2.0, -0.3, 0.0, -0.3, 1.5;
        VectorXd c(3);
        c << 1.0, -2.0, 3.0;
        Potential p = quadratic(Q, c, 0.25);
        MinimizeResult r = minimize_coordinate_descent(p, VectorXd::Zero(3));
        REQUIRE(r.value == Catch::Approx(0.25).margin(1e-6));
        REQUIRE((r.x - c).norm() < 1e-2);
        REQUIRE(r.trace.queries <= 100000);
    }
    SECTION("piecewise linear") {
        MatrixXd A(2, 1);
        A << -1.0, 1.0;
        VectorXd b(2);
        b << 0.0, -1.0;  // max(-x, x - 1), min -0.5 at x = 0.5
        Potential p = max_affine(A, b);
        MinimizeResult r = minimize_coordinate_descent(p, VectorXd::Zero(1));
        REQUIRE(r.value == Catch::Approx(-0.5).margin(1e-5));
    }
    SECTION("budget is respected") {
        Potential p = std_gaussian(4);
        MinimizeResult r =
            minimize_coordinate_descent(p, VectorXd::Constant(4, 5.0), 1e-9, 20);
        REQUIRE(r.trace.queries <= 25);  // a few evals past the cap at loop edges
        REQUIRE_FALSE(r.trace.notes.empty());
    }
}

TEST_CASE("lifted membership costs exactly one query") {
    LiftedBody K{std_gaussian(2)};
    const Potential& V = K.potential();
    long long q0 = V.query_count();
    REQUIRE(K.contains({VectorXd::Zero(2), 1.0}));
    REQUIRE(V.query_count() == q0 + 1);
    REQUIRE_FALSE(K.contains({VectorXd::Constant(2, 3.0), 0.1}));
    REQUIRE(V.query_count() == q0 + 2);
}

TEST_CASE("lift_sample matches the inverse-CDF formula and law") {
    Potential g = std_gaussian(2);
    VectorXd x = VectorXd::Ones(2);  // V = 1, n = 2
    std::uint64_t seed = 99;
    double u = Rng(seed).unif01();
    Rng rng(seed);
    LiftedPoint z = lift_sample(g, x, rng);
    REQUIRE(z.t == Catch::Approx(0.5 - std::log(u) / 2.0).margin(1e-15));

    SECTION("t - V/n is Exp(n)") {
        Rng r2(7);
        std::vector<double> ts;
        for (int i = 0; i < 20000; ++i) ts.push_back(lift_sample(g, x, r2).t - 0.5);
        double p = ks_test(ts, [](double s) {
            return s <= 0.0 ? 0.0 : 1.0 - std::exp(-2.0 * s);
        });
        REQUIRE(p > 0.001);
    }

    SECTION("infeasible start throws") {
        Potential b = box_indicator(-VectorXd::Ones(2), VectorXd::Ones(2));
        Rng r3(1);
        REQUIRE_THROWS_AS(lift_sample(b, VectorXd::Constant(2, 2.0), r3),
                          infeasible_start_error);
    }
}

TEST_CASE("truncation geometry") {
    Potential g = std_gaussian(2);  // v_min 0, R = 8 sqrt(2)
    VectorXd x0 = VectorXd::Zero(2);

    LiftedBody body = truncate_with_l(g, x0, 2.0, 1.0);
    REQUIRE(body.truncation());
    REQUIRE(body.truncation()->t_max == Catch::Approx(18.0));  // V(x0)/n + 5 + 13
    REQUIRE(body.truncation()->t_min == Catch::Approx(-10.0));
    REQUIRE(body.truncation()->radius_x == Catch::Approx(2.0));

    REQUIRE_THROWS_AS(truncate(g, x0, 2.0), argument_error);
    REQUIRE_THROWS_AS(truncate(g, x0, 0.0), argument_error);
    LiftedBody b2 = truncate(g, x0, 0.5);
    double l = std::log(2.0 * std::numbers::e / 0.5);
    REQUIRE(b2.truncation()->t_max == Catch::Approx(5.0 + 13.0 * l));
    REQUIRE(b2.truncation()->radius_x == Catch::Approx(8.0 * std::sqrt(2.0) * l));

    MatrixXd A(1, 2);
    A << 1.0, 0.0;
    Potential no_r = max_affine(A, VectorXd::Zero(1));
    REQUIRE_THROWS_AS(truncate(no_r, x0, 0.5), config_error);
}

TEST_CASE("standard translation sends the window to [-21, 13l-6]") {
    Potential g = std_gaussian(2);
    VectorXd x0 = VectorXd::Zero(2);
    LiftedBody body = truncate_with_l(g, x0, 2.0, 1.0);
    LiftedAffine T = standard_translation(g, x0);
    LiftedBody moved = pushforward(body, T);
    REQUIRE(moved.truncation()->t_min == Catch::Approx(-21.0));
    REQUIRE(moved.truncation()->t_max == Catch::Approx(7.0));  // 13 l - 6 at l = 1

    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        LiftedPoint z{2.5 * rng.gaussian(2), rng.uniform(-12.0, 20.0)};
        REQUIRE(body.contains(z) == moved.contains(T.apply(z)));
    }
}

TEST_CASE("pushforward of a body under a non-isometry keeps membership") {
    Potential g = std_gaussian(2);
    LiftedBody body = truncate_with_l(g, VectorXd::Zero(2), 2.0, 1.0);
    MatrixXd A(2, 2);
    A << 2.0, 0.0, 0.3, 0.5;
    LiftedAffine F{AffineMap(A, VectorXd::Ones(2)), 0.75};
    LiftedBody moved = pushforward(body, F);
    Rng rng(17);
    for (int i = 0; i < 300; ++i) {
        LiftedPoint z{2.5 * rng.gaussian(2), rng.uniform(-12.0, 20.0)};
        REQUIRE(body.contains(z) == moved.contains(F.apply(z)));
    }
}

TEST_CASE("t-marginal of the lift obeys the level-set bounds") {
    // For a logconcave target the t coordinate concentrates: its mean sits
    // within [0, sqrt(10)] of V(x0)/n and its variance is bounded by 160.
    Potential g = std_gaussian(1);
    LiftedBody body = truncate(g, VectorXd::Zero(1), 0.3);
    Rng rng(2718);
    const int m = 4000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < m; ++i) {
        double t = exact_lifted_sample(body, rng).t;
        s += t;
        s2 += t * t;
    }
    double mean = s / m;
    double var = s2 / m - mean * mean;
    double se_mean = std::sqrt(var / m);
    REQUIRE(mean >= -3.0 * se_mean);
    REQUIRE(mean <= std::sqrt(10.0) + 3.0 * se_mean);
    double se_var = var * std::sqrt(2.0 / m);
    REQUIRE(var <= 160.0 + 3.0 * se_var);
}

TEST_CASE("unit ball probe") {
    Rng rng(10);
    Potential g = std_gaussian(2);
    REQUIRE(unit_ball_in_ground_set(g, VectorXd::Zero(2), rng));
    REQUIRE_FALSE(unit_ball_in_ground_set(g, VectorXd::Constant(2, 12.0), rng));
}
