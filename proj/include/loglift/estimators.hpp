#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "loglift/chain.hpp"
#include "loglift/common.hpp"
#include "loglift/rng.hpp"
#include "loglift/sampler_ann.hpp"
#include "loglift/sampler_exp.hpp"

namespace loglift {

// k draws from a chain, N_thin kernel steps apart.
struct ThinnedChainSpec {
    ChainConfig kernel;
    long long N_thin = 1;
    long long k = 0;
};

struct CollectResult {
    std::vector<LiftedPoint> samples;
    bool failed = false;
    RunTrace trace;
};

inline CollectResult collect_thinned(const LiftedBody& K, const LiftedPoint& z0,
                                     const ThinnedChainSpec& spec, Rng& rng) {
    if (spec.N_thin < 1 || spec.k < 0)
        throw argument_error("collect_thinned: need N_thin >= 1, k >= 0");
    CollectResult out;
    out.trace.seed = spec.kernel.seed;
    ChainConfig seg = spec.kernel;
    seg.k = spec.N_thin;
    LiftedPoint z = z0;
    for (long long i = 0; i < spec.k; ++i) {
        RunResult r = ps_exp_run(K, z, seg, rng);
        out.trace.queries += r.trace.queries;
        out.trace.proposals += r.trace.proposals;
        if (r.failed) {
            out.failed = true;
            out.trace.failures += 1;
            break;
        }
        z = r.point;
        out.samples.push_back(z);
    }
    return out;
}

inline CollectResult collect_thinned_ann(const LiftedBody& K, const AnnealParams& p,
                                         const LiftedPoint& z0,
                                         const ThinnedChainSpec& spec, Rng& rng) {
    if (spec.N_thin < 1 || spec.k < 0)
        throw argument_error("collect_thinned_ann: need N_thin >= 1, k >= 0");
    CollectResult out;
    out.trace.seed = spec.kernel.seed;
    ChainConfig seg = spec.kernel;
    seg.k = spec.N_thin;
    LiftedPoint z = z0;
    for (long long i = 0; i < spec.k; ++i) {
        RunResult r = ps_ann_run(K, p, z, seg, rng);
        out.trace.queries += r.trace.queries;
        out.trace.proposals += r.trace.proposals;
        if (r.failed) {
            out.failed = true;
            out.trace.failures += 1;
            break;
        }
        z = r.point;
        out.samples.push_back(z);
    }
    return out;
}

// Self-normalized importance-sampling estimate of chi^2(nu || mu) from
// samples of mu: inputs are log nu and log mu at the sample points, either
// one up to a constant.  Max-subtraction makes the estimate exactly
// invariant to constant shifts of either input.
inline double chi2_weight_estimate(const std::vector<double>& log_nu,
                                   const std::vector<double>& log_mu) {
    if (log_nu.size() != log_mu.size() || log_nu.empty())
        throw argument_error("chi2_weight_estimate: need matching nonempty inputs");
    size_t m = log_nu.size();
    double a = -inf;
    for (size_t i = 0; i < m; ++i) a = std::max(a, log_nu[i] - log_mu[i]);
    if (a == -inf) throw degenerate_estimate_error("chi2_weight_estimate: all weights zero");
    double s1 = 0.0, s2 = 0.0;
    for (size_t i = 0; i < m; ++i) {
        double w = std::exp(log_nu[i] - log_mu[i] - a);
        s1 += w;
        s2 += w * w;
    }
    return static_cast<double>(m) * s2 / (s1 * s1) - 1.0;
}

// Kolmogorov survival function 2 sum_j (-1)^{j-1} exp(-2 j^2 x^2).
inline double kolmogorov_sf(double x) {
    if (x <= 0.0) return 1.0;
    double s = 0.0;
    for (int j = 1; j <= 100; ++j) {
        double term = 2.0 * std::exp(-2.0 * sq(j * x));
        s += (j % 2 == 1) ? term : -term;
    }
    return std::clamp(s, 0.0, 1.0);
}

// One-sample Kolmogorov-Smirnov p-value against a CDF.
inline double ks_test(std::vector<double> xs, const std::function<double(double)>& cdf) {
    if (xs.empty()) throw argument_error("ks_test: empty sample");
    std::sort(xs.begin(), xs.end());
    double n = static_cast<double>(xs.size());
    double D = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        double F = cdf(xs[i]);
        D = std::max(D, std::abs(F - static_cast<double>(i + 1) / n));
        D = std::max(D, std::abs(F - static_cast<double>(i) / n));
    }
    double sn = std::sqrt(n);
    return kolmogorov_sf((sn + 0.12 + 0.11 / sn) * D);
}

// Two-sample Kolmogorov-Smirnov p-value.
inline double ks_test_2sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw argument_error("ks_test_2sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double D = 0.0;
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        D = std::max(D, std::abs(static_cast<double>(i) / a.size() -
                                 static_cast<double>(j) / b.size()));
    }
    double ne = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
    double se = std::sqrt(ne);
    return kolmogorov_sf((se + 0.12 + 0.11 / se) * D);
}

struct TwoSampleResult {
    double energy_stat = 0.0;
    double p_energy = 1.0;
    std::vector<double> ks_p;  // per coordinate, on the full inputs
};

namespace detail {

inline double energy_stat_from_dist(const std::vector<float>& D, size_t k,
                                    const std::vector<int>& labels, size_t na) {
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < k; ++i) {
        for (size_t j = i + 1; j < k; ++j) {
            double d = D[i * k + j];
            if (labels[i] != labels[j]) sxy += d;
            else if (labels[i] == 0) sxx += d;
            else syy += d;
        }
    }
    double n = static_cast<double>(na), m = static_cast<double>(k - na);
    return 2.0 * sxy / (n * m) - 2.0 * sxx / (n * n) - 2.0 * syy / (m * m);
}

}  // namespace detail

// Energy-distance permutation test plus per-coordinate two-sample KS.
// The permutation stage runs on a uniform subsample of at most `cap` points
// per side (the full inputs would need an O(N^2) distance matrix); the KS
// component always uses everything.  p_energy = count / n_perm, so a zero
// p-value is attainable and identical samples give p = 1.
inline TwoSampleResult two_sample_test(const std::vector<Eigen::VectorXd>& X,
                                       const std::vector<Eigen::VectorXd>& Y,
                                       int n_perm, Rng& rng, size_t cap = 1024) {
    if (X.size() < 100 || Y.size() < 100)
        throw argument_error("two_sample_test: need at least 100 points per sample");
    if (n_perm < 1) throw argument_error("two_sample_test: need n_perm >= 1");
    int d = static_cast<int>(X[0].size());

    TwoSampleResult res;
    for (int c = 0; c < d; ++c) {
        std::vector<double> xa(X.size()), yb(Y.size());
        for (size_t i = 0; i < X.size(); ++i) xa[i] = X[i](c);
        for (size_t i = 0; i < Y.size(); ++i) yb[i] = Y[i](c);
        res.ks_p.push_back(ks_test_2sample(std::move(xa), std::move(yb)));
    }

    auto subsample = [&](const std::vector<Eigen::VectorXd>& v) {
        if (v.size() <= cap) return v;
        std::vector<Eigen::VectorXd> out;
        out.reserve(cap);
        std::vector<size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), size_t{0});
        for (size_t i = 0; i < cap; ++i) {
            size_t j = i + static_cast<size_t>(rng.next_u64() % (idx.size() - i));
            std::swap(idx[i], idx[j]);
            out.push_back(v[idx[i]]);
        }
        return out;
    };
    std::vector<Eigen::VectorXd> A = subsample(X), B = subsample(Y);
    size_t na = A.size(), k = na + B.size();

    std::vector<float> D(k * k, 0.0f);
    auto point = [&](size_t i) -> const Eigen::VectorXd& {
        return i < na ? A[i] : B[i - na];
    };
    for (size_t i = 0; i < k; ++i)
        for (size_t j = i + 1; j < k; ++j) {
            float dij = static_cast<float>((point(i) - point(j)).norm());
            D[i * k + j] = dij;
        }

    std::vector<int> labels(k, 1);
    for (size_t i = 0; i < na; ++i) labels[i] = 0;
    res.energy_stat = detail::energy_stat_from_dist(D, k, labels, na);

    int count = 0;
    std::vector<int> perm = labels;
    for (int p = 0; p < n_perm; ++p) {
        for (size_t i = k - 1; i > 0; --i) {
            size_t j = static_cast<size_t>(rng.next_u64() % (i + 1));
            std::swap(perm[i], perm[j]);
        }
        if (detail::energy_stat_from_dist(D, k, perm, na) >= res.energy_stat) ++count;
    }
    res.p_energy = static_cast<double>(count) / n_perm;
    return res;
}

// Sample mean and covariance with the 1/k normalization.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> estimate_mean_cov(
    const std::vector<Eigen::VectorXd>& samples) {
    if (samples.size() < 2)
        throw argument_error("estimate_mean_cov: need at least 2 samples");
    int d = static_cast<int>(samples[0].size());
    double k = static_cast<double>(samples.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& s : samples) mean += s;
    mean /= k;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& s : samples) {
        Eigen::VectorXd c = s - mean;
        cov += c * c.transpose();
    }
    cov /= k;
    return {mean, cov};
}

// Total variation between binned histograms of two point clouds over a
// per-dimension box; mass outside the box lands in a shared overflow bin.
inline double binned_tv(const std::vector<Eigen::VectorXd>& X,
                        const std::vector<Eigen::VectorXd>& Y,
                        const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                        int bins_per_dim) {
    if (X.empty() || Y.empty()) throw argument_error("binned_tv: empty sample");
    int d = static_cast<int>(X[0].size());
    if (d < 1 || d > 3) throw argument_error("binned_tv: dimension must be 1..3");
    if (lo.size() != d || hi.size() != d)
        throw argument_error("binned_tv: bounds do not match dimension");
    int total = 1;
    for (int i = 0; i < d; ++i) total *= bins_per_dim;
    auto bin_of = [&](const Eigen::VectorXd& v) -> int {
        int b = 0;
        for (int i = 0; i < d; ++i) {
            double u = (v(i) - lo(i)) / (hi(i) - lo(i));
            if (u < 0.0 || u >= 1.0) return total;  // overflow bin
            b = b * bins_per_dim + static_cast<int>(u * bins_per_dim);
        }
        return b;
    };
    std::vector<double> px(total + 1, 0.0), py(total + 1, 0.0);
    for (const auto& v : X) px[bin_of(v)] += 1.0 / X.size();
    for (const auto& v : Y) py[bin_of(v)] += 1.0 / Y.size();
    double tv = 0.0;
    for (int i = 0; i <= total; ++i) tv += std::abs(px[i] - py[i]);
    return 0.5 * tv;
}

}  // namespace loglift
