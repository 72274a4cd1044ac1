#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include <Eigen/Dense>

namespace loglift {

// Counter-based SplitMix64 stream.  Every draw is a pure function of
// (key, counter), so runs are reproducible across platforms and sub-streams
// can be split off by name without touching the parent's state.
// <random> distributions are avoided on purpose: their outputs are not
// specified bit-for-bit across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : key_(seed) {}

    std::uint64_t next_u64() { return mix(key_ + (++ctr_) * golden); }

    // Uniform on (0, 1]: never returns 0, safe under log().
    double unif01() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Uniform on (lo, hi].
    double uniform(double lo, double hi) { return lo + (hi - lo) * unif01(); }

    // Box-Muller, cosine branch only.  Always consumes exactly two uniforms
    // so stream positions stay deterministic (no cached second draw).
    double normal() {
        double u1 = unif01();
        double u2 = unif01();
        double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    Eigen::VectorXd gaussian(int n) {
        Eigen::VectorXd g(n);
        for (int i = 0; i < n; ++i) g(i) = normal();
        return g;
    }

    // Derived stream, independent of this stream's counter position.
    Rng sub(std::string_view name, std::uint64_t index = 0) const {
        std::uint64_t h = fnv1a(name);
        return Rng(mix(mix(key_ ^ h) + index * golden));
    }

    std::uint64_t key() const { return key_; }

  private:
    static constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ULL;

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
};

}  // namespace loglift
