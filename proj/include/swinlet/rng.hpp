// Deterministic, splittable random streams.
//
// Every stochastic component derives its own stream from the master seed
// plus a key path (e.g. seed/"aug"/sample_id/epoch), so results do not
// depend on evaluation order or thread scheduling.
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "common.hpp"

namespace swinlet {

namespace detail {

inline u64 splitmix64(u64& state) {
    u64 z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline u64 fnv1a(std::string_view s) {
    u64 h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline u64 rotl(u64 x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace detail

// xoshiro256++ with splitmix64-expanded seeding.
class Rng {
public:
    explicit Rng(u64 seed) {
        u64 s = seed;
        for (auto& w : state_) w = detail::splitmix64(s);
    }

    u64 next_u64() {
        const u64 result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
        const u64 t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    u64 below(u64 n) {
        check(n > 0, "Rng::below: n must be positive");
        // Rejection sampling keeps the draw exactly uniform.
        const u64 limit = UINT64_MAX - UINT64_MAX % n;
        u64 v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    i64 range(i64 lo, i64 hi) {  // inclusive bounds
        check(hi >= lo, "Rng::range: empty range");
        return lo + i64(below(u64(hi - lo + 1)));
    }

    bool coin() { return (next_u64() >> 63) != 0; }

    // Marsaglia polar method; consumes a variable number of draws.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = uniform(-1.0, 1.0);
            v = uniform(-1.0, 1.0);
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    // Normal(0, std) truncated to +-2 std, as used for weight init.
    double truncated_normal(double stddev) {
        double z;
        do {
            z = normal();
        } while (z < -2.0 || z > 2.0);
        return z * stddev;
    }

    // Marsaglia-Tsang for shape >= 1; boosted for shape < 1.
    double gamma(double shape) {
        check(shape > 0.0, "Rng::gamma: shape must be positive");
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double beta(double a, double b) {
        const double x = gamma(a);
        const double y = gamma(b);
        return x / (x + y);
    }

private:
    u64 state_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// A key into the stream space. Immutable; `with` returns a derived key.
class StreamKey {
public:
    explicit StreamKey(u64 seed) : state_(mix(0x5eed5eed5eed5eedULL, seed)) {}

    StreamKey with(u64 v) const { return StreamKey(mix(state_, v), 0); }
    StreamKey with(i64 v) const { return with(u64(v)); }
    StreamKey with(int v) const { return with(u64(i64(v))); }
    StreamKey with(std::string_view s) const { return with(detail::fnv1a(s)); }

    Rng rng() const { return Rng(state_); }
    u64 value() const { return state_; }

private:
    StreamKey(u64 raw, int) : state_(raw) {}
    static u64 mix(u64 a, u64 b) {
        u64 s = a ^ detail::rotl(b, 29);
        u64 h = detail::splitmix64(s);
        s ^= b;
        return h ^ detail::splitmix64(s);
    }
    u64 state_;
};

}  // namespace swinlet
