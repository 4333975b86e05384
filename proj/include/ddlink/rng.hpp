// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace ddlink {

/// splitmix64 step (Vigna's public-domain mixer). Used only for seed
/// derivation, never as the sampling generator itself.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seedable, splittable random stream.
///
/// The engine is std::mt19937_64, whose output sequence is pinned by the
/// standard, and every distribution transform below is written out
/// explicitly, so a given (seed, call sequence) reproduces bit-identical
/// values on any conforming platform. Independent streams are derived by
/// hashing (seed, stream indices) through splitmix64; each worker/cell
/// owns its own stream, which is what makes parallel Monte Carlo results
/// independent of the worker count.
class Rng {
public:
    explicit Rng(std::uint64_t seed)
        : seed_(mix(seed, 0x5DD1C0DEULL)), engine_(seed_) {}

    /// Derive an independent stream from this stream's seed and an index.
    /// Derivation depends only on the construction seed, not on how many
    /// values have been drawn so far.
    Rng stream(std::uint64_t index) const {
        return Rng(mix(seed_, index), TagCtor{});
    }
    Rng stream(std::uint64_t a, std::uint64_t b) const {
        return Rng(mix(mix(seed_, a), b), TagCtor{});
    }
    Rng stream(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
        return Rng(mix(mix(mix(seed_, a), b), c), TagCtor{});
    }

    std::uint64_t raw() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    /// Uniform integer in [lo, hi], inclusive, unbiased via rejection.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(engine_()); // full 64-bit span
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return lo + static_cast<std::int64_t>(x % range);
    }

    /// Standard normal via Box-Muller (first component only; no caching,
    /// so the draw count per call is fixed).
    double gaussian() {
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(2.0 * pi_ * u2);
    }

    /// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
    std::complex<double> complex_gaussian(double variance) {
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-variance * std::log1p(-u1));
        const double phi = 2.0 * pi_ * u2;
        return {r * std::cos(phi), r * std::sin(phi)};
    }

    std::uint64_t seed() const { return seed_; }

private:
    struct TagCtor {};
    Rng(std::uint64_t derived, TagCtor) : seed_(derived), engine_(derived) {}

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t s = a ^ (b * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL);
        std::uint64_t z = splitmix64_next(s);
        z ^= splitmix64_next(s);
        return z;
    }

    static constexpr double pi_ = 3.14159265358979323846;
    std::uint64_t seed_ = 0;
    std::mt19937_64 engine_;
};

} // namespace ddlink
