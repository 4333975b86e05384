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
#include <cstdint>
#include <limits>

namespace ddlink {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoOverSqrtPi = 1.1283791670955125739; // 2/sqrt(pi)

namespace detail {

/// erf via the Maclaurin series, adequate for |x| < 2.
inline double erf_series(double x) {
    const double x2 = x * x;
    double term = x;      // (-1)^n x^(2n+1) / n!
    double sum = x;       // accumulating term / (2n+1)
    for (int n = 1; n < 80; ++n) {
        term *= -x2 / n;
        const double contrib = term / (2 * n + 1);
        sum += contrib;
        if (std::fabs(contrib) < 1e-18 * std::fabs(sum)) break;
    }
    return kTwoOverSqrtPi * sum;
}

/// erfc via the Laplace continued fraction,
///   sqrt(pi) x e^{x^2} erfc(x) = 1/(1+ (1/2)/(x^2+ 1/(1+ (3/2)/(x^2+ 2/(1+ ...)))))
/// evaluated with the modified Lentz algorithm; converges fast for x >= 2.
inline double erfc_continued_fraction(double x) {
    const double x2 = x * x;
    const double tiny = 1e-300;
    double f = 1.0; // b0
    double c = f;
    double d = 0.0;
    for (int n = 1; n < 300; ++n) {
        const double a = 0.5 * n;                   // partial numerators 1/2, 1, 3/2, 2, ...
        const double b = (n % 2 == 1) ? x2 : 1.0;   // denominators alternate x^2, 1
        d = b + a * d;
        if (d == 0.0) d = tiny;
        c = b + a / c;
        if (c == 0.0) c = tiny;
        d = 1.0 / d;
        const double delta = c * d;
        f *= delta;
        if (std::fabs(delta - 1.0) < 1e-17) break;
    }
    return std::exp(-x2) / (x * std::sqrt(kPi) * f);
}

} // namespace detail

/// Complementary error function.
///
/// Series below |x| = 2, continued fraction above; absolute error is a few
/// ulp over the whole real line, well inside the 1.5e-7 budget the rest of
/// the toolkit assumes. Kept as an explicit implementation so the forward
/// value and the analytic derivative used in backpropagation come from one
/// audited source.
inline double erfc_scalar(double x) {
    if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
    const double ax = std::fabs(x);
    double pos; // erfc(|x|)
    if (ax < 2.0) {
        pos = 1.0 - detail::erf_series(ax);
    } else if (ax < 27.0) {
        pos = detail::erfc_continued_fraction(ax);
    } else {
        pos = 0.0; // below the smallest normal double
    }
    return x >= 0.0 ? pos : 2.0 - pos;
}

/// d/dx erfc(x) = -2/sqrt(pi) * exp(-x^2), analytic (never a finite
/// difference of the approximation above).
inline double erfc_derivative(double x) {
    return -kTwoOverSqrtPi * std::exp(-x * x);
}

/// Wilson 95% score interval for a binomial proportion.
struct WilsonInterval {
    double center;
    double half_width;
    double lower() const { return center - half_width < 0.0 ? 0.0 : center - half_width; }
    double upper() const { return center + half_width > 1.0 ? 1.0 : center + half_width; }
};

inline WilsonInterval wilson_interval(std::uint64_t successes, std::uint64_t trials) {
    if (trials == 0) return {0.5, 0.5};
    const double z = 1.959963984540054; // two-sided 95%
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {center, half};
}

/// CRC-32 (IEEE 802.3 polynomial, reflected). Checks "123456789" -> 0xCBF43926.
inline std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0) {
    static const auto table = [] {
        struct Table { std::uint32_t t[256]; };
        Table tb{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
            tb.t[i] = c;
        }
        return tb;
    }();
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint32_t c = seed ^ 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i)
        c = table.t[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

} // namespace ddlink
