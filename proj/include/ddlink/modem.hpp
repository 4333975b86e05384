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

#include "ddlink/cmatrix.hpp"
#include "ddlink/rng.hpp"
#include "ddlink/special.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace ddlink {

// ---------------------------------------------------------------------------
// Delay-Doppler / time-frequency transforms
//
// Grids are M x N complex matrices: rows index delay (or frequency), columns
// index Doppler (or time). Vectorized symbols use the column-major layout
// x[l + M*k] = X[l, k], i.e. delay runs fastest, which is what makes the
// Kronecker factorizations below literal.
// ---------------------------------------------------------------------------

/// Inverse symplectic finite Fourier transform:
///   X_tf[m, n] = (1/sqrt(MN)) sum_k sum_l X_dd[l, k] e^{j2pi(nk/N - ml/M)}
inline CMatrix isfft(const CMatrix& x_dd) {
    const int m_dim = x_dd.rows(), n_dim = x_dd.cols();
    CMatrix out(m_dim, n_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m_dim) * n_dim);
    for (int m = 0; m < m_dim; ++m)
        for (int n = 0; n < n_dim; ++n) {
            cplx acc(0.0, 0.0);
            for (int k = 0; k < n_dim; ++k)
                for (int l = 0; l < m_dim; ++l) {
                    const double phase = 2.0 * kPi * (static_cast<double>(n) * k / n_dim -
                                                      static_cast<double>(m) * l / m_dim);
                    acc += x_dd(l, k) * cplx(std::cos(phase), std::sin(phase));
                }
            out(m, n) = scale * acc;
        }
    return out;
}

/// Symplectic finite Fourier transform, the exact inverse of isfft.
inline CMatrix sfft(const CMatrix& x_tf) {
    const int m_dim = x_tf.rows(), n_dim = x_tf.cols();
    CMatrix out(m_dim, n_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m_dim) * n_dim);
    for (int l = 0; l < m_dim; ++l)
        for (int k = 0; k < n_dim; ++k) {
            cplx acc(0.0, 0.0);
            for (int n = 0; n < n_dim; ++n)
                for (int m = 0; m < m_dim; ++m) {
                    const double phase = -2.0 * kPi * (static_cast<double>(n) * k / n_dim -
                                                       static_cast<double>(m) * l / m_dim);
                    acc += x_tf(m, n) * cplx(std::cos(phase), std::sin(phase));
                }
            out(l, k) = scale * acc;
        }
    return out;
}

/// s = (F_N^H kron I_M) x: unitary IDFT across the Doppler dimension.
inline CVec dd_to_time(const CVec& x_dd, int m_dim, int n_dim) {
    if (static_cast<int>(x_dd.size()) != m_dim * n_dim)
        throw ShapeError("dd_to_time: vector length must be M*N");
    CVec s(x_dd.size(), cplx(0.0, 0.0));
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_dim));
    for (int m = 0; m < m_dim; ++m)
        for (int n = 0; n < n_dim; ++n) {
            cplx acc(0.0, 0.0);
            for (int k = 0; k < n_dim; ++k) {
                const double phase = 2.0 * kPi * static_cast<double>(n) * k / n_dim;
                acc += x_dd[static_cast<std::size_t>(m + m_dim * k)] * cplx(std::cos(phase), std::sin(phase));
            }
            s[static_cast<std::size_t>(m + m_dim * n)] = scale * acc;
        }
    return s;
}

/// y = (F_N kron I_M) r: unitary DFT across the time-slot dimension; exact
/// adjoint (and inverse) of dd_to_time.
inline CVec time_to_dd(const CVec& r, int m_dim, int n_dim) {
    if (static_cast<int>(r.size()) != m_dim * n_dim)
        throw ShapeError("time_to_dd: vector length must be M*N");
    CVec y(r.size(), cplx(0.0, 0.0));
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_dim));
    for (int m = 0; m < m_dim; ++m)
        for (int k = 0; k < n_dim; ++k) {
            cplx acc(0.0, 0.0);
            for (int n = 0; n < n_dim; ++n) {
                const double phase = -2.0 * kPi * static_cast<double>(k) * n / n_dim;
                acc += r[static_cast<std::size_t>(m + m_dim * n)] * cplx(std::cos(phase), std::sin(phase));
            }
            y[static_cast<std::size_t>(m + m_dim * k)] = scale * acc;
        }
    return y;
}

/// r = H_t s + w with w ~ CN(0, noise_var I). noise_var = 0 is noiseless.
inline CVec apply_channel(const CMatrix& h_t, const CVec& s, double noise_var, Rng& rng) {
    if (noise_var < 0.0) throw ShapeError("apply_channel: noise variance must be >= 0");
    CVec r = matvec(h_t, s);
    for (auto& z : r) z += rng.complex_gaussian(noise_var);
    return r;
}

// ---------------------------------------------------------------------------
// Square QAM with per-axis binary-reflected Gray labeling
// ---------------------------------------------------------------------------

/// Unit-mean-energy square QAM constellation (orders 4, 16, 64).
///
/// A label of 2b bits (b = log2 sqrt(order)) is split MSB-first into b bits
/// for the in-phase axis followed by b bits for the quadrature axis. Each
/// axis code is a binary-reflected Gray code g; its level index i satisfies
/// gray(i) = g and maps to the amplitude (L-1-2i)/sqrt(E), L = sqrt(order),
/// E = 2(order-1)/3. Adjacent amplitudes therefore differ in exactly one
/// label bit per axis. The exact bit-to-point maps are listed in
/// docs/constellations.md.
class Constellation {
public:
    explicit Constellation(int order) : order_(order) {
        if (order != 4 && order != 16 && order != 64)
            throw ShapeError("unsupported constellation order " + std::to_string(order) +
                             " (expected 4, 16 or 64)");
        side_ = order == 4 ? 2 : (order == 16 ? 4 : 8);
        axis_bits_ = order == 4 ? 1 : (order == 16 ? 2 : 3);
        scale_ = 1.0 / std::sqrt(2.0 * (order - 1) / 3.0);
        points_.resize(static_cast<std::size_t>(order));
        for (int label = 0; label < order; ++label) {
            const int gi = label >> axis_bits_;
            const int gq = label & (side_ - 1);
            points_[static_cast<std::size_t>(label)] = {axis_amplitude(gray_decode(gi)),
                                                        axis_amplitude(gray_decode(gq))};
        }
    }

    int order() const { return order_; }
    int bits_per_symbol() const { return 2 * axis_bits_; }
    const CVec& points() const { return points_; }
    cplx point(int label) const { return points_[static_cast<std::size_t>(label)]; }

    /// Label of the nearest constellation point (exact decision regions via
    /// independent per-axis quantization).
    int nearest_label(cplx z) const {
        const int ii = nearest_level(z.real());
        const int iq = nearest_level(z.imag());
        return (gray_encode(ii) << axis_bits_) | gray_encode(iq);
    }

    /// Map bits (MSB-first per symbol) to symbols. Bit count must be a
    /// multiple of bits_per_symbol.
    CVec modulate(const std::vector<int>& bits) const {
        const int bps = bits_per_symbol();
        if (bits.size() % static_cast<std::size_t>(bps) != 0)
            throw ShapeError("bit count must be divisible by bits per symbol");
        CVec out(bits.size() / static_cast<std::size_t>(bps));
        for (std::size_t s = 0; s < out.size(); ++s) {
            int label = 0;
            for (int b = 0; b < bps; ++b) label = (label << 1) | (bits[s * static_cast<std::size_t>(bps) + static_cast<std::size_t>(b)] & 1);
            out[s] = point(label);
        }
        return out;
    }

    /// Hard decisions: nearest labels plus the recovered bit stream.
    std::pair<std::vector<int>, std::vector<int>> demodulate(const CVec& symbols) const {
        std::vector<int> labels(symbols.size());
        std::vector<int> bits(symbols.size() * static_cast<std::size_t>(bits_per_symbol()));
        for (std::size_t s = 0; s < symbols.size(); ++s) {
            const int label = nearest_label(symbols[s]);
            labels[s] = label;
            for (int b = 0; b < bits_per_symbol(); ++b)
                bits[s * static_cast<std::size_t>(bits_per_symbol()) + static_cast<std::size_t>(b)] =
                    (label >> (bits_per_symbol() - 1 - b)) & 1;
        }
        return {std::move(labels), std::move(bits)};
    }

    static int gray_encode(int i) { return i ^ (i >> 1); }
    static int gray_decode(int g) {
        int i = g;
        i ^= i >> 1;
        i ^= i >> 2;
        i ^= i >> 4;
        return i;
    }

private:
    double axis_amplitude(int level) const { return (side_ - 1 - 2 * level) * scale_; }

    int nearest_level(double coord) const {
        const double raw = (side_ - 1 - coord / scale_) / 2.0;
        int i = static_cast<int>(std::lround(raw));
        if (i < 0) i = 0;
        if (i >= side_) i = side_ - 1;
        return i;
    }

    int order_;
    int side_;
    int axis_bits_;
    double scale_;
    CVec points_;
};

} // namespace ddlink
