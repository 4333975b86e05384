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
#include "ddlink/errors.hpp"
#include "ddlink/rng.hpp"
#include "ddlink/special.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace ddlink {

/// One resolvable propagation path: integer delay bin, real (possibly
/// fractional) Doppler bin, complex fading gain.
struct PathState {
    int delay_index = 0;       // l_p in [0, max_delay]
    double doppler_index = 0;  // k_p + kappa_p in [-max_doppler, max_doppler]
    cplx gain{0.0, 0.0};       // h_p
};

struct ChannelConfig {
    int m = 8;                 // delay bins / subcarriers
    int n = 4;                 // Doppler bins / time slots
    int paths = 4;             // resolvable paths P
    int max_delay = 5;         // l_max
    double max_doppler = 2.0;  // k_max
    double rho = 0.99;         // Gauss-Markov gain correlation
    double gain_variance = 0;  // innovation variance; 0 means 1/paths
    double offset_bound = 0.0; // zeta: delay/Doppler index drift range per frame
    double nmse = 0.01;        // channel estimate error power ratio

    int grid_size() const { return m * n; }
    double sigma_h2() const { return gain_variance > 0.0 ? gain_variance : 1.0 / paths; }

    void validate() const {
        if (m < 1 || n < 1 || paths < 1) throw ConfigError("channel: m, n, paths must be >= 1");
        if (max_delay < 0 || max_delay >= grid_size())
            throw ConfigError("channel: max_delay must satisfy 0 <= l_max < M*N");
        if (max_doppler < 0.0) throw ConfigError("channel: max_doppler must be >= 0");
        if (rho < 0.0 || rho > 1.0) throw ConfigError("channel: rho must lie in [0, 1]");
        if (offset_bound < 0.0) throw ConfigError("channel: offset_bound must be >= 0");
        if (nmse < 0.0) throw ConfigError("channel: nmse must be >= 0");
    }
};

/// Fresh path set: delays uniform on {0..l_max}, Doppler indices uniform on
/// [-k_max, k_max], gains circularly-symmetric Gaussian with variance 1/P.
inline std::vector<PathState> init_paths(const ChannelConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<PathState> paths(static_cast<std::size_t>(cfg.paths));
    for (auto& p : paths) {
        p.delay_index = static_cast<int>(rng.uniform_int(0, cfg.max_delay));
        p.doppler_index = cfg.max_doppler > 0.0 ? rng.uniform(-cfg.max_doppler, cfg.max_doppler) : 0.0;
        p.gain = rng.complex_gaussian(cfg.sigma_h2());
    }
    return paths;
}

/// One frame step of the drift/fading evolution:
///   l'  = clamp(l + eps,  0, l_max),        eps  integer uniform {-zeta..zeta}
///   k'  = clamp(k + eps', -k_max, k_max),   eps' real uniform [-zeta, zeta]
///   h'  = rho h + sqrt(1 - rho^2) theta,    theta ~ CN(0, 1/P)
/// Indices are clamped, not wrapped, so the physical support stays bounded.
inline std::vector<PathState> evolve(const std::vector<PathState>& paths,
                                     const ChannelConfig& cfg, Rng& rng) {
    cfg.validate();
    const int zeta_int = static_cast<int>(std::floor(cfg.offset_bound));
    const double fade = std::sqrt(std::max(0.0, 1.0 - cfg.rho * cfg.rho));
    std::vector<PathState> out(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const int eps = zeta_int > 0 ? static_cast<int>(rng.uniform_int(-zeta_int, zeta_int)) : 0;
        const double epsd = cfg.offset_bound > 0.0 ? rng.uniform(-cfg.offset_bound, cfg.offset_bound) : 0.0;
        const cplx theta = rng.complex_gaussian(cfg.sigma_h2());

        int l = paths[i].delay_index + eps;
        l = l < 0 ? 0 : (l > cfg.max_delay ? cfg.max_delay : l);
        double k = paths[i].doppler_index + epsd;
        k = k < -cfg.max_doppler ? -cfg.max_doppler : (k > cfg.max_doppler ? cfg.max_doppler : k);

        out[i].delay_index = l;
        out[i].doppler_index = k;
        out[i].gain = cfg.rho * paths[i].gain + fade * theta;
    }
    return out;
}

/// Effective time-domain channel
///   H_T = sum_p h_p e^{-j2pi k_p l_p / MN} Delta^{k_p} Pi^{l_p}
/// with Delta = diag(e^{j2pi i/MN}) and Pi the forward cyclic row shift; the
/// fractional power Delta^{k} is taken entrywise on the principal branch.
/// Row i picks up the sample delayed by l_p: H_T[i, (i-l_p) mod MN] accrues
/// h_p e^{j2pi k_p (i-l_p)/MN}.
inline CMatrix build_time_channel(const std::vector<PathState>& paths, int m_dim, int n_dim) {
    const int mn = m_dim * n_dim;
    for (const auto& p : paths)
        if (p.delay_index < 0 || p.delay_index >= mn)
            throw ShapeError("build_time_channel: delay index outside [0, MN)");
    CMatrix h(mn, mn);
    for (const auto& p : paths) {
        const double base = -2.0 * kPi * p.doppler_index * p.delay_index / mn;
        const cplx front = p.gain * cplx(std::cos(base), std::sin(base));
        for (int i = 0; i < mn; ++i) {
            const int j = (i - p.delay_index + mn) % mn;
            const double ph = 2.0 * kPi * static_cast<double>(i) * p.doppler_index / mn;
            h(i, j) += front * cplx(std::cos(ph), std::sin(ph));
        }
    }
    return h;
}

/// H_dd = (F_N kron I_M) H_t (F_N^H kron I_M) with the unitary N-point DFT,
/// applied block-structured (never materializing the Kronecker factors).
inline CMatrix dd_from_time(const CMatrix& h_t, int m_dim, int n_dim) {
    const int mn = m_dim * n_dim;
    if (h_t.rows() != mn || h_t.cols() != mn)
        throw ShapeError("dd_from_time: matrix must be MN x MN");
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_dim));

    // Left-multiply by (F_N kron I_M): DFT across Doppler blocks per column.
    CMatrix b(mn, mn);
    for (int c = 0; c < mn; ++c)
        for (int m = 0; m < m_dim; ++m)
            for (int n = 0; n < n_dim; ++n) {
                cplx acc(0.0, 0.0);
                for (int k = 0; k < n_dim; ++k) {
                    const double ph = -2.0 * kPi * static_cast<double>(n) * k / n_dim;
                    acc += h_t(m + m_dim * k, c) * cplx(std::cos(ph), std::sin(ph));
                }
                b(m + m_dim * n, c) = scale * acc;
            }

    // Right-multiply by (F_N^H kron I_M): conjugate DFT across Doppler blocks per row.
    CMatrix out(mn, mn);
    for (int r = 0; r < mn; ++r)
        for (int m = 0; m < m_dim; ++m)
            for (int n = 0; n < n_dim; ++n) {
                cplx acc(0.0, 0.0);
                for (int k = 0; k < n_dim; ++k) {
                    const double ph = 2.0 * kPi * static_cast<double>(n) * k / n_dim;
                    acc += b(r, m + m_dim * k) * cplx(std::cos(ph), std::sin(ph));
                }
                out(r, m + m_dim * n) = scale * acc;
            }
    return out;
}

inline CMatrix build_dd_channel(const std::vector<PathState>& paths, int m_dim, int n_dim) {
    return dd_from_time(build_time_channel(paths, m_dim, n_dim), m_dim, n_dim);
}

/// Noisy channel estimate: H + V with i.i.d. CSCG entries whose total power
/// is nmse * ||H||_F^2 (per-entry variance nmse * ||H||_F^2 / (MN)^2).
inline CMatrix estimate_channel(const CMatrix& h, double nmse, Rng& rng) {
    if (nmse < 0.0) throw ConfigError("estimate_channel: nmse must be >= 0");
    const double norm2 = h.frobenius_norm() * h.frobenius_norm();
    const double entries = static_cast<double>(h.rows()) * static_cast<double>(h.cols());
    const double var = nmse * norm2 / entries;
    CMatrix out = h;
    for (auto& z : out.data()) z += rng.complex_gaussian(var);
    return out;
}

/// A frame-indexed channel realization: per-frame path states plus the seed
/// of the estimation-noise stream. Channel matrices are re-materialized on
/// demand rather than stored, so records stay small.
struct Trajectory {
    ChannelConfig cfg;
    std::uint64_t estimate_seed = 0;
    std::vector<std::vector<PathState>> frames;

    int length() const { return static_cast<int>(frames.size()); }

    const std::vector<PathState>& paths(int t) const { return frames.at(static_cast<std::size_t>(t)); }

    CMatrix true_dd(int t) const { return build_dd_channel(paths(t), cfg.m, cfg.n); }

    CMatrix estimated_dd(int t) const {
        Rng noise = Rng(estimate_seed).stream(static_cast<std::uint64_t>(t));
        return estimate_channel(true_dd(t), cfg.nmse, noise);
    }

    /// History estimates [t0, t0+count), oldest first.
    std::vector<CMatrix> estimated_history(int t0, int count) const {
        std::vector<CMatrix> h;
        h.reserve(static_cast<std::size_t>(count));
        for (int t = t0; t < t0 + count; ++t) h.push_back(estimated_dd(t));
        return h;
    }
};

/// Chain `length` frames by the evolution law. The estimation-noise stream
/// seed is drawn first so materialized estimates are reproducible from the
/// record alone.
inline Trajectory generate_trajectory(const ChannelConfig& cfg, int length, Rng& rng) {
    cfg.validate();
    if (length < 1) throw ConfigError("generate_trajectory: length must be >= 1");
    Trajectory tr;
    tr.cfg = cfg;
    tr.estimate_seed = rng.raw();
    tr.frames.reserve(static_cast<std::size_t>(length));
    tr.frames.push_back(init_paths(cfg, rng));
    for (int t = 1; t < length; ++t) tr.frames.push_back(evolve(tr.frames.back(), cfg, rng));
    return tr;
}

} // namespace ddlink
