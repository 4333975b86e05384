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
#include "ddlink/complex_ops.hpp"
#include "ddlink/modem.hpp"
#include "ddlink/rng.hpp"
#include "ddlink/special.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <thread>
#include <vector>

namespace ddlink {

enum class Equalizer { zf, mmse };

inline double equalizer_sigma_weight(Equalizer kind) { return kind == Equalizer::zf ? 0.0 : 1.0; }

/// Numeric guards shared by the plain and the differentiable SINR chains so
/// the two routes stay value-identical.
inline constexpr double kSinrFloorGuard = 1e-30;
inline constexpr double kSinrCap = 1e12;

/// MN x K precoder with its Frobenius power budget.
struct Precoder {
    CMatrix matrix;
    double power_budget = 0.0;

    void validate() const {
        const double p = matrix.frobenius_norm();
        if (p * p > power_budget + 1e-9)
            throw ConfigError("precoder exceeds its power budget");
    }
};

inline Precoder identity_precoder(int mn) {
    return Precoder{CMatrix::identity(mn), static_cast<double>(mn)};
}

// ---------------------------------------------------------------------------
// Symbol and frame error analytics
// ---------------------------------------------------------------------------

/// Per-axis coefficients of the exact square-QAM symbol error rate,
///   p_axis = axis_scale * erfc(sqrt(beta * SINR)),
///   SER    = 1 - (1 - p_axis)^2,
/// with axis_scale = 1 - 1/sqrt(order) and beta = 3 / (2 (order - 1)).
struct SerCoeffs {
    double axis_scale;
    double beta;
};

inline SerCoeffs ser_coeffs(int order) {
    if (order != 4 && order != 16 && order != 64)
        throw ShapeError("ser_coeffs: unsupported constellation order " + std::to_string(order));
    const double root = std::sqrt(static_cast<double>(order));
    return {1.0 - 1.0 / root, 3.0 / (2.0 * (order - 1.0))};
}

/// Exact symbol error rate of square QAM at a given post-equalization SINR.
/// Monotone decreasing in sinr; equals 1 - 1/order at sinr = 0.
inline double ser_from_sinr(double sinr, int order) {
    if (sinr < 0.0) throw ShapeError("ser_from_sinr: sinr must be >= 0");
    const SerCoeffs c = ser_coeffs(order);
    const double pa = c.axis_scale * erfc_scalar(std::sqrt(c.beta * sinr));
    double ser = 1.0 - (1.0 - pa) * (1.0 - pa);
    if (ser < 0.0) ser = 0.0;
    if (ser > 1.0) ser = 1.0;
    return ser;
}

/// Frame error rate from per-symbol error rates: 1 - prod_k (1 - SER_k).
inline double fer_from_sers(std::span<const double> sers) {
    double prod = 1.0;
    for (double s : sers) {
        if (s < 0.0 || s > 1.0) throw ShapeError("fer_from_sers: SER outside [0, 1]");
        prod *= 1.0 - s;
    }
    return 1.0 - prod;
}

/// Unified linear equalizer
///   E = (w sigma^2 I_K + P^H Hhat^H Hhat P)^(-1) P^H Hhat^H
/// with w = 0 for zero forcing and w = 1 for MMSE; E is K x MN.
inline CMatrix build_equalizer(const CMatrix& precoder, const CMatrix& h_est,
                               double noise_var, Equalizer kind) {
    if (h_est.cols() != precoder.rows())
        throw ShapeError("build_equalizer: channel/precoder dimensions disagree");
    const CMatrix hp = matmul(h_est, precoder);     // MN x K
    const CMatrix hpa = hp.adjoint();               // K x MN
    CMatrix gram = matmul(hpa, hp);                 // K x K
    const double w = equalizer_sigma_weight(kind) * noise_var;
    for (int i = 0; i < gram.rows(); ++i) gram(i, i) += w;
    return matmul(inverse(gram), hpa);
}

/// Post-equalization SINR per symbol. With G = E H P,
///   SINR_k = |G_kk|^2 / (sum_{j != k} |G_kj|^2 + sigma^2 ||row_k(E)||^2).
/// The true channel enters the signal and interference terms; the estimate
/// is only inside E. Vanishing denominators are floored at 1e-30 and the
/// ratio capped at 1e12, matching the differentiable chain.
inline std::vector<double> sinr_per_symbol(const CMatrix& equalizer, const CMatrix& h_true,
                                           const CMatrix& precoder, double noise_var) {
    if (equalizer.cols() != h_true.rows() || h_true.cols() != precoder.rows())
        throw ShapeError("sinr_per_symbol: dimension mismatch");
    const CMatrix g = matmul(matmul(equalizer, h_true), precoder); // K x K
    const int k_dim = g.rows();
    std::vector<double> sinr(static_cast<std::size_t>(k_dim));
    for (int k = 0; k < k_dim; ++k) {
        double diag = std::norm(g(k, k));
        double row_energy = 0.0;
        for (int j = 0; j < k_dim; ++j) row_energy += std::norm(g(k, j));
        double e_row = 0.0;
        for (int j = 0; j < equalizer.cols(); ++j) e_row += std::norm(equalizer(k, j));
        double denom = (row_energy - diag) + noise_var * e_row;
        if (denom < kSinrFloorGuard) denom = kSinrFloorGuard;
        double s = diag / denom;
        if (s > kSinrCap) s = kSinrCap;
        sinr[static_cast<std::size_t>(k)] = s;
    }
    return sinr;
}

/// Closed-form frame error rate of the precoded link: equalizer from the
/// estimated channel, SINR against the true channel, exact square-QAM SER,
/// product-form FER.
inline double analytic_fer(const CMatrix& h_true, const CMatrix& h_est, const Precoder& p,
                           double noise_var, int order, Equalizer kind) {
    const CMatrix e = build_equalizer(p.matrix, h_est, noise_var, kind);
    const std::vector<double> sinr = sinr_per_symbol(e, h_true, p.matrix, noise_var);
    std::vector<double> sers(sinr.size());
    for (std::size_t i = 0; i < sinr.size(); ++i) sers[i] = ser_from_sinr(sinr[i], order);
    return fer_from_sers(sers);
}

// ---------------------------------------------------------------------------
// Differentiable FER chain (tensor route)
// ---------------------------------------------------------------------------

inline ad::CMat build_equalizer_t(const ad::CMat& precoder, const ad::CMat& h_est,
                                  double noise_var, Equalizer kind) {
    using namespace ad;
    const CMat hp = cmatmul(h_est, precoder);
    const CMat hpa = cadjoint(hp);
    const CMat gram = cadd_scaled_identity(cmatmul(hpa, hp), equalizer_sigma_weight(kind) * noise_var);
    return cmatmul(cinverse(gram), hpa);
}

inline ad::Tensor sinr_per_symbol_t(const ad::CMat& equalizer, const ad::CMat& h_true,
                                    const ad::CMat& precoder, double noise_var) {
    using namespace ad;
    const CMat g = cmatmul(cmatmul(equalizer, h_true), precoder);
    Tensor abs2 = cabs2(g);
    Tensor diag = diag_part(abs2);
    Tensor row = matmul(abs2, Tensor::full(Shape{g.cols(), 1}, 1.0));
    Tensor interference = sub(row, diag);
    Tensor noise = scale(row_abs2_sums(equalizer), noise_var);
    Tensor denom = clamp_min(add(interference, noise), kSinrFloorGuard);
    return clamp_max(mul(diag, reciprocal(denom)), kSinrCap);
}

inline ad::Tensor ser_from_sinr_t(const ad::Tensor& sinr, int order) {
    using namespace ad;
    const SerCoeffs c = ser_coeffs(order);
    Tensor arg = sqrt(clamp_min(scale(sinr, c.beta), kSinrFloorGuard));
    Tensor pa = scale(erfc(arg), c.axis_scale);
    return sub(scale(pa, 2.0), mul(pa, pa)); // 1 - (1 - pa)^2
}

inline ad::Tensor fer_from_sers_t(const ad::Tensor& sers) {
    using namespace ad;
    Tensor ones = Tensor::full(sers.shape(), 1.0);
    return sub(Tensor::scalar(1.0), reduce_prod(sub(ones, sers)));
}

/// Tape-differentiable version of analytic_fer; the value agrees with the
/// plain composition to within floating-point noise.
inline ad::Tensor analytic_fer_t(const CMatrix& h_true, const CMatrix& h_est, const ad::CMat& precoder,
                                 double noise_var, int order, Equalizer kind) {
    using namespace ad;
    const CMat e = build_equalizer_t(precoder, cmat_const(h_est), noise_var, kind);
    const Tensor sinr = sinr_per_symbol_t(e, cmat_const(h_true), precoder, noise_var);
    return fer_from_sers_t(ser_from_sinr_t(sinr, order));
}

// ---------------------------------------------------------------------------
// Monte Carlo frame simulation
// ---------------------------------------------------------------------------

struct FrameResult {
    bool frame_error = false;
    int symbol_errors = 0;
    std::vector<int> decided_labels;
};

/// Precomputed link state for repeated frame draws over one channel pair.
/// Decisions divide each equalized symbol by the receiver-side estimate of
/// its own gain, diag(E Hhat P), before quantizing; this is the standard
/// gain-normalized hard decision and is what makes amplitude constellations
/// consistent with the SINR-based analytics.
class LinkSim {
public:
    LinkSim(const CMatrix& h_true, const CMatrix& h_est, const Precoder& p,
            double noise_var, int order, Equalizer kind)
        : constellation_(order),
          noise_var_(noise_var),
          hp_(matmul(h_true, p.matrix)),
          equalizer_(build_equalizer(p.matrix, h_est, noise_var, kind)) {
        const CMatrix g_est = matmul(matmul(equalizer_, h_est), p.matrix);
        gain_.resize(static_cast<std::size_t>(g_est.rows()));
        for (int k = 0; k < g_est.rows(); ++k) {
            const cplx d = g_est(k, k);
            gain_[static_cast<std::size_t>(k)] = std::abs(d) > 0.0 ? d : cplx(1.0, 0.0);
        }
    }

    int symbols() const { return hp_.cols(); }

    FrameResult simulate(Rng& rng) const {
        const int k_dim = hp_.cols();
        std::vector<int> sent(static_cast<std::size_t>(k_dim));
        CVec d(static_cast<std::size_t>(k_dim));
        for (int k = 0; k < k_dim; ++k) {
            sent[static_cast<std::size_t>(k)] =
                static_cast<int>(rng.uniform_int(0, constellation_.order() - 1));
            d[static_cast<std::size_t>(k)] = constellation_.point(sent[static_cast<std::size_t>(k)]);
        }
        CVec y = matvec(hp_, d);
        for (auto& z : y) z += rng.complex_gaussian(noise_var_);
        const CVec d_hat = matvec(equalizer_, y);

        FrameResult res;
        res.decided_labels.resize(static_cast<std::size_t>(k_dim));
        for (int k = 0; k < k_dim; ++k) {
            const int label = constellation_.nearest_label(d_hat[static_cast<std::size_t>(k)] /
                                                           gain_[static_cast<std::size_t>(k)]);
            res.decided_labels[static_cast<std::size_t>(k)] = label;
            if (label != sent[static_cast<std::size_t>(k)]) ++res.symbol_errors;
        }
        res.frame_error = res.symbol_errors > 0;
        return res;
    }

private:
    Constellation constellation_;
    double noise_var_;
    CMatrix hp_;        // H_true P
    CMatrix equalizer_; // K x MN from the estimated channel
    CVec gain_;         // diag(E Hhat P)
};

/// Draw one frame through the link: random symbols, y = H P d + w, linear
/// equalization, gain-normalized nearest-point decisions.
inline FrameResult simulate_frame(const CMatrix& h_true, const CMatrix& h_est, const Precoder& p,
                                  double noise_var, int order, Equalizer kind, Rng& rng) {
    return LinkSim(h_true, h_est, p, noise_var, order, kind).simulate(rng);
}

struct McEstimate {
    double fer = 0.0;       // point estimate, errors / trials
    double ci_half = 0.0;   // 95% Wilson half-width
    double ci_center = 0.0; // Wilson interval center
    std::uint64_t trials = 0;
    std::uint64_t errors = 0;

    double lower() const { return std::max(0.0, ci_center - ci_half); }
    double upper() const { return std::min(1.0, ci_center + ci_half); }
};

/// Deterministic parallel Monte Carlo over a Bernoulli trial.
///
/// Work is split into fixed chunks; chunk c draws from the derived stream
/// (seed, c) and results aggregate in chunk order, so the estimate is
/// bit-identical for any worker count.
inline McEstimate mc_estimate(std::uint64_t n_trials, int workers, const Rng& seed_stream,
                              const std::function<bool(Rng&)>& trial) {
    if (n_trials == 0) throw ConfigError("mc_estimate: need at least one trial");
    constexpr std::uint64_t kChunk = 4096;
    const std::uint64_t n_chunks = (n_trials + kChunk - 1) / kChunk;
    std::vector<std::uint64_t> chunk_errors(n_chunks, 0);

    auto run_chunk = [&](std::uint64_t c) {
        Rng rng = seed_stream.stream(0x6D63u, c);
        const std::uint64_t begin = c * kChunk;
        const std::uint64_t end = std::min(n_trials, begin + kChunk);
        std::uint64_t errs = 0;
        for (std::uint64_t i = begin; i < end; ++i)
            if (trial(rng)) ++errs;
        chunk_errors[c] = errs;
    };

    if (workers <= 1 || n_chunks == 1) {
        for (std::uint64_t c = 0; c < n_chunks; ++c) run_chunk(c);
    } else {
        std::atomic<std::uint64_t> next{0};
        auto worker = [&] {
            for (std::uint64_t c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1))
                run_chunk(c);
        };
        std::vector<std::thread> pool;
        const int count = std::min<int>(workers, static_cast<int>(n_chunks));
        pool.reserve(static_cast<std::size_t>(count));
        for (int w = 0; w < count; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::uint64_t errors = 0;
    for (std::uint64_t c = 0; c < n_chunks; ++c) errors += chunk_errors[c];
    const WilsonInterval wi = wilson_interval(errors, n_trials);
    McEstimate est;
    est.fer = static_cast<double>(errors) / static_cast<double>(n_trials);
    est.ci_half = wi.half_width;
    est.ci_center = wi.center;
    est.trials = n_trials;
    est.errors = errors;
    return est;
}

/// Monte Carlo FER of one fixed link. A zero-forcing singularity while
/// building the equalizer is counted as guaranteed frame errors (the trial
/// is never silently dropped).
inline McEstimate monte_carlo_fer(const CMatrix& h_true, const CMatrix& h_est, const Precoder& p,
                                  double noise_var, int order, Equalizer kind,
                                  std::uint64_t n_frames, int workers, const Rng& seed_stream) {
    try {
        LinkSim sim(h_true, h_est, p, noise_var, order, kind);
        return mc_estimate(n_frames, workers, seed_stream,
                           [&sim](Rng& rng) { return sim.simulate(rng).frame_error; });
    } catch (const SingularMatrixError&) {
        const WilsonInterval wi = wilson_interval(n_frames, n_frames);
        return McEstimate{1.0, wi.half_width, wi.center, n_frames, n_frames};
    }
}

} // namespace ddlink
