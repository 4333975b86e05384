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

#include "ddlink/link.hpp"

#include "ddlink/channel.hpp"
#include "gradcheck.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

using namespace ddlink;

namespace {

CMatrix random_cmatrix(int rows, int cols, Rng& rng) {
    CMatrix m(rows, cols);
    for (auto& z : m.data()) z = rng.complex_gaussian(1.0);
    return m;
}

/// Random unitary via Gram-Schmidt on a complex Gaussian matrix.
CMatrix random_unitary(int n, Rng& rng) {
    CMatrix a = random_cmatrix(n, n, rng);
    for (int c = 0; c < n; ++c) {
        for (int prev = 0; prev < c; ++prev) {
            cplx dot(0.0, 0.0);
            for (int r = 0; r < n; ++r) dot += std::conj(a(r, prev)) * a(r, c);
            for (int r = 0; r < n; ++r) a(r, c) -= dot * a(r, prev);
        }
        double nrm = 0.0;
        for (int r = 0; r < n; ++r) nrm += std::norm(a(r, c));
        nrm = std::sqrt(nrm);
        for (int r = 0; r < n; ++r) a(r, c) /= nrm;
    }
    return a;
}

/// Exact per-axis square-QAM SER evaluated with std::erfc (independent of
/// the library's erfc implementation).
double oracle_ser(double sinr, int order) {
    const double root = std::sqrt(static_cast<double>(order));
    const double pa = (1.0 - 1.0 / root) * std::erfc(std::sqrt(3.0 * sinr / (2.0 * (order - 1.0))));
    return 1.0 - (1.0 - pa) * (1.0 - pa);
}

} // namespace

TEST_CASE("zero forcing on an identity link is the identity", "[link]") {
    const CMatrix id = CMatrix::identity(4);
    const CMatrix e = build_equalizer(id, id, 0.1, Equalizer::zf);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            REQUIRE(std::abs(e(i, j) - (i == j ? cplx(1.0, 0.0) : cplx(0.0, 0.0))) < 1e-12);
}

TEST_CASE("mmse on an identity link with unit noise halves the signal", "[link]") {
    const CMatrix id = CMatrix::identity(4);
    const CMatrix e = build_equalizer(id, id, 1.0, Equalizer::mmse);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            REQUIRE(std::abs(e(i, j) - (i == j ? cplx(0.5, 0.0) : cplx(0.0, 0.0))) < 1e-12);
}

TEST_CASE("zero forcing inverts the effective link", "[link]") {
    Rng rng(401);
    const int mn = 8, k = 5;
    const CMatrix h = random_cmatrix(mn, mn, rng);
    const CMatrix p = random_cmatrix(mn, k, rng);
    const CMatrix e = build_equalizer(p, h, 0.2, Equalizer::zf);
    const CMatrix g = matmul(matmul(e, h), p);
    CMatrix err = g;
    for (int i = 0; i < k; ++i) err(i, i) -= 1.0;
    REQUIRE(err.frobenius_norm() < 1e-9);
}

TEST_CASE("identity link SINR is 1 / sigma^2", "[link]") {
    const CMatrix id = CMatrix::identity(4);
    const CMatrix e = build_equalizer(id, id, 0.1, Equalizer::zf);
    for (double s : sinr_per_symbol(e, id, id, 0.1))
        REQUIRE(std::fabs(s - 10.0) < 1e-9);
}

TEST_CASE("interference-free noiseless SINR reports the cap", "[link]") {
    const CMatrix id = CMatrix::identity(4);
    const CMatrix e = build_equalizer(id, id, 0.0, Equalizer::zf);
    for (double s : sinr_per_symbol(e, id, id, 0.0)) REQUIRE(s == kSinrCap);
}

TEST_CASE("SINR matches an independent scalar-loop evaluation", "[link][oracle]") {
    Rng rng(403);
    const int mn = 8, k = 8;
    const CMatrix h_true = random_cmatrix(mn, mn, rng);
    const CMatrix h_est = random_cmatrix(mn, mn, rng);
    const CMatrix p = random_cmatrix(mn, k, rng);
    const double noise_var = 0.3;
    const CMatrix e = build_equalizer(p, h_est, noise_var, Equalizer::mmse);
    const auto got = sinr_per_symbol(e, h_true, p, noise_var);

    // direct evaluation of the closed form, scalar loops only
    const CMatrix g = matmul(matmul(e, h_true), p);
    for (int kk = 0; kk < k; ++kk) {
        double interference = 0.0;
        for (int j = 0; j < k; ++j)
            if (j != kk) interference += std::norm(g(kk, j));
        double row_e = 0.0;
        for (int j = 0; j < mn; ++j) row_e += std::norm(e(kk, j));
        const double want = std::norm(g(kk, kk)) / (interference + noise_var * row_e);
        REQUIRE(std::fabs(got[static_cast<std::size_t>(kk)] - want) <=
                1e-12 * std::max(1.0, want));
    }
}

TEST_CASE("SER coefficients and values follow the exact square-QAM law", "[link]") {
    const SerCoeffs c4 = ser_coeffs(4);
    REQUIRE(c4.axis_scale == 0.5);
    REQUIRE(c4.beta == 0.5);
    const SerCoeffs c16 = ser_coeffs(16);
    REQUIRE(c16.axis_scale == 0.75);
    REQUIRE(c16.beta == 0.1);
    REQUIRE_THROWS_AS(ser_coeffs(8), ShapeError);

    for (int order : {4, 16, 64})
        for (double s : {0.0, 0.5, 3.0, 10.0, 40.0})
            REQUIRE(std::fabs(ser_from_sinr(s, order) - oracle_ser(s, order)) < 1e-12);

    // zero SINR: pure guessing, SER = 1 - 1/order
    REQUIRE(std::fabs(ser_from_sinr(0.0, 4) - 0.75) < 1e-12);
    REQUIRE(std::fabs(ser_from_sinr(0.0, 16) - 0.9375) < 1e-12);

    // monotone decreasing in SINR
    for (int order : {4, 16, 64}) {
        double prev = 1.0;
        for (double s = 0.0; s <= 30.0; s += 0.5) {
            const double v = ser_from_sinr(s, order);
            REQUIRE(v <= prev + 1e-15);
            prev = v;
        }
    }
}

TEST_CASE("FER from SERs is the exact product form", "[link]") {
    REQUIRE(fer_from_sers(std::vector<double>{0.0, 0.0, 0.0}) == 0.0);
    REQUIRE(std::fabs(fer_from_sers(std::vector<double>{0.1, 0.2}) - 0.28) < 1e-15);
    REQUIRE(fer_from_sers(std::vector<double>{0.3, 1.0, 0.1}) == 1.0);
    REQUIRE_THROWS_AS(fer_from_sers(std::vector<double>{1.2}), ShapeError);
}

TEST_CASE("analytic FER equals the hand-composed scalar chain on the identity link",
          "[link][oracle]") {
    const int k = 4;
    const double noise_var = 0.1;
    const CMatrix id = CMatrix::identity(k);
    const Precoder p{id, static_cast<double>(k)};
    const double got = analytic_fer(id, id, p, noise_var, 4, Equalizer::zf);
    const double ser = oracle_ser(1.0 / noise_var, 4);
    const double want = 1.0 - std::pow(1.0 - ser, k);
    REQUIRE(std::fabs(got - want) < 1e-12);
}

TEST_CASE("analytic FER increases with the noise power", "[link]") {
    Rng rng(405);
    ChannelConfig cfg;
    const CMatrix h = build_dd_channel(init_paths(cfg, rng), cfg.m, cfg.n);
    const Precoder p = identity_precoder(cfg.grid_size());
    double prev = 0.0;
    for (double noise_var : {0.01, 0.05, 0.1, 0.3, 1.0, 3.0}) {
        const double fer = analytic_fer(h, h, p, noise_var, 4, Equalizer::mmse);
        REQUIRE(fer >= prev - 1e-12);
        prev = fer;
    }
}

TEST_CASE("differentiable FER chain equals the plain chain and its gradient checks out",
          "[link][gradcheck]") {
    Rng rng(407);
    const int mn = 4, k = 2;
    const CMatrix h_true = random_cmatrix(mn, mn, rng);
    const CMatrix h_est = random_cmatrix(mn, mn, rng);
    const CMatrix pm = random_cmatrix(mn, k, rng);
    const double noise_var = 0.2;

    const double plain =
        analytic_fer(h_true, h_est, Precoder{pm, 1e9}, noise_var, 4, Equalizer::mmse);
    const ad::CMat pc = ad::cmat_const(pm);
    const double taped =
        analytic_fer_t(h_true, h_est, pc, noise_var, 4, Equalizer::mmse).value();
    REQUIRE(std::fabs(plain - taped) < 1e-12);

    auto rep = gradcheck::check_gradients(
        {pc.re, pc.im},
        [&](const std::vector<ad::Tensor>& in) {
            return analytic_fer_t(h_true, h_est, ad::CMat(in[0], in[1]), noise_var, 4,
                                  Equalizer::mmse);
        });
    REQUIRE(rep.worst_margin < 1.0);
}

TEST_CASE("perfect zero forcing makes noiseless frames exact", "[link][mc]") {
    Rng rng(409);
    const int mn = 8;
    const CMatrix h = random_cmatrix(mn, mn, rng);
    const Precoder p = identity_precoder(mn);
    Rng frame_rng(410);
    for (int rep = 0; rep < 50; ++rep) {
        const FrameResult r = simulate_frame(h, h, p, 0.0, 4, Equalizer::zf, frame_rng);
        REQUIRE(r.symbol_errors == 0);
        REQUIRE(!r.frame_error);
    }
}

TEST_CASE("fixed seeds reproduce the exact decision sequence", "[link][mc]") {
    Rng rng(411);
    const int mn = 4;
    const CMatrix h = random_cmatrix(mn, mn, rng);
    const Precoder p = identity_precoder(mn);
    auto run = [&] {
        Rng fr(0x5EEDu);
        std::vector<int> all;
        for (int i = 0; i < 20; ++i) {
            const FrameResult r = simulate_frame(h, h, p, 0.5, 4, Equalizer::mmse, fr);
            all.insert(all.end(), r.decided_labels.begin(), r.decided_labels.end());
        }
        return all;
    };
    REQUIRE(run() == run());
}

TEST_CASE("Monte Carlo FER agrees with the analytic value on the identity link",
          "[link][mc][slow]") {
    const int k = 4;
    const double noise_var = 0.1;
    const CMatrix id = CMatrix::identity(k);
    const Precoder p{id, static_cast<double>(k)};
    const double analytic = analytic_fer(id, id, p, noise_var, 4, Equalizer::zf);
    const McEstimate mc =
        monte_carlo_fer(id, id, p, noise_var, 4, Equalizer::zf, 100000, 4, Rng(413));
    const double sigma = std::sqrt(analytic * (1.0 - analytic) / static_cast<double>(mc.trials));
    REQUIRE(std::fabs(mc.fer - analytic) <= 3.0 * sigma);
}

TEST_CASE("Monte Carlo totals are invariant to the worker count", "[link][mc]") {
    Rng rng(415);
    const int mn = 4;
    const CMatrix h = random_cmatrix(mn, mn, rng);
    const Precoder p = identity_precoder(mn);
    const McEstimate a = monte_carlo_fer(h, h, p, 0.3, 4, Equalizer::mmse, 20000, 1, Rng(416));
    const McEstimate b = monte_carlo_fer(h, h, p, 0.3, 4, Equalizer::mmse, 20000, 8, Rng(416));
    REQUIRE(a.errors == b.errors);
    REQUIRE(a.fer == b.fer);
}

TEST_CASE("a fair coin estimates one half", "[link][mc]") {
    const McEstimate est = mc_estimate(10000, 2, Rng(417), [](Rng& r) {
        return r.uniform01() < 0.5;
    });
    REQUIRE(std::fabs(est.fer - 0.5) < 0.015);
}

TEST_CASE("zero observed errors still give a positive upper bound", "[link][mc]") {
    const McEstimate est = mc_estimate(5000, 1, Rng(419), [](Rng&) { return false; });
    REQUIRE(est.fer == 0.0);
    REQUIRE(est.upper() > 0.0);
}

TEST_CASE("MMSE never loses to ZF on perfect estimates", "[link][property]") {
    Rng rng(421);
    ChannelConfig cfg;
    const Precoder p = identity_precoder(cfg.grid_size());
    for (int draw = 0; draw < 50; ++draw) {
        const CMatrix h = build_dd_channel(init_paths(cfg, rng), cfg.m, cfg.n);
        for (double noise_var : {1.0, 0.1, 0.01}) {
            double fer_zf, fer_mmse;
            try {
                fer_zf = analytic_fer(h, h, p, noise_var, 4, Equalizer::zf);
            } catch (const SingularMatrixError&) {
                fer_zf = 1.0;
            }
            fer_mmse = analytic_fer(h, h, p, noise_var, 4, Equalizer::mmse);
            REQUIRE(fer_mmse <= fer_zf + 1e-12);
        }
    }
}

TEST_CASE("ZF SINR scales as c^2 when the precoder is scaled by c", "[link][property]") {
    Rng rng(423);
    const int mn = 8, k = 4;
    const CMatrix h = random_cmatrix(mn, mn, rng);
    const CMatrix pm = random_cmatrix(mn, k, rng);
    const double noise_var = 0.2, c = 0.5;
    CMatrix pm_scaled = pm;
    pm_scaled *= cplx(c, 0.0);

    const CMatrix e1 = build_equalizer(pm, h, noise_var, Equalizer::zf);
    const CMatrix e2 = build_equalizer(pm_scaled, h, noise_var, Equalizer::zf);
    const auto s1 = sinr_per_symbol(e1, h, pm, noise_var);
    const auto s2 = sinr_per_symbol(e2, h, pm_scaled, noise_var);
    for (std::size_t i = 0; i < s1.size(); ++i)
        REQUIRE(std::fabs(s2[i] - c * c * s1[i]) <= 1e-9 * s1[i]);
}

TEST_CASE("FER is invariant under a common unitary rotation of the channel",
          "[link][property]") {
    Rng rng(425);
    const int mn = 8;
    const CMatrix h = random_cmatrix(mn, mn, rng);
    const CMatrix u = random_unitary(mn, rng);
    const Precoder p = identity_precoder(mn);
    const double noise_var = 0.25;
    const double fer = analytic_fer(h, h, p, noise_var, 4, Equalizer::mmse);
    const CMatrix uh = matmul(u, h);
    const double fer_rot = analytic_fer(uh, uh, p, noise_var, 4, Equalizer::mmse);
    REQUIRE(std::fabs(fer - fer_rot) < 1e-9);
}

TEST_CASE("precoder power budget is enforced", "[link]") {
    CMatrix big = CMatrix::identity(4);
    big *= cplx(2.0, 0.0);
    const Precoder p{big, 4.0}; // ||2I||_F^2 = 16 > 4
    REQUIRE_THROWS_AS(p.validate(), ConfigError);
    identity_precoder(4).validate();
}
