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

#include "ddlink/channel.hpp"

#include "ddlink/data.hpp"
#include "ddlink/modem.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>

using namespace ddlink;

namespace {

ChannelConfig table_config() {
    ChannelConfig cfg;
    cfg.m = 8;
    cfg.n = 4;
    cfg.paths = 4;
    cfg.max_delay = 5;
    cfg.max_doppler = 2.0;
    cfg.rho = 0.95;
    cfg.offset_bound = 1.0;
    cfg.nmse = 0.01;
    return cfg;
}

/// Symbol-wise channel application: r_i = sum_p h_p e^{j2pi k_p (i-l_p)/MN} s_{(i-l_p) mod MN}.
CVec symbolwise_apply(const std::vector<PathState>& paths, const CVec& s, int mn) {
    CVec r(s.size(), cplx(0.0, 0.0));
    for (int i = 0; i < mn; ++i)
        for (const PathState& p : paths) {
            const int j = ((i - p.delay_index) % mn + mn) % mn;
            const double ph = 2.0 * kPi * p.doppler_index * (i - p.delay_index) / mn;
            r[static_cast<std::size_t>(i)] +=
                p.gain * cplx(std::cos(ph), std::sin(ph)) * s[static_cast<std::size_t>(j)];
        }
    return r;
}

CVec random_cvec(int n, Rng& rng) {
    CVec v(static_cast<std::size_t>(n));
    for (auto& z : v) z = rng.complex_gaussian(1.0);
    return v;
}

} // namespace

TEST_CASE("init_paths respects the configured support", "[channel]") {
    ChannelConfig cfg = table_config();
    Rng rng(301);
    for (int rep = 0; rep < 200; ++rep) {
        const auto paths = init_paths(cfg, rng);
        REQUIRE(paths.size() == 4);
        for (const auto& p : paths) {
            REQUIRE(p.delay_index >= 0);
            REQUIRE(p.delay_index <= 5);
            REQUIRE(std::fabs(p.doppler_index) <= 2.0);
        }
    }
}

TEST_CASE("degenerate support pins every path to the origin", "[channel]") {
    ChannelConfig cfg = table_config();
    cfg.max_delay = 0;
    cfg.max_doppler = 0.0;
    Rng rng(303);
    for (const auto& p : init_paths(cfg, rng)) {
        REQUIRE(p.delay_index == 0);
        REQUIRE(p.doppler_index == 0.0);
    }
}

TEST_CASE("path gains have total power one on average", "[channel]") {
    ChannelConfig cfg = table_config();
    Rng rng(305);
    double total = 0.0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        double e = 0.0;
        for (const auto& p : init_paths(cfg, rng)) e += std::norm(p.gain);
        total += e;
    }
    REQUIRE(std::fabs(total / draws - 1.0) < 0.01);
}

TEST_CASE("evolution with rho = 1 keeps the gains", "[channel]") {
    ChannelConfig cfg = table_config();
    cfg.rho = 1.0;
    Rng rng(307);
    const auto p0 = init_paths(cfg, rng);
    const auto p1 = evolve(p0, cfg, rng);
    for (std::size_t i = 0; i < p0.size(); ++i) REQUIRE(p1[i].gain == p0[i].gain);
}

TEST_CASE("evolution with zeta = 0 keeps delay and Doppler indices", "[channel]") {
    ChannelConfig cfg = table_config();
    cfg.offset_bound = 0.0;
    Rng rng(309);
    const auto p0 = init_paths(cfg, rng);
    auto p = p0;
    for (int t = 0; t < 10; ++t) p = evolve(p, cfg, rng);
    for (std::size_t i = 0; i < p0.size(); ++i) {
        REQUIRE(p[i].delay_index == p0[i].delay_index);
        REQUIRE(p[i].doppler_index == p0[i].doppler_index);
    }
}

TEST_CASE("rho = 0 gains decorrelate at lag one", "[channel]") {
    ChannelConfig cfg = table_config();
    cfg.rho = 0.0;
    Rng rng(311);
    auto paths = init_paths(cfg, rng);
    // sample autocorrelation of the first path's gain sequence
    cplx corr(0.0, 0.0);
    double power = 0.0;
    cplx prev = paths[0].gain;
    const int steps = 100000;
    for (int t = 0; t < steps; ++t) {
        paths = evolve(paths, cfg, rng);
        corr += paths[0].gain * std::conj(prev);
        power += std::norm(paths[0].gain);
        prev = paths[0].gain;
    }
    REQUIRE(std::abs(corr / power) < 0.01);
}

TEST_CASE("indices stay clamped after arbitrary evolutions", "[channel]") {
    ChannelConfig cfg = table_config();
    cfg.offset_bound = 4.0; // large drift forces clamping
    Rng rng(313);
    auto paths = init_paths(cfg, rng);
    for (int t = 0; t < 500; ++t) {
        paths = evolve(paths, cfg, rng);
        for (const auto& p : paths) {
            REQUIRE(p.delay_index >= 0);
            REQUIRE(p.delay_index <= cfg.max_delay);
            REQUIRE(p.doppler_index >= -cfg.max_doppler);
            REQUIRE(p.doppler_index <= cfg.max_doppler);
        }
    }
}

TEST_CASE("a single trivial path gives the identity channel", "[channel]") {
    std::vector<PathState> paths{{0, 0.0, cplx(1.0, 0.0)}};
    const CMatrix h_t = build_time_channel(paths, 2, 2);
    const CMatrix h_dd = build_dd_channel(paths, 2, 2);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            const cplx want = i == j ? cplx(1.0, 0.0) : cplx(0.0, 0.0);
            REQUIRE(std::abs(h_t(i, j) - want) < 1e-14);
            REQUIRE(std::abs(h_dd(i, j) - want) < 1e-12);
        }
}

TEST_CASE("a pure one-sample delay is the forward cyclic shift", "[channel]") {
    std::vector<PathState> paths{{1, 0.0, cplx(1.0, 0.0)}};
    const CMatrix h_t = build_time_channel(paths, 2, 2); // MN = 4
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            const cplx want = (j == (i + 3) % 4) ? cplx(1.0, 0.0) : cplx(0.0, 0.0);
            REQUIRE(std::abs(h_t(i, j) - want) < 1e-14);
        }
    // the shift has full period MN
    CMatrix power = CMatrix::identity(4);
    for (int rep = 0; rep < 4; ++rep) power = matmul(power, h_t);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            REQUIRE(std::abs(power(i, j) - (i == j ? cplx(1.0, 0.0) : cplx(0.0, 0.0))) < 1e-12);
}

TEST_CASE("matrix channel equals the symbol-wise form", "[channel]") {
    ChannelConfig cfg = table_config();
    Rng rng(317);
    for (int rep = 0; rep < 20; ++rep) {
        const auto paths = init_paths(cfg, rng);
        const CMatrix h_t = build_time_channel(paths, cfg.m, cfg.n);
        CVec s = random_cvec(cfg.grid_size(), rng);
        const CVec via_matrix = matvec(h_t, s);
        const CVec via_sum = symbolwise_apply(paths, s, cfg.grid_size());
        for (std::size_t i = 0; i < s.size(); ++i)
            REQUIRE(std::abs(via_matrix[i] - via_sum[i]) < 1e-12);
    }
}

TEST_CASE("domain transform preserves the Frobenius norm", "[channel]") {
    ChannelConfig cfg = table_config();
    Rng rng(319);
    const auto paths = init_paths(cfg, rng);
    const CMatrix h_t = build_time_channel(paths, cfg.m, cfg.n);
    const CMatrix h_dd = dd_from_time(h_t, cfg.m, cfg.n);
    REQUIRE(std::fabs(h_dd.frobenius_norm() - h_t.frobenius_norm()) < 1e-10);
}

TEST_CASE("the Doppler-block DFT is unitary on random vectors", "[channel]") {
    Rng rng(321);
    const int m = 4, n = 4;
    for (int rep = 0; rep < 10; ++rep) {
        CVec x = random_cvec(m * n, rng);
        const CVec y = time_to_dd(x, m, n);
        double nx = 0, ny = 0;
        for (const auto& z : x) nx += std::norm(z);
        for (const auto& z : y) ny += std::norm(z);
        REQUIRE(std::fabs(std::sqrt(ny) - std::sqrt(nx)) < 1e-12 * std::sqrt(nx));
    }
}

TEST_CASE("integer Doppler channels are at most P-sparse per row", "[channel]") {
    ChannelConfig cfg = table_config();
    Rng rng(323);
    for (int rep = 0; rep < 10; ++rep) {
        auto paths = init_paths(cfg, rng);
        for (auto& p : paths) p.doppler_index = std::round(p.doppler_index);
        const CMatrix h_dd = build_dd_channel(paths, cfg.m, cfg.n);
        for (int r = 0; r < h_dd.rows(); ++r) {
            int nonzero = 0;
            for (int c = 0; c < h_dd.cols(); ++c)
                if (std::abs(h_dd(r, c)) > 1e-10) ++nonzero;
            REQUIRE(nonzero <= cfg.paths);
        }
    }
}

TEST_CASE("delay-Doppler matrix equals the transform composition on basis vectors",
          "[channel][oracle]") {
    ChannelConfig cfg = table_config();
    Rng rng(325);
    const int mn = cfg.grid_size();
    const auto paths = init_paths(cfg, rng); // includes fractional Doppler
    const CMatrix h_dd = build_dd_channel(paths, cfg.m, cfg.n);
    for (int col = 0; col < mn; ++col) {
        CVec e(static_cast<std::size_t>(mn), cplx(0.0, 0.0));
        e[static_cast<std::size_t>(col)] = 1.0;
        const CVec via = time_to_dd(symbolwise_apply(paths, dd_to_time(e, cfg.m, cfg.n), mn),
                                    cfg.m, cfg.n);
        for (int row = 0; row < mn; ++row)
            REQUIRE(std::abs(h_dd(row, col) - via[static_cast<std::size_t>(row)]) < 1e-10);
    }
}

TEST_CASE("estimate with nmse = 0 is exact and scales with channel energy", "[channel]") {
    ChannelConfig cfg = table_config();
    Rng rng(327);
    const CMatrix h = build_dd_channel(init_paths(cfg, rng), cfg.m, cfg.n);
    Rng noise(40);
    const CMatrix exact = estimate_channel(h, 0.0, noise);
    for (std::size_t i = 0; i < h.data().size(); ++i) REQUIRE(exact.data()[i] == h.data()[i]);

    CMatrix zero(cfg.grid_size(), cfg.grid_size());
    const CMatrix zest = estimate_channel(zero, 0.5, noise);
    for (const auto& z : zest.data()) REQUIRE(z == cplx(0.0, 0.0));
}

TEST_CASE("estimate error power matches the requested nmse", "[channel]") {
    ChannelConfig cfg = table_config();
    Rng rng(329);
    const CMatrix h = build_dd_channel(init_paths(cfg, rng), cfg.m, cfg.n);
    const double h2 = h.frobenius_norm() * h.frobenius_norm();
    Rng noise(41);
    double ratio = 0.0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const CMatrix est = estimate_channel(h, 0.01, noise);
        CMatrix diff = est;
        diff -= h;
        ratio += diff.frobenius_norm() * diff.frobenius_norm() / h2;
    }
    REQUIRE(std::fabs(ratio / draws - 0.01) < 0.001);
}

TEST_CASE("trajectories freeze completely when nothing evolves", "[channel]") {
    ChannelConfig cfg = table_config();
    cfg.rho = 1.0;
    cfg.offset_bound = 0.0;
    cfg.nmse = 0.0;
    Rng rng(331);
    const Trajectory tr = generate_trajectory(cfg, 6, rng);
    REQUIRE(tr.length() == 6);
    const CMatrix first = tr.true_dd(0);
    for (int t = 1; t < 6; ++t) {
        const CMatrix ht = tr.true_dd(t);
        for (std::size_t i = 0; i < first.data().size(); ++i)
            REQUIRE(ht.data()[i] == first.data()[i]);
        const CMatrix est = tr.estimated_dd(t);
        for (std::size_t i = 0; i < first.data().size(); ++i)
            REQUIRE(est.data()[i] == ht.data()[i]);
    }
}

TEST_CASE("trajectories are bitwise reproducible from the seed", "[channel]") {
    ChannelConfig cfg = table_config();
    auto render = [&cfg] {
        Rng rng(333);
        const Trajectory tr = generate_trajectory(cfg, 6, rng);
        std::vector<double> flat;
        for (int t = 0; t < tr.length(); ++t) {
            for (const auto& p : tr.paths(t)) {
                flat.push_back(p.delay_index);
                flat.push_back(p.doppler_index);
                flat.push_back(p.gain.real());
                flat.push_back(p.gain.imag());
            }
            for (const auto& z : tr.estimated_dd(t).data()) {
                flat.push_back(z.real());
                flat.push_back(z.imag());
            }
        }
        return flat;
    };
    REQUIRE(render() == render());
}

TEST_CASE("dataset files round-trip losslessly and reject corruption", "[channel][io]") {
    ChannelConfig cfg = table_config();
    const TrajectoryDataset ds = generate_dataset(cfg, 5, 3, 77);
    const auto dir = std::filesystem::temp_directory_path() / "ddlink_dataset_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "ds.bin").string();
    save_dataset(path, ds);

    const TrajectoryDataset back = load_dataset(path);
    REQUIRE(back.tau == ds.tau);
    REQUIRE(back.size() == ds.size());
    for (int i = 0; i < ds.size(); ++i) {
        REQUIRE(back.sequences[static_cast<std::size_t>(i)].estimate_seed ==
                ds.sequences[static_cast<std::size_t>(i)].estimate_seed);
        for (std::size_t t = 0; t < ds.sequences[static_cast<std::size_t>(i)].frames.size(); ++t)
            for (std::size_t p = 0; p < ds.sequences[static_cast<std::size_t>(i)].frames[t].size(); ++p) {
                const auto& a = ds.sequences[static_cast<std::size_t>(i)].frames[t][p];
                const auto& b = back.sequences[static_cast<std::size_t>(i)].frames[t][p];
                REQUIRE(a.delay_index == b.delay_index);
                REQUIRE(a.doppler_index == b.doppler_index);
                REQUIRE(a.gain == b.gain);
            }
    }

    // identical bytes on re-save
    const std::string path2 = (dir / "ds2.bin").string();
    save_dataset(path2, back);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(b1 == b2);

    // truncation is detected before any parsing
    const std::string broken = (dir / "broken.bin").string();
    {
        std::ofstream out(broken, std::ios::binary);
        out.write(b1.data(), static_cast<std::streamsize>(b1.size() / 2));
    }
    REQUIRE_THROWS_AS(load_dataset(broken), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("configuration validation rejects out-of-range values", "[channel]") {
    ChannelConfig cfg = table_config();
    cfg.rho = 1.5;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = table_config();
    cfg.max_delay = 32;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = table_config();
    cfg.nmse = -0.1;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
}
