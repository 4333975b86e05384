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

#include "ddlink/experiment.hpp"
#include "ddlink/link.hpp"
#include "ddlink/network.hpp"
#include "ddlink/report.hpp"
#include "ddlink/train.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace ddlink {

/// Run fn(0..n-1) on a bounded pool; each task writes only its own slot, so
/// results are identical for any worker count.
template <class Fn>
void parallel_tasks(int n, int workers, Fn&& fn) {
    if (n <= 0) return;
    if (workers <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    auto body = [&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> pool;
    const int count = std::min(workers, n);
    pool.reserve(static_cast<std::size_t>(count));
    for (int w = 0; w < count; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
}

enum class Scheme { zf, mmse, ddcl, lower_bound };

inline const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::zf: return "zf";
        case Scheme::mmse: return "mmse";
        case Scheme::ddcl: return "ddcl";
        case Scheme::lower_bound: return "lower_bound";
    }
    return "?";
}

inline Scheme parse_scheme(const std::string& s) {
    if (s == "zf") return Scheme::zf;
    if (s == "mmse") return Scheme::mmse;
    if (s == "ddcl") return Scheme::ddcl;
    if (s == "lower_bound") return Scheme::lower_bound;
    throw ConfigError("unknown scheme '" + s + "'");
}

/// Trained networks a sweep may need.
struct NetBundle {
    std::optional<NetworkParams> predictive; // "ddcl" rows
    std::optional<NetworkParams> baseline;   // "lower_bound" rows
};

namespace detail {

/// Everything needed to evaluate one scheme on one materialized draw.
struct DrawSpec {
    CMatrix h_true;
    CMatrix h_eq; // channel the equalizer is built from
    Precoder precoder;
    int order = 4;
    Equalizer kind = Equalizer::mmse;
};

/// Draw (and per-draw frame count) ownership for a cell evaluation:
/// trajectory index d uses stream (seed, tag, d) for its channels and
/// (seed, tag ^ mc-salt, d) for its Monte Carlo frames. Channel draws are
/// shared across sweep points and schemes (common random numbers), which is
/// what makes trend and ordering comparisons paired.
struct CellOutcome {
    double analytic_mean = 0.0;
    McEstimate mc;
};

inline DrawSpec make_draw_spec(Scheme scheme, const Trajectory& tr, int history_begin,
                               int target, const NetBundle& nets, int mn, int order_networks,
                               int order_baselines) {
    DrawSpec d;
    d.h_true = tr.true_dd(target);
    switch (scheme) {
        case Scheme::zf:
        case Scheme::mmse:
            d.precoder = identity_precoder(mn);
            d.order = order_baselines;
            d.kind = scheme == Scheme::zf ? Equalizer::zf : Equalizer::mmse;
            d.h_eq = tr.estimated_dd(target);
            break;
        case Scheme::ddcl: {
            if (!nets.predictive) throw ConfigError("scheme 'ddcl' needs a trained checkpoint");
            const NetworkParams& net = *nets.predictive;
            const ad::CMat p =
                predictive_forward(net, pack_history(tr.estimated_history(history_begin, net.cfg.tau)));
            d.precoder = Precoder{to_cmatrix(p), net.cfg.power_budget};
            d.order = order_networks;
            d.kind = Equalizer::mmse;
            d.h_eq = tr.estimated_dd(target);
            break;
        }
        case Scheme::lower_bound: {
            if (!nets.baseline) throw ConfigError("scheme 'lower_bound' needs a trained checkpoint");
            const NetworkParams& net = *nets.baseline;
            const ad::CMat p = baseline_forward(net, pack_channel(d.h_true));
            d.precoder = Precoder{to_cmatrix(p), net.cfg.power_budget};
            d.order = order_networks;
            d.kind = Equalizer::mmse;
            d.h_eq = d.h_true; // perfect receiver-side CSI
            break;
        }
    }
    return d;
}

inline double analytic_fer_of(const DrawSpec& d, double noise_var) {
    try {
        return analytic_fer(d.h_true, d.h_eq, d.precoder, noise_var, d.order, d.kind);
    } catch (const SingularMatrixError&) {
        return 1.0;
    }
}

/// Closed-form mean and pooled Monte Carlo FER of one scheme over shared
/// draws. Frame counts split trials as evenly as possible across draws.
inline CellOutcome evaluate_cell(Scheme scheme, const std::vector<Trajectory>& draws,
                                 int history_begin, int target, const NetBundle& nets, int mn,
                                 int order_networks, int order_baselines, double noise_var,
                                 std::uint64_t trials, int workers, const Rng& mc_base,
                                 std::uint64_t mc_tag) {
    const int c = static_cast<int>(draws.size());
    std::vector<double> analytic(static_cast<std::size_t>(c), 0.0);
    std::vector<std::uint64_t> errors(static_cast<std::size_t>(c), 0);
    std::vector<std::uint64_t> frames(static_cast<std::size_t>(c), 0);
    const std::uint64_t base_frames = trials / static_cast<std::uint64_t>(c);
    const std::uint64_t extra = trials % static_cast<std::uint64_t>(c);

    parallel_tasks(c, workers, [&](int d) {
        const DrawSpec spec = make_draw_spec(scheme, draws[static_cast<std::size_t>(d)],
                                             history_begin, target, nets, mn, order_networks,
                                             order_baselines);
        analytic[static_cast<std::size_t>(d)] = analytic_fer_of(spec, noise_var);
        const std::uint64_t n = base_frames + (static_cast<std::uint64_t>(d) < extra ? 1 : 0);
        if (n == 0) return;
        const McEstimate est =
            monte_carlo_fer(spec.h_true, spec.h_eq, spec.precoder, noise_var, spec.order,
                            spec.kind, n, 1, mc_base.stream(mc_tag, static_cast<std::uint64_t>(d)));
        errors[static_cast<std::size_t>(d)] = est.errors;
        frames[static_cast<std::size_t>(d)] = est.trials;
    });

    CellOutcome out;
    double sum = 0.0;
    std::uint64_t tot_err = 0, tot_frames = 0;
    for (int d = 0; d < c; ++d) {
        sum += analytic[static_cast<std::size_t>(d)];
        tot_err += errors[static_cast<std::size_t>(d)];
        tot_frames += frames[static_cast<std::size_t>(d)];
    }
    out.analytic_mean = sum / c;
    const WilsonInterval wi = wilson_interval(tot_err, tot_frames);
    out.mc.fer = tot_frames ? static_cast<double>(tot_err) / static_cast<double>(tot_frames) : 0.0;
    out.mc.ci_half = wi.half_width;
    out.mc.ci_center = wi.center;
    out.mc.trials = tot_frames;
    out.mc.errors = tot_err;
    return out;
}

inline std::vector<Trajectory> draw_trajectories(const ChannelConfig& ch, int length, int count,
                                                 const Rng& base, std::uint64_t tag, int workers) {
    std::vector<Trajectory> out(static_cast<std::size_t>(count));
    parallel_tasks(count, workers, [&](int i) {
        Rng stream = base.stream(tag, static_cast<std::uint64_t>(i));
        out[static_cast<std::size_t>(i)] = generate_trajectory(ch, length, stream);
    });
    return out;
}

inline std::int64_t elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                 t0)
        .count();
}

inline void push_cell_rows(std::vector<ResultRow>& rows, const std::string& scheme,
                           const std::string& sweep, double x, const CellOutcome& cell,
                           bool timing, std::int64_t wall_ms) {
    ResultRow theo;
    theo.scheme = scheme + "-theo";
    theo.sweep = sweep;
    theo.x = x;
    theo.fer = cell.analytic_mean;
    rows.push_back(theo);

    ResultRow mc;
    mc.scheme = scheme;
    mc.sweep = sweep;
    mc.x = x;
    mc.fer = cell.mc.fer;
    mc.has_ci = true;
    mc.ci_half = cell.mc.ci_half;
    mc.n_trials = cell.mc.trials;
    mc.has_wall = timing;
    mc.wall_ms = wall_ms;
    rows.push_back(mc);
}

} // namespace detail

/// FER-versus-SNR sweep. In dropping mode the network schemes run at the
/// configured (K, order) -- typically K = MN/2 with 16-QAM -- while the
/// zf/mmse references stay at K = MN with QPSK, which keeps the two sides
/// at equal bit rate. Channel draws are shared across schemes and SNR
/// points.
inline std::vector<ResultRow> sweep_snr(const ExperimentConfig& cfg, const NetBundle& nets,
                                        bool dropping_mode = false) {
    cfg.validate();
    const Rng base(cfg.seed);
    const int mn = cfg.m * cfg.n;
    const int order_baselines = dropping_mode ? 4 : cfg.mod_order;
    const std::vector<Trajectory> draws = detail::draw_trajectories(
        cfg.channel_config(), cfg.tau + 1, cfg.channels_per_cell, base, 0x5412u, cfg.workers);

    std::vector<ResultRow> rows;
    for (const std::string& name : cfg.schemes) {
        const Scheme scheme = parse_scheme(name);
        for (std::size_t xi = 0; xi < cfg.snr_db.size(); ++xi) {
            const double snr = cfg.snr_db[xi];
            const bool network = scheme == Scheme::ddcl || scheme == Scheme::lower_bound;
            const double noise_var =
                network ? cfg.noise_var_for_snr(snr) : cfg.baseline_noise_var_for_snr(snr);
            const auto t0 = std::chrono::steady_clock::now();
            const detail::CellOutcome cell = detail::evaluate_cell(
                scheme, draws, 0, cfg.tau, nets, mn, cfg.mod_order, order_baselines, noise_var,
                cfg.trials, cfg.workers, base, 0x6D63A000u + xi);
            detail::push_cell_rows(rows, name, "snr_db", snr, cell, cfg.timing,
                                   detail::elapsed_ms(t0));
        }
    }
    return rows;
}

/// FER versus the delay/Doppler drift bound. The predictive scheme is
/// re-evaluated on trajectories regenerated per zeta (with common random
/// numbers, so the drift grows coherently); zf/mmse/lower_bound ignore the
/// history and are evaluated once, their row repeated verbatim.
inline std::vector<ResultRow> sweep_zeta(const ExperimentConfig& cfg, const NetBundle& nets) {
    cfg.validate();
    if (!nets.predictive) throw ConfigError("sweep_zeta needs a predictive checkpoint");
    const Rng base(cfg.seed);
    const int mn = cfg.m * cfg.n;
    const double noise_var_net = cfg.noise_var_for_snr(cfg.zeta_snr_db);
    const double noise_var_base = cfg.baseline_noise_var_for_snr(cfg.zeta_snr_db);

    std::vector<ResultRow> rows;

    // Baseline rows once, on the base-config trajectories.
    const std::vector<Trajectory> base_draws = detail::draw_trajectories(
        cfg.channel_config(), cfg.tau + 1, cfg.channels_per_cell, base, 0x2E7Au, cfg.workers);
    for (const std::string& name : cfg.schemes) {
        const Scheme scheme = parse_scheme(name);
        if (scheme == Scheme::ddcl) continue;
        const bool network = scheme == Scheme::lower_bound;
        const detail::CellOutcome cell = detail::evaluate_cell(
            scheme, base_draws, 0, cfg.tau, nets, mn, cfg.mod_order, cfg.mod_order,
            network ? noise_var_net : noise_var_base, cfg.trials, cfg.workers, base, 0x2E7Bu);
        for (double zeta : cfg.zeta_values)
            detail::push_cell_rows(rows, name, "zeta", zeta, cell, false, 0);
    }

    for (std::size_t zi = 0; zi < cfg.zeta_values.size(); ++zi) {
        ExperimentConfig zcfg = cfg;
        zcfg.zeta = cfg.zeta_values[zi];
        const std::vector<Trajectory> draws = detail::draw_trajectories(
            zcfg.channel_config(), cfg.tau + 1, cfg.channels_per_cell, base, 0x2E7Au, cfg.workers);
        const auto t0 = std::chrono::steady_clock::now();
        const detail::CellOutcome cell = detail::evaluate_cell(
            Scheme::ddcl, draws, 0, cfg.tau, nets, mn, cfg.mod_order, cfg.mod_order,
            noise_var_net, cfg.trials, cfg.workers, base, 0x2E7Cu);
        detail::push_cell_rows(rows, "ddcl", "zeta", cfg.zeta_values[zi], cell, cfg.timing,
                               detail::elapsed_ms(t0));
    }
    return rows;
}

/// FER versus history depth. One trained predictive network per tau; all
/// taus slice the same shared trajectories (the last tau frames before the
/// common target frame), and the baselines are evaluated once.
inline std::vector<ResultRow> sweep_tau(const ExperimentConfig& cfg,
                                        const std::map<int, NetworkParams>& per_tau,
                                        const NetBundle& baselines) {
    cfg.validate();
    if (per_tau.empty()) throw ConfigError("sweep_tau needs at least one checkpoint");
    int max_tau = 0;
    for (const auto& [t, net] : per_tau) {
        if (net.cfg.tau != t) throw ConfigError("sweep_tau: checkpoint tau mismatch");
        max_tau = std::max(max_tau, t);
    }
    const Rng base(cfg.seed);
    const int mn = cfg.m * cfg.n;
    const double noise_var_net = cfg.noise_var_for_snr(cfg.tau_snr_db);
    const double noise_var_base = cfg.baseline_noise_var_for_snr(cfg.tau_snr_db);
    const int target = max_tau;

    const std::vector<Trajectory> draws = detail::draw_trajectories(
        cfg.channel_config(), max_tau + 1, cfg.channels_per_cell, base, 0x7A5Eu, cfg.workers);

    std::vector<ResultRow> rows;
    for (const std::string& name : cfg.schemes) {
        const Scheme scheme = parse_scheme(name);
        if (scheme == Scheme::ddcl) continue;
        const bool network = scheme == Scheme::lower_bound;
        const detail::CellOutcome cell = detail::evaluate_cell(
            scheme, draws, 0, target, baselines, mn, cfg.mod_order, cfg.mod_order,
            network ? noise_var_net : noise_var_base, cfg.trials, cfg.workers, base, 0x7A5Fu);
        for (const auto& [t, net] : per_tau)
            detail::push_cell_rows(rows, name, "tau", static_cast<double>(t), cell, false, 0);
    }

    for (const auto& [t, net] : per_tau) {
        NetBundle nb;
        nb.predictive = net;
        const auto t0 = std::chrono::steady_clock::now();
        const detail::CellOutcome cell = detail::evaluate_cell(
            Scheme::ddcl, draws, target - t, target, nb, mn, cfg.mod_order, cfg.mod_order,
            noise_var_net, cfg.trials, cfg.workers, base, 0x7A60u + static_cast<std::uint64_t>(t));
        detail::push_cell_rows(rows, "ddcl", "tau", static_cast<double>(t), cell, cfg.timing,
                               detail::elapsed_ms(t0));
    }
    return rows;
}

/// Precoder-caused latency for a symbol-length ratio gamma = K / MN:
/// tau_p = (1/gamma - 1) * tau_f with tau_f the frame duration N * T.
inline double precoder_latency_s(double gamma, double frame_duration_s) {
    if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("gamma must lie in (0, 1]");
    return (1.0 / gamma - 1.0) * frame_duration_s;
}

/// Reliability-latency tradeoff: one predictive network per gamma (the
/// output width K = gamma * MN changes with gamma), evaluated at each
/// configured SNR over shared channel draws.
inline std::vector<ResultRow> tradeoff(const ExperimentConfig& cfg,
                                       const std::map<double, NetworkParams>& per_gamma) {
    cfg.validate();
    if (per_gamma.empty()) throw ConfigError("tradeoff needs at least one checkpoint");
    const Rng base(cfg.seed);
    const int mn = cfg.m * cfg.n;

    const std::vector<Trajectory> draws = detail::draw_trajectories(
        cfg.channel_config(), cfg.tau + 1, cfg.channels_per_cell, base, 0x96A0u, cfg.workers);

    std::vector<ResultRow> rows;
    for (std::size_t si = 0; si < cfg.tradeoff_snr_db.size(); ++si) {
        const double snr = cfg.tradeoff_snr_db[si];
        const std::string sweep_tag = "gamma@snr" + detail::format_double(snr);
        for (const auto& [gamma, net] : per_gamma) {
            const int k_expected = static_cast<int>(std::lround(gamma * mn));
            if (net.cfg.k != k_expected)
                throw ConfigError("tradeoff: checkpoint K does not match gamma");
            NetBundle nb;
            nb.predictive = net;
            const double noise_var =
                net.cfg.power_budget / (static_cast<double>(net.cfg.k) * std::pow(10.0, snr / 10.0));
            const auto t0 = std::chrono::steady_clock::now();
            const detail::CellOutcome cell = detail::evaluate_cell(
                Scheme::ddcl, draws, 0, cfg.tau, nb, mn, net.cfg.mod_order, net.cfg.mod_order,
                noise_var, cfg.trials, cfg.workers, base, 0x96B0u + si);
            const std::size_t first = rows.size();
            detail::push_cell_rows(rows, "ddcl", sweep_tag, gamma, cell, cfg.timing,
                                   detail::elapsed_ms(t0));
            for (std::size_t r = first; r < rows.size(); ++r) {
                rows[r].has_tau_p = true;
                rows[r].tau_p_ms = precoder_latency_s(gamma, cfg.frame_duration_s()) * 1e3;
            }
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Closed-form vs Monte Carlo consistency report
// ---------------------------------------------------------------------------

struct ValidationCell {
    int channel_index = 0;
    double snr_db = 0.0;
    Equalizer kind = Equalizer::mmse;
    double analytic = 0.0;
    double mc_fer = 0.0;
    std::uint64_t trials = 0;
    double z = 0.0;
    bool pass = false;
};

struct ValidationReport {
    std::vector<ValidationCell> cells;
    double pass_fraction = 0.0;
    bool pass = false; // >= 95% of cells within 3 binomial standard deviations
};

/// Test-only fault injection: adds an offset to the named cell's analytic
/// value so report plumbing can be checked end to end.
struct ValidationHook {
    int corrupt_cell = -1;
    double analytic_offset = 0.0;
};

/// For each fixed channel draw and SNR, compare the closed-form FER of the
/// identity-precoder link against a Monte Carlo estimate with `trials`
/// frames, for both MMSE and ZF receivers. A cell passes when the estimate
/// lies within 3 binomial standard deviations of the closed form.
inline ValidationReport validate_fer(const ExperimentConfig& cfg,
                                     const ValidationHook& hook = {}) {
    cfg.validate();
    const Rng base(cfg.seed);
    const int mn = cfg.m * cfg.n;
    const Precoder ident = identity_precoder(mn);

    struct CellSpec {
        int chan;
        double snr;
        Equalizer kind;
    };
    std::vector<CellSpec> specs;
    for (int c = 0; c < cfg.validate_channels; ++c)
        for (double snr : cfg.validate_snr_db)
            for (Equalizer kind : {Equalizer::mmse, Equalizer::zf})
                specs.push_back({c, snr, kind});

    // Materialize the fixed channels once (single-frame trajectories).
    std::vector<CMatrix> h_true(static_cast<std::size_t>(cfg.validate_channels));
    std::vector<CMatrix> h_est(static_cast<std::size_t>(cfg.validate_channels));
    parallel_tasks(cfg.validate_channels, cfg.workers, [&](int c) {
        Rng stream = base.stream(0xF17Au, static_cast<std::uint64_t>(c));
        const Trajectory tr = generate_trajectory(cfg.channel_config(), 1, stream);
        h_true[static_cast<std::size_t>(c)] = tr.true_dd(0);
        h_est[static_cast<std::size_t>(c)] = tr.estimated_dd(0);
    });

    ValidationReport rep;
    rep.cells.resize(specs.size());
    parallel_tasks(static_cast<int>(specs.size()), cfg.workers, [&](int i) {
        const CellSpec& s = specs[static_cast<std::size_t>(i)];
        const double noise_var = cfg.baseline_noise_var_for_snr(s.snr);
        ValidationCell cell;
        cell.channel_index = s.chan;
        cell.snr_db = s.snr;
        cell.kind = s.kind;
        const CMatrix& ht = h_true[static_cast<std::size_t>(s.chan)];
        const CMatrix& he = h_est[static_cast<std::size_t>(s.chan)];
        try {
            cell.analytic = analytic_fer(ht, he, ident, noise_var, cfg.mod_order, s.kind);
        } catch (const SingularMatrixError&) {
            cell.analytic = 1.0;
        }
        if (hook.corrupt_cell == i) cell.analytic += hook.analytic_offset;
        const McEstimate mc = monte_carlo_fer(ht, he, ident, noise_var, cfg.mod_order, s.kind,
                                              cfg.trials, 1,
                                              base.stream(0xF17Bu, static_cast<std::uint64_t>(i)));
        cell.mc_fer = mc.fer;
        cell.trials = mc.trials;
        const double p = std::min(1.0, std::max(0.0, cell.analytic));
        const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(mc.trials));
        if (sigma > 0.0) {
            cell.z = (cell.mc_fer - cell.analytic) / sigma;
        } else {
            cell.z = cell.mc_fer == cell.analytic ? 0.0 : std::numeric_limits<double>::infinity();
        }
        cell.pass = std::abs(cell.z) <= 3.0;
        rep.cells[static_cast<std::size_t>(i)] = cell;
    });

    int passed = 0;
    for (const auto& c : rep.cells) passed += c.pass ? 1 : 0;
    rep.pass_fraction = static_cast<double>(passed) / static_cast<double>(rep.cells.size());
    rep.pass = rep.pass_fraction >= 0.95;
    return rep;
}

/// CSV rendering of the validation report (per-cell z-scores plus verdicts).
inline std::string validation_csv(const ValidationReport& rep) {
    std::ostringstream o;
    o << "channel,snr_db,equalizer,analytic_fer,mc_fer,n_trials,z,pass\n";
    for (const auto& c : rep.cells) {
        o << c.channel_index << "," << detail::format_double(c.snr_db) << ","
          << (c.kind == Equalizer::zf ? "zf" : "mmse") << ","
          << detail::format_double(c.analytic) << "," << detail::format_double(c.mc_fer) << ","
          << c.trials << "," << detail::format_double(c.z) << "," << (c.pass ? "1" : "0") << "\n";
    }
    return o.str();
}

} // namespace ddlink
