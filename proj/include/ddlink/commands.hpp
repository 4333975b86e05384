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

#include "ddlink/checkpoint.hpp"
#include "ddlink/data.hpp"
#include "ddlink/experiment.hpp"
#include "ddlink/report.hpp"
#include "ddlink/sweep.hpp"
#include "ddlink/train.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ddlink {

namespace detail {

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::string prepare_out_dir(const ExperimentConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
    write_text_file((std::filesystem::path(cfg.out_dir) / "resolved.ini").string(),
                    resolved_config_text(cfg));
    return cfg.out_dir;
}

inline std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

} // namespace detail

/// Generate the trajectory dataset described by the config and store it as
/// <out>/dataset.bin (seeds and path states only; byte-identical per seed).
inline std::string cmd_gen_data(const ExperimentConfig& cfg) {
    cfg.validate();
    detail::prepare_out_dir(cfg);
    const TrajectoryDataset ds =
        generate_dataset(cfg.channel_config(), cfg.tau, cfg.dataset_size, cfg.seed);
    const std::string path = detail::out_path(cfg, "dataset.bin");
    save_dataset(path, ds);
    return path;
}

struct TrainOutputs {
    std::string best_checkpoint;  // best-validation parameters
    std::string last_checkpoint;  // resumable optimizer state
    std::string loss_csv;
    TrainResult result;
};

inline std::string loss_csv_text(const std::vector<LossRow>& history) {
    std::ostringstream o;
    o << "iteration,train_cost,val_cost\n";
    for (const LossRow& r : history) {
        o << r.iteration << "," << detail::format_double(r.train_cost) << ",";
        if (r.has_val) o << detail::format_double(r.val_cost);
        o << "\n";
    }
    return o.str();
}

/// Train a precoder network on a generated dataset. `arch` selects the
/// predictive network or the perfect-CSI baseline; `resume_from` continues
/// from a previously written last.bin.
inline TrainOutputs cmd_train(const ExperimentConfig& cfg, const std::string& dataset_path,
                              const std::string& arch = kArchPredictive,
                              const std::optional<std::string>& resume_from = std::nullopt) {
    cfg.validate();
    detail::prepare_out_dir(cfg);
    const TrajectoryDataset ds = load_dataset(dataset_path);
    if (ds.channel.m != cfg.m || ds.channel.n != cfg.n)
        throw ConfigError("cmd_train: dataset grid does not match config");
    if (arch == kArchPredictive && ds.tau != cfg.tau)
        throw ConfigError("cmd_train: dataset history depth does not match config");

    NetworkParams initial;
    TrainingState* resume_state = nullptr;
    Checkpoint resumed;
    if (resume_from) {
        resumed = load_checkpoint(*resume_from);
        require_checkpoint_match(resumed, cfg.net_config(), arch);
        if (!resumed.training) throw IoError("cmd_train: checkpoint has no optimizer state to resume");
        initial = resumed.params;
        resume_state = &*resumed.training;
    } else {
        Rng init_rng = Rng(cfg.seed).stream(0x1417u);
        initial = arch == kArchPredictive ? init_predictive_params(cfg.net_config(), init_rng)
                                          : init_baseline_params(cfg.net_config(), init_rng);
    }

    const TrainResult result = train(ds, initial, cfg.train_config(), resume_state);

    TrainOutputs out;
    out.result = result;
    out.best_checkpoint = detail::out_path(cfg, "checkpoint.bin");
    out.last_checkpoint = detail::out_path(cfg, "last.bin");
    out.loss_csv = detail::out_path(cfg, "loss.csv");
    save_checkpoint(out.best_checkpoint, Checkpoint{result.best, cfg.seed, std::nullopt});
    save_checkpoint(out.last_checkpoint, result.last);
    detail::write_text_file(out.loss_csv, loss_csv_text(result.history));
    if (result.aborted_non_finite)
        throw NumericError("training aborted on a non-finite cost; last finite state saved to " +
                           out.last_checkpoint);
    return out;
}

inline NetworkParams load_params_checked(const std::string& path, const NetConfig& expected,
                                         const std::string& arch) {
    Checkpoint ckpt = load_checkpoint(path);
    require_checkpoint_match(ckpt, expected, arch);
    return ckpt.params;
}

/// Resolve the checkpoints the configured scheme list needs.
inline NetBundle load_net_bundle(const ExperimentConfig& cfg,
                                 const std::optional<std::string>& predictive_path,
                                 const std::optional<std::string>& baseline_path) {
    NetBundle nets;
    for (const std::string& name : cfg.schemes) {
        const Scheme s = parse_scheme(name);
        if (s == Scheme::ddcl) {
            if (!predictive_path) throw ConfigError("scheme 'ddcl' requires --ckpt");
            nets.predictive = load_params_checked(*predictive_path, cfg.net_config(), kArchPredictive);
        } else if (s == Scheme::lower_bound) {
            if (!baseline_path) throw ConfigError("scheme 'lower_bound' requires --ckpt-lb");
            nets.baseline = load_params_checked(*baseline_path, cfg.net_config(), kArchBaseline);
        }
    }
    return nets;
}

struct SweepOutputs {
    std::string csv;
    std::string svg;
    std::vector<ResultRow> rows;
};

inline SweepOutputs write_sweep(const ExperimentConfig& cfg, std::vector<ResultRow> rows,
                                const std::string& basename, const std::string& title,
                                const std::string& x_label) {
    SweepOutputs out;
    out.rows = std::move(rows);
    out.csv = detail::out_path(cfg, basename + ".csv");
    out.svg = detail::out_path(cfg, basename + ".svg");
    emit_csv(out.rows, out.csv);
    emit_svg(out.rows, out.svg, title, x_label);
    return out;
}

inline SweepOutputs cmd_sweep_snr(const ExperimentConfig& cfg, const NetBundle& nets,
                                  bool dropping_mode = false) {
    detail::prepare_out_dir(cfg);
    std::vector<ResultRow> rows = sweep_snr(cfg, nets, dropping_mode);
    const std::string base = dropping_mode ? "snr_sweep_dropping" : "snr_sweep";
    return write_sweep(cfg, std::move(rows), base, "FER vs receive SNR", "SNR (dB)");
}

inline SweepOutputs cmd_sweep_zeta(const ExperimentConfig& cfg, const NetBundle& nets) {
    detail::prepare_out_dir(cfg);
    return write_sweep(cfg, sweep_zeta(cfg, nets), "zeta_sweep", "FER vs drift bound",
                       "offset range bound");
}

inline SweepOutputs cmd_sweep_tau(const ExperimentConfig& cfg,
                                  const std::map<int, NetworkParams>& per_tau,
                                  const NetBundle& baselines) {
    detail::prepare_out_dir(cfg);
    return write_sweep(cfg, sweep_tau(cfg, per_tau, baselines), "tau_sweep",
                       "FER vs history depth", "history steps");
}

inline SweepOutputs cmd_tradeoff(const ExperimentConfig& cfg,
                                 const std::map<double, NetworkParams>& per_gamma) {
    detail::prepare_out_dir(cfg);
    return write_sweep(cfg, tradeoff(cfg, per_gamma), "tradeoff", "reliability vs latency",
                       "gamma = K / MN");
}

struct ValidateOutputs {
    std::string csv;
    ValidationReport report;
};

inline ValidateOutputs cmd_validate_fer(const ExperimentConfig& cfg,
                                        const ValidationHook& hook = {}) {
    detail::prepare_out_dir(cfg);
    ValidateOutputs out;
    out.report = validate_fer(cfg, hook);
    out.csv = detail::out_path(cfg, "validate_fer.csv");
    detail::write_text_file(out.csv, validation_csv(out.report));
    return out;
}

/// Human-readable checkpoint summary.
inline std::string inspect_checkpoint_text(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    std::ostringstream o;
    const NetConfig& c = ckpt.params.cfg;
    o << "architecture: " << ckpt.params.arch << "\n";
    o << "grid: M=" << c.m << " N=" << c.n << " (MN=" << c.grid_size() << ")\n";
    o << "precoder: K=" << c.k << " power_budget=" << detail::format_double(c.power_budget) << "\n";
    o << "history: tau=" << c.tau << "\n";
    o << "hidden: " << c.hidden << "  conv: " << c.conv_filters << "x" << c.conv_kernel << "x"
      << c.conv_kernel << "x2  pool: " << c.pool << "\n";
    o << "modulation order: " << c.mod_order << "\n";
    o << "seed: " << ckpt.seed << "\n";
    if (ckpt.training)
        o << "training state: iteration=" << ckpt.training->iteration
          << " best_validation=" << detail::format_double(ckpt.training->best_validation) << "\n";
    o << "tensors (" << ckpt.params.tensors.size() << "):\n";
    std::size_t total = 0;
    for (const auto& t : ckpt.params.tensors) {
        o << "  " << t.name << "  " << ad::shape_str(t.tensor.shape()) << "\n";
        total += t.tensor.size();
    }
    o << "parameters: " << total << "\n";
    return o.str();
}

} // namespace ddlink
