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

// Command-line front end for the delay-Doppler link toolkit.
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O.

#include "ddlink/commands.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct GlobalOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> workers;
    std::optional<std::uint64_t> trials;
};

ddlink::ExperimentConfig resolve_config(const GlobalOpts& g) {
    if (g.config_path.empty()) throw ddlink::ConfigError("--config is required");
    ddlink::ExperimentConfig cfg = ddlink::load_experiment_config(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    if (g.out_dir) cfg.out_dir = *g.out_dir;
    if (g.workers) cfg.workers = *g.workers;
    if (g.trials) cfg.trials = *g.trials;
    cfg.validate();
    return cfg;
}

/// Parse repeatable "key=path" options (e.g. --ckpt-tau 3=nets/tau3.bin).
template <class Key, class ParseKey>
std::map<Key, std::string> parse_keyed_paths(const std::vector<std::string>& raw,
                                             ParseKey parse_key, const char* what) {
    std::map<Key, std::string> out;
    for (const std::string& item : raw) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
            throw ddlink::ConfigError(std::string(what) + ": expected KEY=PATH, got '" + item + "'");
        out[parse_key(item.substr(0, eq))] = item.substr(eq + 1);
    }
    if (out.empty()) throw ddlink::ConfigError(std::string(what) + ": at least one KEY=PATH required");
    return out;
}

void print_sweep_outputs(const ddlink::SweepOutputs& out) {
    std::cout << "wrote " << out.csv << " (" << out.rows.size() << " rows)\n";
    std::cout << "wrote " << out.svg << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"delay-Doppler link simulation and predictive precoding toolkit"};
    app.require_subcommand(1);
    // global options may appear after the subcommand name
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--config", g.config_path, "experiment configuration file")->expected(1);
    std::uint64_t seed_opt = 0;
    auto* seed_flag = app.add_option("--seed", seed_opt, "override run.seed");
    std::string out_opt;
    auto* out_flag = app.add_option("--out", out_opt, "override run.out output directory");
    int workers_opt = 0;
    auto* workers_flag = app.add_option("--workers", workers_opt, "override run.workers");
    std::uint64_t trials_opt = 0;
    auto* trials_flag = app.add_option("--trials", trials_opt, "override run.trials");

    auto* gen = app.add_subcommand("gen-data", "generate a trajectory dataset");

    auto* train_cmd = app.add_subcommand("train", "train a precoder network");
    std::string train_data;
    train_cmd->add_option("--data", train_data, "dataset file from gen-data")->required();
    std::string train_arch = "predictive";
    train_cmd->add_option("--arch", train_arch, "predictive | baseline")
        ->check(CLI::IsMember({"predictive", "baseline"}));
    std::string train_resume;
    train_cmd->add_option("--resume", train_resume, "resume from a last.bin checkpoint");

    auto* snr = app.add_subcommand("sweep-snr", "FER versus receive SNR");
    std::string snr_ckpt, snr_ckpt_lb;
    snr->add_option("--ckpt", snr_ckpt, "predictive checkpoint (for scheme 'ddcl')");
    snr->add_option("--ckpt-lb", snr_ckpt_lb, "baseline checkpoint (for scheme 'lower_bound')");
    bool snr_dropping = false;
    snr->add_flag("--dropping", snr_dropping,
                  "dropping mode: network schemes at configured K/order, references at K=MN QPSK");

    auto* zeta = app.add_subcommand("sweep-zeta", "FER versus delay/Doppler drift bound");
    std::string zeta_ckpt, zeta_ckpt_lb;
    zeta->add_option("--ckpt", zeta_ckpt, "predictive checkpoint")->required();
    zeta->add_option("--ckpt-lb", zeta_ckpt_lb, "baseline checkpoint (for scheme 'lower_bound')");

    auto* tau = app.add_subcommand("sweep-tau", "FER versus history depth");
    std::vector<std::string> tau_ckpts;
    tau->add_option("--ckpt-tau", tau_ckpts, "repeatable TAU=PATH checkpoint per history depth")
        ->required();
    std::string tau_ckpt_lb;
    tau->add_option("--ckpt-lb", tau_ckpt_lb, "baseline checkpoint (for scheme 'lower_bound')");

    auto* trade = app.add_subcommand("tradeoff", "reliability-latency tradeoff");
    std::vector<std::string> gamma_ckpts;
    trade->add_option("--ckpt-gamma", gamma_ckpts, "repeatable GAMMA=PATH checkpoint per gamma")
        ->required();

    auto* validate = app.add_subcommand("validate-fer", "closed-form vs Monte Carlo consistency");

    auto* inspect = app.add_subcommand("inspect-checkpoint", "print checkpoint metadata");
    std::string inspect_path;
    inspect->add_option("path", inspect_path, "checkpoint file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (seed_flag->count()) g.seed = seed_opt;
        if (out_flag->count()) g.out_dir = out_opt;
        if (workers_flag->count()) g.workers = workers_opt;
        if (trials_flag->count()) g.trials = trials_opt;

        using namespace ddlink;

        if (inspect->parsed()) {
            std::cout << inspect_checkpoint_text(inspect_path);
            return 0;
        }

        const ExperimentConfig cfg = resolve_config(g);

        if (gen->parsed()) {
            const std::string path = cmd_gen_data(cfg);
            std::cout << "wrote " << path << " (" << cfg.dataset_size << " sequences, tau="
                      << cfg.tau << ")\n";
        } else if (train_cmd->parsed()) {
            const std::string arch = train_arch == "baseline" ? kArchBaseline : kArchPredictive;
            const std::optional<std::string> resume =
                train_resume.empty() ? std::nullopt : std::optional<std::string>(train_resume);
            const TrainOutputs out = cmd_train(cfg, train_data, arch, resume);
            std::cout << "iterations: " << out.result.iterations_run << "\n";
            std::cout << "validation cost: initial " << out.result.initial_cost << " -> best "
                      << out.result.best_val << "\n";
            std::cout << "wrote " << out.best_checkpoint << "\n";
            std::cout << "wrote " << out.last_checkpoint << "\n";
            std::cout << "wrote " << out.loss_csv << "\n";
        } else if (snr->parsed()) {
            const NetBundle nets = load_net_bundle(
                cfg, snr_ckpt.empty() ? std::nullopt : std::optional<std::string>(snr_ckpt),
                snr_ckpt_lb.empty() ? std::nullopt : std::optional<std::string>(snr_ckpt_lb));
            print_sweep_outputs(cmd_sweep_snr(cfg, nets, snr_dropping));
        } else if (zeta->parsed()) {
            NetBundle nets = load_net_bundle(
                cfg, std::optional<std::string>(zeta_ckpt),
                zeta_ckpt_lb.empty() ? std::nullopt : std::optional<std::string>(zeta_ckpt_lb));
            nets.predictive = load_params_checked(zeta_ckpt, cfg.net_config(), kArchPredictive);
            print_sweep_outputs(cmd_sweep_zeta(cfg, nets));
        } else if (tau->parsed()) {
            const auto paths = parse_keyed_paths<int>(
                tau_ckpts,
                [](const std::string& s) {
                    return static_cast<int>(detail::parse_int_value(s, "--ckpt-tau"));
                },
                "--ckpt-tau");
            std::map<int, NetworkParams> per_tau;
            for (const auto& [t, path] : paths)
                per_tau.emplace(t, load_params_checked(path, cfg.net_config_for_tau(t),
                                                       kArchPredictive));
            NetBundle baselines;
            if (!tau_ckpt_lb.empty())
                baselines.baseline =
                    load_params_checked(tau_ckpt_lb, cfg.net_config(), kArchBaseline);
            print_sweep_outputs(cmd_sweep_tau(cfg, per_tau, baselines));
        } else if (trade->parsed()) {
            const auto paths = parse_keyed_paths<double>(
                gamma_ckpts,
                [](const std::string& s) {
                    return detail::parse_double_value(s, "--ckpt-gamma");
                },
                "--ckpt-gamma");
            std::map<double, NetworkParams> per_gamma;
            for (const auto& [gamma, path] : paths) {
                const int kk = static_cast<int>(std::lround(gamma * cfg.m * cfg.n));
                per_gamma.emplace(gamma, load_params_checked(path, cfg.net_config_for_k(kk),
                                                             kArchPredictive));
            }
            print_sweep_outputs(cmd_tradeoff(cfg, per_gamma));
        } else if (validate->parsed()) {
            const ValidateOutputs out = cmd_validate_fer(cfg);
            std::cout << "wrote " << out.csv << "\n";
            std::cout << "cells: " << out.report.cells.size() << ", pass fraction "
                      << out.report.pass_fraction << "\n";
            std::cout << (out.report.pass ? "PASS" : "FAIL")
                      << " (>= 95% of cells within 3 binomial standard deviations)\n";
            if (!out.report.pass) return kExitNumeric;
        }
        return 0;
    } catch (const ddlink::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ddlink::ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ddlink::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ddlink::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
