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

#include "ddlink/channel.hpp"
#include "ddlink/errors.hpp"
#include "ddlink/link.hpp"
#include "ddlink/network.hpp"
#include "ddlink/train.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace ddlink {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Shortest round-trip decimal form of a double (deterministic).
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct IniData {
    // section -> key -> value, plus consumption tracking for schema checks
    std::map<std::string, std::map<std::string, std::string>> values;
    mutable std::set<std::string> consumed;

    static IniData parse(const std::string& text) {
        IniData ini;
        std::string section;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
                section = trim(t.substr(1, t.size() - 2));
                if (section.empty())
                    throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": key outside any section");
            if (!ini.values[section].emplace(key, value).second)
                throw ConfigError("config: duplicate key '" + section + "." + key + "'");
        }
        return ini;
    }

    const std::string* find(const std::string& section, const std::string& key) const {
        const auto s = values.find(section);
        if (s == values.end()) return nullptr;
        const auto k = s->second.find(key);
        if (k == s->second.end()) return nullptr;
        consumed.insert(section + "." + key);
        return &k->second;
    }

    void require_all_consumed() const {
        for (const auto& [section, kv] : values)
            for (const auto& [key, value] : kv)
                if (!consumed.count(section + "." + key))
                    throw ConfigError("config: unknown key '" + section + "." + key + "'");
    }
};

inline double parse_double_value(const std::string& raw, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + where + "' is not a number: '" + raw + "'");
    }
}

inline std::int64_t parse_int_value(const std::string& raw, const std::string& where) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + where + "' is not an integer: '" + raw + "'");
    }
}

inline std::uint64_t parse_u64_value(const std::string& raw, const std::string& where) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + where + "' is not an unsigned integer: '" + raw + "'");
    }
}

inline bool parse_bool_value(const std::string& raw, const std::string& where) {
    if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
    if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
    throw ConfigError("config: '" + where + "' is not a boolean: '" + raw + "'");
}

inline std::vector<std::string> split_list(const std::string& raw) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(raw);
    while (std::getline(in, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

} // namespace detail

/// Resolved experiment configuration. Parsed from a sectioned key = value
/// file; every key is schema-checked and unknown keys are rejected. The
/// receive SNR convention is SNR = P0 / (K sigma^2): with a unit-energy
/// constellation and ||P||_F^2 = P0 = K, an identity precoder sees
/// SNR = 1/sigma^2.
struct ExperimentConfig {
    // [system]
    int m = 8;
    int n = 4;
    int k = 32;
    int mod_order = 4;
    double power_budget = 0.0; // 0 resolves to k
    std::vector<double> snr_db = {0, 5, 10, 15, 20, 25, 30};
    double subcarrier_spacing_hz = 15000.0;

    // [channel]
    int paths = 4;
    int max_delay = 5;
    double max_doppler = 2.0;
    double rho = 0.99;
    double gain_variance = 0.0; // 0 resolves to 1/paths
    double zeta = 0.0;
    double nmse = 0.01;

    // [history]
    int tau = 5;

    // [run]
    std::vector<std::string> schemes = {"zf", "mmse"};
    std::uint64_t seed = 1;
    std::uint64_t trials = 100000;
    int channels_per_cell = 100;
    int workers = 1;
    std::string out_dir = "out";
    bool timing = false;

    // [train]
    int dataset_size = 5000;
    int batch = 64;
    double learning_rate = 1e-3;
    int iterations = 600;
    int patience = 20;
    double val_fraction = 0.1;
    int eval_every = 10;
    double train_snr_db = 20.0;

    // [sweep]
    std::vector<double> zeta_values = {1, 2, 3, 4, 5};
    std::vector<int> tau_values = {2, 3, 4, 5, 6};
    std::vector<double> gamma_values = {1.0, 0.75, 0.5};
    std::vector<double> tradeoff_snr_db = {10, 15, 20};
    double zeta_snr_db = 15.0;
    double tau_snr_db = 15.0;

    // [validate]
    int validate_channels = 20;
    std::vector<double> validate_snr_db = {5, 10, 15, 20};

    double resolved_power() const { return power_budget > 0.0 ? power_budget : static_cast<double>(k); }

    /// sigma^2 for a receive SNR in dB under the documented convention.
    double noise_var_for_snr(double snr_db_value) const {
        return resolved_power() / (static_cast<double>(k) * std::pow(10.0, snr_db_value / 10.0));
    }
    /// Baseline (identity precoder, K = MN) noise variance: P0 = K = MN.
    double baseline_noise_var_for_snr(double snr_db_value) const {
        return 1.0 / std::pow(10.0, snr_db_value / 10.0);
    }

    /// Frame duration N * T with T = 1 / subcarrier spacing.
    double frame_duration_s() const { return static_cast<double>(n) / subcarrier_spacing_hz; }

    ChannelConfig channel_config() const {
        ChannelConfig c;
        c.m = m;
        c.n = n;
        c.paths = paths;
        c.max_delay = max_delay;
        c.max_doppler = max_doppler;
        c.rho = rho;
        c.gain_variance = gain_variance;
        c.offset_bound = zeta;
        c.nmse = nmse;
        return c;
    }

    NetConfig net_config() const {
        NetConfig nc;
        nc.m = m;
        nc.n = n;
        nc.k = k;
        nc.tau = tau;
        nc.mod_order = mod_order;
        nc.power_budget = resolved_power();
        return nc;
    }

    /// Network configuration for a different precoder width (used by the
    /// latency tradeoff, where K = gamma * MN varies per curve). The default
    /// power budget follows K.
    NetConfig net_config_for_k(int k_override) const {
        NetConfig nc = net_config();
        nc.k = k_override;
        nc.power_budget = power_budget > 0.0 ? power_budget : static_cast<double>(k_override);
        return nc;
    }

    NetConfig net_config_for_tau(int tau_override) const {
        NetConfig nc = net_config();
        nc.tau = tau_override;
        return nc;
    }

    TrainConfig train_config() const {
        TrainConfig tc;
        tc.batch = batch;
        tc.learning_rate = learning_rate;
        tc.max_iterations = iterations;
        tc.patience = patience;
        tc.val_fraction = val_fraction;
        tc.eval_every = eval_every;
        tc.seed = seed;
        tc.noise_var = noise_var_for_snr(train_snr_db);
        tc.kind = Equalizer::mmse;
        return tc;
    }

    void validate() const {
        if (k < 1 || k > m * n) throw ConfigError("system.k must satisfy 1 <= k <= m*n");
        if (mod_order != 4 && mod_order != 16 && mod_order != 64)
            throw ConfigError("system.mod_order must be 4, 16 or 64");
        if (snr_db.empty()) throw ConfigError("system.snr_db must not be empty");
        if (subcarrier_spacing_hz <= 0.0) throw ConfigError("system.subcarrier_spacing_hz must be > 0");
        channel_config().validate();
        if (tau < 1) throw ConfigError("history.tau must be >= 1");
        for (const auto& s : schemes)
            if (s != "zf" && s != "mmse" && s != "ddcl" && s != "lower_bound")
                throw ConfigError("run.schemes: unknown scheme '" + s + "'");
        if (trials < 1) throw ConfigError("run.trials must be >= 1");
        if (channels_per_cell < 1) throw ConfigError("run.channels must be >= 1");
        if (workers < 1) throw ConfigError("run.workers must be >= 1");
        if (dataset_size < 2) throw ConfigError("train.dataset_size must be >= 2");
        for (double g : gamma_values)
            if (g <= 0.0 || g > 1.0) throw ConfigError("sweep.gamma_values must lie in (0, 1]");
        for (int t : tau_values)
            if (t < 1) throw ConfigError("sweep.tau_values must be >= 1");
        if (validate_channels < 1) throw ConfigError("validate.channels must be >= 1");
        train_config().validate();
        net_config().validate();
    }
};

inline ExperimentConfig parse_experiment_config(const std::string& text) {
    using namespace detail;
    const IniData ini = IniData::parse(text);
    ExperimentConfig c;

    auto get_int = [&](const char* sec, const char* key, int& out) {
        if (const std::string* v = ini.find(sec, key))
            out = static_cast<int>(parse_int_value(*v, std::string(sec) + "." + key));
    };
    auto get_u64 = [&](const char* sec, const char* key, std::uint64_t& out) {
        if (const std::string* v = ini.find(sec, key))
            out = parse_u64_value(*v, std::string(sec) + "." + key);
    };
    auto get_double = [&](const char* sec, const char* key, double& out) {
        if (const std::string* v = ini.find(sec, key))
            out = parse_double_value(*v, std::string(sec) + "." + key);
    };
    auto get_bool = [&](const char* sec, const char* key, bool& out) {
        if (const std::string* v = ini.find(sec, key))
            out = parse_bool_value(*v, std::string(sec) + "." + key);
    };
    auto get_string = [&](const char* sec, const char* key, std::string& out) {
        if (const std::string* v = ini.find(sec, key)) out = *v;
    };
    auto get_double_list = [&](const char* sec, const char* key, std::vector<double>& out) {
        if (const std::string* v = ini.find(sec, key)) {
            out.clear();
            for (const auto& item : split_list(*v))
                out.push_back(parse_double_value(item, std::string(sec) + "." + key));
        }
    };
    auto get_int_list = [&](const char* sec, const char* key, std::vector<int>& out) {
        if (const std::string* v = ini.find(sec, key)) {
            out.clear();
            for (const auto& item : split_list(*v))
                out.push_back(static_cast<int>(parse_int_value(item, std::string(sec) + "." + key)));
        }
    };
    auto get_string_list = [&](const char* sec, const char* key, std::vector<std::string>& out) {
        if (const std::string* v = ini.find(sec, key)) out = split_list(*v);
    };

    get_int("system", "m", c.m);
    get_int("system", "n", c.n);
    get_int("system", "k", c.k);
    get_int("system", "mod_order", c.mod_order);
    get_double("system", "power_budget", c.power_budget);
    get_double_list("system", "snr_db", c.snr_db);
    get_double("system", "subcarrier_spacing_hz", c.subcarrier_spacing_hz);

    get_int("channel", "paths", c.paths);
    get_int("channel", "max_delay", c.max_delay);
    get_double("channel", "max_doppler", c.max_doppler);
    get_double("channel", "rho", c.rho);
    get_double("channel", "gain_variance", c.gain_variance);
    get_double("channel", "zeta", c.zeta);
    get_double("channel", "nmse", c.nmse);

    get_int("history", "tau", c.tau);

    get_string_list("run", "schemes", c.schemes);
    get_u64("run", "seed", c.seed);
    get_u64("run", "trials", c.trials);
    get_int("run", "channels", c.channels_per_cell);
    get_int("run", "workers", c.workers);
    get_string("run", "out", c.out_dir);
    get_bool("run", "timing", c.timing);

    get_int("train", "dataset_size", c.dataset_size);
    get_int("train", "batch", c.batch);
    get_double("train", "learning_rate", c.learning_rate);
    get_int("train", "iterations", c.iterations);
    get_int("train", "patience", c.patience);
    get_double("train", "val_fraction", c.val_fraction);
    get_int("train", "eval_every", c.eval_every);
    get_double("train", "train_snr_db", c.train_snr_db);

    get_double_list("sweep", "zeta_values", c.zeta_values);
    get_int_list("sweep", "tau_values", c.tau_values);
    get_double_list("sweep", "gamma_values", c.gamma_values);
    get_double_list("sweep", "tradeoff_snr_db", c.tradeoff_snr_db);
    get_double("sweep", "zeta_snr_db", c.zeta_snr_db);
    get_double("sweep", "tau_snr_db", c.tau_snr_db);

    get_int("validate", "channels", c.validate_channels);
    get_double_list("validate", "snr_db", c.validate_snr_db);

    ini.require_all_consumed();
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_experiment_config(text.str());
}

/// Canonical serialization of the fully resolved configuration. Every run
/// writes this next to its results so outputs are reproducible from the
/// artifact alone.
inline std::string resolved_config_text(const ExperimentConfig& c) {
    using detail::format_double;
    std::ostringstream o;
    auto list_d = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            s += detail::format_double(v[i]);
        }
        return s;
    };
    auto list_i = [](const std::vector<int>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(v[i]);
        }
        return s;
    };
    auto list_s = [](const std::vector<std::string>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            s += v[i];
        }
        return s;
    };
    o << "[system]\n";
    o << "m = " << c.m << "\n";
    o << "n = " << c.n << "\n";
    o << "k = " << c.k << "\n";
    o << "mod_order = " << c.mod_order << "\n";
    o << "power_budget = " << format_double(c.resolved_power()) << "\n";
    o << "snr_db = " << list_d(c.snr_db) << "\n";
    o << "subcarrier_spacing_hz = " << format_double(c.subcarrier_spacing_hz) << "\n";
    o << "\n[channel]\n";
    o << "paths = " << c.paths << "\n";
    o << "max_delay = " << c.max_delay << "\n";
    o << "max_doppler = " << format_double(c.max_doppler) << "\n";
    o << "rho = " << format_double(c.rho) << "\n";
    o << "gain_variance = " << format_double(c.gain_variance > 0 ? c.gain_variance : 1.0 / c.paths) << "\n";
    o << "zeta = " << format_double(c.zeta) << "\n";
    o << "nmse = " << format_double(c.nmse) << "\n";
    o << "\n[history]\n";
    o << "tau = " << c.tau << "\n";
    o << "\n[run]\n";
    o << "schemes = " << list_s(c.schemes) << "\n";
    o << "seed = " << c.seed << "\n";
    o << "trials = " << c.trials << "\n";
    o << "channels = " << c.channels_per_cell << "\n";
    o << "workers = " << c.workers << "\n";
    o << "out = " << c.out_dir << "\n";
    o << "timing = " << (c.timing ? "true" : "false") << "\n";
    o << "\n[train]\n";
    o << "dataset_size = " << c.dataset_size << "\n";
    o << "batch = " << c.batch << "\n";
    o << "learning_rate = " << format_double(c.learning_rate) << "\n";
    o << "iterations = " << c.iterations << "\n";
    o << "patience = " << c.patience << "\n";
    o << "val_fraction = " << format_double(c.val_fraction) << "\n";
    o << "eval_every = " << c.eval_every << "\n";
    o << "train_snr_db = " << format_double(c.train_snr_db) << "\n";
    o << "\n[sweep]\n";
    o << "zeta_values = " << list_d(c.zeta_values) << "\n";
    o << "tau_values = " << list_i(c.tau_values) << "\n";
    o << "gamma_values = " << list_d(c.gamma_values) << "\n";
    o << "tradeoff_snr_db = " << list_d(c.tradeoff_snr_db) << "\n";
    o << "zeta_snr_db = " << format_double(c.zeta_snr_db) << "\n";
    o << "tau_snr_db = " << format_double(c.tau_snr_db) << "\n";
    o << "\n[validate]\n";
    o << "channels = " << c.validate_channels << "\n";
    o << "snr_db = " << list_d(c.validate_snr_db) << "\n";
    return o.str();
}

} // namespace ddlink
