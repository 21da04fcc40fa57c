#pragma once

// Flat key=value configuration shared by the CLI subcommands.

#include "splitheat/error.hpp"
#include "splitheat/experiments.hpp"
#include "splitheat/nonlinearity.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace splitheat::cli {

/// Raised for bad configuration; the message names the offending key.
class ConfigError : public Error {
public:
    ConfigError(const std::string& key, const std::string& what) : Error(key + ": " + what), key_(key) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

/// Resolved configuration: every known key with its final value, in key order.
using AppConfig = std::map<std::string, std::string>;

inline AppConfig study_defaults(Vary vary) {
    const StudyConfig d = desk_study(vary);
    auto join = [](const std::vector<std::size_t>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    return {
        {"n_ref", std::to_string(d.N_ref)},
        {"m_ref", std::to_string(d.M_ref)},
        {"sweep_m", join(desk_study(Vary::Time).sweep)},
        {"sweep_n", join(desk_study(Vary::Space).sweep)},
        {"realizations", std::to_string(d.realizations)},
        {"t_final", "0.5"},
        {"k_modes", "4"},
        {"nonlinearity", "reg_sqrt"},
        {"lambda", "1"},
        {"delta", "0.1"},
        {"g_cap", "none"},
        {"u0", "sin_sin"},
        {"seed", std::to_string(d.master_seed)},
        {"workers", std::to_string(default_worker_count())},
        {"max_coarse_rel_error", "0.4"},
        {"dense_limit", std::to_string(kDefaultDenseLimit)},
    };
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Reads `key = value` lines; `#` starts a comment. Keys must already exist
/// in `config` (which carries the defaults).
inline void merge_config_text(AppConfig& config, std::istream& in, const std::string& source) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(lineno), "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!config.contains(key)) throw ConfigError(key, "unknown configuration key (" + source + ":" + std::to_string(lineno) + ")");
        config[key] = value;
    }
}

inline void merge_config_file(AppConfig& config, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot read '" + path + "'");
    merge_config_text(config, in, path);
}

inline std::uint64_t parse_u64(const AppConfig& c, const std::string& key) {
    const std::string& s = c.at(key);
    try {
        std::size_t pos = 0;
        if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
        const unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key, "expected a nonnegative integer, got '" + s + "'");
    }
}

inline std::size_t parse_size(const AppConfig& c, const std::string& key) { return static_cast<std::size_t>(parse_u64(c, key)); }

inline double parse_double(const AppConfig& c, const std::string& key) {
    const std::string& s = c.at(key);
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key, "expected a number, got '" + s + "'");
    }
}

inline std::vector<std::size_t> parse_list(const AppConfig& c, const std::string& key) {
    std::vector<std::size_t> out;
    std::stringstream ss(c.at(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        AppConfig one{{key, item}};
        out.push_back(parse_size(one, key));
    }
    if (out.empty()) throw ConfigError(key, "expected a comma-separated list of integers");
    return out;
}

inline Nonlinearity parse_nonlinearity(const AppConfig& c) {
    Nonlinearity nl;
    try {
        nl.kind = parse_nonlinearity_kind(c.at("nonlinearity"));
    } catch (const Error& e) {
        throw ConfigError("nonlinearity", e.what());
    }
    nl.lambda = parse_double(c, "lambda");
    nl.delta = parse_double(c, "delta");
    if (nl.kind == Nonlinearity::Kind::RegularizedSqrt && !(nl.delta > 0.0)) throw ConfigError("delta", "must be positive");
    if (c.at("g_cap") != "none") {
        const double cap = parse_double(c, "g_cap");
        if (!(cap > 0.0)) throw ConfigError("g_cap", "must be positive or 'none'");
        nl.g_cap = cap;
    }
    return nl;
}

inline InitialCondition parse_u0(const AppConfig& c) {
    if (c.at("u0") == "sin_sin") return sin_sin;
    throw ConfigError("u0", "unsupported initial condition '" + c.at("u0") + "' (expected sin_sin)");
}

inline StudyConfig to_study(const AppConfig& c, Vary vary) {
    StudyConfig s;
    s.vary = vary;
    s.N_ref = parse_size(c, "n_ref");
    s.M_ref = parse_size(c, "m_ref");
    s.sweep = parse_list(c, vary == Vary::Time ? "sweep_m" : "sweep_n");
    s.realizations = parse_size(c, "realizations");
    s.T = parse_double(c, "t_final");
    s.K = parse_size(c, "k_modes");
    s.nonlinearity = parse_nonlinearity(c);
    s.u0 = parse_u0(c);
    s.master_seed = parse_u64(c, "seed");
    s.workers = parse_size(c, "workers");
    s.max_coarse_rel_error = parse_double(c, "max_coarse_rel_error");
    s.dense_limit = parse_size(c, "dense_limit");

    if (s.N_ref < 2) throw ConfigError("n_ref", "must be >= 2");
    if (s.M_ref < 1) throw ConfigError("m_ref", "must be >= 1");
    if (s.realizations < 1) throw ConfigError("realizations", "must be >= 1");
    if (!(s.T > 0.0)) throw ConfigError("t_final", "must be positive");
    if (s.workers < 1) throw ConfigError("workers", "must be >= 1");
    try {
        modes_per_axis(s.K);
    } catch (const Error& e) {
        throw ConfigError("k_modes", e.what());
    }
    const std::string sweep_key = vary == Vary::Time ? "sweep_m" : "sweep_n";
    for (std::size_t v : s.sweep) {
        if (vary == Vary::Time && (v == 0 || s.M_ref % v != 0))
            throw ConfigError(sweep_key, std::to_string(v) + " does not divide m_ref=" + std::to_string(s.M_ref));
        if (vary == Vary::Space && (v < 2 || s.N_ref % v != 0))
            throw ConfigError(sweep_key, std::to_string(v) + " does not divide n_ref=" + std::to_string(s.N_ref));
    }
    return s;
}

}  // namespace splitheat::cli
