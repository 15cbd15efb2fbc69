#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <json.hpp>

#include "plsearch/dynseg.hpp"
#include "plsearch/error.hpp"
#include "plsearch/index_io.hpp"
#include "plsearch/signal_features.hpp"
#include "plsearch/synthetic.hpp"

namespace plsearch::cli {

// Everything a command may read from a config file; command-line flags
// override these.
struct Settings {
    double sample_rate = 32000.0;
    FilterbankConfig filterbank;
    std::size_t codebook_size = 128;
    std::size_t lbg_iters = 100;
    double lbg_tol = 1e-4;
    double lbg_epsilon = 1e-3;
    IndexParams index{.window = 1400};
    double theta = 85.0;
    std::string mode = "proposed";
    std::string dynseg = "coarse";
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    AudioGenSpec gen;
};

// Flat view of a JSON object or a TOML subset (key = value lines, optional
// [table] headers whose names are ignored, # comments).
inline nlohmann::json parse_toml_subset(const std::string& text) {
    nlohmann::json out = nlohmann::json::object();
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": malformed table header");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
        if (value.front() == '"') {
            if (value.size() < 2 || value.back() != '"') throw ConfigError("config line " + std::to_string(lineno) + ": unterminated string");
            out[key] = value.substr(1, value.size() - 2);
        } else if (value == "true" || value == "false") {
            out[key] = value == "true";
        } else {
            try {
                std::size_t used = 0;
                if (value.find_first_of(".eE") == std::string::npos && value.find("inf") == std::string::npos) {
                    const long long v = std::stoll(value, &used);
                    if (used != value.size()) throw std::invalid_argument(value);
                    out[key] = v;
                } else {
                    const double v = std::stod(value, &used);
                    if (used != value.size()) throw std::invalid_argument(value);
                    out[key] = v;
                }
            } catch (const std::logic_error&) {
                throw ConfigError("config line " + std::to_string(lineno) + ": cannot parse value '" + value + "'");
            }
        }
    }
    return out;
}

inline void flatten_into(const nlohmann::json& j, nlohmann::json& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.value().is_object()) {
            flatten_into(it.value(), out);
        } else {
            out[it.key()] = it.value();
        }
    }
}

inline nlohmann::json read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("invalid JSON config: ") + e.what());
        }
        nlohmann::json flat = nlohmann::json::object();
        flatten_into(j, flat);
        return flat;
    }
    return parse_toml_subset(text);
}

namespace detail {

inline double as_number(const nlohmann::json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    return v.get<double>();
}

inline std::size_t as_count(const nlohmann::json& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("config key '" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
}

inline std::string as_string(const nlohmann::json& v, const std::string& key) {
    if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
    return v.get<std::string>();
}

} // namespace detail

inline void apply_config(Settings& s, const nlohmann::json& flat) {
    using detail::as_count, detail::as_number, detail::as_string;
    for (auto it = flat.begin(); it != flat.end(); ++it) {
        const std::string& k = it.key();
        const auto& v = it.value();
        if (k == "sample_rate") s.sample_rate = as_number(v, k);
        else if (k == "channels") s.filterbank.n_channels = as_count(v, k);
        else if (k == "q") s.filterbank.q_factor = as_number(v, k);
        else if (k == "f_low") s.filterbank.f_low = as_number(v, k);
        else if (k == "f_high") s.filterbank.f_high = as_number(v, k);
        else if (k == "hop_ms") s.filterbank.frame_hop = as_number(v, k) / 1000.0;
        else if (k == "window_ms") s.filterbank.frame_window = as_number(v, k) / 1000.0;
        else if (k == "codebook_size") s.codebook_size = as_count(v, k);
        else if (k == "lbg_iters") s.lbg_iters = as_count(v, k);
        else if (k == "lbg_tol") s.lbg_tol = as_number(v, k);
        else if (k == "lbg_epsilon") s.lbg_epsilon = as_number(v, k);
        else if (k == "window_frames") s.index.window = as_count(v, k);
        else if (k == "segments") s.index.segments = as_count(v, k);
        else if (k == "sigma") s.index.sigma = as_number(v, k);
        else if (k == "delta") s.index.delta = as_count(v, k);
        else if (k == "block") s.index.block = as_count(v, k);
        else if (k == "dynseg") s.dynseg = as_string(v, k);
        else if (k == "theta") s.theta = as_number(v, k);
        else if (k == "mode") s.mode = as_string(v, k);
        else if (k == "seed") s.seed = as_count(v, k);
        else if (k == "threads") s.threads = as_count(v, k);
        else if (k == "stored_seconds") s.gen.stored_seconds = as_number(v, k);
        else if (k == "queries") s.gen.queries = as_count(v, k);
        else if (k == "query_seconds") s.gen.query_seconds = as_number(v, k);
        else if (k == "copies_per_query") s.gen.copies_per_query = as_count(v, k);
        else if (k == "snr_db") s.gen.snr_db = as_number(v, k);
        else throw ConfigError("unknown config key '" + k + "'");
    }
}

} // namespace plsearch::cli
