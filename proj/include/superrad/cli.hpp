// Copyright 2026 The superrad Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "superrad/cumulant.hpp"
#include "superrad/dynamics.hpp"
#include "superrad/errors.hpp"
#include "superrad/liouvillian.hpp"
#include "superrad/model.hpp"
#include "superrad/observables.hpp"
#include "superrad/validation.hpp"

#ifndef SUPERRAD_VERSION
#define SUPERRAD_VERSION "0.0.0"
#endif

namespace superrad::cli {

using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSolver = 3;
inline constexpr int kExitValidation = 4;

enum class Command { steady, sweep, g1, g2, spectrum, cumulant, validate };
enum class OutputFormat { csv, structured };
enum class SweepSolver { cumulant, symmetric, both };
enum class SpectrumMethod { filon, resolvent };

inline const std::map<std::string, Command>& command_names() {
    static const std::map<std::string, Command> names{
        {"steady", Command::steady}, {"sweep", Command::sweep},       {"g1", Command::g1},
        {"g2", Command::g2},         {"spectrum", Command::spectrum}, {"cumulant", Command::cumulant},
        {"validate", Command::validate}};
    return names;
}

inline std::string to_string(Command c) {
    for (const auto& [name, value] : command_names())
        if (value == c) return name;
    return "?";
}

// ---------------------------------------------------------------------------
// Rates with units

/// A rate as written by the user: a number and an optional unit.
struct RateSpec {
    double value = 0.0;
    /// Empty for the absolute frequency unit.
    std::string unit;
};

/// Accepts a JSON number, or a string such as "1.05 kappa/N" or "10NCgamma".
inline RateSpec parse_rate(const std::string& text, const std::string& field) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ConfigError("config field '" + field + "': cannot read a number from \"" + text + "\"");
    }
    std::string unit = text.substr(used);
    unit.erase(std::remove_if(unit.begin(), unit.end(), [](unsigned char ch) { return std::isspace(ch) || ch == '*'; }),
               unit.end());
    return {value, unit};
}

inline RateSpec rate_from_json(const json& j, const std::string& field) {
    if (j.is_number()) return {j.get<double>(), ""};
    if (j.is_string()) return parse_rate(j.get<std::string>(), field);
    throw ConfigError("config field '" + field + "': expected a number or a string like \"2 kappa/N\"");
}

/// kappa in units of N C gamma, N^2 C gamma (with C gamma = g^2 / kappa), or N g.
inline double resolve_kappa(const RateSpec& r, int n, double g) {
    if (r.unit.empty()) return r.value;
    if (r.value < 0.0) throw ConfigError("rates must be non-negative");
    if (r.unit == "NCgamma") return g * std::sqrt(r.value * n);
    if (r.unit == "N2Cgamma") return g * n * std::sqrt(r.value);
    if (r.unit == "Ng") return r.value * n * g;
    throw ConfigError("config field 'model.kappa': unknown unit '" + r.unit + "' (use NCgamma, N2Cgamma or Ng)");
}

/// w in units of kappa / N, N C gamma or C gamma.
inline double resolve_pump(const RateSpec& r, int n, double g, double kappa, const std::string& field) {
    if (r.unit.empty()) return r.value;
    if (r.unit == "kappa/N") return r.value * kappa / n;
    if (r.unit == "NCgamma" || r.unit == "Cgamma") {
        if (!(kappa > 0.0)) throw ConfigError("config field '" + field + "': unit " + r.unit + " needs kappa > 0");
        const double cg = g * g / kappa;
        return r.unit == "Cgamma" ? r.value * cg : r.value * n * cg;
    }
    throw ConfigError("config field '" + field + "': unknown unit '" + r.unit + "' (use kappa/N, NCgamma or Cgamma)");
}

// ---------------------------------------------------------------------------
// Layered configuration

/// Every recognized key with its default. Later layers may only set keys
/// that appear here.
inline json default_config() {
    return json::parse(R"({
  "command": "steady",
  "preset": "",
  "model": {"n_atoms": 2, "photon_cutoff": 1, "coupling": 1.0, "kappa": 1.0, "pump": 1.0,
            "gamma": 0.0, "gamma_d": 0.0},
  "cavity": "blockaded",
  "sweep": {"w_min": "0.1 kappa/N", "w_max": "10 kappa/N", "steps": 41, "scale": "log",
            "solver": "cumulant", "linewidth": false},
  "time": {"t_max": 200.0, "dense_end": 20.0, "dense_points": 1001, "tail_points": 200,
           "fit_start": 0.0},
  "spectrum": {"omega_max": 5.0, "points": 1001, "method": "filon"},
  "tolerances": {"reltol": 1e-8, "abstol": 1e-10, "steady": 1e-10},
  "validate": {"draws": 20, "t_max": 5.0, "grid_points": 100, "observable_tolerance": 1e-8,
               "correlation_tolerance": 1e-6},
  "output": {"path": "", "format": "csv"},
  "threads": 1,
  "seed": 7
})");
}

/// Named parameter sets, with kappa and pump written as dimensionless ratios.
inline json preset_config(const std::string& name) {
    static const std::map<std::string, std::string> presets{
        {"fig2a-blockaded", R"({
  "model": {"n_atoms": 100000, "photon_cutoff": 1, "coupling": 1.0, "kappa": "0.0625 N2Cgamma"},
  "cavity": "blockaded",
  "sweep": {"w_min": "0.1 kappa/N", "w_max": "10 kappa/N", "steps": 121, "scale": "log", "solver": "cumulant"}})"},
        {"fig2a-normal", R"({
  "model": {"n_atoms": 100000, "photon_cutoff": 1, "coupling": 1.0, "kappa": "0.0625 N2Cgamma"},
  "cavity": "harmonic",
  "sweep": {"w_min": "0.01 NCgamma", "w_max": "10 NCgamma", "steps": 121, "scale": "log", "solver": "cumulant"}})"},
        {"fig2b", R"({
  "model": {"n_atoms": 100, "photon_cutoff": 1, "coupling": 0.1, "kappa": "1 NCgamma", "pump": "2 kappa/N"},
  "time": {"t_max": 4000.0, "dense_end": 40.0, "dense_points": 4001, "tail_points": 300, "fit_start": 200.0},
  "spectrum": {"omega_max": 8.0, "points": 801, "method": "filon"}})"},
        {"fig2c", R"({
  "model": {"n_atoms": 100, "photon_cutoff": 1, "coupling": 0.031622776601683794, "kappa": "10 NCgamma",
            "pump": "1.05 kappa/N"},
  "time": {"t_max": 20000.0, "dense_end": 20.0, "dense_points": 1001, "tail_points": 300, "fit_start": 2000.0}})"},
        {"figS1a", R"({
  "model": {"n_atoms": 50, "photon_cutoff": 1, "coupling": 0.1, "kappa": "10 NCgamma"},
  "cavity": "blockaded",
  "sweep": {"w_min": "0.1 kappa/N", "w_max": "3 kappa/N", "steps": 30, "scale": "linear", "solver": "both"}})"},
        {"figS1b", R"({
  "model": {"n_atoms": 100, "photon_cutoff": 1, "coupling": 0.031622776601683794, "kappa": "10 NCgamma"},
  "cavity": "blockaded",
  "sweep": {"w_min": "0.3 kappa/N", "w_max": "1.8 kappa/N", "steps": 6, "scale": "linear", "solver": "symmetric",
            "linewidth": true},
  "time": {"t_max": 20000.0, "dense_end": 20.0, "dense_points": 1001, "tail_points": 300, "fit_start": 2000.0}})"}};
    const auto it = presets.find(name);
    if (it == presets.end()) {
        std::string known;
        for (const auto& [k, v] : presets) known += (known.empty() ? "" : ", ") + k;
        throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
    }
    return json::parse(it->second);
}

inline std::vector<std::string> preset_names() {
    return {"fig2a-blockaded", "fig2a-normal", "fig2b", "fig2c", "figS1a", "figS1b"};
}

/// Parses config text; syntax errors report line and column.
inline json parse_config_text(const std::string& text, const std::string& origin) {
    try {
        json j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
        if (!j.is_object()) throw ConfigError(origin + ": top level must be an object");
        return j;
    } catch (const json::parse_error& e) {
        std::size_t line = 1, column = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(column) +
                          ": syntax error: " + e.what());
    }
}

inline json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

namespace detail {

inline void check_known_keys(const json& layer, const json& schema, const std::string& prefix) {
    for (const auto& [key, value] : layer.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!schema.contains(key)) throw ConfigError("config field '" + path + "': unknown key");
        if (schema[key].is_object()) {
            if (!value.is_object()) throw ConfigError("config field '" + path + "': expected an object");
            check_known_keys(value, schema[key], path);
        }
    }
}

}  // namespace detail

/// Applies one layer on top of `base` after checking its keys.
inline void merge_layer(json& base, const json& layer) {
    detail::check_known_keys(layer, default_config(), "");
    base.merge_patch(layer);
}

/// defaults < preset < file < flags. The preset is taken from the flags if
/// given there, else from the file.
inline json layered_config(const json& file_layer, const json& flag_layer) {
    json config = default_config();
    std::string preset;
    if (flag_layer.contains("preset")) preset = flag_layer["preset"].get<std::string>();
    else if (file_layer.contains("preset") && file_layer["preset"].is_string())
        preset = file_layer["preset"].get<std::string>();
    if (!preset.empty()) merge_layer(config, preset_config(preset));
    merge_layer(config, file_layer);
    merge_layer(config, flag_layer);
    config["preset"] = preset;
    return config;
}

// ---------------------------------------------------------------------------
// Resolved run configuration

struct TimeGrid {
    double t_max = 200.0;
    double dense_end = 20.0;
    std::size_t dense_points = 1001;
    std::size_t tail_points = 200;
    /// Start of the linewidth-fit window; zero means t_max / 10.
    double fit_start = 0.0;

    std::vector<double> samples() const {
        HybridGridOptions h;
        h.dense_end = std::min(dense_end, t_max);
        h.dense_points = dense_points;
        h.tail_end = t_max;
        h.tail_points = t_max > dense_end ? tail_points : 0;
        return hybrid_time_grid(h);
    }
    double fit_window_start() const { return fit_start > 0.0 ? fit_start : t_max / 10.0; }
};

struct RunConfig {
    Command command = Command::steady;
    std::string preset;
    ModelParams params;
    CavityModel cavity = CavityModel::blockaded;
    std::vector<double> sweep_pumps;
    SweepSolver sweep_solver = SweepSolver::cumulant;
    bool sweep_linewidth = false;
    TimeGrid time;
    double omega_max = 5.0;
    std::size_t spectrum_points = 1001;
    SpectrumMethod spectrum_method = SpectrumMethod::filon;
    double reltol = 1e-8;
    double abstol = 1e-10;
    double steady_tol = 1e-10;
    std::size_t validate_draws = 20;
    double validate_t_max = 5.0;
    std::size_t validate_grid_points = 100;
    double observable_tolerance = 1e-8;
    double correlation_tolerance = 1e-6;
    std::string out_path;
    OutputFormat format = OutputFormat::csv;
    unsigned threads = 1;
    std::uint64_t seed = 7;
    /// Effective layered config, echoed into every output.
    json effective;
};

namespace detail {

template <class T>
T field(const json& config, const std::string& path) {
    const json* node = &config;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        node = &node->at(path.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    try {
        if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, int> || std::is_same_v<T, unsigned> ||
                      std::is_same_v<T, std::uint64_t>) {
            if (!node->is_number_integer() || node->get<long long>() < 0)
                throw ConfigError("config field '" + path + "': expected a non-negative integer");
        } else if constexpr (std::is_same_v<T, double>) {
            if (!node->is_number()) throw ConfigError("config field '" + path + "': expected a number");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!node->is_boolean()) throw ConfigError("config field '" + path + "': expected true or false");
        } else {
            if (!node->is_string()) throw ConfigError("config field '" + path + "': expected a string");
        }
        return node->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config field '" + path + "': " + e.what());
    }
}

template <class E>
E choice(const json& config, const std::string& path, const std::map<std::string, E>& options) {
    const auto s = field<std::string>(config, path);
    const auto it = options.find(s);
    if (it == options.end()) {
        std::string known;
        for (const auto& [k, v] : options) known += (known.empty() ? "" : ", ") + k;
        throw ConfigError("config field '" + path + "': '" + s + "' is not one of " + known);
    }
    return it->second;
}

inline double positive(double v, const std::string& path) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("config field '" + path + "': must be positive");
    return v;
}

}  // namespace detail

/// Converts a layered config into typed values, resolving units.
inline RunConfig resolve(const json& config) {
    using detail::choice;
    using detail::field;
    RunConfig rc;
    rc.effective = config;
    rc.command = choice(config, "command", command_names());
    rc.preset = field<std::string>(config, "preset");

    ModelParams& p = rc.params;
    p.n_atoms = field<int>(config, "model.n_atoms");
    p.photon_cutoff = field<int>(config, "model.photon_cutoff");
    p.coupling = field<double>(config, "model.coupling");
    p.cavity_decay = resolve_kappa(rate_from_json(config["model"]["kappa"], "model.kappa"), p.n_atoms, p.coupling);
    p.pump = resolve_pump(rate_from_json(config["model"]["pump"], "model.pump"), p.n_atoms, p.coupling,
                          p.cavity_decay, "model.pump");
    p.spont_emission = field<double>(config, "model.gamma");
    p.dephasing = field<double>(config, "model.gamma_d");
    validate(p);

    rc.cavity = choice(config, "cavity",
                       std::map<std::string, CavityModel>{{"blockaded", CavityModel::blockaded},
                                                          {"harmonic", CavityModel::harmonic}});

    if (rc.command == Command::sweep) {
        const double lo = resolve_pump(rate_from_json(config["sweep"]["w_min"], "sweep.w_min"), p.n_atoms, p.coupling,
                                       p.cavity_decay, "sweep.w_min");
        const double hi = resolve_pump(rate_from_json(config["sweep"]["w_max"], "sweep.w_max"), p.n_atoms, p.coupling,
                                       p.cavity_decay, "sweep.w_max");
        const auto steps = field<std::size_t>(config, "sweep.steps");
        const bool log_scale = choice(config, "sweep.scale", std::map<std::string, bool>{{"log", true}, {"linear", false}});
        if (steps == 0) throw ConfigError("config field 'sweep.steps': sweep range must be non-empty");
        if (!(hi >= lo) || lo < 0.0) throw ConfigError("config field 'sweep': need 0 <= w_min <= w_max");
        if (log_scale && !(lo > 0.0)) throw ConfigError("config field 'sweep.w_min': log scale needs w_min > 0");
        for (std::size_t i = 0; i < steps; ++i) {
            const double f = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
            rc.sweep_pumps.push_back(log_scale ? lo * std::pow(hi / lo, f) : lo + f * (hi - lo));
        }
        rc.sweep_solver = choice(config, "sweep.solver",
                                 std::map<std::string, SweepSolver>{{"cumulant", SweepSolver::cumulant},
                                                                    {"symmetric", SweepSolver::symmetric},
                                                                    {"both", SweepSolver::both}});
        rc.sweep_linewidth = field<bool>(config, "sweep.linewidth");
    }

    rc.time.t_max = detail::positive(field<double>(config, "time.t_max"), "time.t_max");
    rc.time.dense_end = detail::positive(field<double>(config, "time.dense_end"), "time.dense_end");
    rc.time.dense_points = field<std::size_t>(config, "time.dense_points");
    rc.time.tail_points = field<std::size_t>(config, "time.tail_points");
    rc.time.fit_start = field<double>(config, "time.fit_start");
    if (rc.time.dense_points < 2) throw ConfigError("config field 'time.dense_points': need at least 2");
    if (rc.time.fit_start < 0.0 || rc.time.fit_start >= rc.time.t_max)
        throw ConfigError("config field 'time.fit_start': must lie in [0, t_max)");

    rc.omega_max = detail::positive(field<double>(config, "spectrum.omega_max"), "spectrum.omega_max");
    rc.spectrum_points = field<std::size_t>(config, "spectrum.points");
    if (rc.spectrum_points < 3) throw ConfigError("config field 'spectrum.points': need at least 3");
    rc.spectrum_method = choice(config, "spectrum.method",
                                std::map<std::string, SpectrumMethod>{{"filon", SpectrumMethod::filon},
                                                                      {"resolvent", SpectrumMethod::resolvent}});

    rc.reltol = detail::positive(field<double>(config, "tolerances.reltol"), "tolerances.reltol");
    rc.abstol = detail::positive(field<double>(config, "tolerances.abstol"), "tolerances.abstol");
    rc.steady_tol = detail::positive(field<double>(config, "tolerances.steady"), "tolerances.steady");

    rc.validate_draws = field<std::size_t>(config, "validate.draws");
    rc.validate_t_max = detail::positive(field<double>(config, "validate.t_max"), "validate.t_max");
    rc.validate_grid_points = field<std::size_t>(config, "validate.grid_points");
    if (rc.validate_grid_points < 2) throw ConfigError("config field 'validate.grid_points': need at least 2");
    rc.observable_tolerance = detail::positive(field<double>(config, "validate.observable_tolerance"),
                                               "validate.observable_tolerance");
    rc.correlation_tolerance = detail::positive(field<double>(config, "validate.correlation_tolerance"),
                                                "validate.correlation_tolerance");

    rc.out_path = field<std::string>(config, "output.path");
    rc.format = choice(config, "output.format",
                       std::map<std::string, OutputFormat>{{"csv", OutputFormat::csv},
                                                           {"structured", OutputFormat::structured}});
    rc.threads = std::max(1u, field<unsigned>(config, "threads"));
    rc.seed = field<std::uint64_t>(config, "seed");
    return rc;
}

// ---------------------------------------------------------------------------
// Results and output

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    /// Command-specific scalars reported alongside the rows.
    json summary = json::object();
};

inline json metadata(const RunConfig& rc) {
    json m;
    m["version"] = SUPERRAD_VERSION;
    m["command"] = to_string(rc.command);
    m["config"] = rc.effective;
    const ModelParams& p = rc.params;
    m["resolved"] = {{"n_atoms", p.n_atoms},          {"photon_cutoff", p.photon_cutoff},
                     {"g", p.coupling},               {"kappa", p.cavity_decay},
                     {"w", p.pump},                   {"gamma", p.spont_emission},
                     {"gamma_d", p.dephasing}};
    return m;
}

/// Shortest text that reads back to the same double.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_csv(std::ostream& os, const json& meta, const Table& table) {
    os << "# superrad " << meta["version"].get<std::string>() << "\n";
    os << "# command: " << meta["command"].get<std::string>() << "\n";
    os << "# config: " << meta["config"].dump() << "\n";
    os << "# resolved: " << meta["resolved"].dump() << "\n";
    for (const auto& [key, value] : table.summary.items()) os << "# " << key << ": " << value.dump() << "\n";
    for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << table.columns[i];
    os << "\n";
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_number(row[i]);
        os << "\n";
    }
}

inline void write_structured(std::ostream& os, const json& meta, const Table& table) {
    json doc;
    doc["metadata"] = meta;
    doc["summary"] = table.summary;
    doc["columns"] = table.columns;
    json rows = json::array();
    for (const auto& row : table.rows) {
        json r = json::array();
        for (double v : row) r.push_back(std::isfinite(v) ? json(v) : json(nullptr));
        rows.push_back(std::move(r));
    }
    doc["rows"] = std::move(rows);
    os << doc.dump(2) << "\n";
}

/// Writes to `<out_path>/<command>.{csv,json}`, or to `fallback` when no path is set.
inline void emit(const RunConfig& rc, const Table& table, std::ostream& fallback) {
    const json meta = metadata(rc);
    auto write = [&](std::ostream& os) {
        if (rc.format == OutputFormat::csv) write_csv(os, meta, table);
        else write_structured(os, meta, table);
    };
    if (rc.out_path.empty()) {
        write(fallback);
        return;
    }
    const std::filesystem::path dir(rc.out_path);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + rc.out_path + "': " + ec.message());
    const auto file = dir / (to_string(rc.command) + (rc.format == OutputFormat::csv ? ".csv" : ".json"));
    std::ofstream out(file);
    if (!out) throw ConfigError("cannot write '" + file.string() + "'");
    write(out);
}

// ---------------------------------------------------------------------------
// Commands

/// Runs f(0..count-1) on up to `threads` workers; results keep index order.
/// The exception of the lowest failing index is rethrown.
template <class F>
auto ordered_map(std::size_t count, unsigned threads, F&& f) -> std::vector<decltype(f(std::size_t{}))> {
    using R = decltype(f(std::size_t{}));
    std::vector<std::optional<R>> results(count);
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                results[i] = f(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned n_workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), count));
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < n_workers; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    std::vector<R> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
        out.push_back(std::move(*results[i]));
    }
    return out;
}

namespace detail {

inline EvolveOptions evolve_options(const RunConfig& rc) {
    EvolveOptions e;
    e.reltol = rc.reltol;
    e.abstol = rc.abstol;
    return e;
}

inline SteadyStateOptions steady_options(const RunConfig& rc) {
    SteadyStateOptions s;
    s.tol = rc.steady_tol;
    return s;
}

inline CorrelationOptions correlation_options(const RunConfig& rc, unsigned assembly_threads) {
    CorrelationOptions c;
    c.evolve = evolve_options(rc);
    c.assembly.threads = assembly_threads;
    return c;
}

struct SteadyPoint {
    SymmetricState state;
    SteadyStateReport report;
    std::size_t dimension = 0;
};

inline SteadyPoint symmetric_steady(const RunConfig& rc, const ModelParams& p, unsigned assembly_threads) {
    AssemblyOptions a;
    a.threads = assembly_threads;
    const auto l = build_liouvillian(p, 0, a);
    SteadyPoint out;
    out.dimension = l.dimension();
    out.state = steady_state(l, steady_options(rc), &out.report);
    return out;
}

inline double spin_spin_or_nan(const SymmetricState& s) {
    return s.sector->n_atoms() >= 2 ? expect_spin_spin(s) : std::numeric_limits<double>::quiet_NaN();
}

inline const char* method_name(SteadyStateMethod m) {
    switch (m) {
        case SteadyStateMethod::bordered_lu: return "bordered_lu";
        case SteadyStateMethod::long_time: return "long_time";
        default: return "automatic";
    }
}

inline double w_tilde(const ModelParams& p) { return derive_scales(p).w_tilde; }

/// Exponential fit of the g1 tail, or NaN values when it fails.
inline LinewidthFit try_fit(const CorrelationTrace& trace, const TimeGrid& t, json& summary) {
    try {
        return fit_linewidth(trace, t.fit_window_start(), t.t_max);
    } catch (const FitError& e) {
        summary["fit_error"] = e.what();
        const double nan = std::numeric_limits<double>::quiet_NaN();
        return {nan, nan, nan, nan, 0};
    }
}

}  // namespace detail

inline Table run_steady(const RunConfig& rc) {
    const auto sp = detail::symmetric_steady(rc, rc.params, rc.threads);
    const double nb = expect_photon_number(sp.state);
    Table t;
    t.columns = {"w", "w_tilde", "sz", "spsm", "nb", "one_minus_2nb", "dimension", "residual"};
    t.rows.push_back({rc.params.pump, detail::w_tilde(rc.params), expect_sigma_z(sp.state),
                      detail::spin_spin_or_nan(sp.state), nb, 1.0 - 2.0 * nb, static_cast<double>(sp.dimension),
                      sp.report.residual});
    t.summary["steady_method"] = detail::method_name(sp.report.method_used);
    return t;
}

inline Table run_sweep(const RunConfig& rc) {
    const bool cumulant = rc.sweep_solver != SweepSolver::symmetric;
    const bool symmetric = rc.sweep_solver != SweepSolver::cumulant;
    if (rc.sweep_linewidth && !symmetric) throw ConfigError("config field 'sweep.linewidth': needs solver symmetric or both");
    Table t;
    t.columns = {"w", "w_tilde", "nb", "spsm", "sz"};
    if (rc.sweep_solver == SweepSolver::both) t.columns.insert(t.columns.end(), {"nb_cumulant", "spsm_cumulant", "sz_cumulant"});
    if (rc.sweep_linewidth) t.columns.insert(t.columns.end(), {"gamma_fit", "amplitude_fit", "gamma_closed_form", "one_minus_2nb"});

    const auto rows = ordered_map(rc.sweep_pumps.size(), rc.threads, [&](std::size_t i) {
        ModelParams p = rc.params;
        p.pump = rc.sweep_pumps[i];
        std::vector<double> row{p.pump, detail::w_tilde(p)};
        if (symmetric) {
            const auto sp = detail::symmetric_steady(rc, p, 1);
            const double nb = expect_photon_number(sp.state);
            row.insert(row.end(), {nb, detail::spin_spin_or_nan(sp.state), expect_sigma_z(sp.state)});
            if (cumulant) {
                const auto c = cumulant_steady(p, rc.cavity).state;
                row.insert(row.end(), {c.nb, c.spsm, c.sz});
            }
            if (rc.sweep_linewidth) {
                const auto trace = g1_trace(p, sp.state, rc.time.samples(), detail::correlation_options(rc, 1));
                json ignored;
                const auto fit = detail::try_fit(trace, rc.time, ignored);
                row.insert(row.end(), {fit.gamma, fit.amplitude, closed_form_linewidth(p), 1.0 - 2.0 * nb});
            }
        } else {
            const auto c = cumulant_steady(p, rc.cavity).state;
            row.insert(row.end(), {c.nb, c.spsm, c.sz});
        }
        return row;
    });
    t.rows = rows;
    return t;
}

inline Table run_correlation(const RunConfig& rc) {
    const auto sp = detail::symmetric_steady(rc, rc.params, rc.threads);
    const auto opts = detail::correlation_options(rc, rc.threads);
    const auto grid = rc.time.samples();
    Table t;
    const bool first_order = rc.command == Command::g1;
    const CorrelationTrace trace =
        first_order ? g1_trace(rc.params, sp.state, grid, opts) : g2_trace(rc.params, sp.state, grid, opts);
    t.columns = {"t", "re", "im"};
    for (std::size_t i = 0; i < grid.size(); ++i)
        t.rows.push_back({trace.times[i], trace.values[i].real(), trace.values[i].imag()});
    const double nb = expect_photon_number(sp.state);
    t.summary["nb"] = nb;
    t.summary["one_minus_2nb"] = 1.0 - 2.0 * nb;
    if (first_order) {
        const auto fit = detail::try_fit(trace, rc.time, t.summary);
        if (std::isfinite(fit.gamma)) {
            t.summary["gamma_fit"] = fit.gamma;
            t.summary["amplitude_fit"] = fit.amplitude;
        }
        if (rc.params.cavity_decay > 0.0 && rc.params.coupling > 0.0)
            t.summary["gamma_closed_form"] = closed_form_linewidth(rc.params);
    }
    return t;
}

inline Table run_spectrum(const RunConfig& rc) {
    const auto sp = detail::symmetric_steady(rc, rc.params, rc.threads);
    const auto opts = detail::correlation_options(rc, rc.threads);
    std::vector<double> freqs(rc.spectrum_points);
    for (std::size_t i = 0; i < freqs.size(); ++i)
        freqs[i] = -rc.omega_max + 2.0 * rc.omega_max * static_cast<double>(i) / static_cast<double>(freqs.size() - 1);
    Table t;
    std::vector<double> values;
    if (rc.spectrum_method == SpectrumMethod::filon) {
        const auto trace = g1_trace(rc.params, sp.state, rc.time.samples(), opts);
        const auto fit = detail::try_fit(trace, rc.time, t.summary);
        std::optional<TailModel> tail;
        if (std::isfinite(fit.gamma)) tail = TailModel{fit.gamma, fit.amplitude};
        const Spectrum s = power_spectrum(trace, freqs, tail);
        values = s.values;
        t.summary["area"] = s.area;
    } else {
        values = resolvent_spectrum(rc.params, sp.state, freqs, opts);
    }
    t.columns = {"omega", "S"};
    for (std::size_t i = 0; i < freqs.size(); ++i) t.rows.push_back({freqs[i], values[i]});
    const double spsm = detail::spin_spin_or_nan(sp.state);
    if (std::isfinite(spsm)) t.summary["omega_eff"] = effective_rabi(rc.params, spsm);
    json peaks = json::array();
    for (const auto& pk : spectral_peaks(freqs, values))
        peaks.push_back({{"center", pk.center}, {"height", pk.height},
                         {"outer_half_width", std::isfinite(pk.outer_half_width) ? json(pk.outer_half_width) : json(nullptr)}});
    t.summary["peaks"] = peaks;
    return t;
}

inline Table run_cumulant(const RunConfig& rc) {
    const ModelParams& p = rc.params;
    const auto res = cumulant_steady(p, rc.cavity);
    const auto& s = res.state;
    const auto scales = derive_scales(p);
    const auto modes = regression_modes(p, s, rc.cavity);
    Table t;
    t.columns = {"w", "w_tilde", "kappa_tilde", "nb_closed_form", "gamma_closed_form", "sz", "spsm", "nb",
                 "re_bdsm", "im_bdsm", "gamma_regression", "stable"};
    t.rows.push_back({p.pump, scales.w_tilde, scales.kappa_tilde, closed_form_photon(p), closed_form_linewidth(p), s.sz,
                      s.spsm, s.nb, s.bdsm.real(), s.bdsm.imag(), modes.linewidth,
                      is_linearly_stable(s, p, rc.cavity) ? 1.0 : 0.0});
    t.summary["residual"] = res.residual;
    t.summary["other_roots"] = res.other_roots.size();
    return t;
}

/// Outcome of `validate`: the table plus whether every draw passed.
struct ValidationRun {
    Table table;
    bool passed = true;
};

inline ValidationRun run_validate(const RunConfig& rc) {
    std::mt19937_64 rng(rc.seed);
    std::vector<ModelParams> draws;
    for (std::size_t i = 0; i < rc.validate_draws; ++i)
        draws.push_back(random_parameter_draw(rng, rc.params.n_atoms, rc.params.photon_cutoff));
    OracleComparisonOptions opts;
    opts.steady = detail::steady_options(rc);
    opts.correlation = detail::correlation_options(rc, 1);
    for (std::size_t i = 0; i < rc.validate_grid_points; ++i)
        opts.grid.push_back(rc.validate_t_max * static_cast<double>(i) / static_cast<double>(rc.validate_grid_points - 1));

    const auto results = ordered_map(draws.size(), rc.threads, [&](std::size_t i) { return compare_with_oracle(draws[i], opts); });
    ValidationRun run;
    Table& t = run.table;
    t.columns = {"draw", "g", "kappa", "w", "gamma", "gamma_d", "dev_sz", "dev_spsm", "dev_nb", "dev_g1", "dev_g2"};
    double worst_obs = 0.0, worst_corr = 0.0;
    for (std::size_t i = 0; i < draws.size(); ++i) {
        const auto& p = draws[i];
        const auto& r = results[i];
        t.rows.push_back({static_cast<double>(i), p.coupling, p.cavity_decay, p.pump, p.spont_emission, p.dephasing,
                          r.sigma_z, r.spin_spin, r.photon_number, r.g1, r.g2});
        worst_obs = std::max(worst_obs, r.max_observable());
        worst_corr = std::max(worst_corr, r.max_correlation());
    }
    run.passed = worst_obs <= rc.observable_tolerance && worst_corr <= rc.correlation_tolerance;
    t.summary["seed"] = rc.seed;
    t.summary["max_observable_deviation"] = worst_obs;
    t.summary["max_correlation_deviation"] = worst_corr;
    t.summary["observable_tolerance"] = rc.observable_tolerance;
    t.summary["correlation_tolerance"] = rc.correlation_tolerance;
    t.summary["passed"] = run.passed;
    return run;
}

/// Executes one resolved configuration and writes its output.
inline int run(const RunConfig& rc, std::ostream& out) {
    switch (rc.command) {
        case Command::steady: emit(rc, run_steady(rc), out); return kExitOk;
        case Command::sweep: emit(rc, run_sweep(rc), out); return kExitOk;
        case Command::g1:
        case Command::g2: emit(rc, run_correlation(rc), out); return kExitOk;
        case Command::spectrum: emit(rc, run_spectrum(rc), out); return kExitOk;
        case Command::cumulant: emit(rc, run_cumulant(rc), out); return kExitOk;
        case Command::validate: {
            const auto v = run_validate(rc);
            emit(rc, v.table, out);
            return v.passed ? kExitOk : kExitValidation;
        }
    }
    return kExitConfig;
}

// ---------------------------------------------------------------------------
// Command line

/// Flag values collected as JSON so they layer like any other source.
inline json parse_flags(int argc, const char* const* argv, CLI::App& app, std::string& config_path) {
    std::string command;
    std::map<std::string, std::string> text;
    app.add_option("command", command, "steady | sweep | g1 | g2 | spectrum | cumulant | validate")
        ->required()
        ->check(CLI::IsMember({"steady", "sweep", "g1", "g2", "spectrum", "cumulant", "validate"}));
    app.add_option("--config", config_path, "JSON config file (comments allowed)");
    struct Flag {
        const char* name;
        const char* path;
        const char* kind;  // i: integer, d: number, r: rate, s: string
        const char* help;
    };
    static const Flag flags[] = {
        {"--preset", "preset", "s", "named parameter set"},
        {"--n", "model.n_atoms", "i", "number of atoms"},
        {"--m", "model.photon_cutoff", "i", "photon cutoff (1 = blockaded)"},
        {"--g", "model.coupling", "d", "atom-cavity coupling"},
        {"--kappa", "model.kappa", "r", "cavity decay, optionally with unit NCgamma, N2Cgamma or Ng"},
        {"--w", "model.pump", "r", "pump rate, optionally with unit kappa/N, NCgamma or Cgamma"},
        {"--gamma", "model.gamma", "d", "spontaneous emission rate"},
        {"--gamma-d", "model.gamma_d", "d", "dephasing rate"},
        {"--cavity", "cavity", "s", "blockaded | harmonic (cumulant branch)"},
        {"--w-min", "sweep.w_min", "r", "sweep start"},
        {"--w-max", "sweep.w_max", "r", "sweep end"},
        {"--w-steps", "sweep.steps", "i", "number of sweep points"},
        {"--w-scale", "sweep.scale", "s", "log | linear"},
        {"--solver", "sweep.solver", "s", "cumulant | symmetric | both"},
        {"--t-max", "time.t_max", "d", "end of the correlation time grid"},
        {"--omega-max", "spectrum.omega_max", "d", "spectrum half range"},
        {"--spectrum-method", "spectrum.method", "s", "filon | resolvent"},
        {"--draws", "validate.draws", "i", "random draws for validate"},
        {"--out", "output.path", "s", "output directory (default: stdout)"},
        {"--format", "output.format", "s", "csv | structured"},
        {"--threads", "threads", "i", "worker threads"},
        {"--seed", "seed", "i", "seed for randomized validation draws"},
        {"--reltol", "tolerances.reltol", "d", "relative integration tolerance"},
        {"--abstol", "tolerances.abstol", "d", "absolute integration tolerance"},
    };
    for (const auto& f : flags) app.add_option(f.name, text[f.path], f.help);
    app.parse(argc, argv);

    json layer;
    layer["command"] = command;
    for (const auto& f : flags) {
        if (app.count(f.name) == 0) continue;
        const std::string& v = text[f.path];
        json value;
        const std::string kind = f.kind;
        try {
            if (kind == "i") {
                std::size_t used = 0;
                const long long x = std::stoll(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
                value = x;
            } else if (kind == "d") {
                std::size_t used = 0;
                const double x = std::stod(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
                value = x;
            } else if (kind == "r") {
                const RateSpec r = parse_rate(v, f.path);
                value = r.unit.empty() ? json(r.value) : json(v);
            } else {
                value = v;
            }
        } catch (const std::logic_error&) {
            throw ConfigError(std::string("flag ") + f.name + ": cannot read '" + v + "'");
        }
        json* node = &layer;
        std::string path = f.path;
        for (std::size_t dot; (dot = path.find('.')) != std::string::npos; path = path.substr(dot + 1))
            node = &(*node)[path.substr(0, dot)];
        (*node)[path] = value;
    }
    return layer;
}

/// Entry point shared by the executable and the tests.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"superrad: steady states, correlations and spectra of collectively pumped emitters in a cavity"};
    app.footer("Presets: fig2a-blockaded, fig2a-normal, fig2b, fig2c, figS1a, figS1b\n"
               "Exit codes: 0 success, 2 config error, 3 solver failure, 4 validation failure");
    try {
        std::string config_path;
        const json flags = parse_flags(argc, argv, app, config_path);
        const json file = config_path.empty() ? json::object() : load_config_file(config_path);
        return run(resolve(layered_config(file, flags)), out);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NormalizationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        err << "solver error: " << e.what() << "\n";
        return kExitSolver;
    }
}

}  // namespace superrad::cli
