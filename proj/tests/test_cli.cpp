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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "superrad/cli.hpp"

using namespace superrad;
using namespace superrad::cli;

namespace {

struct Invocation {
    int code = -1;
    std::string out;
    std::string err;
};

Invocation invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "superrad");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Invocation r;
    r.code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

RunConfig resolved(const json& file, const json& flags) { return resolve(layered_config(file, flags)); }

/// Data rows of a CSV document (lines after the header that are not comments).
std::vector<std::string> data_rows(const std::string& csv) {
    std::istringstream in(csv);
    std::vector<std::string> rows;
    bool header_seen = false;
    for (std::string line; std::getline(in, line);) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        rows.push_back(line);
    }
    return rows;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("superrad_cli_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST(RateUnits, ParsesNumberAndUnit) {
    auto r = parse_rate("1.05 kappa/N", "f");
    EXPECT_DOUBLE_EQ(r.value, 1.05);
    EXPECT_EQ(r.unit, "kappa/N");
    r = parse_rate("10NCgamma", "f");
    EXPECT_DOUBLE_EQ(r.value, 10.0);
    EXPECT_EQ(r.unit, "NCgamma");
    r = rate_from_json(json(0.5), "f");
    EXPECT_TRUE(r.unit.empty());
    EXPECT_THROW(parse_rate("fast", "f"), ConfigError);
    EXPECT_THROW(rate_from_json(json::array(), "f"), ConfigError);
}

TEST(RateUnits, KappaConversionsSatisfyTheirDefinitions) {
    const int n = 100;
    const double g = 0.3;
    // kappa = x N C gamma with C gamma = g^2 / kappa.
    const double k1 = resolve_kappa({10.0, "NCgamma"}, n, g);
    EXPECT_NEAR(k1, 10.0 * n * g * g / k1, 1e-12 * k1);
    const double k2 = resolve_kappa({1.0 / 16.0, "N2Cgamma"}, n, g);
    EXPECT_NEAR(k2, n * n * g * g / k2 / 16.0, 1e-12 * k2);
    EXPECT_NEAR(k2 / (n * g), 0.25, 1e-15);
    EXPECT_DOUBLE_EQ(resolve_kappa({0.25, "Ng"}, n, g), 0.25 * n * g);
    EXPECT_DOUBLE_EQ(resolve_kappa({2.5, ""}, n, g), 2.5);
    EXPECT_THROW(resolve_kappa({1.0, "hertz"}, n, g), ConfigError);
}

TEST(RateUnits, PumpConversions) {
    const int n = 50;
    const double g = 0.2, kappa = 4.0;
    EXPECT_DOUBLE_EQ(resolve_pump({2.0, "kappa/N"}, n, g, kappa, "w"), 2.0 * kappa / n);
    EXPECT_DOUBLE_EQ(resolve_pump({0.5, "NCgamma"}, n, g, kappa, "w"), 0.5 * n * g * g / kappa);
    EXPECT_DOUBLE_EQ(resolve_pump({3.0, "Cgamma"}, n, g, kappa, "w"), 3.0 * g * g / kappa);
    EXPECT_THROW(resolve_pump({1.0, "Cgamma"}, n, g, 0.0, "w"), ConfigError);
    EXPECT_THROW(resolve_pump({1.0, "kappa"}, n, g, kappa, "w"), ConfigError);
}

TEST(Presets, ResolveToTheirParameterSets) {
    const auto b = resolved(json::object(), {{"preset", "fig2b"}});
    EXPECT_EQ(b.params.n_atoms, 100);
    EXPECT_EQ(b.params.photon_cutoff, 1);
    EXPECT_NEAR(b.params.cavity_decay, 1.0, 1e-14);
    const double ncg = b.params.n_atoms * b.params.coupling * b.params.coupling / b.params.cavity_decay;
    EXPECT_NEAR(b.params.cavity_decay / ncg, 1.0, 1e-12);
    EXPECT_NEAR(b.params.pump, 2.0 * b.params.cavity_decay / 100, 1e-15);
    EXPECT_EQ(b.params.spont_emission, 0.0);
    EXPECT_EQ(b.params.dephasing, 0.0);

    const auto c = resolved(json::object(), {{"preset", "fig2c"}});
    EXPECT_NEAR(c.params.cavity_decay, 1.0, 1e-14);
    EXPECT_NEAR(derive_scales(c.params).kappa_tilde, std::sqrt(0.1), 1e-12);
    EXPECT_NEAR(derive_scales(c.params).w_tilde, 1.05, 1e-12);

    const auto a = resolved(json::object(), {{"preset", "fig2a-blockaded"}, {"command", "sweep"}});
    EXPECT_EQ(a.params.n_atoms, 100000);
    EXPECT_NEAR(derive_scales(a.params).kappa_tilde, 0.25, 1e-15);
    EXPECT_EQ(a.sweep_pumps.size(), 121u);
    EXPECT_EQ(a.sweep_solver, SweepSolver::cumulant);

    for (const auto& name : preset_names()) EXPECT_NO_THROW(resolved(json::object(), {{"preset", name}})) << name;
    EXPECT_THROW(resolved(json::object(), {{"preset", "fig9"}}), ConfigError);
}

TEST(Config, LayersOverrideInOrder) {
    const json file = {{"preset", "fig2b"}, {"model", {{"n_atoms", 40}, {"gamma", 0.01}}}};
    const json flags = {{"model", {{"gamma", 0.02}}}};
    const auto rc = resolved(file, flags);
    EXPECT_EQ(rc.preset, "fig2b");
    EXPECT_EQ(rc.params.n_atoms, 40);          // file over preset
    EXPECT_EQ(rc.params.spont_emission, 0.02);  // flag over file
    EXPECT_NEAR(rc.params.coupling, 0.1, 0.0);  // preset over default
    // A flag preset wins over the file's.
    EXPECT_EQ(resolved(file, {{"preset", "fig2c"}}).preset, "fig2c");
}

TEST(Config, ReportsFieldDiagnostics) {
    try {
        resolved({{"model", {{"kapa", 1.0}}}}, json::object());
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("'model.kapa': unknown key"), std::string::npos) << e.what();
    }
    try {
        resolved({{"model", {{"n_atoms", "ten"}}}}, json::object());
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("model.n_atoms"), std::string::npos) << e.what();
    }
    EXPECT_THROW(resolved({{"model", 3}}, json::object()), ConfigError);
    EXPECT_THROW(resolved({{"model", {{"n_atoms", 0}}}}, json::object()), ConfigError);
    EXPECT_THROW(resolved({{"output", {{"format", "xml"}}}}, json::object()), ConfigError);
}

TEST(Config, SyntaxErrorsCarryLineAndColumn) {
    try {
        parse_config_text("{\n  \"model\": {\n    \"n_atoms\": 3,,\n  }\n}\n", "cfg.json");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("cfg.json:3:", 0), 0u) << e.what();
    }
    EXPECT_NO_THROW(parse_config_text("// comment\n{\"seed\": 3}", "x"));
    EXPECT_THROW(parse_config_text("[1, 2]", "x"), ConfigError);
    EXPECT_THROW(load_config_file("/nonexistent/superrad.json"), ConfigError);
}

TEST(Config, SweepRangeInvariants) {
    auto sweep = [](json s) { return resolved({{"command", "sweep"}, {"sweep", s}}, json::object()); };
    const auto lin = sweep({{"w_min", 1.0}, {"w_max", 2.0}, {"steps", 5}, {"scale", "linear"}});
    ASSERT_EQ(lin.sweep_pumps.size(), 5u);
    EXPECT_DOUBLE_EQ(lin.sweep_pumps[2], 1.5);
    const auto lg = sweep({{"w_min", 0.01}, {"w_max", 100.0}, {"steps", 5}, {"scale", "log"}});
    for (std::size_t i = 1; i < lg.sweep_pumps.size(); ++i)
        EXPECT_NEAR(lg.sweep_pumps[i] / lg.sweep_pumps[i - 1], 10.0, 1e-12);
    EXPECT_EQ(sweep({{"w_min", 3.0}, {"w_max", 3.0}, {"steps", 1}}).sweep_pumps, std::vector<double>{3.0});
    EXPECT_THROW(sweep({{"steps", 0}}), ConfigError);
    EXPECT_THROW(sweep({{"w_min", 2.0}, {"w_max", 1.0}}), ConfigError);
    EXPECT_THROW(sweep({{"w_min", 0.0}, {"scale", "log"}}), ConfigError);
}

TEST(OrderedMap, KeepsIndexOrderAcrossThreads) {
    const auto out = ordered_map(50, 4, [](std::size_t i) { return static_cast<int>(i * i); });
    ASSERT_EQ(out.size(), 50u);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
}

TEST(OrderedMap, RethrowsLowestFailingIndex) {
    try {
        ordered_map(20, 3, [](std::size_t i) -> int {
            if (i == 7 || i == 13) throw SolverError("point " + std::to_string(i));
            return 0;
        });
        FAIL();
    } catch (const SolverError& e) {
        EXPECT_STREQ(e.what(), "point 7");
    }
}

TEST(Output, NumbersRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300}) EXPECT_EQ(std::stod(format_number(v)), v);
    EXPECT_EQ(format_number(std::numeric_limits<double>::quiet_NaN()), "nan");
}

TEST(Run, SteadyMatchesLibrary) {
    const auto r = invoke({"steady", "--n", "6", "--m", "2", "--g", "0.7", "--kappa", "1.3", "--w", "0.4"});
    ASSERT_EQ(r.code, 0) << r.err;
    ModelParams p;
    p.n_atoms = 6;
    p.photon_cutoff = 2;
    p.coupling = 0.7;
    p.cavity_decay = 1.3;
    p.pump = 0.4;
    const auto s = steady_state(build_liouvillian(p, 0));
    const auto rows = data_rows(r.out);
    ASSERT_EQ(rows.size(), 1u);
    std::istringstream row(rows[0]);
    std::vector<double> v;
    for (std::string cell; std::getline(row, cell, ',');) v.push_back(std::stod(cell));
    EXPECT_NEAR(v[2], expect_sigma_z(s), 1e-12);
    EXPECT_NEAR(v[3], expect_spin_spin(s), 1e-12);
    EXPECT_NEAR(v[4], expect_photon_number(s), 1e-12);
    EXPECT_NE(r.out.find("# config: "), std::string::npos);
    EXPECT_NE(r.out.find("# superrad "), std::string::npos);
}

TEST(Run, ValidateSmallSystem) {
    const auto r = invoke({"validate", "--n", "3", "--m", "1", "--seed", "7"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_NE(r.out.find("# passed: true"), std::string::npos);
    EXPECT_NE(r.out.find("# seed: 7"), std::string::npos);
    EXPECT_EQ(data_rows(r.out).size(), 20u);
}

TEST(Run, ValidationFailureHasItsOwnExitCode) {
    const auto dir = scratch_dir("strict");
    std::filesystem::create_directories(dir);
    const auto cfg = dir / "strict.json";
    std::ofstream(cfg) << R"({"validate": {"draws": 2, "correlation_tolerance": 1e-300}})";
    const auto r = invoke({"validate", "--n", "2", "--config", cfg.string()});
    EXPECT_EQ(r.code, kExitValidation);
    EXPECT_NE(r.out.find("# passed: false"), std::string::npos);
}

TEST(Run, ExitCodesByFailureClass) {
    EXPECT_EQ(invoke({"steady", "--bogus", "1"}).code, kExitConfig);
    EXPECT_EQ(invoke({"teleport"}).code, kExitConfig);
    EXPECT_EQ(invoke({"steady", "--kappa", "-1"}).code, kExitConfig);
    EXPECT_EQ(invoke({"steady", "--n", "three"}).code, kExitConfig);
    EXPECT_EQ(invoke({"steady", "--preset", "nope"}).code, kExitConfig);
    EXPECT_EQ(invoke({"steady", "--config", "/nonexistent.json"}).code, kExitConfig);
    // Nothing drives the atoms: every population is stationary.
    const auto frozen = invoke({"steady", "--n", "3", "--g", "0", "--kappa", "1", "--w", "0"});
    EXPECT_EQ(frozen.code, kExitSolver) << frozen.err;
    EXPECT_EQ(invoke({"--help"}).code, kExitOk);
}

TEST(Run, WritesFilesPerCommand) {
    const auto dir = scratch_dir("files");
    ASSERT_EQ(invoke({"steady", "--n", "4", "--out", dir.string()}).code, 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "steady.csv"));
    ASSERT_EQ(invoke({"g2", "--n", "4", "--t-max", "5", "--out", dir.string(), "--format", "structured"}).code, 0);
    std::ifstream in(dir / "g2.json");
    const json doc = json::parse(in);
    EXPECT_EQ(doc["columns"], json({"t", "re", "im"}));
    EXPECT_NEAR(doc["rows"][0][1].get<double>(), 0.0, 1e-12);  // antibunched at M = 1
    EXPECT_EQ(doc["metadata"]["command"], "g2");
    EXPECT_EQ(doc["metadata"]["resolved"]["n_atoms"], 4);
}

TEST(Run, G1StartsAtOne) {
    const auto r = invoke({"g1", "--n", "5", "--m", "2", "--t-max", "10", "--format", "structured"});
    ASSERT_EQ(r.code, 0) << r.err;
    const json doc = json::parse(r.out);
    EXPECT_NEAR(doc["rows"][0][1].get<double>(), 1.0, 1e-12);
    EXPECT_NEAR(doc["rows"][0][2].get<double>(), 0.0, 1e-12);
}

TEST(Run, OutputIsDeterministic) {
    const std::vector<std::string> args{"sweep", "--preset", "figS1a", "--w-steps", "5"};
    auto serial = args, threaded = args;
    serial.insert(serial.end(), {"--threads", "1"});
    threaded.insert(threaded.end(), {"--threads", "3"});
    const auto a = invoke(serial), b = invoke(serial), c = invoke(threaded);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(data_rows(a.out), data_rows(c.out));
}

TEST(Run, BlockadedPresetPeaksNearExpectedPump) {
    const auto r = invoke({"sweep", "--preset", "fig2a-blockaded", "--format", "structured"});
    ASSERT_EQ(r.code, 0) << r.err;
    const json doc = json::parse(r.out);
    double best_nb = -1.0, best_wt = 0.0;
    for (const auto& row : doc["rows"]) {
        if (row[2].get<double>() > best_nb) {
            best_nb = row[2].get<double>();
            best_wt = row[1].get<double>();
        }
    }
    EXPECT_NEAR(best_wt, 1.6, 0.07);
}

TEST(Run, CumulantReportsClosedForms) {
    const auto r = invoke({"cumulant", "--preset", "fig2a-blockaded", "--w", "1 kappa/N", "--format", "structured"});
    ASSERT_EQ(r.code, 0) << r.err;
    const json doc = json::parse(r.out);
    const auto& row = doc["rows"][0];
    EXPECT_NEAR(row[3].get<double>(), 0.375, 1e-15);  // nb_closed_form
    EXPECT_NEAR(row[7].get<double>(), 0.375, 1e-3);   // ODE steady state at large N
    EXPECT_EQ(row[11].get<double>(), 1.0);
}

TEST(Run, SampleConfigsParse) {
    const auto root = std::filesystem::path(SUPERRAD_SOURCE_DIR) / "configs";
    ASSERT_TRUE(std::filesystem::exists(root));
    int count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (entry.path().extension() != ".json") continue;
        ++count;
        const json file = load_config_file(entry.path().string());
        EXPECT_NO_THROW(resolved(file, {{"command", "sweep"}})) << entry.path();
    }
    EXPECT_GE(count, 3);
}
