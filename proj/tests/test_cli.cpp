#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ppower/error.hpp"
#include "ppower_tools/experiments.hpp"

using namespace ppower;
using namespace ppower::tools;
namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ppower_cli_test_" + name);
    fs::remove_all(p);
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

RunOptions opts(const std::string& dir, int threads = 1) {
    RunOptions o;
    o.out_dir = dir;
    o.threads = threads;
    return o;
}

}  // namespace

TEST(Cli, CounterexampleExactValues) {
    const std::string dir = scratch("cx");
    const ExperimentReport r = run_experiment({{"experiment", "counterexample"}, {"p", "1/10"}}, opts(dir));
    EXPECT_TRUE(r.pass());
    EXPECT_EQ(r.metrics["exact"]["mpc"], "19/60");
    EXPECT_EQ(r.metrics["exact"]["alternative"], "1/10");
    EXPECT_EQ(r.metrics["exact"]["u0"], "-1/3");
    EXPECT_TRUE(fs::exists(fs::path(dir) / "counterexample.csv"));
    EXPECT_EQ(exit_code_for(r), 0);
}

TEST(Cli, DecimalProbability) {
    const ExperimentReport r =
        run_experiment({{"experiment", "counterexample"}, {"p", 0.1}}, opts(scratch("cx2")));
    EXPECT_EQ(r.metrics["exact"]["mpc"], "19/60");
}

TEST(Cli, ClosedFormWithoutPredictionIsZero) {
    const json cfg = {{"experiment", "power-closed-form"},
                      {"system", "double-integrator"},
                      {"T", 50},
                      {"predictor", {{"kind", "affine-gaussian"}, {"rho", 0.0}, {"theta", "identity"}}}};
    const ExperimentReport r = run_experiment(cfg, opts(scratch("cf")));
    EXPECT_TRUE(r.pass());
    EXPECT_EQ(r.metrics["power"].get<double>(), 0.0);
}

TEST(Cli, ConfigErrorsNameTheField) {
    try {
        run_experiment({{"experiment", "power-closed-form"}, {"system", "double-integrator"}, {"T", -3}},
                       opts(scratch("bad")));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
        EXPECT_NE(std::string(e.what()).find("'T'"), std::string::npos) << e.what();
    }
    try {
        run_experiment({{"experiment", "no-such-thing"}}, opts(scratch("bad2")));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
        EXPECT_NE(std::string(e.what()).find("'experiment'"), std::string::npos);
    }
    EXPECT_THROW(run_experiment({{"experiment", "counterexample"}, {"p", "3/2"}}, opts(scratch("bad3"))), Error);
}

TEST(Cli, ReportAndManifest) {
    const std::string dir = scratch("rep");
    run_experiment({{"experiment", "riccati"}, {"system", "double-integrator"}, {"T", 10}}, opts(dir));
    const json rep = json::parse(slurp(fs::path(dir) / "report.json"));
    EXPECT_EQ(rep["experiment"], "riccati");
    EXPECT_TRUE(rep["pass"].get<bool>());
    EXPECT_TRUE(rep.contains("wall_seconds"));
    EXPECT_EQ(rep["config"]["seed"], 1);
    const json man = json::parse(slurp(fs::path(dir) / "manifest.json"));
    ASSERT_EQ(man.size(), 1u);
    EXPECT_EQ(man[0]["file"], "riccati.csv");
    EXPECT_EQ(man[0]["bytes"].get<std::uintmax_t>(), fs::file_size(fs::path(dir) / "riccati.csv"));
}

TEST(Cli, SeedPrecedence) {
    RunOptions o = opts(scratch("seed"));
    o.seed_override = true;
    o.seed = 42;
    const ExperimentReport r = run_experiment({{"experiment", "counterexample"}, {"seed", 7}}, o);
    EXPECT_EQ(r.config["seed"], 42);
    const ExperimentReport s = run_experiment({{"experiment", "counterexample"}, {"seed", 7}}, opts(scratch("seed2")));
    EXPECT_EQ(s.config["seed"], 7);
}

TEST(Cli, JsonFormat) {
    const std::string dir = scratch("json");
    RunOptions o = opts(dir);
    o.format = Format::Json;
    run_experiment({{"experiment", "power-closed-form"}, {"system", "binary-example"}, {"T", 10},
                    {"predictor", {{"kind", "binary-perfect"}}}},
                   o);
    const json t = json::parse(slurp(fs::path(dir) / "power_terms.json"));
    ASSERT_TRUE(t.is_array());
    EXPECT_EQ(t.size(), 10u);
}

TEST(Cli, ThreadCountLeavesOutputUnchanged) {
    const json cfg = {{"experiment", "power-mc"},
                      {"system", "double-integrator"},
                      {"T", 30},
                      {"count", 3000},
                      {"predictor", {{"kind", "affine-gaussian"}, {"rho", 0.5}, {"theta", "skewed"}}}};
    const std::string a = scratch("t1"), b = scratch("t4");
    run_experiment(cfg, opts(a, 1));
    run_experiment(cfg, opts(b, 4));
    EXPECT_EQ(slurp(fs::path(a) / "power_mc.csv"), slurp(fs::path(b) / "power_mc.csv"));
}

TEST(Cli, Selftest) {
    const ExperimentReport r = run_experiment({{"experiment", "selftest"}}, opts(scratch("self")));
    for (const auto& a : r.assertions) EXPECT_TRUE(a.pass) << a.name << ": " << a.detail;
}
