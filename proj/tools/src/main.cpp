#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "ppower/error.hpp"
#include "ppower/io.hpp"
#include "ppower/presets.hpp"
#include "ppower_tools/experiments.hpp"

namespace pt = ppower::tools;

int main(int argc, char** argv) {
    CLI::App app{"ppower: prediction power of predictors in online control"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", format = "csv";
    long long seed = -1;
    int threads = 0;
    auto* run = app.add_subcommand("run", "run one experiment from a JSON config");
    run->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "seed, overrides the config and PP_SEED")->check(CLI::NonNegativeNumber);
    run->add_option("--out-dir", out_dir, "output directory");
    run->add_option("--threads", threads, "worker threads, 0 = all")->check(CLI::NonNegativeNumber);
    run->add_option("--format", format, "table format")->check(CLI::IsMember({"csv", "json"}));

    auto* presets = app.add_subcommand("presets", "list named systems and experiments");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (presets->parsed()) {
        for (const auto& p : ppower::preset_catalog()) std::cout << p.name << "\t" << p.description << "\n";
        std::cout << "\nexperiments:";
        for (const auto& n : pt::experiment_names()) std::cout << " " << n;
        std::cout << "\n";
        return 0;
    }

    try {
        pt::json cfg;
        try {
            cfg = pt::json::parse(ppower::read_file(config_path));
        } catch (const pt::json::exception& e) {
            throw ppower::Error(ppower::ErrorKind::ConfigError, std::string("config is not valid JSON: ") + e.what());
        }
        pt::RunOptions opt;
        opt.out_dir = out_dir;
        opt.format = format == "json" ? pt::Format::Json : pt::Format::Csv;
        opt.threads = threads;
        if (seed >= 0) {
            opt.seed_override = true;
            opt.seed = static_cast<std::uint64_t>(seed);
        }
        const pt::ExperimentReport rep = pt::run_experiment(cfg, opt);
        for (const auto& a : rep.assertions)
            std::cout << (a.pass ? "ok   " : "FAIL ") << a.name << ": " << a.detail << "\n";
        std::cout << rep.experiment << " finished in " << rep.wall_seconds << " s, outputs in " << out_dir << "\n";
        return pt::exit_code_for(rep);
    } catch (const ppower::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == ppower::ErrorKind::ConfigError ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
