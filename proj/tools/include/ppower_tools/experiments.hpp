#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace ppower::tools {

using json = nlohmann::json;

enum class Format { Csv, Json };

struct RunOptions {
    std::string out_dir = "out";
    Format format = Format::Csv;
    int threads = 0;
    bool seed_override = false;
    std::uint64_t seed = 1;
};

struct Assertion {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// What a run produced. Tabular files are written through `tables`, the report last.
struct ExperimentReport {
    std::string experiment;
    json config;
    json metrics = json::object();
    std::vector<Assertion> assertions;
    std::vector<std::string> files;  // relative to out_dir, report.json excluded
    double wall_seconds = 0.0;
    bool pass() const;
    json to_json() const;
};

/// Header plus rows of already formatted cells.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    void add(std::vector<std::string> cells) { rows.push_back(std::move(cells)); }
    std::string csv() const;
    std::string json_text() const;
};

/// Runs one experiment and writes its artifacts under opt.out_dir.
/// Throws ppower::Error (ConfigError for bad fields, numeric kinds from the modules).
ExperimentReport run_experiment(const json& config, const RunOptions& opt);

std::vector<std::string> experiment_names();

/// Exit status: 0 pass, 1 assertion failure, 2 config error, 3 numeric error.
int exit_code_for(const ExperimentReport& r);

}  // namespace ppower::tools
