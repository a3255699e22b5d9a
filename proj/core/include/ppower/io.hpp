#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ppower/lqr.hpp"
#include "ppower/predictors.hpp"

namespace ppower {

/// %.17g, enough digits to round-trip a double
std::string fmt_double(double v);

/// Write to PATH.tmp then rename over PATH, so readers never see a partial file.
void write_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

/// Small CSV builder: header once, then rows of strings or doubles.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    CsvWriter& row(const std::vector<std::string>& cells);
    CsvWriter& row(const std::vector<double>& cells);
    const std::string& str() const { return out_; }
    std::size_t rows() const { return rows_; }

private:
    std::size_t cols_;
    std::size_t rows_ = 0;
    std::string out_;
};

/// JSON document: {"T":..,"A":[..]|[[..]..],"B":..,"Q":..,"R":..,"PT":..,"x0":[..]}
/// A single matrix means time-invariant; a list of T matrices means per-step.
std::string system_to_json(const LTVSystem& sys);
LTVSystem system_from_json(const std::string& text);

/// Row-major float64 W then V of each instance, plus a JSON sidecar PATH.json.
void write_instances(const std::string& path, const std::vector<ProblemInstance>& instances);
std::vector<ProblemInstance> read_instances(const std::string& path);

}  // namespace ppower
