#include "ppower/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ppower/error.hpp"

namespace ppower {

using nlohmann::json;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_atomic(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) fail(ErrorKind::ConfigError, "cannot open " + tmp.string() + " for writing");
        os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        os.flush();
        if (!os) fail(ErrorKind::ConfigError, "write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::ConfigError, "cannot read " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

CsvWriter::CsvWriter(std::vector<std::string> header) : cols_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) out_ += (i ? "," : "") + header[i];
    out_ += "\n";
}

CsvWriter& CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != cols_) fail(ErrorKind::ShapeMismatch, "CSV row has the wrong number of cells");
    for (std::size_t i = 0; i < cells.size(); ++i) out_ += (i ? "," : "") + cells[i];
    out_ += "\n";
    ++rows_;
    return *this;
}

CsvWriter& CsvWriter::row(const std::vector<double>& cells) {
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (double v : cells) s.push_back(fmt_double(v));
    return row(s);
}

namespace {

json mat_to_json(const Mat& M) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
        rows.push_back(r);
    }
    return rows;
}

Mat mat_from_json(const json& j, const std::string& field) {
    // a bare number is a 1x1 matrix
    if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty()) fail(ErrorKind::ConfigError, field + ": expected a matrix");
    const auto r = static_cast<Eigen::Index>(j.size());
    if (!j[0].is_array()) fail(ErrorKind::ConfigError, field + ": expected a list of rows");
    const auto c = static_cast<Eigen::Index>(j[0].size());
    Mat M(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        if (!j[i].is_array() || static_cast<Eigen::Index>(j[i].size()) != c)
            fail(ErrorKind::ConfigError, field + ": ragged rows");
        for (Eigen::Index k = 0; k < c; ++k) {
            if (!j[i][k].is_number()) fail(ErrorKind::ConfigError, field + ": non-numeric entry");
            M(i, k) = j[i][k].get<double>();
        }
    }
    return M;
}

bool is_matrix_list(const json& j) {
    return j.is_array() && !j.empty() && j[0].is_array() && !j[0].empty() && j[0][0].is_array();
}

std::vector<Mat> seq_from_json(const json& doc, const char* key, int T) {
    if (!doc.contains(key)) fail(ErrorKind::ConfigError, std::string("system.") + key + " missing");
    const json& j = doc.at(key);
    std::vector<Mat> out;
    if (is_matrix_list(j)) {
        if (static_cast<int>(j.size()) != T)
            fail(ErrorKind::ConfigError, std::string("system.") + key + " must list T matrices");
        for (const auto& e : j) out.push_back(mat_from_json(e, std::string("system.") + key));
    } else {
        out.assign(static_cast<std::size_t>(T), mat_from_json(j, std::string("system.") + key));
    }
    return out;
}

json seq_to_json(const std::vector<Mat>& s, bool invariant) {
    if (invariant) return mat_to_json(s.front());
    json arr = json::array();
    for (const auto& M : s) arr.push_back(mat_to_json(M));
    return arr;
}

}  // namespace

std::string system_to_json(const LTVSystem& sys) {
    const bool inv = sys.is_time_invariant();
    json j;
    j["T"] = sys.T;
    j["A"] = seq_to_json(sys.A, inv);
    j["B"] = seq_to_json(sys.B, inv);
    j["Q"] = seq_to_json(sys.Q, inv);
    j["R"] = seq_to_json(sys.R, inv);
    j["PT"] = mat_to_json(sys.PT);
    json x0 = json::array();
    for (Eigen::Index i = 0; i < sys.x0.size(); ++i) x0.push_back(sys.x0[i]);
    j["x0"] = x0;
    return j.dump(2);
}

LTVSystem system_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::ConfigError, std::string("system: ") + e.what());
    }
    if (!doc.contains("T") || !doc["T"].is_number_integer() || doc["T"].get<int>() <= 0)
        fail(ErrorKind::ConfigError, "system.T must be a positive integer");
    LTVSystem s;
    s.T = doc["T"].get<int>();
    s.A = seq_from_json(doc, "A", s.T);
    s.B = seq_from_json(doc, "B", s.T);
    s.Q = seq_from_json(doc, "Q", s.T);
    s.R = seq_from_json(doc, "R", s.T);
    if (!doc.contains("PT")) fail(ErrorKind::ConfigError, "system.PT missing");
    s.PT = mat_from_json(doc["PT"], "system.PT");
    const int n = static_cast<int>(s.PT.rows());
    if (doc.contains("x0")) {
        const json& x = doc["x0"];
        if (!x.is_array() || static_cast<int>(x.size()) != n) fail(ErrorKind::ConfigError, "system.x0 length");
        s.x0.resize(n);
        for (int i = 0; i < n; ++i) s.x0[i] = x[i].get<double>();
    } else {
        s.x0 = Vec::Zero(n);
    }
    try {
        s.validate();
    } catch (const Error& e) {
        fail(ErrorKind::ConfigError, std::string("system: ") + e.what());
    }
    return s;
}

void write_instances(const std::string& path, const std::vector<ProblemInstance>& instances) {
    if (instances.empty()) fail(ErrorKind::InsufficientData, "no instances to write");
    const auto T = instances.front().W.rows();
    const auto n = instances.front().W.cols();
    const auto d = instances.front().V.cols();
    std::string bin;
    bin.reserve(instances.size() * static_cast<std::size_t>(T * (n + d)) * sizeof(double));
    auto put = [&](const Mat& M) {
        for (Eigen::Index i = 0; i < M.rows(); ++i)
            for (Eigen::Index j = 0; j < M.cols(); ++j) {
                const double v = M(i, j);
                bin.append(reinterpret_cast<const char*>(&v), sizeof v);
            }
    };
    json idx = json::array();
    for (const auto& in : instances) {
        if (in.W.rows() != T || in.W.cols() != n || in.V.rows() != T || in.V.cols() != d)
            fail(ErrorKind::ShapeMismatch, "instances differ in shape");
        put(in.W);
        put(in.V);
        idx.push_back(in.index);
    }
    json side;
    side["T"] = T;
    side["n"] = n;
    side["d"] = d;
    side["count"] = instances.size();
    side["seed"] = instances.front().seed;
    side["indices"] = idx;
    side["layout"] = "per instance: W (T x n) then V (T x d), row-major float64, native byte order";
    write_atomic(path, bin);
    write_atomic(path + ".json", side.dump(2) + "\n");
}

std::vector<ProblemInstance> read_instances(const std::string& path) {
    const json side = json::parse(read_file(path + ".json"));
    const auto T = side.at("T").get<Eigen::Index>();
    const auto n = side.at("n").get<Eigen::Index>();
    const auto d = side.at("d").get<Eigen::Index>();
    const auto count = side.at("count").get<std::size_t>();
    const std::string bin = read_file(path);
    if (bin.size() != count * static_cast<std::size_t>(T * (n + d)) * sizeof(double))
        fail(ErrorKind::ShapeMismatch, "instance file size does not match its sidecar");
    std::vector<ProblemInstance> out(count);
    const char* p = bin.data();
    auto get = [&](Mat& M, Eigen::Index r, Eigen::Index c) {
        M.resize(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) {
                std::memcpy(&M(i, j), p, sizeof(double));
                p += sizeof(double);
            }
    };
    for (std::size_t k = 0; k < count; ++k) {
        get(out[k].W, T, n);
        get(out[k].V, T, d);
        out[k].seed = side.at("seed").get<std::uint64_t>();
        out[k].index = side.at("indices").at(k).get<std::uint64_t>();
    }
    return out;
}

}  // namespace ppower
