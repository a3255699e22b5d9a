#include "ppower_tools/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>

#include "ppower/bounds.hpp"
#include "ppower/error.hpp"
#include "ppower/estimation.hpp"
#include "ppower/io.hpp"
#include "ppower/lqr.hpp"
#include "ppower/policy_opt.hpp"
#include "ppower/predictors.hpp"
#include "ppower/presets.hpp"
#include "ppower/rollout.hpp"
#include "ppower/scalar_dp.hpp"

namespace ppower::tools {

bool ExperimentReport::pass() const {
    for (const auto& a : assertions)
        if (!a.pass) return false;
    return true;
}

json ExperimentReport::to_json() const {
    json j;
    j["experiment"] = experiment;
    j["config"] = config;
    j["metrics"] = metrics;
    j["assertions"] = json::array();
    for (const auto& a : assertions) j["assertions"].push_back({{"name", a.name}, {"pass", a.pass}, {"detail", a.detail}});
    j["files"] = files;
    j["pass"] = pass();
    j["wall_seconds"] = wall_seconds;
    return j;
}

int exit_code_for(const ExperimentReport& r) { return r.pass() ? 0 : 1; }

std::string Table::csv() const {
    CsvWriter w(header);
    for (const auto& r : rows) w.row(r);
    return w.str();
}

std::string Table::json_text() const {
    json arr = json::array();
    for (const auto& r : rows) {
        json o = json::object();
        for (std::size_t i = 0; i < header.size(); ++i) {
            // cells are already printed at round-trip precision, keep them as text unless numeric
            char* end = nullptr;
            const double v = std::strtod(r[i].c_str(), &end);
            if (!r[i].empty() && end && *end == '\0' && std::isfinite(v))
                o[header[i]] = v;
            else
                o[header[i]] = r[i];
        }
        arr.push_back(std::move(o));
    }
    return arr.dump(1) + "\n";
}

namespace {

std::string num(double v) { return fmt_double(v); }
std::string num(long v) { return std::to_string(v); }
std::string num(int v) { return std::to_string(v); }

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
    fail(ErrorKind::ConfigError, "field '" + field + "': " + why);
}

const json* find(const json& j, const char* key) {
    if (!j.is_object()) return nullptr;
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

double get_num(const json& j, const char* key, double def) {
    const json* v = find(j, key);
    if (!v) return def;
    if (!v->is_number()) bad_field(key, "expected a number");
    return v->get<double>();
}

long get_int(const json& j, const char* key, long def, long min) {
    const json* v = find(j, key);
    long out = def;
    if (v) {
        if (!v->is_number_integer()) bad_field(key, "expected an integer");
        out = v->get<long>();
    }
    if (out < min) bad_field(key, "must be >= " + std::to_string(min));
    return out;
}

std::string get_str(const json& j, const char* key, const std::string& def) {
    const json* v = find(j, key);
    if (!v) return def;
    if (!v->is_string()) bad_field(key, "expected a string");
    return v->get<std::string>();
}

std::vector<double> get_num_list(const json& j, const char* key, std::vector<double> def) {
    const json* v = find(j, key);
    if (!v) return def;
    if (!v->is_array() || v->empty()) bad_field(key, "expected a non-empty list of numbers");
    std::vector<double> out;
    for (const auto& e : *v) {
        if (!e.is_number()) bad_field(key, "expected a list of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

double tolerance(const json& cfg, const char* key, double def) {
    const json* t = find(cfg, "tolerances");
    if (!t) return def;
    if (!t->is_object()) bad_field("tolerances", "expected an object");
    const json* v = find(*t, key);
    if (!v) return def;
    if (!v->is_number()) bad_field(std::string("tolerances.") + key, "expected a number");
    return v->get<double>();
}

Mat parse_matrix(const json& v, const std::string& field) {
    if (v.is_number()) return Mat::Constant(1, 1, v.get<double>());
    if (!v.is_array() || v.empty()) bad_field(field, "expected a matrix");
    if (v[0].is_number()) {
        Mat out(1, static_cast<long>(v.size()));
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (!v[j].is_number()) bad_field(field, "ragged matrix");
            out(0, static_cast<long>(j)) = v[j].get<double>();
        }
        return out;
    }
    const std::size_t cols = v[0].size();
    Mat out(static_cast<long>(v.size()), static_cast<long>(cols));
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_array() || v[i].size() != cols) bad_field(field, "ragged matrix");
        for (std::size_t j = 0; j < cols; ++j) {
            if (!v[i][j].is_number()) bad_field(field, "matrix entries must be numbers");
            out(static_cast<long>(i), static_cast<long>(j)) = v[i][j].get<double>();
        }
    }
    return out;
}

Mat parse_theta(const json& p, int n) {
    const json* v = find(p, "theta");
    if (!v) return Mat::Identity(n, n);
    if (v->is_string()) {
        const std::string s = v->get<std::string>();
        if (s == "identity" || s == "I") return Mat::Identity(n, n);
        if (s == "skewed") {
            if (n != 2) bad_field("predictor.theta", "'skewed' needs a two-dimensional system");
            return skewed_theta();
        }
        bad_field("predictor.theta", "unknown name '" + s + "'");
    }
    Mat th = parse_matrix(*v, "predictor.theta");
    if (th.cols() != n) bad_field("predictor.theta", "needs " + std::to_string(n) + " columns");
    return th;
}

LTVSystem make_system(const json& cfg, const std::string& def_preset, int def_T) {
    const json* s = find(cfg, "system");
    const int T = static_cast<int>(get_int(cfg, "T", def_T, 1));
    if (!s || s->is_string()) {
        const std::string name = s ? s->get<std::string>() : get_str(cfg, "preset", def_preset);
        return system_preset(name, T);
    }
    if (!s->is_object()) bad_field("system", "expected a preset name or a system object");
    LTVSystem sys = system_from_json(s->dump());
    if (find(cfg, "T") && sys.T != T) bad_field("T", "disagrees with system.T");
    return sys;
}

PredictorModel make_model(const json& cfg, int n, int T, const json& def) {
    const json* pp = find(cfg, "predictor");
    const json& p = pp ? *pp : def;
    if (!p.is_object()) bad_field("predictor", "expected an object");
    const std::string kind = get_str(p, "kind", "affine-gaussian");
    if (kind == "baseline") return PredictorModel::baseline(n, T);
    if (kind == "binary-perfect") return PredictorModel::binary_perfect(n, T);
    if (kind == "affine-gaussian" || kind == "shifted-affine-gaussian") {
        const double rho = get_num(p, "rho", 0.5);
        const Mat th = parse_theta(p, n);
        return kind == "affine-gaussian" ? PredictorModel::affine_gaussian(rho, th, T)
                                         : PredictorModel::shifted_affine_gaussian(rho, th, T);
    }
    if (kind == "multistep-1d") {
        const int variant = static_cast<int>(get_int(p, "variant", 1, 1));
        std::array<double, 3> var{1.0, 1.0, 1.0};
        const auto v = get_num_list(p, "variances", {1.0, 1.0, 1.0});
        if (v.size() != 3) bad_field("predictor.variances", "expected three values");
        std::copy(v.begin(), v.end(), var.begin());
        return PredictorModel::multistep_1d(variant, T, var);
    }
    bad_field("predictor.kind", "unknown kind '" + kind + "'");
}

FeatureWindow make_window(const json& cfg) {
    FeatureWindow fw;
    const json* w = find(cfg, "window");
    if (!w) return fw;
    fw.predictions = static_cast<int>(get_int(*w, "predictions", fw.predictions, 1));
    fw.disturbances = static_cast<int>(get_int(*w, "disturbances", fw.disturbances, 0));
    if (const json* f = find(*w, "full_history")) fw.full_history = f->get<bool>();
    fw.max_features = get_int(*w, "max_features", fw.max_features, 1);
    return fw;
}

/// J*(0) with zero-mean disturbances: x0'P_0 x0 + sum_t Tr{P_{t+1} Cov(W)}
double baseline_expected_cost(const LTVSystem& sys, const RiccatiSolution& ric, const PredictorModel& model) {
    double j = sys.x0.dot(ric.P[0] * sys.x0);
    const Mat S = model.disturbance_cov();
    for (int t = 0; t < sys.T; ++t) j += (ric.P[t + 1] * S).trace();
    return j;
}

struct Ctx {
    const json& cfg;
    const RunOptions& opt;
    ExperimentReport& rep;
    std::uint64_t seed;
    int threads;

    std::string path(const std::string& name) const { return (std::filesystem::path(opt.out_dir) / name).string(); }

    void write_table(const std::string& stem, const Table& t) {
        const bool csv = opt.format == Format::Csv;
        const std::string name = stem + (csv ? ".csv" : ".json");
        write_atomic(path(name), csv ? t.csv() : t.json_text());
        rep.files.push_back(name);
    }
    void write_json(const std::string& name, const json& j) {
        write_atomic(path(name), j.dump(1) + "\n");
        rep.files.push_back(name);
    }
    void check(const std::string& name, bool pass, const std::string& detail) {
        rep.assertions.push_back({name, pass, detail});
    }
};

Table table_from_csv(const std::string& text) {
    Table t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (first) {
            t.header = cells;
            first = false;
        } else {
            cells.resize(t.header.size());
            t.add(cells);
        }
    }
    return t;
}

json default_affine(double rho, const char* theta) { return {{"kind", "affine-gaussian"}, {"rho", rho}, {"theta", theta}}; }

// ---------------------------------------------------------------------------

void exp_riccati(Ctx& c) {
    const LTVSystem sys = make_system(c.cfg, "double-integrator", 100);
    const RiccatiSolution ric = riccati_backward(sys);
    c.write_table("riccati", table_from_csv(riccati_csv(ric)));
    double worst_asym = 0, worst_eig = 1e300;
    for (const Mat& P : ric.P) {
        worst_asym = std::max(worst_asym, (P - P.transpose()).cwiseAbs().maxCoeff());
        worst_eig = std::min(worst_eig, Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (P + P.transpose())).eigenvalues()(0));
    }
    c.rep.metrics["P0_trace"] = ric.P[0].trace();
    c.rep.metrics["min_eigenvalue"] = worst_eig;
    c.check("cost_to_go_symmetric_psd", worst_asym <= 1e-9 && worst_eig >= -1e-9,
            "max asymmetry " + num(worst_asym) + ", min eigenvalue " + num(worst_eig));
}

void exp_power_closed_form(Ctx& c) {
    const LTVSystem sys = make_system(c.cfg, "double-integrator", 100);
    const PredictorModel model = make_model(c.cfg, sys.n(), sys.T, default_affine(0.5, "identity"));
    const RiccatiSolution ric = riccati_backward(sys);
    const std::vector<double> terms = prediction_power_terms(sys, ric, model);
    Table t{{"t", "term", "cumulative"}, {}};
    double s = 0;
    for (int k = 0; k < sys.T; ++k) {
        s += terms[k];
        t.add({num(k), num(terms[k]), num(s)});
    }
    c.write_table("power_terms", t);
    const double j0 = baseline_expected_cost(sys, ric, model);
    c.rep.metrics["power"] = s;
    c.rep.metrics["power_per_step"] = s / sys.T;
    c.rep.metrics["baseline_cost"] = j0;
    c.rep.metrics["predictive_cost"] = j0 - s;
    c.check("power_nonnegative", s >= -1e-12, "power " + num(s));
    if (const json* e = find(c.cfg, "expected")) {
        const double ex = e->get<double>();
        const double tol = tolerance(c.cfg, "absolute", 1e-9 * std::max(1.0, std::abs(ex)));
        c.check("power_matches_expected", std::abs(s - ex) <= tol, num(s) + " vs " + num(ex));
    }
}

void exp_power_mc(Ctx& c) {
    const LTVSystem sys = make_system(c.cfg, "double-integrator", 100);
    const PredictorModel model = make_model(c.cfg, sys.n(), sys.T, default_affine(0.5, "identity"));
    const long count = get_int(c.cfg, "count", 16000, 2);
    const RiccatiSolution ric = riccati_backward(sys);
    const PowerEstimate pe = prediction_power_mc(sys, model, count, c.seed, c.threads);
    const double cf = prediction_power_closed_form(sys, ric, model);
    Table t{{"estimate", "std_error", "count", "closed_form", "baseline_cost", "predictive_cost", "unpaired_std_error"},
            {}};
    t.add({num(pe.estimate), num(pe.std_error), num(pe.count), num(cf), num(pe.baseline_cost), num(pe.predictive_cost),
           num(pe.unpaired_std_error)});
    c.write_table("power_mc", t);
    // per-policy costs on the same instances
    const std::string param = model.kind() == PredictorKind::AffineGaussian ||
                                      model.kind() == PredictorKind::ShiftedAffineGaussian
                                  ? num(model.rho())
                                  : std::string(to_string(model.kind()));
    Table pc{{"experiment", "param", "policy", "mean_cost", "std_error", "count", "seed"}, {}};
    const NoPredictionLQR base(ric);
    const OptimalPredictive best(ric, sys, model);
    for (const Policy* pol : {static_cast<const Policy*>(&base), static_cast<const Policy*>(&best)}) {
        const CostReport cr = monte_carlo_cost(sys, *pol, model, count, c.seed, c.threads);
        pc.add({"power-mc", param, pol->name(), num(cr.mean), num(cr.std_error), num(cr.count), std::to_string(c.seed)});
    }
    c.write_table("policy_costs", pc);
    c.rep.metrics["estimate"] = pe.estimate;
    c.rep.metrics["std_error"] = pe.std_error;
    c.rep.metrics["closed_form"] = cf;
    const double k = tolerance(c.cfg, "sigma", 3.0);
    const double gap = std::abs(pe.estimate - cf);
    c.check("mc_within_sigma", gap <= k * pe.std_error + 1e-9 * std::abs(cf),
            "|mc - cf| = " + num(gap) + ", " + num(k) + " se = " + num(k * pe.std_error));
    if (cf != 0.0) {
        const double rel = gap / std::abs(cf);
        c.rep.metrics["relative_gap"] = rel;
        const double tol = tolerance(c.cfg, "relative", 0.05);
        c.check("mc_relative_gap", rel < tol, "relative gap " + num(rel));
    }
}

void exp_power_estimate(Ctx& c) {
    const LTVSystem sys = make_system(c.cfg, "double-integrator", 50);
    const PredictorModel model = make_model(c.cfg, sys.n(), sys.T, default_affine(0.5, "skewed"));
    std::vector<ProblemInstance> inst;
    if (const json* in = find(c.cfg, "instances_in")) {
        inst = read_instances(in->get<std::string>());
        if (inst.empty() || inst.front().horizon() != sys.T) bad_field("instances_in", "horizon differs from the system");
    } else {
        inst = sample_instances(model, get_int(c.cfg, "count", 20000, 1000), c.seed, c.threads);
    }
    if (const json* out = find(c.cfg, "instances_out")) {
        const std::string name = out->get<std::string>();
        write_instances(c.path(name), inst);
        c.rep.files.push_back(name);
        c.rep.files.push_back(name + ".json");
    }
    SplitFractions split;
    if (const json* s = find(c.cfg, "split")) {
        split.train = get_num(*s, "train", split.train);
        split.val = get_num(*s, "val", split.val);
        split.test = get_num(*s, "test", split.test);
    }
    const PowerEvaluation ev = prediction_power_evaluate(sys, inst, model, make_window(c.cfg), split, c.threads);
    Table t{{"t", "trace_term_baseline", "trace_term_theta", "m_min_eig"}, {}};
    for (int k = 0; k < sys.T; ++k)
        t.add({num(k), num(ev.trace_baseline[k]), num(ev.trace_theta[k]), num(ev.m_min_eig[k])});
    c.write_table("power_estimate_terms", t);
    const double cf = prediction_power_closed_form(sys, riccati_backward(sys), model);
    const double rel = cf != 0.0 ? std::abs(ev.estimate - cf) / std::abs(cf) : std::abs(ev.estimate);
    c.rep.metrics["estimate"] = ev.estimate;
    c.rep.metrics["std_error"] = ev.std_error;
    c.rep.metrics["closed_form"] = cf;
    c.rep.metrics["relative_error"] = rel;
    c.rep.metrics["test_count"] = ev.test_count;
    c.write_json("power_estimate_summary.json",
                 {{"estimate", ev.estimate}, {"std_error", ev.std_error}, {"closed_form", cf}, {"relative_error", rel}});
    const double tol = tolerance(c.cfg, "relative", 0.10);
    c.check("estimate_matches_closed_form", rel <= tol, "relative error " + num(rel));
}

void exp_mse_sweep(Ctx& c) {
    const LTVSystem sys = make_system(c.cfg, "double-integrator", 100);
    const int n = sys.n();
    const json* th = find(c.cfg, "thetas");
    json thetas = th ? *th : json{{"identity", "identity"}, {"skewed", "skewed"}};
    if (!thetas.is_object() || thetas.size() != 2) bad_field("thetas", "expected an object with two named thetas");
    std::vector<std::string> labels;
    std::vector<Mat> mats;
    for (auto it = thetas.begin(); it != thetas.end(); ++it) {
        labels.push_back(it.key());
        mats.push_back(parse_theta(json{{"theta", it.value()}}, n));
    }
    const auto rhos = get_num_list(c.cfg, "rhos", {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7});
    MseConfig mc;
    mc.train_rows = get_int(c.cfg, "train_rows", 64000, 100);
    mc.val_rows = get_int(c.cfg, "val_rows", mc.val_rows, 1);
    mc.test_rows = get_int(c.cfg, "test_rows", 4000000, 30);
    mc.seed = c.seed;
    mc.threads = c.threads;
    const double rho_check = get_num(c.cfg, "rho_check", 0.5);
    const double mse_tol = tolerance(c.cfg, "mse", 1e-3);
    const double ratio_tol = tolerance(c.cfg, "power_ratio", 0.10);
    const RiccatiSolution ric = riccati_backward(sys);
    Table t{{"rho", "theta", "entry", "mse", "mse_std_error", "power", "expected_cost"}, {}};
    Table d{{"rho", "entry", "mse_difference", "difference_std_error"}, {}};
    double worst = 0;
    bool ratio_seen = false;
    for (double rho : rhos) {
        const PredictorModel a = PredictorModel::affine_gaussian(rho, mats[0], sys.T);
        const PredictorModel b = PredictorModel::affine_gaussian(rho, mats[1], sys.T);
        const MseComparison cmp = mse_compare(a, b, mc);
        const double pa = prediction_power_closed_form(sys, ric, a);
        const double pb = prediction_power_closed_form(sys, ric, b);
        const double j0 = baseline_expected_cost(sys, ric, a);
        for (int i = 0; i < cmp.a.mse.size(); ++i) {
            t.add({num(rho), labels[0], num(i), num(cmp.a.mse[i]), num(cmp.a.std_error[i]), num(pa), num(j0 - pa)});
            t.add({num(rho), labels[1], num(i), num(cmp.b.mse[i]), num(cmp.b.std_error[i]), num(pb), num(j0 - pb)});
            d.add({num(rho), num(i), num(cmp.diff[i]), num(cmp.diff_se[i])});
            worst = std::max(worst, std::abs(cmp.diff[i]));
        }
        if (std::abs(rho - rho_check) < 1e-12) {
            ratio_seen = true;
            const double ratio = pa / pb;
            c.rep.metrics["power_ratio"] = ratio;
            c.rep.metrics["power_" + labels[0]] = pa;
            c.rep.metrics["power_" + labels[1]] = pb;
            c.check("powers_differ", std::abs(ratio - 1.0) > ratio_tol,
                    "P(" + labels[0] + ")/P(" + labels[1] + ") = " + num(ratio));
        }
    }
    c.write_table("mse_sweep", t);
    c.write_table("mse_difference", d);
    c.rep.metrics["max_mse_difference"] = worst;
    c.check("per_entry_mse_agree", worst <= mse_tol, "max |mse difference| " + num(worst));
    if (!ratio_seen) c.check("powers_differ", false, "rho_check not in rhos");
}

void exp_multistep(Ctx& c) {
    const LTVSystem sys = make_system(c.cfg, "scalar-unit", 100);
    if (sys.n() != 1) bad_field("system", "multistep-1d needs a scalar system");
    const auto v = get_num_list(c.cfg, "variances", {1.0, 1.0, 1.0});
    if (v.size() != 3) bad_field("variances", "expected three values");
    const std::array<double, 3> var{v[0], v[1], v[2]};
    const PredictorModel m1 = PredictorModel::multistep_1d(1, sys.T, var);
    const PredictorModel m2 = PredictorModel::multistep_1d(2, sys.T, var);
    const long count = get_int(c.cfg, "count", 20000, 1000);
    const FeatureWindow fw = make_window(c.cfg);
    const RiccatiSolution ric = riccati_backward(sys);
    PowerEvaluation ev[2];
    double cf[2];
    const PredictorModel* ms[2] = {&m1, &m2};
    for (int k = 0; k < 2; ++k) {
        const auto inst = sample_instances(*ms[k], count, c.seed, c.threads);
        ev[k] = prediction_power_evaluate(sys, inst, *ms[k], fw, {}, c.threads);
        cf[k] = prediction_power_closed_form(sys, ric, *ms[k]);
    }
    Table p{{"variant", "estimate", "std_error", "closed_form"}, {}};
    for (int k = 0; k < 2; ++k) p.add({num(k + 1), num(ev[k].estimate), num(ev[k].std_error), num(cf[k])});
    c.write_table("multistep_power", p);

    const long test = get_int(c.cfg, "test_rows", 40000, 30);
    const long train = get_int(c.cfg, "train_rows", 40000, 10);
    const long val = get_int(c.cfg, "val_rows", 5000, 1);
    const StepMseComparison sm = step_mse_compare(m1, m2, train, val, test, c.seed + 1, fw, 0, c.threads);
    Table s{{"t", "mse_v1", "mse_v2"}, {}};
    for (int t = 0; t < sys.T; ++t) s.add({num(t), num(sm.mse_a[t]), num(sm.mse_b[t])});
    c.write_table("multistep_mse", s);

    const double sig = std::sqrt(ev[0].std_error * ev[0].std_error + ev[1].std_error * ev[1].std_error);
    const double gap = std::abs(ev[0].estimate - ev[1].estimate);
    c.rep.metrics["power_v1"] = ev[0].estimate;
    c.rep.metrics["power_v2"] = ev[1].estimate;
    c.rep.metrics["power_gap_sigma"] = sig > 0 ? gap / sig : 0.0;
    c.rep.metrics["mse_v1"] = sm.mean_a;
    c.rep.metrics["mse_v2"] = sm.mean_b;
    c.rep.metrics["mse_difference"] = sm.diff;
    c.rep.metrics["mse_difference_std_error"] = sm.diff_se;
    const double k2 = tolerance(c.cfg, "power_sigma", 2.0), k3 = tolerance(c.cfg, "mse_sigma", 3.0);
    c.check("powers_agree", gap <= k2 * sig, "|P1 - P2| = " + num(gap) + ", " + num(k2) + " sigma = " + num(k2 * sig));
    c.check("v1_mse_smaller", sm.diff < 0 && -sm.diff > k3 * sm.diff_se,
            "mse(v1) - mse(v2) = " + num(sm.diff) + " (se " + num(sm.diff_se) + ")");
}

/// stationary power per step: the mid-horizon term of a long closed-form horizon
double stationary_power_per_step(const LTVSystem& sys, const PredictorModel& model, int Tref = 400) {
    const LTVSystem s = LTVSystem::time_invariant(sys.A[0], sys.B[0], sys.Q[0], sys.R[0], sys.PT, sys.x0, Tref);
    PredictorModel m = model.kind() == PredictorKind::AffineGaussian
                           ? PredictorModel::affine_gaussian(model.rho(), model.theta(), Tref)
                           : PredictorModel::shifted_affine_gaussian(model.rho(), model.theta(), Tref);
    return prediction_power_terms(s, riccati_backward(s), m)[Tref / 2];
}

void exp_mgaps(Ctx& c) {
    const LTVSystem sys = make_system(c.cfg, "double-integrator", 20000);
    if (!sys.is_time_invariant()) bad_field("system", "online optimisation needs a time-invariant system");
    const double rho = get_num(c.cfg, "rho", 0.5);
    const json tp = {{"theta", find(c.cfg, "theta") ? c.cfg["theta"] : json("identity")}};
    const Mat theta = parse_theta(tp, sys.n());
    const int reps = static_cast<int>(get_int(c.cfg, "replicates", 10, 1));
    std::vector<int> scenarios;
    for (double s : get_num_list(c.cfg, "scenarios", {1, 2})) {
        if (s != 1 && s != 2) bad_field("scenarios", "scenarios are 1 (current prediction) and 2 (next prediction)");
        scenarios.push_back(static_cast<int>(s));
    }
    const Mat P = dare_fixed_point(sys.A[0], sys.B[0], sys.Q[0], sys.R[0]);
    const Mat Mm = sys.R[0] + sys.B[0].transpose() * P * sys.B[0];
    PolicyClassSpec spec;
    spec.K = Mm.ldlt().solve(sys.B[0].transpose() * P * sys.A[0]);
    spec.c = get_num(c.cfg, "c", spec.c);
    spec.beta = get_num(c.cfg, "beta", spec.beta);
    spec.eta0 = get_num(c.cfg, "eta0", spec.eta0);
    spec.record_every = static_cast<int>(get_int(c.cfg, "record_every", 100, 1));
    spec.snapshot_every = static_cast<int>(get_int(c.cfg, "snapshot_every", 1000, 0));
    const double window = get_num(c.cfg, "final_window", 0.1);

    Table summary{{"scenario", "reference_power_per_step", "in_class_optimum", "final_window_mean", "replicates"}, {}};
    for (int sc : scenarios) {
        const PredictorModel model = sc == 1 ? PredictorModel::affine_gaussian(rho, theta, sys.T)
                                             : PredictorModel::shifted_affine_gaussian(rho, theta, sys.T);
        spec.upsilon0 = Mat::Zero(sys.m(), model.d());
        const auto runs = online_optimize_replicates(sys, model, spec, c.seed, reps, c.threads);
        const double ref = stationary_power_per_step(sys, model);
        const InClassOptimum opt = optimal_in_class_improvement(sys, model, spec.K);
        Table t{{"replicate", "t", "improvement", "cumulative_cost", "baseline_cumulative_cost"}, {}};
        Table u{{"replicate", "t", "entry", "upsilon"}, {}};
        double fw = 0;
        for (int r = 0; r < reps; ++r) {
            const OnlineRunRecord& rec = runs[r];
            for (std::size_t i = 0; i < rec.times.size(); ++i)
                t.add({num(r), num(rec.times[i]), num(rec.improvement[i]), num(rec.cumulative_cost[i]),
                       num(rec.baseline_cumulative_cost[i])});
            for (std::size_t i = 0; i < rec.snapshot_times.size(); ++i) {
                const Mat& Y = rec.upsilon_snapshots[i];
                for (long e = 0; e < Y.size(); ++e) u.add({num(r), num(rec.snapshot_times[i]), num(e), num(Y(e))});
            }
            fw += rec.final_window_mean(window);
        }
        fw /= reps;
        const std::string tag = "scenario" + std::to_string(sc);
        c.write_table("mgaps_" + tag, t);
        c.write_table("mgaps_" + tag + "_upsilon", u);
        summary.add({num(sc), num(ref), num(opt.improvement), num(fw), num(reps)});
        c.rep.metrics[tag] = {{"reference_power_per_step", ref},
                              {"in_class_optimum", opt.improvement},
                              {"final_window_mean", fw}};
        const double tol = tolerance(c.cfg, "relative", 0.15);
        if (sc == 1) {
            c.check("scenario1_reaches_power", std::abs(fw - ref) <= tol * ref,
                    "final window " + num(fw) + " vs P/T " + num(ref));
        } else {
            const double cap = tolerance(c.cfg, "plateau_fraction", 0.70);
            c.check("scenario2_below_power", fw <= cap * ref, "final window " + num(fw) + " vs P/T " + num(ref));
            c.check("scenario2_matches_class_optimum", std::abs(fw - opt.improvement) <= tol * opt.improvement,
                    "final window " + num(fw) + " vs in-class optimum " + num(opt.improvement));
        }
    }
    c.write_table("mgaps_summary", summary);
    json ref = json::object();
    for (const auto& row : summary.rows)
        ref["scenario" + row[0]] = {{"reference_power_per_step", std::stod(row[1])},
                                    {"in_class_optimum", std::stod(row[2])},
                                    {"final_window_mean", std::stod(row[3])}};
    c.write_json("mgaps_reference.json", ref);
}

bool parse_fraction(const json& v, long long& num_, long long& den_) {
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        const auto slash = s.find('/');
        if (slash == std::string::npos) return false;
        try {
            num_ = std::stoll(s.substr(0, slash));
            den_ = std::stoll(s.substr(slash + 1));
        } catch (const std::exception&) {
            return false;
        }
        return den_ > 0;
    }
    if (!v.is_number()) return false;
    den_ = 1000000;
    num_ = std::llround(v.get<double>() * static_cast<double>(den_));
    return std::abs(static_cast<double>(num_) / den_ - v.get<double>()) < 1e-12;
}

void exp_counterexample(Ctx& c) {
    long long pn = 1, pd = 10;
    if (const json* p = find(c.cfg, "p"))
        if (!parse_fraction(*p, pn, pd)) bad_field("p", "expected a decimal with at most 6 places or \"num/den\"");
    if (pn <= 0 || pn >= pd) bad_field("p", "must lie strictly between 0 and 1");
    const MpcCounterexample at = mpc_counterexample(pn, pd);
    Table t{{"p", "u0", "mpc", "alternative", "threshold", "mpc_exact", "alternative_exact"}, {}};
    bool grid_ok = true;
    double worst = 1e300;
    for (int k = 1; k <= 99; ++k) {
        const MpcCounterexample e = mpc_counterexample(k, 100);
        t.add({num(e.p.value()), num(e.u0.value()), num(e.mpc_cost.value()), num(e.alternative_cost.value()),
               num(e.threshold.value()), e.mpc_cost.str(), e.alternative_cost.str()});
        // exact comparison mpc >= 2/9 on the rationals
        const bool ge = static_cast<__int128>(e.mpc_cost.num) * e.threshold.den >=
                        static_cast<__int128>(e.threshold.num) * e.mpc_cost.den;
        grid_ok = grid_ok && ge;
        worst = std::min(worst, e.mpc_cost.value() - e.threshold.value());
    }
    c.write_table("counterexample", t);
    c.rep.metrics["mpc"] = at.mpc_cost.value();
    c.rep.metrics["alternative"] = at.alternative_cost.value();
    c.rep.metrics["threshold"] = at.threshold.value();
    c.rep.metrics["u0"] = at.u0.value();
    c.rep.metrics["exact"] = {{"p", at.p.str()},
                              {"mpc", at.mpc_cost.str()},
                              {"alternative", at.alternative_cost.str()},
                              {"threshold", at.threshold.str()},
                              {"u0", at.u0.str()}};
    c.check("alternative_beats_mpc", at.mpc_suboptimal,
            "alternative " + at.alternative_cost.str() + " vs mpc " + at.mpc_cost.str());
    c.check("mpc_above_threshold_on_grid", grid_ok, "min over grid of mpc - 2/9 = " + num(worst));
}

struct BoundRow {
    std::string instance, kind;
    double bound, estimate, std_error;
};

void exp_bounds(Ctx& c) {
    const long count = get_int(c.cfg, "count", 20000, 2);
    const double rho = get_num(c.cfg, "rho", 0.5);
    const double k = tolerance(c.cfg, "sigma", 3.0);
    CheckOptions co;
    co.outer = get_int(c.cfg, "outer", 1000, 2);
    co.inner = static_cast<int>(get_int(c.cfg, "inner", 20, 1));
    co.seed = c.seed;

    std::vector<BoundRow> rows;
    Table checks{{"instance", "t", "M", "M_spread", "sigma", "sigma_std_error", "sigma_slack"}, {}};
    Table mul{{"instance", "t", "mu", "ell", "mu_floor", "ell_cap"}, {}};
    bool recursion_ok = true;

    auto recursion = [&](const std::string& name, const CostConditioning& cc, int T) {
        const MuEllSequence s = mu_ell_recursion(cc, T);
        for (int t = 0; t <= T; ++t) {
            mul.add({name, num(t), num(s.mu[t]), num(s.ell[t]), num(s.mu_floor), num(s.ell_cap)});
            recursion_ok = recursion_ok && s.mu_floor <= s.mu[t] && s.ell[t] <= s.ell_cap;
        }
    };
    auto checker_bound = [&](const std::string& name, const ScalarProblem& prob) {
        std::vector<Mat> M;
        std::vector<double> sigma;
        for (int t = 0; t < prob.T; ++t) {
            const Condition1Result c1 = condition1_check(prob, t, co);
            const Condition2Result c2 = condition2_check(prob, t, co);
            M.push_back(Mat::Constant(1, 1, c1.M));
            sigma.push_back(c2.sigma_slack);
            checks.add({name, num(t), num(c1.M), num(c1.spread), num(c2.sigma), num(c2.std_error), num(c2.sigma_slack)});
        }
        return power_lower_bound(M, sigma);
    };

    {  // contractive scalar LQR, checkers on the discretised programme
        const int T = 4;
        const LTVSystem sys = scalar_contractive(T);
        const PredictorModel model = PredictorModel::affine_gaussian(rho, Mat::Identity(1, 1), T);
        const ScalarProblem prob = ScalarProblem::from_lqr(sys, scalar_law(model));
        const double b43 = checker_bound("lqr-toy", prob);
        const CostConditioning cc = CostConditioning::from_quadratic(sys);
        const double b48 = conditioning_lower_bound(cc, one_step_lambda(model), 1);
        recursion("lqr-toy", cc, T);
        const PowerEstimate pe = prediction_power_mc(sys, model, count, c.seed, c.threads);
        rows.push_back({"lqr-toy", "power_lower_bound", b43, pe.estimate, pe.std_error});
        rows.push_back({"lqr-toy", "conditioning_lower_bound", b48, pe.estimate, pe.std_error});
        c.rep.metrics["lqr_toy_closed_form"] = prediction_power_closed_form(sys, riccati_backward(sys), model);
    }
    {  // binary example: exact revelation, constants M = Sigma = 1 known in closed form
        const int T = 10;
        const LTVSystem sys = binary_example(T);
        const PredictorModel model = PredictorModel::binary_perfect(1, T);
        const std::vector<Mat> ones(T, Mat::Identity(1, 1));
        const double b43 = power_lower_bound(ones, ones);
        const CostConditioning cc = CostConditioning::from_quadratic(sys);
        const double b48 = conditioning_lower_bound(cc, one_step_lambda(model), 1);
        recursion("binary-example", cc, T);
        const PowerEstimate pe = prediction_power_mc(sys, model, count, c.seed, c.threads);
        rows.push_back({"binary-example", "power_lower_bound", b43, pe.estimate, pe.std_error});
        rows.push_back({"binary-example", "conditioning_lower_bound", b48, pe.estimate, pe.std_error});
        // the checkers reproduce M = Sigma = 1 on a short horizon
        const int Ts = 4;
        const ScalarProblem prob = ScalarProblem::from_lqr(binary_example(Ts),
                                                           scalar_law(PredictorModel::binary_perfect(1, Ts)));
        checker_bound("binary-example-T4", prob);
        c.rep.metrics["binary_example"] = {{"T", T}, {"M", 1.0}, {"Sigma", 1.0}, {"power", pe.estimate}};
    }
    {  // nonquadratic state cost
        const int T = 4;
        const double cc_c = 0.1;
        const ScalarProblem prob = nonquadratic_toy(T, rho, cc_c);
        const double b43 = checker_bound("nonquadratic-toy", prob);
        CostConditioning cc;
        cc.mu_x = 1.0 - cc_c / 4.0;
        cc.ell_x = 1.0 + 2.0 * cc_c;
        cc.mu_u = cc.ell_u = 1.0;
        cc.mu_A = cc.ell_A = prob.A * prob.A;
        cc.mu_B = cc.ell_B = prob.B * prob.B;
        const double b48 = conditioning_lower_bound(cc, std::vector<double>(T, rho * rho), 1);
        recursion("nonquadratic-toy", cc, T);
        const ScalarPowerReport pr = scalar_power_mc(prob, count, c.seed, c.threads);
        rows.push_back({"nonquadratic-toy", "power_lower_bound", b43, pr.estimate, pr.std_error});
        rows.push_back({"nonquadratic-toy", "conditioning_lower_bound", b48, pr.estimate, pr.std_error});
        c.rep.metrics["nonquadratic_toy_programme_power"] = pr.exact;
    }

    Table bt{{"instance", "bound_kind", "bound", "estimate", "std_error", "slack", "pass"}, {}};
    json checks_json = json::array();
    bool all = true;
    for (const auto& r : rows) {
        const double slack = r.estimate + k * r.std_error - r.bound;
        const bool ok = slack >= 0;
        all = all && ok;
        bt.add({r.instance, r.kind, num(r.bound), num(r.estimate), num(r.std_error), num(slack), ok ? "1" : "0"});
        checks_json.push_back({{"name", r.instance + "/" + r.kind},
                               {"bound", r.bound},
                               {"estimate", r.estimate},
                               {"slack", slack},
                               {"pass", ok}});
    }
    c.write_table("bounds", bt);
    c.write_table("condition_checks", checks);
    c.write_table("mu_ell", mul);
    c.write_json("bounds_checks.json", checks_json);
    c.check("bounds_below_power", all, std::to_string(rows.size()) + " bound/instance pairs");
    c.check("recursion_uniform_bounds", recursion_ok, "mu_x <= mu_t and ell_t <= ell_x / (1 - ell_A)");
}

// Small invariant suite, each case self-contained and quick.
void exp_selftest(Ctx& c) {
    std::vector<std::pair<std::string, std::function<bool()>>> cases;
    cases.emplace_back("riccati_psd", [] {
        const RiccatiSolution r = riccati_backward(double_integrator(50));
        for (const Mat& P : r.P)
            if (Eigen::SelfAdjointEigenSolver<Mat>(P).eigenvalues()(0) <= 0) return false;
        return true;
    });
    cases.emplace_back("zero_rho_zero_power", [] {
        const LTVSystem s = double_integrator(20);
        return prediction_power_closed_form(s, riccati_backward(s),
                                            PredictorModel::affine_gaussian(0.0, Mat::Identity(2, 2), 20)) == 0.0;
    });
    cases.emplace_back("binary_power_equals_T", [&] {
        const LTVSystem s = binary_example(10);
        const PowerEstimate p = prediction_power_mc(s, PredictorModel::binary_perfect(1, 10), 64, c.seed, c.threads);
        return p.estimate == 10.0 && p.std_error == 0.0;
    });
    cases.emplace_back("counterexample_p_tenth", [] {
        const MpcCounterexample e = mpc_counterexample(1, 10);
        return e.mpc_cost.num * 60 == 19 * e.mpc_cost.den && e.alternative_cost.num * 10 == e.alternative_cost.den;
    });
    cases.emplace_back("recursion_bounds", [] {
        CostConditioning cc{1, 1, 1, 1, 0.25, 0.5, 1, 1};
        const MuEllSequence s = mu_ell_recursion(cc, 50);
        for (int t = 0; t <= 50; ++t)
            if (s.mu[t] < s.mu_floor || s.ell[t] > s.ell_cap) return false;
        return true;
    });
    cases.emplace_back("infimal_convolution_quadratic", [] {
        const SmoothFunction f = SmoothFunction::quadratic(Mat::Identity(2, 2));
        Vec x(2);
        x << 1.0, -2.0;
        const InfConvResult r = infimal_convolution(f, f, Mat::Identity(2, 2), x);
        return std::abs(r.value - x.squaredNorm() / 4) < 1e-9 && (r.u - x / 2).norm() < 1e-8;
    });
    cases.emplace_back("information_leak_guard", [] {
        const PredictorModel m = PredictorModel::affine_gaussian(0.5, Mat::Identity(1, 1), 5);
        const ProblemInstance inst = m.sample_instance(1, 0);
        const HistoryView h(inst, 2);
        try {
            h.W(2);
        } catch (const Error& e) {
            return e.kind() == ErrorKind::InformationLeak;
        }
        return false;
    });
    cases.emplace_back("total_covariance_discrete", [] {
        Mat X(3, 1);
        X << 0, 1, 2;
        const TotalCovarianceCheck r = total_covariance_check(X, {0, 0, 0}, {0, 1, 2});
        return std::abs(r.between(0, 0) - 2.0 / 3.0) < 1e-12;
    });
    cases.emplace_back("scalar_programme_matches_riccati", [] {
        const LTVSystem s = scalar_contractive(3);
        const ScalarDp dp(ScalarProblem::from_lqr(s, deterministic_law()), deterministic_law());
        const RiccatiSolution r = riccati_backward(s);
        return std::abs(dp.cost_to_go(0, 1.0, 0.0) - r.P[0](0, 0)) < 1e-6;
    });
    Table t{{"case", "pass"}, {}};
    int passed = 0;
    for (auto& [name, fn] : cases) {
        bool ok = false;
        try {
            ok = fn();
        } catch (const std::exception&) {
            ok = false;
        }
        passed += ok;
        t.add({name, ok ? "1" : "0"});
        c.check(name, ok, ok ? "ok" : "failed");
    }
    c.write_table("selftest", t);
    c.rep.metrics["passed"] = passed;
    c.rep.metrics["total"] = static_cast<int>(cases.size());
}

const std::vector<std::pair<std::string, void (*)(Ctx&)>>& registry() {
    static const std::vector<std::pair<std::string, void (*)(Ctx&)>> r{
        {"riccati", exp_riccati},
        {"power-closed-form", exp_power_closed_form},
        {"power-mc", exp_power_mc},
        {"power-estimate", exp_power_estimate},
        {"mse-sweep", exp_mse_sweep},
        {"multistep-1d", exp_multistep},
        {"mgaps", exp_mgaps},
        {"counterexample", exp_counterexample},
        {"bounds", exp_bounds},
        {"selftest", exp_selftest},
    };
    return r;
}

}  // namespace

std::vector<std::string> experiment_names() {
    std::vector<std::string> out;
    for (const auto& e : registry()) out.push_back(e.first);
    return out;
}

ExperimentReport run_experiment(const json& config, const RunOptions& opt) {
    if (!config.is_object()) fail(ErrorKind::ConfigError, "config must be a JSON object");
    const std::string name = get_str(config, "experiment", "");
    if (name.empty()) bad_field("experiment", "missing");
    void (*fn)(Ctx&) = nullptr;
    for (const auto& e : registry())
        if (e.first == name) fn = e.second;
    if (!fn) bad_field("experiment", "unknown experiment '" + name + "'");

    ExperimentReport rep;
    rep.experiment = name;
    rep.config = config;
    std::uint64_t seed = 1;
    if (opt.seed_override) {
        seed = opt.seed;
    } else if (const json* s = find(config, "seed")) {
        if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<long long>() >= 0))
            bad_field("seed", "expected a nonnegative integer");
        seed = s->get<std::uint64_t>();
    } else if (const char* env = std::getenv("PP_SEED")) {
        try {
            seed = std::stoull(env);
        } catch (const std::exception&) {
            fail(ErrorKind::ConfigError, "environment PP_SEED is not an integer");
        }
    }
    rep.config["seed"] = seed;
    int threads = opt.threads;
    if (threads == 0 && find(config, "threads")) threads = static_cast<int>(get_int(config, "threads", 0, 0));
    if (threads < 0) bad_field("threads", "must be >= 0");
    std::filesystem::create_directories(opt.out_dir);

    Ctx ctx{config, opt, rep, seed, threads};
    const auto t0 = std::chrono::steady_clock::now();
    fn(ctx);
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // manifest goes last: it only ever names files that are already in place
    json manifest = json::array();
    for (const auto& f : rep.files)
        manifest.push_back({{"file", f}, {"bytes", std::filesystem::file_size(ctx.path(f))}});
    write_atomic(ctx.path("report.json"), rep.to_json().dump(1) + "\n");
    write_atomic(ctx.path("manifest.json"), manifest.dump(1) + "\n");
    return rep;
}

}  // namespace ppower::tools
