#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ppower/lqr.hpp"
#include "ppower/predictors.hpp"

namespace ppower {

/// Separable convex costs h^x_t(x) + h^u_t(u) with terminal h_T(x).
class CostModel {
public:
    virtual ~CostModel() = default;
    virtual double state_cost(int t, const Vec& x) const = 0;  // t == T is the terminal cost
    virtual double input_cost(int t, const Vec& u) const = 0;
    virtual Vec state_grad(int t, const Vec& x) const = 0;
    virtual Vec input_grad(int t, const Vec& u) const = 0;
};

class QuadraticCost final : public CostModel {
public:
    explicit QuadraticCost(const LTVSystem& sys) : sys_(&sys) {}
    double state_cost(int t, const Vec& x) const override;
    double input_cost(int t, const Vec& u) const override;
    Vec state_grad(int t, const Vec& x) const override;
    Vec input_grad(int t, const Vec& u) const override;

private:
    const LTVSystem* sys_;
};

class Policy {
public:
    virtual ~Policy() = default;
    /// Only the causal history is handed over; reading past it raises InformationLeak.
    virtual Vec act(int t, const Vec& x, const HistoryView& h) const = 0;
    virtual std::string name() const = 0;
};

class NoPredictionLQR final : public Policy {
public:
    explicit NoPredictionLQR(const RiccatiSolution& ric) : ric_(&ric) {}
    Vec act(int t, const Vec& x, const HistoryView& h) const override;
    std::string name() const override { return "no-prediction"; }

private:
    const RiccatiSolution* ric_;
};

/// -K_t x + ubar_t with the model's exact conditional means
class OptimalPredictive final : public Policy {
public:
    OptimalPredictive(const RiccatiSolution& ric, const LTVSystem& sys, const PredictorModel& model)
        : ric_(&ric), sys_(&sys), model_(&model) {}
    Vec act(int t, const Vec& x, const HistoryView& h) const override;
    std::string name() const override { return "optimal-predictive"; }

private:
    const RiccatiSolution* ric_;
    const LTVSystem* sys_;
    const PredictorModel* model_;
};

/// -K_t x + Upsilon_t v_t, with one Upsilon or one per step
class LinearPredictive final : public Policy {
public:
    LinearPredictive(const RiccatiSolution& ric, std::vector<Mat> upsilon) : ric_(&ric), ups_(std::move(upsilon)) {}
    Vec act(int t, const Vec& x, const HistoryView& h) const override;
    std::string name() const override { return "linear-predictive"; }

private:
    const RiccatiSolution* ric_;
    std::vector<Mat> ups_;
};

struct PlannerOptions {
    double grad_tol = 1e-9;
    int max_iter = 100000;
};

/// Plan against conditional-mean disturbances and commit the first action.
class PlannerPolicy final : public Policy {
public:
    PlannerPolicy(const CostModel& cost, const LTVSystem& sys, const PredictorModel& model, PlannerOptions opt = {})
        : cost_(&cost), sys_(&sys), model_(&model), opt_(opt) {}
    Vec act(int t, const Vec& x, const HistoryView& h) const override;
    std::string name() const override { return "planner"; }

private:
    const CostModel* cost_;
    const LTVSystem* sys_;
    const PredictorModel* model_;
    PlannerOptions opt_;
};

/// Minimises the deterministic objective from (t, x) against the given means
/// (n x (T - t)) by gradient descent with backtracking; returns m x (T - t).
Mat certainty_equivalent_plan(const CostModel& cost, const LTVSystem& sys, int t, const Vec& x, const Mat& means,
                              const PlannerOptions& opt = {});

struct Trajectory {
    Mat X;       // (T+1) x n
    Mat U;       // T x m
    Vec stage;   // T+1, last entry is the terminal cost
    double total = 0.0;
};

Trajectory run_policy(const LTVSystem& sys, const Policy& policy, const ProblemInstance& inst,
                      const CostModel* cost = nullptr);

struct CostReport {
    double mean = 0.0;
    double std_error = 0.0;
    long count = 0;
    std::vector<double> costs;
};

CostReport monte_carlo_cost(const LTVSystem& sys, const Policy& policy, const PredictorModel& model, long count,
                            std::uint64_t seed, int threads = 0, bool keep = false);

struct PowerEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    long count = 0;
    double baseline_cost = 0.0;
    double predictive_cost = 0.0;
    double unpaired_std_error = 0.0;
};

/// J*(0) - J*(theta) on common random numbers.
PowerEstimate prediction_power_mc(const LTVSystem& sys, const PredictorModel& model, long count, std::uint64_t seed,
                                  int threads = 0);

/// Exact rational number, printed as num/den.
struct Fraction {
    long long num = 0;
    long long den = 1;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

struct MpcCounterexample {
    Fraction p;
    Fraction u0;            // time-0 plan of certainty-equivalent MPC
    Fraction mpc_cost;      // exact expected cost of MPC with re-planning at t = 1
    Fraction alternative_cost;
    Fraction threshold;     // 2/9
    bool mpc_suboptimal = false;
};

/// Two-step scalar example with terminal cost x^2 on x <= 0 and +inf otherwise, W_1 in {0,1}.
MpcCounterexample mpc_counterexample(long long p_num, long long p_den);

}  // namespace ppower
