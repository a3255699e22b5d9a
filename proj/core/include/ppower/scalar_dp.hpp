#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ppower/lqr.hpp"
#include "ppower/predictors.hpp"

namespace ppower {

/// One-dimensional law: Gaussian N(0, sd^2), a finite discrete law, or the point mass at 0.
struct ScalarDist {
    enum class Kind { Gaussian, Discrete, Point };
    Kind kind = Kind::Point;
    double sd = 0.0;
    std::vector<double> nodes, weights;

    static ScalarDist gaussian(double sd);
    static ScalarDist discrete(std::vector<double> nodes, std::vector<double> weights);
    static ScalarDist point() { return {}; }

    /// quadrature rule: Gauss-Hermite with k nodes for Gaussians, the support otherwise
    void quadrature(int k, std::vector<double>& x, std::vector<double>& w) const;
    double variance() const;
};

/// W_t = m_t + r_t with m_t = E[W_t | V_t] and r_t independent of m_t, iid over t.
struct ScalarLaw {
    ScalarDist mean;
    ScalarDist residual;

    /// law seen by the no-prediction baseline: m = 0, r = W
    ScalarLaw marginal(int k) const;
};

/// Probabilists' Gauss-Hermite rule (weights sum to 1) by the Golub-Welsch eigenproblem.
void gauss_hermite(int k, std::vector<double>& nodes, std::vector<double>& weights);

/// x_{t+1} = A x + B u + W_t with separable convex scalar costs.
struct ScalarProblem {
    int T = 1;
    double A = 0.0, B = 1.0;
    double x0 = 0.0;
    std::function<double(double)> hx, hu, hT;
    ScalarLaw theta;

    static ScalarProblem from_lqr(const LTVSystem& sys, const ScalarLaw& law);
};

/// Laws of a scalar one-step predictor: affine Gaussian, binary-perfect or baseline.
ScalarLaw scalar_law(const PredictorModel& model);
/// Deterministic disturbances, W = 0.
ScalarLaw deterministic_law();

struct DpOptions {
    int quad_nodes = 20;
    double grid_step = 0.05;
    double z_half = 40.0;   // range of the policy-value grid G_t
    double y_half = 30.0;   // range of the averaged cost-to-go grid
    int brent_bits = 40;
};

/// Backward dynamic programme on a grid with cubic B-splines:
///   V_t(x, m) = h^x(x) + G_t(A x + m),  G_t(z) = min_u h^u(u) + Cbar_{t+1}(z + B u),
///   Cbar_t(y) = E_{r, m'} V_t(y + r, m'),  Cbar_T(y) = E_r h_T(y + r).
class ScalarDp {
public:
    ScalarDp(const ScalarProblem& prob, const ScalarLaw& law, const DpOptions& opt = {});
    ~ScalarDp();
    ScalarDp(ScalarDp&&) noexcept;

    int horizon() const { return T_; }
    double policy(int t, double x, double m) const;
    /// E[Q_t(x, u) - C_t(x) | I_t] for the history with conditional mean m
    double q_gap(int t, double x, double m, double u) const;
    double cost_to_go(int t, double x, double m) const;
    double cbar(int t, double y) const;
    /// J* = E_{m_0} V_0(x0, m_0)
    double expected_cost() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int T_;
};

struct CheckOptions {
    long outer = 1000;     // baseline-state samples for the covariance condition
    int inner = 20;        // quadrature nodes per expectation
    std::uint64_t seed = 1;
    DpOptions dp{};
};

struct Condition1Result {
    double M = 0.0;       // largest constant with gap >= M (u - u*)^2 on the probe grid
    double spread = 0.0;  // max ratio minus min ratio, zero for exact quadratic growth
};

struct Condition2Result {
    double sigma = 0.0;      // E_X Var_m pi_t(X; m)
    double std_error = 0.0;  // over the X samples
    double sigma_slack = 0.0;  // max(0, sigma - 2 std_error)
    long samples = 0;
};

/// Both checks need T <= 4 and a scalar problem, else BudgetExceeded.
Condition1Result condition1_check(const ScalarProblem& prob, int t, const CheckOptions& opt = {});
Condition2Result condition2_check(const ScalarProblem& prob, int t, const CheckOptions& opt = {});

struct ScalarPowerReport {
    double estimate = 0.0;   // paired Monte Carlo J(baseline) - J(theta)
    double std_error = 0.0;
    double exact = 0.0;      // J*(0) - J*(theta) from the programme itself
    double cost_theta = 0.0, cost_baseline = 0.0;
    long count = 0;
};

/// Optimal policies for both information sets, simulated on common disturbances.
ScalarPowerReport scalar_power_mc(const ScalarProblem& prob, long count, std::uint64_t seed, int threads = 0,
                                  const DpOptions& opt = {});

/// h^x(x) = x^2/2 + c log(1 + x^2): curvature in [1 - c/4, 1 + 2c]
ScalarProblem nonquadratic_toy(int T, double rho, double c = 0.1);

}  // namespace ppower
