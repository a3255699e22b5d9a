#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ppower/lqr.hpp"
#include "ppower/predictors.hpp"

namespace ppower {

/// Linear predictive class u_t = -K x_t + Upsilon_t v_t with an online step size
/// eta_t = eta0 (1 + t / c)^(-beta).
struct PolicyClassSpec {
    Mat K;          // m x n
    Mat upsilon0;   // m x d, zeros when empty
    double c = 1000.0;
    double beta = 0.5;
    double eta0 = 0.002;
    double divergence_bound = 1e3;  // on the Frobenius norm of Upsilon
    int snapshot_every = 1000;
    int record_every = 1;

    double eta(long t) const;
};

struct OnlineRunRecord {
    std::vector<long> times;
    std::vector<double> cumulative_cost;
    std::vector<double> baseline_cumulative_cost;
    std::vector<double> improvement;  // (baseline - tuned) / (t + 1)
    std::vector<long> snapshot_times;
    std::vector<Mat> upsilon_snapshots;
    Mat upsilon_final;

    /// mean improvement over the last `fraction` of recorded times
    double final_window_mean(double fraction = 0.1) const;
};

/// One online run on instance `index` of the model. The system must be time-invariant.
OnlineRunRecord online_optimize(const LTVSystem& sys, const PredictorModel& model, const PolicyClassSpec& spec,
                                std::uint64_t seed, std::uint64_t index = 0);

/// Independent replicates on instance indices 0..count-1, run in parallel.
std::vector<OnlineRunRecord> online_optimize_replicates(const LTVSystem& sys, const PredictorModel& model,
                                                        const PolicyClassSpec& spec, std::uint64_t seed, int count,
                                                        int threads = 0);

/// Frozen-Upsilon rollout over the given rows: stage cost at the last row and its gradient
/// with respect to vec(Upsilon) from the forward sensitivity S_t = dx_t / dvec(Upsilon).
struct SensitivityProbe {
    double cost = 0.0;
    Vec grad;
};
SensitivityProbe sensitivity_probe(const LTVSystem& sys, const Mat& K, const Mat& upsilon, const Vec& x0,
                                   const Mat& W, const Mat& V);

struct InClassOptimum {
    double improvement = 0.0;  // long-run average cost of Upsilon = 0 minus that of the best Upsilon
    double baseline_cost = 0.0;
    Mat upsilon;
};

/// Best fixed Upsilon for the stationary closed loop: the average cost is an exact quadratic
/// in vec(Upsilon), evaluated through a discrete Lyapunov equation on the augmented state.
InClassOptimum optimal_in_class_improvement(const LTVSystem& sys, const PredictorModel& model, const Mat& K);

/// Stationary average cost of a fixed Upsilon (m x d).
double stationary_average_cost(const LTVSystem& sys, const PredictorModel& model, const Mat& K, const Mat& upsilon);

/// Solves X = F X F' + C by doubling; throws NoConvergence if F is not stable.
Mat lyapunov_doubling(const Mat& F, const Mat& C);

}  // namespace ppower
