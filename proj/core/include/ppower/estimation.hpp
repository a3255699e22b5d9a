#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ppower/lqr.hpp"
#include "ppower/predictors.hpp"

namespace ppower {

struct SplitFractions {
    double train = 0.70;
    double val = 0.10;
    double test = 0.20;

    void validate() const;
};

struct RegressionDataset {
    Mat inputs;   // N x p
    Mat targets;  // N x q
    SplitFractions split;

    /// row ranges of the three splits, in dataset order
    void ranges(long& n_train, long& n_val, long& n_test) const;
};

struct LinearRegressor {
    Mat weights;  // p x q
    Vec intercept;
    double ridge = 0.0;

    Mat predict(const Mat& X) const;
};

/// ridge candidates tried in order; the validation MSE picks one
inline const std::vector<double>& ridge_grid() {
    static const std::vector<double> g{0.0, 1e-6, 1e-4, 1e-2};
    return g;
}

/// Fit on explicit train / validation blocks.
LinearRegressor fit_linear(const Mat& Xtr, const Mat& Ytr, const Mat& Xva, const Mat& Yva);
LinearRegressor fit_linear(const RegressionDataset& ds);

struct CovarianceEstimate {
    Mat matrix;
    long count = 0;
    Mat residuals;  // test residuals, one row per test sample
};

/// Expected conditional covariance estimator: fit on train/val, residual outer products on test.
CovarianceEstimate ecce(const RegressionDataset& ds, bool keep_residuals = false);

/// Symmetrise and clip negative eigenvalues to zero.
Mat psd_project(const Mat& S);

struct FeatureWindow {
    int predictions = 2;   // v_t, v_{t-1}, ...
    int disturbances = 1;  // w_{t-1}, ...
    bool full_history = false;
    long max_features = 4096;
};

/// Features of I_t for one instance; zeros stand in for rows before time 0.
/// use_predictions=false gives the baseline representation (disturbances only).
void history_features(const ProblemInstance& inst, int t, const FeatureWindow& fw, bool use_predictions,
                      Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out);
long feature_count(const PredictorModel& model, int t, const FeatureWindow& fw, bool use_predictions);

struct PowerEvaluation {
    double estimate = 0.0;
    double std_error = 0.0;
    std::vector<double> trace_baseline;  // Tr{M_t Sigma_t^0}
    std::vector<double> trace_theta;     // Tr{M_t Sigma_t^theta}
    std::vector<double> m_min_eig;       // smallest eigenvalue of M_t
    long test_count = 0;
};

/// Data-driven power evaluation on a fixed set of instances. The same train/val/test rows are used at every t,
/// so the per-test-instance contribution sum_t Tr{M_t (r0 r0' - r r')} gives the std error.
PowerEvaluation prediction_power_evaluate(const LTVSystem& sys, const std::vector<ProblemInstance>& instances,
                                          const PredictorModel& model, const FeatureWindow& fw = {},
                                          const SplitFractions& split = {}, int threads = 0);

std::vector<ProblemInstance> sample_instances(const PredictorModel& model, long count, std::uint64_t seed,
                                              int threads = 0);

/// Law of total covariance checked by group moments. labels_fine must refine labels_coarse.
struct TotalCovarianceCheck {
    Mat between;      // E[Cov(E[X|F'] | F)]
    Mat within_coarse;  // E[Cov(X|F)]
    Mat within_fine;    // E[Cov(X|F')]
    double defect = 0.0;
};
TotalCovarianceCheck total_covariance_check(const Mat& X, const std::vector<long>& labels_coarse,
                                            const std::vector<long>& labels_fine);

/// Per-step MSE of predicting W_{t+offset} from the history window, with a paired comparison.
struct StepMseComparison {
    std::vector<double> mse_a, mse_b;  // per t
    double mean_a = 0.0, mean_b = 0.0;
    double diff = 0.0, diff_se = 0.0;  // mean over t of (a - b), paired over test instances
    long test_count = 0;
};
StepMseComparison step_mse_compare(const PredictorModel& a, const PredictorModel& b, long train, long val,
                                   long test, std::uint64_t seed, const FeatureWindow& fw, int target_offset = 0,
                                   int threads = 0);

}  // namespace ppower
