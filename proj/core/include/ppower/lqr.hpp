#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ppower {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

class PredictorModel;

/// Finite-horizon linear time-varying system with quadratic costs
///   x_{t+1} = A_t x_t + B_t u_t + w_t,  cost sum_t x'Q_t x + u'R_t u + x_T' P_T x_T
struct LTVSystem {
    int T = 0;
    std::vector<Mat> A, B, Q, R;
    Mat PT;
    Vec x0;

    static LTVSystem time_invariant(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                                    const Mat& PT, const Vec& x0, int T);

    int n() const { return static_cast<int>(PT.rows()); }
    int m() const { return B.empty() ? 0 : static_cast<int>(B.front().cols()); }
    bool is_time_invariant() const;

    /// Throws DimensionMismatch or InvalidModel. Q_t and P_T must be PD,
    /// R_t only PSD (the Riccati guard catches a singular R + B'PB).
    void validate(double tol = 1e-10) const;
};

struct RiccatiOptions {
    double cond_limit = 1e12;
    /// dense Phi table only when n <= dense_max_n and T <= dense_max_T
    int dense_max_n = 4;
    int dense_max_T = 512;
};

struct RiccatiSolution {
    int T = 0;
    std::vector<Mat> P;     // T+1
    std::vector<Mat> K;     // T, m x n
    std::vector<Mat> H;     // T, n x n
    std::vector<Mat> M;     // T, R_t + B_t' P_{t+1} B_t
    std::vector<Mat> Minv;  // T
    std::vector<Mat> L;     // T, closed loop A_t - B_t K_t

    /// Phi_{t2,t1} = L_{t2-1} ... L_{t1}, identity when t2 == t1
    Mat phi(int t2, int t1) const;
    bool has_dense_phi() const { return !phi_table_.empty(); }

    std::vector<Mat> phi_table_;  // row-major over (t1, t2 >= t1)
    std::vector<std::size_t> phi_offset_;
};

RiccatiSolution riccati_backward(const LTVSystem& sys, const RiccatiOptions& opt = {});

/// Stationary solution of the Riccati map by fixed-point iteration.
Mat dare_fixed_point(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                     double tol = 1e-13, int max_iter = 1000000);

/// ubar_t = -Minv_t B_t' sum_{tau=t}^{T-1} Phi_{tau+1,t+1}' P_{tau+1} w_{tau|t}
/// cond_means is n x (T - t), column j holding w_{t+j|t}.
Vec optimal_feedforward(const RiccatiSolution& ric, const LTVSystem& sys, int t, const Mat& cond_means);

/// Same sum but only over the first cond_means.cols() targets; later means are zero.
Vec feedforward_window(const RiccatiSolution& ric, const LTVSystem& sys, int t, const Mat& cond_means);

Vec optimal_action(const RiccatiSolution& ric, const LTVSystem& sys, int t, const Vec& x, const Mat& cond_means);

/// surrogate-optimal action: the feedforward with realised disturbances
Vec surrogate_optimal_action(const RiccatiSolution& ric, const LTVSystem& sys, int t, const Mat& w_realized);

/// Surrogate-optimal actions for every t in one backward sweep.
/// W is T x n (row t = w_t); result is T x m.
Mat surrogate_actions(const RiccatiSolution& ric, const LTVSystem& sys, const Mat& W);

/// E[Cov(ubar_t | F_t(0))] for the model's predictor, from the window information gain.
Mat expected_action_cov(const RiccatiSolution& ric, const LTVSystem& sys, const PredictorModel& model, int t);

/// Per-step terms Tr{M_t E[Cov(ubar_t | F_t(0))]}; the power is their sum.
std::vector<double> prediction_power_terms(const LTVSystem& sys, const RiccatiSolution& ric,
                                           const PredictorModel& model);

double prediction_power_closed_form(const LTVSystem& sys, const RiccatiSolution& ric,
                                    const PredictorModel& model);

/// CSV with one row per t: t, P_t (row-major), K_t (row-major; empty at t=T)
std::string riccati_csv(const RiccatiSolution& ric);

}  // namespace ppower
