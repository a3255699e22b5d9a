#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ppower {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class PredictorKind { Baseline, AffineGaussian, ShiftedAffineGaussian, MultiStep1D, BinaryPerfect };

const char* to_string(PredictorKind k);

/// One joint realisation of disturbances and predictions; row t of W is w_t, row t of V is v_t.
struct ProblemInstance {
    Mat W;  // T x n
    Mat V;  // T x d
    std::uint64_t seed = 0;
    std::uint64_t index = 0;

    int horizon() const { return static_cast<int>(W.rows()); }
};

/// Causal view of an instance at time t: w_0..w_{t-1} and v_0..v_t.
/// Any other row access throws InformationLeak.
class HistoryView {
public:
    HistoryView(const ProblemInstance& inst, int t);

    int t() const { return t_; }
    int horizon() const { return inst_->horizon(); }
    Eigen::VectorXd W(int tau) const;
    Eigen::VectorXd V(int tau) const;

private:
    const ProblemInstance* inst_;
    int t_;
};

/// Parametric joint law of (W, V(theta)) with analytic conditional moments.
class PredictorModel {
public:
    static PredictorModel baseline(int n, int T);
    /// V_t = rho theta W_t + eps_t, eps_t ~ N(0, I - rho^2 theta theta')
    static PredictorModel affine_gaussian(double rho, const Mat& theta, int T);
    /// V_t(2) = V_{t+1}(1) of the affine family with the same rho, theta
    static PredictorModel shifted_affine_gaussian(double rho, const Mat& theta, int T);
    /// W_t = a_t + b_t + c_t (independent zero-mean Gaussians with the given variances);
    /// variant 1: V_t = (b_t, a_{t+1}); variant 2: V_t = P(a_t + b_t) + L P a_{t+1}
    /// with P, L the stationary Riccati cost and closed loop of A = B = Q = R = 1.
    static PredictorModel multistep_1d(int variant, int T, std::array<double, 3> variances = {1.0, 1.0, 1.0});
    /// W_t entries uniform on {-1, +1}, V_t = W_t
    static PredictorModel binary_perfect(int n, int T);

    PredictorKind kind() const { return kind_; }
    int n() const { return n_; }
    int d() const { return d_; }
    int horizon() const { return T_; }
    double rho() const { return rho_; }
    const Mat& theta() const { return theta_; }
    int variant() const { return variant_; }
    std::string describe() const;

    /// how many targets ahead of t carry a non-zero conditional mean (1 or 2)
    int window() const;

    ProblemInstance sample_instance(std::uint64_t seed, std::uint64_t index) const;
    /// Rows [t0, t1) of the instance (seed, index); identical to the full sample's rows.
    void sample_rows(std::uint64_t seed, std::uint64_t index, int t0, int t1, Mat& W, Mat& V) const;

    /// E[W_tau | I_t(theta) = history]
    Vec conditional_mean_W(const HistoryView& h, int tau) const;
    /// n x window() matrix of means for tau = t .. t + window() - 1 (columns past T-1 are zero)
    Mat conditional_means(const HistoryView& h) const;
    /// Cov(W_tau | I_t(theta)), the same for every realised history
    Mat conditional_cov_W(int t, int tau) const;
    /// Cov(W_tau) marginally; equals the baseline conditional covariance
    Mat disturbance_cov() const;
    /// Joint reduction Cov(W_{t:t+k-1}) - E Cov(W_{t:t+k-1} | I_t(theta)) over the window,
    /// truncated at T-1; (k n) x (k n).
    Mat information_gain(int t) const;

    /// Direct conditional means for MultiStep1D variant 1, bypassing the generic conditioner.
    Vec multistep_direct_mean(const HistoryView& h, int tau) const;
    /// Generic Gaussian conditioning path for MultiStep1D (both variants).
    Vec multistep_generic_mean(const HistoryView& h, int tau) const;

    double multistep_P() const { return ms_P_; }
    double multistep_L() const { return ms_L_; }

private:
    PredictorModel() = default;
    void build_multistep_gains();

    PredictorKind kind_ = PredictorKind::Baseline;
    int n_ = 0;
    int d_ = 0;
    int T_ = 0;
    double rho_ = 0.0;
    Mat theta_;
    Mat noise_sqrt_;  // symmetric square root of I - rho^2 theta theta'
    int variant_ = 0;
    std::array<double, 3> var_{1.0, 1.0, 1.0};
    double ms_P_ = 0.0;
    double ms_L_ = 0.0;

    // MultiStep1D exact conditioning: for each t, gain rows for targets t and t+1
    // acting on the observation vector (w_0..w_{t-1}, v_0..v_t), plus the window gain.
    struct MsGain {
        Mat gain;      // 2 x obs
        Mat info;      // 2 x 2 (truncated later)
    };
    std::shared_ptr<const std::vector<MsGain>> ms_gains_;
};

/// Per-entry test MSE of a linear regressor from v_t (plus optional history window) to W_{t+offset}.
struct MseConfig {
    long train_rows = 64000;
    long val_rows = 9143;
    long test_rows = 16000;
    std::uint64_t seed = 1;
    int target_offset = 0;
    int threads = 0;
};

struct MseResult {
    Vec mse;          // per entry
    Vec std_error;    // per entry
    Mat weights;      // fitted slope, features x n
    Vec intercept;
    double ridge = 0.0;
    long train_rows = 0, test_rows = 0;
};

/// Rows are pooled across t; each row uses only (w_t, v_t) of one instance.
MseResult mse_per_entry(const PredictorModel& model, const MseConfig& cfg);

/// Paired test-MSE difference between two models on identical streams: returns per-entry
/// mse(a) - mse(b) and its std error (rows are common random numbers).
struct MseComparison {
    MseResult a, b;
    Vec diff, diff_se;
};
MseComparison mse_compare(const PredictorModel& a, const PredictorModel& b, const MseConfig& cfg);

}  // namespace ppower
