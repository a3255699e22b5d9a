#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ppower/lqr.hpp"
#include "ppower/predictors.hpp"

namespace ppower {

/// Strong convexity / smoothness constants of h^x, h^u and the spectral ranges of A'A, B'B.
struct CostConditioning {
    double mu_x = 0, ell_x = 0;
    double mu_u = 0, ell_u = 0;
    double mu_A = 0, ell_A = 0;
    double mu_B = 0, ell_B = 0;

    /// Throws InvalidModel unless 0 <= mu <= ell pairwise, mu_x > 0 and ell_A < 1.
    void validate() const;
    /// Constants of x'Qx, u'Ru (Hessians 2Q, 2R) across t, the terminal cost included.
    static CostConditioning from_quadratic(const LTVSystem& sys);
};

/// Which constant stands in for b^2 in the strong-convexity recursion.
enum class BSquared { EllB, MuB };

struct MuEllSequence {
    std::vector<double> mu;   // T+1, mu[T] = mu_x
    std::vector<double> ell;  // T+1, ell[T] = ell_x
    double mu_floor = 0;      // mu_x
    double ell_cap = 0;       // ell_x / (1 - ell_A)
};

MuEllSequence mu_ell_recursion(const CostConditioning& c, int T, BSquared b2 = BSquared::EllB);

/// n lambda mu_{t+1}^2 mu_B / (2 (ell_u + ell_{t+1} sqrt(ell_B))^2)
double sigma_lower(const CostConditioning& c, double lambda, double mu_next, double ell_next, int n);

/// sum_t Tr{M_t Sigma_t}
double power_lower_bound(const std::vector<Mat>& M, const std::vector<Mat>& Sigma);
/// sum_t mu_min(M_t) sigma_t
double power_lower_bound(const std::vector<Mat>& M, const std::vector<double>& sigma);

/// sum_t mu_u sigma_t with the recursion's mu, ell
double conditioning_lower_bound(const CostConditioning& c, const std::vector<double>& lambda, int n,
                                BSquared b2 = BSquared::EllB);

/// lambda_t: smallest eigenvalue of Cov(W_t) - Cov(W_t | V_t) for one-step predictors
std::vector<double> one_step_lambda(const PredictorModel& model);

/// Value and gradient of a differentiable function on R^dim.
struct SmoothFunction {
    int dim = 0;
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> grad;

    static SmoothFunction quadratic(const Mat& H, const Vec& b = Vec());  // 0.5 x'Hx + b'x
};

struct InfConvResult {
    double value = 0.0;
    Vec u;
    int iterations = 0;
};

/// min_u f(u) + omega(x - B u) by gradient descent with Barzilai-Borwein steps and backtracking.
InfConvResult infimal_convolution(const SmoothFunction& f, const SmoothFunction& omega, const Mat& B, const Vec& x,
                                  double grad_tol = 1e-10, int max_iter = 100000);

/// The infimal convolution as a SmoothFunction, gradient grad omega(x - B u(x)).
SmoothFunction infimal_convolution_function(const SmoothFunction& f, const SmoothFunction& omega, const Mat& B);

/// sup_x <y, x> - g(x) by gradient ascent; g must be strongly convex.
double conjugate_numeric(const SmoothFunction& g, const Vec& y, double grad_tol = 1e-10);

struct CurvatureEstimate {
    double mu_hat = 0.0;
    double ell_hat = 0.0;
    long chords = 0;
};

/// Secant bounds over chords between random points of the box and short chords around them.
CurvatureEstimate curvature_probe(const SmoothFunction& g, const Vec& lo, const Vec& hi, long chords,
                                  std::uint64_t seed = 1);

/// User-supplied constants for g: <g(x)-g(y), x-y> >= gamma |x-y|^2, |g(x)-g(y)| <= L |x-y|,
/// and Hessians of each g_i bounded by ell.
struct PassthroughCertificate {
    double gamma = 0.0;
    double L = 0.0;
    double ell = 0.0;
};

struct PassthroughReport {
    double lambda_min = 0.0;  // of the sample covariance of g(X)
    double std_error = 0.0;   // batch-means error of lambda_min
    double bound = 0.0;       // mu gamma^2
    double mu = 0.0;          // smallest eigenvalue of Cov(X)
    long samples = 0;
    bool pass = false;        // lambda_min >= bound - 3 std_error
};

/// X ~ N(mean, Sigma). Throws CertificateMissing when no certificate is given or a random
/// secant probe contradicts it.
PassthroughReport variance_passthrough_check(const std::function<Vec(const Vec&)>& g,
                                             const std::optional<PassthroughCertificate>& cert, const Vec& mean,
                                             const Mat& Sigma, long samples, std::uint64_t seed = 1,
                                             int threads = 0);

struct SolutionVarianceReport {
    double trace = 0.0;      // Tr of the sample covariance of u(X)
    double std_error = 0.0;
    double bound = 0.0;      // n sigma0 mu_w^2 s_min(B)^2 / (2 (ell_f + ell_w |B|)^2)
    long samples = 0;
    bool pass = false;       // trace >= bound - 3 std_error
};

/// u(x) = argmin 0.5 u'Fu + 0.5 (x - Bu)' W (x - Bu), X ~ N(0, Sigma), sigma0 = lambda_min(Sigma).
SolutionVarianceReport solution_variance_check(const Mat& F, const Mat& W, const Mat& B, const Mat& Sigma,
                                               long samples, std::uint64_t seed = 1, int threads = 0);

}  // namespace ppower
