#include <cmath>

#include <gtest/gtest.h>

#include "ppower/bounds.hpp"
#include "ppower/error.hpp"
#include "ppower/presets.hpp"

using namespace ppower;

namespace {

CostConditioning unit_conditioning() {
    CostConditioning c;
    c.mu_x = c.ell_x = 1;
    c.mu_u = c.ell_u = 1;
    c.mu_B = c.ell_B = 1;
    return c;
}

SmoothFunction log_toy(double c) {
    SmoothFunction f;
    f.dim = 1;
    f.value = [c](const Vec& x) { return 0.5 * x[0] * x[0] + c * std::log1p(x[0] * x[0]); };
    f.grad = [c](const Vec& x) {
        Vec g(1);
        g[0] = x[0] + 2 * c * x[0] / (1 + x[0] * x[0]);
        return g;
    };
    return f;
}

}  // namespace

TEST(SigmaLower, UnitConstants) {
    EXPECT_DOUBLE_EQ(sigma_lower(unit_conditioning(), 1.0, 1.0, 1.0, 1), 0.125);
    EXPECT_EQ(sigma_lower(unit_conditioning(), 0.0, 1.0, 1.0, 1), 0.0);
    EXPECT_THROW(sigma_lower(unit_conditioning(), -1.0, 1.0, 1.0, 1), Error);
}

TEST(MuEll, NoDriftCollapsesToMuX) {
    CostConditioning c = unit_conditioning();
    c.mu_x = 0.7;
    c.ell_x = 1.3;
    const MuEllSequence s = mu_ell_recursion(c, 8);
    for (double m : s.mu) EXPECT_DOUBLE_EQ(m, 0.7);
    for (double l : s.ell) EXPECT_DOUBLE_EQ(l, 1.3);
}

TEST(MuEll, SmoothnessApproachesCap) {
    CostConditioning c = unit_conditioning();
    c.ell_A = 0.5;
    const MuEllSequence s = mu_ell_recursion(c, 60);
    EXPECT_DOUBLE_EQ(s.ell_cap, 2.0);
    EXPECT_NEAR(s.ell[0], 2.0, 1e-12);
    for (int t = 0; t <= 60; ++t) {
        EXPECT_LE(s.ell[t], s.ell_cap + 1e-15);
        EXPECT_GE(s.mu[t], s.mu_floor);
    }
}

TEST(MuEll, ScalarQuadraticMatchesRiccatiCurvature) {
    const LTVSystem sys = scalar_contractive(12);
    const RiccatiSolution ric = riccati_backward(sys);
    const MuEllSequence s = mu_ell_recursion(CostConditioning::from_quadratic(sys), 12);
    for (int t = 0; t <= 12; ++t) {
        EXPECT_NEAR(s.mu[t], 2 * ric.P[t](0, 0), 1e-12) << t;
        EXPECT_LE(s.mu[t], s.ell[t] + 1e-12);
    }
}

TEST(MuEll, RejectsBadConstants) {
    CostConditioning c = unit_conditioning();
    c.ell_A = 1.0;
    EXPECT_THROW(mu_ell_recursion(c, 3), Error);
    c = unit_conditioning();
    c.mu_x = 0;
    EXPECT_THROW(mu_ell_recursion(c, 3), Error);
}

TEST(PowerLowerBound, Basics) {
    EXPECT_EQ(power_lower_bound(std::vector<Mat>(3, Mat::Identity(2, 2)), std::vector<Mat>(3, Mat::Zero(2, 2))), 0.0);
    EXPECT_THROW(power_lower_bound(std::vector<Mat>(2, Mat::Identity(2, 2)), std::vector<Mat>(3, Mat::Zero(2, 2))),
                 Error);
    EXPECT_THROW(power_lower_bound(std::vector<Mat>(1, Mat::Identity(2, 2)), std::vector<Mat>(1, Mat::Zero(3, 3))),
                 Error);
    EXPECT_DOUBLE_EQ(power_lower_bound(std::vector<Mat>(10, Mat::Ones(1, 1)), std::vector<double>(10, 1.0)), 10.0);
}

TEST(PowerLowerBound, EqualsClosedFormForLqr) {
    const LTVSystem sys = double_integrator(40);
    const RiccatiSolution ric = riccati_backward(sys);
    const PredictorModel m = PredictorModel::affine_gaussian(0.5, skewed_theta(), 40);
    std::vector<Mat> M, S;
    for (int t = 0; t < 40; ++t) {
        M.push_back(ric.M[t]);
        S.push_back(expected_action_cov(ric, sys, m, t));
    }
    const double cf = prediction_power_closed_form(sys, ric, m);
    EXPECT_NEAR(power_lower_bound(M, S), cf, 1e-12 * cf);
}

TEST(ConditioningBound, BelowClosedForm) {
    for (double rho : {0.2, 0.5, 0.7}) {
        const LTVSystem sys = scalar_contractive(20);
        const PredictorModel m = PredictorModel::affine_gaussian(rho, Mat::Identity(1, 1), 20);
        const std::vector<double> lam = one_step_lambda(m);
        EXPECT_NEAR(lam[3], rho * rho, 1e-12);
        const double b = conditioning_lower_bound(CostConditioning::from_quadratic(sys), lam, 1);
        EXPECT_GT(b, 0.0);
        EXPECT_LE(b, prediction_power_closed_form(sys, riccati_backward(sys), m));
    }
}

TEST(InfConv, QuadraticPair) {
    const SmoothFunction f = SmoothFunction::quadratic(Mat::Identity(2, 2));
    const SmoothFunction w = SmoothFunction::quadratic(Mat::Identity(2, 2));
    Vec x(2);
    x << 1.0, -2.0;
    const InfConvResult r = infimal_convolution(f, w, Mat::Identity(2, 2), x);
    EXPECT_LT((r.u - x / 2).norm(), 1e-9);
    EXPECT_NEAR(r.value, x.squaredNorm() / 4, 1e-12);
    const InfConvResult z = infimal_convolution(f, w, Mat::Zero(2, 2), x);
    EXPECT_LT(z.u.norm(), 1e-12);
    EXPECT_NEAR(z.value, x.squaredNorm() / 2, 1e-12);
    EXPECT_THROW(infimal_convolution(f, w, Mat::Identity(3, 2), x), Error);
}

TEST(InfConv, GradientByFiniteDifferences) {
    Mat H(2, 2);
    H << 2.0, 0.3, 0.3, 1.0;
    SmoothFunction f = log_toy(0.1);
    const SmoothFunction w = SmoothFunction::quadratic(H);
    Mat B(2, 1);
    B << 1.0, 0.5;
    const SmoothFunction g = infimal_convolution_function(f, w, B);
    Vec x(2);
    x << 0.7, -1.1;
    const Vec gr = g.grad(x);
    for (int i = 0; i < 2; ++i) {
        const double h = 1e-5;
        Vec a = x, b = x;
        a[i] += h;
        b[i] -= h;
        EXPECT_NEAR(gr[i], (g.value(a) - g.value(b)) / (2 * h), 1e-6);
    }
}

TEST(Curvature, ScaledIdentity) {
    const SmoothFunction g = SmoothFunction::quadratic(3.0 * Mat::Identity(3, 3));
    const CurvatureEstimate c = curvature_probe(g, Vec::Constant(3, -2), Vec::Constant(3, 2), 500);
    EXPECT_NEAR(c.mu_hat, 3.0, 1e-12);
    EXPECT_NEAR(c.ell_hat, 3.0, 1e-12);
    EXPECT_EQ(c.chords, 500);
}

TEST(Curvature, InfConvOfQuadraticsStaysStronglyConvex) {
    // 0.5|u|^2 inf-conv 0.5 x'Hx, H = diag(2, 1): Hessian H (I + H)^{-1} = diag(2/3, 1/2)
    Mat H = Mat::Zero(2, 2);
    H(0, 0) = 2;
    H(1, 1) = 1;
    const SmoothFunction g = infimal_convolution_function(SmoothFunction::quadratic(Mat::Identity(2, 2)),
                                                          SmoothFunction::quadratic(H), Mat::Identity(2, 2));
    const CurvatureEstimate c = curvature_probe(g, Vec::Constant(2, -1), Vec::Constant(2, 1), 200);
    // secants sit inside the Hessian's spectrum and approach its ends
    EXPECT_GE(c.mu_hat, 0.5 - 1e-6);
    EXPECT_LE(c.ell_hat, 2.0 / 3.0 + 1e-6);
    EXPECT_LT(c.mu_hat, 0.51);
    EXPECT_GT(c.ell_hat, 0.65);
}

TEST(Curvature, LogToyWithinAnalyticRange) {
    const double c = 0.1;
    const CurvatureEstimate e = curvature_probe(log_toy(c), Vec::Constant(1, -6), Vec::Constant(1, 6), 2000);
    EXPECT_GE(e.mu_hat, 1 - c / 4 - 1e-12);
    EXPECT_LE(e.ell_hat, 1 + 2 * c + 1e-12);
    EXPECT_LT(e.mu_hat, 1.0);
    EXPECT_GT(e.ell_hat, 1.0);
}

TEST(Passthrough, LinearMapAttainsBound) {
    const auto g = [](const Vec& x) { return Vec(2.0 * x); };
    const PassthroughReport r =
        variance_passthrough_check(g, PassthroughCertificate{2.0, 2.0, 0.0}, Vec::Zero(1), Mat::Identity(1, 1), 200000);
    EXPECT_NEAR(r.lambda_min, 4.0, 0.05);
    EXPECT_DOUBLE_EQ(r.bound, 4.0);
    EXPECT_TRUE(r.pass);
}

TEST(Passthrough, DiagonalMap) {
    const auto g = [](const Vec& x) {
        Vec y(2);
        y << x[0] + 0.1 * std::tanh(x[0]), 2 * x[1];
        return y;
    };
    Mat S(2, 2);
    S << 1.0, 0.3, 0.3, 2.0;
    const PassthroughReport r =
        variance_passthrough_check(g, PassthroughCertificate{1.0, 2.0, 0.1}, Vec::Zero(2), S, 200000, 3);
    EXPECT_TRUE(r.pass);
    EXPECT_GT(r.lambda_min, r.bound);
}

TEST(Passthrough, CertificateRequired) {
    const auto g = [](const Vec& x) { return Vec(x); };
    try {
        variance_passthrough_check(g, std::nullopt, Vec::Zero(1), Mat::Identity(1, 1), 1000);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::CertificateMissing);
    }
    // a certificate the map contradicts
    EXPECT_THROW(variance_passthrough_check(g, PassthroughCertificate{2.0, 3.0, 0.0}, Vec::Zero(1),
                                            Mat::Identity(1, 1), 1000),
                 Error);
}

TEST(SolutionVariance, HoldsOnRandomQuadratics) {
    Mat F(2, 2), W(3, 3), B(3, 2), S(3, 3);
    F << 2.0, 0.2, 0.2, 1.0;
    W << 1.5, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 2.0;
    B << 1.0, 0.0, 0.3, 1.0, -0.5, 0.4;
    S << 1.0, 0.2, 0.1, 0.2, 1.5, 0.0, 0.1, 0.0, 0.8;
    const SolutionVarianceReport r = solution_variance_check(F, W, B, S, 100000, 2);
    EXPECT_TRUE(r.pass);
    EXPECT_GT(r.trace, r.bound);
    // exact trace of G S G'
    const Mat G = (F + B.transpose() * W * B).inverse() * B.transpose() * W;
    const double exact = (G * S * G.transpose()).trace();
    EXPECT_NEAR(r.trace, exact, 4 * r.std_error + 1e-3);
}

TEST(Conjugate, QuadraticSpotCheck) {
    Mat H(2, 2);
    H << 2.0, 0.5, 0.5, 1.0;
    Vec y(2);
    y << 0.3, -0.7;
    EXPECT_NEAR(conjugate_numeric(SmoothFunction::quadratic(H), y), 0.5 * y.dot(H.inverse() * y), 1e-10);
}
