#include <cmath>

#include <gtest/gtest.h>

#include "ppower/error.hpp"
#include "ppower/presets.hpp"
#include "ppower/scalar_dp.hpp"

using namespace ppower;

TEST(GaussHermite, Moments) {
    std::vector<double> x, w;
    gauss_hermite(20, x, w);
    double m0 = 0, m1 = 0, m2 = 0, m4 = 0, m6 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        m0 += w[i];
        m1 += w[i] * x[i];
        m2 += w[i] * x[i] * x[i];
        m4 += w[i] * std::pow(x[i], 4);
        m6 += w[i] * std::pow(x[i], 6);
    }
    EXPECT_NEAR(m0, 1.0, 1e-13);
    EXPECT_NEAR(m1, 0.0, 1e-13);
    EXPECT_NEAR(m2, 1.0, 1e-12);
    EXPECT_NEAR(m4, 3.0, 1e-11);
    EXPECT_NEAR(m6, 15.0, 1e-10);
}

TEST(ScalarLaw, FromPredictors) {
    const ScalarLaw a = scalar_law(PredictorModel::affine_gaussian(0.6, Mat::Identity(1, 1), 3));
    EXPECT_NEAR(a.mean.variance(), 0.36, 1e-15);
    EXPECT_NEAR(a.residual.variance(), 0.64, 1e-15);
    const ScalarLaw b = scalar_law(PredictorModel::binary_perfect(1, 3));
    EXPECT_DOUBLE_EQ(b.mean.variance(), 1.0);
    EXPECT_DOUBLE_EQ(b.residual.variance(), 0.0);
    const ScalarLaw z = scalar_law(PredictorModel::baseline(1, 3));
    EXPECT_DOUBLE_EQ(z.mean.variance(), 0.0);
    EXPECT_DOUBLE_EQ(z.residual.variance(), 1.0);
    EXPECT_THROW(scalar_law(PredictorModel::affine_gaussian(0.5, Mat::Identity(2, 2), 3)), Error);
    EXPECT_THROW(ScalarProblem::from_lqr(double_integrator(3), z), Error);
}

TEST(ScalarDp, MatchesRiccatiWithoutPredictions) {
    const LTVSystem sys = scalar_contractive(4);
    const RiccatiSolution ric = riccati_backward(sys);
    const ScalarLaw law = scalar_law(PredictorModel::baseline(1, 4));
    const ScalarDp dp(ScalarProblem::from_lqr(sys, law), law);
    for (int t = 0; t < 4; ++t)
        for (double x : {-2.0, -0.5, 1.0, 3.0}) {
            EXPECT_NEAR(dp.policy(t, x, 0.0), -ric.K[t](0, 0) * x, 1e-6) << t;
            EXPECT_NEAR(dp.cost_to_go(t, x, 0.0) - dp.cost_to_go(t, 0.0, 0.0), ric.P[t](0, 0) * x * x, 1e-4) << t;
        }
}

TEST(ScalarDp, AffineFeedforward) {
    // u = -K x - Minv B P_{t+1} m for a one-step predictor
    const LTVSystem sys = scalar_contractive(4);
    const RiccatiSolution ric = riccati_backward(sys);
    const ScalarLaw law = scalar_law(PredictorModel::affine_gaussian(0.5, Mat::Identity(1, 1), 4));
    const ScalarDp dp(ScalarProblem::from_lqr(sys, law), law);
    for (int t = 0; t < 4; ++t) {
        const double ff = -ric.Minv[t](0, 0) * ric.P[t + 1](0, 0);
        EXPECT_NEAR(dp.policy(t, 0.8, 0.4), -ric.K[t](0, 0) * 0.8 + ff * 0.4, 1e-6) << t;
    }
}

TEST(Condition1, LqrToyMatchesQuadraticGrowth) {
    const LTVSystem sys = scalar_contractive(4);
    const RiccatiSolution ric = riccati_backward(sys);
    const ScalarProblem prob =
        ScalarProblem::from_lqr(sys, scalar_law(PredictorModel::affine_gaussian(0.5, Mat::Identity(1, 1), 4)));
    for (int t = 0; t < 4; ++t) {
        const Condition1Result r = condition1_check(prob, t);
        EXPECT_NEAR(r.M, ric.M[t](0, 0), 0.05 * ric.M[t](0, 0)) << t;
        EXPECT_LT(r.spread, 0.05 * ric.M[t](0, 0));
    }
}

TEST(Condition1, BinaryExample) {
    const ScalarProblem prob =
        ScalarProblem::from_lqr(binary_example(4), scalar_law(PredictorModel::binary_perfect(1, 4)));
    EXPECT_NEAR(condition1_check(prob, 1).M, 1.0, 0.02);
}

TEST(Condition2, DeterministicGivesZero) {
    ScalarProblem prob = ScalarProblem::from_lqr(scalar_contractive(3), deterministic_law());
    CheckOptions opt;
    opt.outer = 50;
    const Condition2Result r = condition2_check(prob, 1, opt);
    EXPECT_NEAR(r.sigma, 0.0, 1e-12);
}

TEST(Condition2, BinaryGivesOne) {
    const ScalarProblem prob =
        ScalarProblem::from_lqr(binary_example(4), scalar_law(PredictorModel::binary_perfect(1, 4)));
    CheckOptions opt;
    opt.outer = 100;
    EXPECT_NEAR(condition2_check(prob, 2, opt).sigma, 1.0, 0.02);
}

TEST(Condition2, LqrAnalytic) {
    const LTVSystem sys = scalar_contractive(4);
    const RiccatiSolution ric = riccati_backward(sys);
    const double rho = 0.5;
    const ScalarProblem prob =
        ScalarProblem::from_lqr(sys, scalar_law(PredictorModel::affine_gaussian(rho, Mat::Identity(1, 1), 4)));
    CheckOptions opt;
    opt.outer = 200;
    for (int t = 0; t < 4; ++t) {
        const double g = ric.Minv[t](0, 0) * ric.P[t + 1](0, 0);
        const Condition2Result r = condition2_check(prob, t, opt);
        EXPECT_NEAR(r.sigma, g * g * rho * rho, 1e-4 + 0.01 * g * g * rho * rho) << t;
    }
}

TEST(Condition, BudgetEnforced) {
    const ScalarProblem big =
        ScalarProblem::from_lqr(scalar_contractive(5), scalar_law(PredictorModel::baseline(1, 5)));
    try {
        condition1_check(big, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::BudgetExceeded);
    }
    const ScalarProblem small =
        ScalarProblem::from_lqr(scalar_contractive(3), scalar_law(PredictorModel::baseline(1, 3)));
    CheckOptions opt;
    opt.outer = 1001;
    EXPECT_THROW(condition2_check(small, 0, opt), Error);
    opt.outer = 100;
    opt.inner = 10001;
    EXPECT_THROW(condition2_check(small, 0, opt), Error);
}

TEST(ScalarPowerMc, ProgrammeMatchesClosedForm) {
    const LTVSystem sys = scalar_contractive(4);
    const PredictorModel m = PredictorModel::affine_gaussian(0.7, Mat::Identity(1, 1), 4);
    const double cf = prediction_power_closed_form(sys, riccati_backward(sys), m);
    const ScalarPowerReport r = scalar_power_mc(ScalarProblem::from_lqr(sys, scalar_law(m)), 20000, 3);
    EXPECT_NEAR(r.exact, cf, 1e-4 * cf);
    EXPECT_NEAR(r.estimate, cf, 4 * r.std_error);
    const ScalarPowerReport again = scalar_power_mc(ScalarProblem::from_lqr(sys, scalar_law(m)), 20000, 3, 1);
    EXPECT_EQ(r.estimate, again.estimate);
}

TEST(NonquadraticToy, PositivePower) {
    const ScalarProblem prob = nonquadratic_toy(4, 0.6);
    const ScalarPowerReport r = scalar_power_mc(prob, 5000, 1);
    EXPECT_GT(r.exact, 0.0);
    EXPECT_NEAR(r.estimate, r.exact, 4 * r.std_error + 1e-3);
}
