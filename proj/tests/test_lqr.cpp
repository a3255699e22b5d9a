#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ppower/error.hpp"
#include "ppower/io.hpp"
#include "ppower/lqr.hpp"
#include "ppower/predictors.hpp"
#include "ppower/presets.hpp"

using namespace ppower;

namespace {

const double kGolden = (1.0 + std::sqrt(5.0)) / 2.0;

Mat m1(double v) { return Mat::Constant(1, 1, v); }

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> out;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        out.push_back(cells);
    }
    return out;
}

}  // namespace

TEST(Riccati, ScalarFixedPointIsStationary) {
    const RiccatiSolution r = riccati_backward(scalar_unit(20));
    for (int t = 0; t <= 20; ++t) EXPECT_NEAR(r.P[t](0, 0), kGolden, 1e-12);
    for (int t = 0; t < 20; ++t) EXPECT_NEAR(r.K[t](0, 0), kGolden - 1.0, 1e-12);
}

TEST(Riccati, NoControlAuthority) {
    Mat A(2, 2);
    A << 0.9, 0.2, 0.0, 0.7;
    const LTVSystem sys =
        LTVSystem::time_invariant(A, Mat::Zero(2, 1), Mat::Identity(2, 2), m1(1), Mat::Identity(2, 2), Vec::Zero(2), 5);
    const RiccatiSolution r = riccati_backward(sys);
    for (int t = 0; t < 5; ++t) {
        EXPECT_EQ(r.K[t].norm(), 0.0);
        EXPECT_LT((r.P[t] - (Mat::Identity(2, 2) + A.transpose() * r.P[t + 1] * A)).norm(), 1e-12);
    }
}

TEST(Riccati, DoubleIntegratorGolden) {
    // reference values from an independent numpy recursion, P_T = I
    const LTVSystem di = double_integrator(6);
    const LTVSystem sys = LTVSystem::time_invariant(di.A[0], di.B[0], di.Q[0], di.R[0], Mat::Identity(2, 2),
                                                    Vec::Zero(2), 6);
    const auto rows = read_csv(std::string(PPOWER_TEST_DATA) + "/double_integrator_T6_PT_identity.csv");
    ASSERT_EQ(rows.size(), 8u);
    const RiccatiSolution r = riccati_backward(sys);
    for (int t = 0; t <= 6; ++t) {
        const auto& row = rows[t + 1];
        for (int k = 0; k < 4; ++k) EXPECT_NEAR(r.P[t](k / 2, k % 2), std::stod(row[1 + k]), 1e-12);
        if (t < 6)
            for (int k = 0; k < 2; ++k) EXPECT_NEAR(r.K[t](0, k), std::stod(row[5 + k]), 1e-13);
    }
}

TEST(Riccati, DareMatchesSchurSolver) {
    // scipy.linalg.solve_discrete_are on the double integrator
    const LTVSystem di = double_integrator(1);
    Mat ref(2, 2);
    ref << 18.34215869, 10.90463134, 10.90463134, 18.91098472;
    EXPECT_LT((di.PT - ref).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Riccati, PhiSemigroupAndInverse) {
    const LTVSystem sys = double_integrator(12);
    const RiccatiSolution r = riccati_backward(sys);
    EXPECT_TRUE(r.has_dense_phi());
    for (int t1 = 0; t1 <= 12; ++t1) {
        EXPECT_LT((r.phi(t1, t1) - Mat::Identity(2, 2)).norm(), 1e-15);
        for (int t2 = t1; t2 <= 12; t2 += 3)
            for (int t3 = t2; t3 <= 12; t3 += 2) EXPECT_LT((r.phi(t3, t1) - r.phi(t3, t2) * r.phi(t2, t1)).norm(), 1e-10);
    }
    for (int t = 0; t < 12; ++t) EXPECT_LT((r.M[t] * r.Minv[t] - Mat::Identity(1, 1)).norm(), 1e-12);
}

TEST(Riccati, DifferencesShrinkPastBurnIn) {
    const LTVSystem di = double_integrator(200);
    const LTVSystem sys = LTVSystem::time_invariant(di.A[0], di.B[0], di.Q[0], di.R[0], Mat::Identity(2, 2),
                                                    Vec::Zero(2), 200);
    const RiccatiSolution r = riccati_backward(sys);
    double prev = 1e300;
    for (int t = 150; t >= 1; --t) {
        const double d = (r.P[t - 1] - r.P[t]).norm();
        EXPECT_LE(d, prev * (1 + 1e-9) + 1e-13);
        prev = d;
    }
    EXPECT_LT((r.P[0] - di.PT).norm(), 1e-8);
}

TEST(Riccati, SingularInputWeightRejected) {
    // R = 0 and B = 0 make R + B'PB singular
    const LTVSystem sys = LTVSystem::time_invariant(m1(1), m1(0), m1(1), m1(0), m1(1), Vec::Zero(1), 3);
    try {
        riccati_backward(sys);
        FAIL() << "expected NonInvertible";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NonInvertible);
    }
}

TEST(Riccati, ValidationRejectsBadShapes) {
    LTVSystem sys = scalar_unit(3);
    sys.B[1] = Mat::Zero(2, 1);
    EXPECT_THROW(sys.validate(), Error);
    LTVSystem neg = scalar_unit(3);
    neg.Q[0] = m1(-1);
    EXPECT_THROW(neg.validate(), Error);
}

TEST(Feedforward, ZeroMeansGiveZero) {
    const LTVSystem sys = double_integrator(10);
    const RiccatiSolution r = riccati_backward(sys);
    EXPECT_EQ(optimal_feedforward(r, sys, 3, Mat::Zero(2, 7)).norm(), 0.0);
}

TEST(Feedforward, ScalarLastStep) {
    const LTVSystem sys = scalar_unit(5);
    const RiccatiSolution r = riccati_backward(sys);
    const Vec u = optimal_feedforward(r, sys, 4, Mat::Ones(1, 1));
    EXPECT_NEAR(u(0), -kGolden / (1 + kGolden), 1e-12);
    EXPECT_NEAR(u(0), -0.618034, 1e-6);
}

TEST(Feedforward, DoubleIntegratorLastStep) {
    const LTVSystem sys = double_integrator(8);
    const RiccatiSolution r = riccati_backward(sys);
    Mat w = Mat::Zero(2, 1);
    w(0, 0) = 1.0;
    const Vec u = optimal_feedforward(r, sys, 7, w);
    const Vec ref = -r.Minv[7] * sys.B[7].transpose() * r.P[8] * w.col(0);
    EXPECT_LT((u - ref).norm(), 1e-14);
}

TEST(Feedforward, SurrogateTwoSteps) {
    const LTVSystem sys = scalar_unit(6);
    const RiccatiSolution r = riccati_backward(sys);
    const Vec u = surrogate_optimal_action(r, sys, 4, Mat::Ones(1, 2));
    const double P = kGolden, L = 1 - (kGolden - 1);
    EXPECT_NEAR(u(0), -(P + L * P) / (1 + P), 1e-12);
    EXPECT_NEAR(u(0), -0.854, 1e-3);
    // same as the feedforward when the means are the realised values
    EXPECT_NEAR(u(0), optimal_feedforward(r, sys, 4, Mat::Ones(1, 2))(0), 1e-15);
}

TEST(Feedforward, SurrogateActionsMatchPerStep) {
    const LTVSystem sys = double_integrator(15);
    const RiccatiSolution r = riccati_backward(sys);
    const PredictorModel m = PredictorModel::affine_gaussian(0.5, Mat::Identity(2, 2), 15);
    const ProblemInstance inst = m.sample_instance(3, 1);
    const Mat U = surrogate_actions(r, sys, inst.W);
    for (int t = 0; t < 15; ++t) {
        const Mat wt = inst.W.bottomRows(15 - t).transpose();
        EXPECT_LT((U.row(t).transpose() - surrogate_optimal_action(r, sys, t, wt)).norm(), 1e-12);
    }
}

TEST(Feedforward, OptimalActionDecomposes) {
    const LTVSystem sys = double_integrator(10);
    const RiccatiSolution r = riccati_backward(sys);
    Vec x(2);
    x << 0.3, -1.2;
    Mat means = Mat::Zero(2, 6);
    means(1, 0) = 0.7;
    EXPECT_LT((optimal_action(r, sys, 4, x, Mat::Zero(2, 6)) + r.K[4] * x).norm(), 1e-15);
    EXPECT_LT((optimal_action(r, sys, 4, Vec::Zero(2), means) - optimal_feedforward(r, sys, 4, means)).norm(), 1e-15);
    EXPECT_THROW(optimal_feedforward(r, sys, 4, Mat::Zero(3, 6)), Error);
}

TEST(ClosedForm, ZeroRhoGivesZero) {
    const LTVSystem sys = double_integrator(30);
    const RiccatiSolution r = riccati_backward(sys);
    EXPECT_EQ(prediction_power_closed_form(sys, r, PredictorModel::affine_gaussian(0.0, Mat::Identity(2, 2), 30)), 0.0);
    EXPECT_EQ(prediction_power_closed_form(sys, r, PredictorModel::baseline(2, 30)), 0.0);
}

TEST(ClosedForm, AffineFormulaTimeInvariant) {
    // rho^2 T Tr{theta' theta P H P} with H = B Minv B', evaluated directly
    const int T = 100;
    const LTVSystem sys = double_integrator(T);
    const RiccatiSolution r = riccati_backward(sys);
    const Mat& P = sys.PT;
    const Mat M = sys.R[0] + sys.B[0].transpose() * P * sys.B[0];
    const Mat H = sys.B[0] * M.inverse() * sys.B[0].transpose();
    for (const Mat& th : {Mat(Mat::Identity(2, 2)), skewed_theta()}) {
        const double direct = 0.25 * T * (th.transpose() * th * P * H * P).trace();
        const double cf = prediction_power_closed_form(sys, r, PredictorModel::affine_gaussian(0.5, th, T));
        EXPECT_NEAR(cf, direct, 1e-9 * direct);
    }
    EXPECT_NEAR(prediction_power_closed_form(sys, r, PredictorModel::affine_gaussian(0.5, Mat::Identity(2, 2), T)) / T,
                1.0018762, 1e-7);
    EXPECT_NEAR(prediction_power_closed_form(sys, r, PredictorModel::affine_gaussian(0.5, skewed_theta(), T)) / T,
                1.86030, 1e-5);
}

TEST(ClosedForm, BinaryExampleEqualsHorizon) {
    const LTVSystem sys = binary_example(10);
    const RiccatiSolution r = riccati_backward(sys);
    EXPECT_EQ(prediction_power_closed_form(sys, r, PredictorModel::binary_perfect(1, 10)), 10.0);
}

TEST(ClosedForm, NonnegativeAcrossFamilies) {
    const LTVSystem s2 = double_integrator(25);
    const RiccatiSolution r2 = riccati_backward(s2);
    for (double rho : {0.1, 0.4, 0.7}) {
        EXPECT_GE(prediction_power_closed_form(s2, r2, PredictorModel::affine_gaussian(rho, skewed_theta(), 25)), 0.0);
        EXPECT_GE(prediction_power_closed_form(s2, r2, PredictorModel::shifted_affine_gaussian(rho, skewed_theta(), 25)),
                  0.0);
    }
    const LTVSystem s1 = scalar_unit(25);
    const RiccatiSolution r1 = riccati_backward(s1);
    for (int v : {1, 2}) EXPECT_GT(prediction_power_closed_form(s1, r1, PredictorModel::multistep_1d(v, 25)), 0.0);
}

TEST(RiccatiCsv, OneRowPerStep) {
    const std::string csv = riccati_csv(riccati_backward(scalar_unit(3)));
    std::stringstream ss(csv);
    std::string line;
    int n = 0;
    while (std::getline(ss, line)) ++n;
    EXPECT_EQ(n, 5);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,P_00,K_00");
}

TEST(SystemJson, RoundTrip) {
    LTVSystem sys = double_integrator(4);
    sys.Q[2] = 3.0 * Mat::Identity(2, 2);  // per-step list
    sys.x0 << 1.5, -0.25;
    const LTVSystem back = system_from_json(system_to_json(sys));
    ASSERT_EQ(back.T, 4);
    for (int t = 0; t < 4; ++t) {
        EXPECT_EQ(back.A[t], sys.A[t]);
        EXPECT_EQ(back.Q[t], sys.Q[t]);
    }
    EXPECT_EQ(back.PT, sys.PT);
    EXPECT_EQ(back.x0, sys.x0);
}

TEST(SystemJson, ScalarShorthandAndErrors) {
    const LTVSystem s = system_from_json(R"({"T":3,"A":1,"B":1,"Q":1,"R":1,"PT":2})");
    EXPECT_EQ(s.n(), 1);
    EXPECT_EQ(s.PT(0, 0), 2.0);
    try {
        system_from_json(R"({"T":3,"A":1,"B":1,"Q":1,"PT":2})");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
        EXPECT_NE(std::string(e.what()).find("R"), std::string::npos);
    }
}
