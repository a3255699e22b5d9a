#include <cmath>

#include <gtest/gtest.h>

#include "ppower/error.hpp"
#include "ppower/policy_opt.hpp"
#include "ppower/presets.hpp"
#include "ppower/rng.hpp"

using namespace ppower;

namespace {

Mat stationary_gain(const LTVSystem& sys) {
    const Mat& P = sys.PT;  // double integrator presets end in the stationary solution
    const Mat M = sys.R[0] + sys.B[0].transpose() * P * sys.B[0];
    return M.ldlt().solve(sys.B[0].transpose() * P * sys.A[0]);
}

PolicyClassSpec spec_for(const LTVSystem& sys, int d) {
    PolicyClassSpec s;
    s.K = stationary_gain(sys);
    s.upsilon0 = Mat::Zero(sys.m(), d);
    return s;
}

}  // namespace

TEST(PolicyOpt, StepSchedule) {
    PolicyClassSpec s;
    EXPECT_DOUBLE_EQ(s.eta(0), 0.002);
    EXPECT_DOUBLE_EQ(s.eta(3000), 0.002 * 0.5);
    s.eta0 = 1.0;
    EXPECT_DOUBLE_EQ(s.eta(1000), std::pow(2.0, -0.5));
}

TEST(PolicyOpt, SensitivityGradientMatchesFiniteDifferences) {
    const LTVSystem sys = double_integrator(1);
    const Mat K = stationary_gain(sys);
    Mat ups(1, 2);
    ups << -0.3, 0.8;
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
        Mat W(6, 2), V(6, 2);
        for (int t = 0; t < 6; ++t) {
            StreamRng r(5, trial, t, 0);
            for (int j = 0; j < 2; ++j) {
                W(t, j) = r.normal();
                V(t, j) = r.normal();
            }
        }
        Vec x0(2);
        x0 << 0.4, -0.2;
        const SensitivityProbe p = sensitivity_probe(sys, K, ups, x0, W, V);
        for (int k = 0; k < 2; ++k) {
            const double h = 1e-5;
            Mat up = ups, dn = ups;
            up(0, k) += h;
            dn(0, k) -= h;
            const double fd = (sensitivity_probe(sys, K, up, x0, W, V).cost - sensitivity_probe(sys, K, dn, x0, W, V).cost) /
                              (2 * h);
            EXPECT_NEAR(p.grad(k), fd, 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST(PolicyOpt, BaselineModelFreezesUpsilon) {
    const LTVSystem sys = double_integrator(500);
    PolicyClassSpec s = spec_for(sys, 2);
    s.upsilon0 << 0.1, -0.2;
    const OnlineRunRecord rec = online_optimize(sys, PredictorModel::baseline(2, 500), s, 1);
    EXPECT_EQ(rec.upsilon_final, s.upsilon0);
    for (double v : rec.improvement) EXPECT_EQ(v, 0.0);
}

TEST(PolicyOpt, RecordLayout) {
    const LTVSystem sys = double_integrator(1000);
    PolicyClassSpec s = spec_for(sys, 2);
    s.record_every = 100;
    s.snapshot_every = 250;
    const OnlineRunRecord rec =
        online_optimize(sys, PredictorModel::affine_gaussian(0.5, Mat::Identity(2, 2), 1000), s, 2);
    EXPECT_EQ(rec.times.size(), rec.improvement.size());
    EXPECT_EQ(rec.times.front(), 0);
    EXPECT_EQ(rec.times.back(), 999);
    EXPECT_EQ(rec.snapshot_times.size(), 4u);
    for (std::size_t i = 0; i < rec.times.size(); ++i)
        EXPECT_NEAR(rec.improvement[i],
                    (rec.baseline_cumulative_cost[i] - rec.cumulative_cost[i]) / (rec.times[i] + 1.0), 1e-12);
}

TEST(PolicyOpt, DivergenceReported) {
    const LTVSystem sys = double_integrator(3000);
    PolicyClassSpec s = spec_for(sys, 2);
    s.eta0 = 5.0;
    try {
        online_optimize(sys, PredictorModel::affine_gaussian(0.5, Mat::Identity(2, 2), 3000), s, 3);
        FAIL() << "expected Divergence";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Divergence);
    }
}

TEST(PolicyOpt, ReplicatesIndependentOfThreads) {
    const LTVSystem sys = double_integrator(2000);
    const PolicyClassSpec s = spec_for(sys, 2);
    const PredictorModel m = PredictorModel::shifted_affine_gaussian(0.5, Mat::Identity(2, 2), 2000);
    const auto a = online_optimize_replicates(sys, m, s, 4, 3, 1);
    const auto b = online_optimize_replicates(sys, m, s, 4, 3, 3);
    for (int r = 0; r < 3; ++r) {
        EXPECT_EQ(a[r].improvement, b[r].improvement);
        EXPECT_EQ(a[r].upsilon_final, b[r].upsilon_final);
    }
    EXPECT_NE(a[0].improvement, a[1].improvement);
}

TEST(Lyapunov, MatchesDirectSum) {
    Mat F(2, 2);
    F << 0.5, 0.2, -0.1, 0.3;
    Mat C(2, 2);
    C << 1.0, 0.3, 0.3, 2.0;
    const Mat X = lyapunov_doubling(F, C);
    EXPECT_LT((X - (F * X * F.transpose() + C)).norm(), 1e-12);
    Mat S = Mat::Zero(2, 2), Fk = Mat::Identity(2, 2);
    for (int k = 0; k < 200; ++k) {
        S += Fk * C * Fk.transpose();
        Fk = F * Fk;
    }
    EXPECT_LT((X - S).norm(), 1e-12);
    EXPECT_THROW(lyapunov_doubling(1.1 * Mat::Identity(2, 2), C), Error);
}

TEST(InClass, ScenarioOneContainsOptimalPolicy) {
    const LTVSystem sys = double_integrator(100);
    const Mat K = stationary_gain(sys);
    const InClassOptimum o =
        optimal_in_class_improvement(sys, PredictorModel::affine_gaussian(0.5, Mat::Identity(2, 2), 100), K);
    EXPECT_NEAR(o.improvement, 1.0018762, 1e-6);
    // the optimum is -Minv B'P rho theta'
    const Mat M = sys.R[0] + sys.B[0].transpose() * sys.PT * sys.B[0];
    const Mat ref = -M.inverse() * sys.B[0].transpose() * sys.PT * 0.5;
    EXPECT_LT((o.upsilon - ref).norm(), 1e-8);
}

TEST(InClass, ScenarioTwoStrictlyBelowPower) {
    const LTVSystem sys = double_integrator(100);
    const Mat K = stationary_gain(sys);
    const PredictorModel m = PredictorModel::shifted_affine_gaussian(0.5, Mat::Identity(2, 2), 100);
    const InClassOptimum o = optimal_in_class_improvement(sys, m, K);
    EXPECT_NEAR(o.improvement, 0.8448356, 1e-6);
    EXPECT_GT(o.improvement, 0.0);
    EXPECT_LT(o.improvement, 1.8467117);
    // no single-parameter scan along either axis beats the optimum
    const double base = stationary_average_cost(sys, m, K, Mat::Zero(1, 2));
    for (int k = 0; k < 2; ++k)
        for (double s = -1.5; s <= 1.5; s += 0.05) {
            Mat u = o.upsilon;
            u(0, k) += s;
            EXPECT_LE(base - stationary_average_cost(sys, m, K, u), o.improvement + 1e-10);
        }
}

TEST(InClass, BaselineIsZero) {
    const LTVSystem sys = double_integrator(100);
    const InClassOptimum o = optimal_in_class_improvement(sys, PredictorModel::baseline(2, 100), stationary_gain(sys));
    EXPECT_NEAR(o.improvement, 0.0, 1e-12);
}

TEST(InClass, StationaryCostMatchesLongRun) {
    // average cost of a fixed Upsilon against a long simulated trajectory
    const int T = 200000;
    const LTVSystem sys = double_integrator(T);
    const Mat K = stationary_gain(sys);
    const PredictorModel m = PredictorModel::shifted_affine_gaussian(0.5, Mat::Identity(2, 2), T);
    Mat ups(1, 2);
    ups << -0.4, -0.6;
    PolicyClassSpec s;
    s.K = K;
    s.upsilon0 = ups;
    s.eta0 = 0.0;
    s.record_every = T;
    const OnlineRunRecord rec = online_optimize(sys, m, s, 7);
    const double sim = rec.cumulative_cost.back() / T;
    EXPECT_NEAR(sim, stationary_average_cost(sys, m, K, ups), 0.02 * sim);
}
