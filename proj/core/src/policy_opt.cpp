#include "ppower/policy_opt.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include "parallel.hpp"
#include "ppower/error.hpp"

namespace ppower {

double PolicyClassSpec::eta(long t) const { return eta0 * std::pow(1.0 + static_cast<double>(t) / c, -beta); }

double OnlineRunRecord::final_window_mean(double fraction) const {
    if (improvement.empty()) return 0.0;
    const auto n = improvement.size();
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))));
    double s = 0.0;
    for (std::size_t i = n - k; i < n; ++i) s += improvement[i];
    return s / static_cast<double>(k);
}

namespace {

// d(Upsilon v)/dvec(Upsilon) for column-major vec: v' kron I_m
Mat upsilon_jacobian(const Vec& v, int m) {
    return Eigen::kroneckerProduct(v.transpose(), Mat::Identity(m, m)).eval();
}

Mat vec_to_upsilon(const Vec& y, int m, int d) { return Eigen::Map<const Mat>(y.data(), m, d); }

void check_spec(const LTVSystem& sys, const PredictorModel& model, const Mat& K) {
    if (!sys.is_time_invariant()) fail(ErrorKind::InvalidModel, "policy optimisation needs a time-invariant system");
    if (K.rows() != sys.m() || K.cols() != sys.n()) fail(ErrorKind::ShapeMismatch, "K must be m x n");
    if (model.n() != sys.n()) fail(ErrorKind::ShapeMismatch, "predictor dimension differs from the state");
}

}  // namespace

OnlineRunRecord online_optimize(const LTVSystem& sys, const PredictorModel& model, const PolicyClassSpec& spec,
                                std::uint64_t seed, std::uint64_t index) {
    check_spec(sys, model, spec.K);
    const int n = sys.n(), m = sys.m(), d = model.d();
    const long T = model.horizon();
    Mat Y = spec.upsilon0.size() ? spec.upsilon0 : Mat::Zero(m, d);
    if (Y.rows() != m || Y.cols() != d) fail(ErrorKind::ShapeMismatch, "Upsilon_0 must be m x d");
    const Mat& A = sys.A[0];
    const Mat& B = sys.B[0];
    const Mat& Q = sys.Q[0];
    const Mat& R = sys.R[0];
    const Mat& K = spec.K;
    const Mat L = A - B * K;

    OnlineRunRecord rec;
    Vec x = sys.x0, xb = sys.x0;
    Mat S = Mat::Zero(n, m * d);
    double cum = 0.0, cumb = 0.0;
    Mat Wr, Vr;
    for (long t = 0; t < T; ++t) {
        model.sample_rows(seed, index, static_cast<int>(t), static_cast<int>(t) + 1, Wr, Vr);
        const Vec w = Wr.row(0).transpose();
        const Vec v = Vr.row(0).transpose();
        const Vec u = -K * x + Y * v;
        const Vec ub = -K * xb;
        cum += x.dot(Q * x) + u.dot(R * u);
        cumb += xb.dot(Q * xb) + ub.dot(R * ub);
        if (t % spec.record_every == 0 || t == T - 1) {
            rec.times.push_back(t);
            rec.cumulative_cost.push_back(cum);
            rec.baseline_cumulative_cost.push_back(cumb);
            rec.improvement.push_back((cumb - cum) / static_cast<double>(t + 1));
        }
        if (spec.snapshot_every > 0 && t % spec.snapshot_every == 0) {
            rec.snapshot_times.push_back(t);
            rec.upsilon_snapshots.push_back(Y);
        }
        // per-step gradient through the frozen-policy sensitivity, then the closed-loop update of S
        const Mat J = upsilon_jacobian(v, m);
        const Mat dU = -K * S + J;
        const Vec g = 2.0 * S.transpose() * (Q * x) + 2.0 * dU.transpose() * (R * u);
        S = L * S + B * J;
        Y -= spec.eta(t) * vec_to_upsilon(g, m, d);
        if (!std::isfinite(Y.norm()) || Y.norm() > spec.divergence_bound)
            fail(ErrorKind::Divergence, "Upsilon left the divergence bound at t=" + std::to_string(t));
        x = A * x + B * u + w;
        xb = A * xb + B * ub + w;
    }
    rec.upsilon_final = Y;
    return rec;
}

std::vector<OnlineRunRecord> online_optimize_replicates(const LTVSystem& sys, const PredictorModel& model,
                                                        const PolicyClassSpec& spec, std::uint64_t seed, int count,
                                                        int threads) {
    if (count < 1) fail(ErrorKind::InsufficientData, "need at least one replicate");
    std::vector<OnlineRunRecord> out(static_cast<std::size_t>(count));
    std::vector<std::string> errors(static_cast<std::size_t>(count));
    std::vector<int> kinds(static_cast<std::size_t>(count), -1);
    const int nt = detail::resolve_threads(threads);
#pragma omp parallel for num_threads(nt) schedule(dynamic, 1)
    for (int r = 0; r < count; ++r) {
        try {
            out[r] = online_optimize(sys, model, spec, seed, static_cast<std::uint64_t>(r));
        } catch (const Error& e) {
            errors[r] = e.what();
            kinds[r] = static_cast<int>(e.kind());
        }
    }
    for (int r = 0; r < count; ++r)
        if (kinds[r] >= 0) fail(static_cast<ErrorKind>(kinds[r]), "replicate " + std::to_string(r) + ": " + errors[r]);
    return out;
}

SensitivityProbe sensitivity_probe(const LTVSystem& sys, const Mat& K, const Mat& upsilon, const Vec& x0,
                                   const Mat& W, const Mat& V) {
    const int n = sys.n(), m = sys.m();
    const int d = static_cast<int>(V.cols());
    if (W.rows() != V.rows() || W.rows() < 1 || W.cols() != n) fail(ErrorKind::ShapeMismatch, "probe rows");
    if (upsilon.rows() != m || upsilon.cols() != d) fail(ErrorKind::ShapeMismatch, "Upsilon must be m x d");
    const Mat& A = sys.A[0];
    const Mat& B = sys.B[0];
    const Mat L = A - B * K;
    Vec x = x0;
    Mat S = Mat::Zero(n, m * d);
    SensitivityProbe p;
    for (Eigen::Index t = 0; t < W.rows(); ++t) {
        const Vec v = V.row(t).transpose();
        const Vec u = -K * x + upsilon * v;
        const Mat J = upsilon_jacobian(v, m);
        if (t == W.rows() - 1) {
            const Mat dU = -K * S + J;
            p.cost = x.dot(sys.Q[0] * x) + u.dot(sys.R[0] * u);
            p.grad = 2.0 * S.transpose() * (sys.Q[0] * x) + 2.0 * dU.transpose() * (sys.R[0] * u);
            break;
        }
        S = L * S + B * J;
        x = A * x + B * u + W.row(t).transpose();
    }
    return p;
}

Mat lyapunov_doubling(const Mat& F, const Mat& C) {
    Mat X = C;
    Mat Fk = F;
    for (int it = 0; it < 200; ++it) {
        const Mat inc = Fk * X * Fk.transpose();
        X += inc;
        Fk = Fk * Fk;
        if (Fk.cwiseAbs().maxCoeff() < 1e-300 || inc.cwiseAbs().maxCoeff() <= 1e-17 * X.cwiseAbs().maxCoeff()) {
            if (!X.allFinite()) break;
            return 0.5 * (X + X.transpose());
        }
        if (!X.allFinite()) break;
    }
    fail(ErrorKind::NoConvergence, "Lyapunov doubling did not converge (closed loop not stable)");
}

namespace {

// rows of V as D e with e = (W, Z) standard normal
Mat predictor_loading(const PredictorModel& model) {
    const Mat& th = model.theta();
    const int d = static_cast<int>(th.rows());
    const Mat C = Mat::Identity(d, d) - model.rho() * model.rho() * th * th.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (C + C.transpose()));
    const Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Mat S = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    Mat D(d, th.cols() + d);
    D << model.rho() * th, S;
    return D;
}

}  // namespace

double stationary_average_cost(const LTVSystem& sys, const PredictorModel& model, const Mat& K, const Mat& upsilon) {
    check_spec(sys, model, K);
    const Mat& A = sys.A[0];
    const Mat& B = sys.B[0];
    const Mat& Q = sys.Q[0];
    const Mat& R = sys.R[0];
    const Mat L = A - B * K;
    const int n = sys.n();
    if (model.kind() == PredictorKind::Baseline) {
        const Mat Sx = lyapunov_doubling(L, Mat::Identity(n, n));
        return (Q * Sx).trace() + (K.transpose() * R * K * Sx).trace();
    }
    if (model.kind() != PredictorKind::AffineGaussian && model.kind() != PredictorKind::ShiftedAffineGaussian)
        fail(ErrorKind::UnsupportedPredictor, "stationary analysis covers the affine Gaussian families only");
    const Mat D = predictor_loading(model);
    const int q = static_cast<int>(D.cols());
    Mat E1 = Mat::Zero(n, q);
    E1.leftCols(n).setIdentity();
    const Mat BYD = B * upsilon * D;
    Mat F = Mat::Zero(n + q, n + q);
    Mat G = Mat::Zero(n + q, q);
    F.topLeftCorner(n, n) = L;
    G.bottomRows(q).setIdentity();
    if (model.kind() == PredictorKind::AffineGaussian) {
        // u_t uses e_t, the same draw that moves x_{t+1}
        F.topRightCorner(n, q) = BYD + E1;
        const Mat Sz = lyapunov_doubling(F, G * G.transpose());
        Mat U(K.rows(), n + q);
        U << -K, upsilon * D;
        Mat Sel = Mat::Zero(n, n + q);
        Sel.leftCols(n).setIdentity();
        return ((Sel.transpose() * Q * Sel + U.transpose() * R * U) * Sz).trace();
    }
    // shifted: u_t uses e_{t+1}, which is independent of x_t
    F.topRightCorner(n, q) = E1;
    G.topRows(n) = BYD;
    const Mat Sz = lyapunov_doubling(F, G * G.transpose());
    const Mat Sx = Sz.topLeftCorner(n, n);
    return (Q * Sx).trace() + (K.transpose() * R * K * Sx).trace() +
           (upsilon * D * D.transpose() * upsilon.transpose() * R).trace();
}

InClassOptimum optimal_in_class_improvement(const LTVSystem& sys, const PredictorModel& model, const Mat& K) {
    check_spec(sys, model, K);
    const int m = sys.m(), d = model.d();
    InClassOptimum out;
    out.upsilon = Mat::Zero(m, d);
    out.baseline_cost = stationary_average_cost(sys, model, K, out.upsilon);
    if (model.kind() == PredictorKind::Baseline) return out;
    const int p = m * d;
    auto cost = [&](const Vec& y) { return stationary_average_cost(sys, model, K, vec_to_upsilon(y, m, d)); };
    // the cost is quadratic in vec(Upsilon), so unit central differences are exact up to rounding
    const double c0 = out.baseline_cost;
    Vec g(p);
    Mat H(p, p);
    std::vector<double> cp(p), cm(p);
    for (int i = 0; i < p; ++i) {
        const Vec e = Vec::Unit(p, i);
        cp[i] = cost(e);
        cm[i] = cost(-e);
        g[i] = 0.5 * (cp[i] - cm[i]);
        H(i, i) = cp[i] + cm[i] - 2.0 * c0;
    }
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j) {
            const Vec ei = Vec::Unit(p, i), ej = Vec::Unit(p, j);
            H(i, j) = H(j, i) = 0.25 * (cost(ei + ej) - cost(ei - ej) - cost(ej - ei) + cost(-ei - ej));
        }
    Eigen::LLT<Mat> llt(H);
    if (llt.info() != Eigen::Success) fail(ErrorKind::NoConvergence, "in-class cost is not strictly convex");
    const Vec y = -llt.solve(g);
    out.upsilon = vec_to_upsilon(y, m, d);
    out.improvement = c0 - cost(y);
    return out;
}

}  // namespace ppower
