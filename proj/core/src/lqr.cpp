#include "ppower/lqr.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ppower/error.hpp"
#include "ppower/io.hpp"
#include "ppower/predictors.hpp"

namespace ppower {

namespace {

double min_eig(const Mat& S) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

std::string dims(const Mat& M) {
    return std::to_string(M.rows()) + "x" + std::to_string(M.cols());
}

// inverse of a symmetric PD matrix with a condition number guard
Mat spd_inverse(const Mat& M, double cond_limit, int t) {
    Eigen::SelfAdjointEigenSolver<Mat> es(M, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > cond_limit)
        fail(ErrorKind::NonInvertible, "R_t + B_t'P_{t+1}B_t singular at t=" + std::to_string(t) +
                                           " (eigenvalues " + std::to_string(lo) + ", " + std::to_string(hi) + ")");
    Eigen::LLT<Mat> llt(M);
    if (llt.info() != Eigen::Success) fail(ErrorKind::NonInvertible, "Cholesky failed at t=" + std::to_string(t));
    Mat inv = llt.solve(Mat::Identity(M.rows(), M.cols()));
    return 0.5 * (inv + inv.transpose());
}

}  // namespace

LTVSystem LTVSystem::time_invariant(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& PT,
                                    const Vec& x0, int T) {
    LTVSystem s;
    s.T = T;
    s.A.assign(T, A);
    s.B.assign(T, B);
    s.Q.assign(T, Q);
    s.R.assign(T, R);
    s.PT = PT;
    s.x0 = x0;
    return s;
}

bool LTVSystem::is_time_invariant() const {
    for (int t = 1; t < T; ++t)
        if (A[t] != A[0] || B[t] != B[0] || Q[t] != Q[0] || R[t] != R[0]) return false;
    return true;
}

void LTVSystem::validate(double tol) const {
    if (T <= 0) fail(ErrorKind::InvalidModel, "horizon T must be positive");
    const auto sz = static_cast<std::size_t>(T);
    if (A.size() != sz || B.size() != sz || Q.size() != sz || R.size() != sz)
        fail(ErrorKind::DimensionMismatch, "matrix sequences must have length T");
    const int nn = n();
    if (PT.cols() != nn) fail(ErrorKind::DimensionMismatch, "P_T must be square, got " + dims(PT));
    if (x0.size() != nn) fail(ErrorKind::DimensionMismatch, "x0 has wrong length");
    const int mm = m();
    if (mm <= 0) fail(ErrorKind::DimensionMismatch, "B_t must have at least one column");
    for (int t = 0; t < T; ++t) {
        if (A[t].rows() != nn || A[t].cols() != nn) fail(ErrorKind::DimensionMismatch, "A_t is " + dims(A[t]));
        if (B[t].rows() != nn || B[t].cols() != mm) fail(ErrorKind::DimensionMismatch, "B_t is " + dims(B[t]));
        if (Q[t].rows() != nn || Q[t].cols() != nn) fail(ErrorKind::DimensionMismatch, "Q_t is " + dims(Q[t]));
        if (R[t].rows() != mm || R[t].cols() != mm) fail(ErrorKind::DimensionMismatch, "R_t is " + dims(R[t]));
        if ((Q[t] - Q[t].transpose()).cwiseAbs().maxCoeff() > tol || min_eig(Q[t]) <= tol)
            fail(ErrorKind::InvalidModel, "Q_t not symmetric positive definite at t=" + std::to_string(t));
        if ((R[t] - R[t].transpose()).cwiseAbs().maxCoeff() > tol || min_eig(R[t]) < -tol)
            fail(ErrorKind::InvalidModel, "R_t not symmetric positive semidefinite at t=" + std::to_string(t));
    }
    if ((PT - PT.transpose()).cwiseAbs().maxCoeff() > tol || min_eig(PT) <= tol)
        fail(ErrorKind::InvalidModel, "P_T not symmetric positive definite");
}

Mat RiccatiSolution::phi(int t2, int t1) const {
    if (t1 < 0 || t2 < t1 || t2 > T) fail(ErrorKind::DimensionMismatch, "Phi index out of range");
    if (!phi_table_.empty()) return phi_table_[phi_offset_[t1] + static_cast<std::size_t>(t2 - t1)];
    const auto n = P.front().rows();
    Mat out = Mat::Identity(n, n);
    for (int k = t1; k < t2; ++k) out = L[k] * out;
    return out;
}

RiccatiSolution riccati_backward(const LTVSystem& sys, const RiccatiOptions& opt) {
    sys.validate();
    const int T = sys.T;
    const int n = sys.n();
    RiccatiSolution r;
    r.T = T;
    r.P.resize(T + 1);
    r.K.resize(T);
    r.H.resize(T);
    r.M.resize(T);
    r.Minv.resize(T);
    r.L.resize(T);
    r.P[T] = sys.PT;
    for (int t = T - 1; t >= 0; --t) {
        const Mat& A = sys.A[t];
        const Mat& B = sys.B[t];
        const Mat& Pn = r.P[t + 1];
        Mat M = sys.R[t] + B.transpose() * Pn * B;
        M = 0.5 * (M + M.transpose());
        r.M[t] = M;
        r.Minv[t] = spd_inverse(M, opt.cond_limit, t);
        r.K[t] = r.Minv[t] * B.transpose() * Pn * A;
        r.H[t] = B * r.Minv[t] * B.transpose();
        Mat P = sys.Q[t] + A.transpose() * Pn * A - A.transpose() * Pn * r.H[t] * Pn * A;
        r.P[t] = 0.5 * (P + P.transpose());
        r.L[t] = A - B * r.K[t];
    }
    if (n <= opt.dense_max_n && T <= opt.dense_max_T) {
        r.phi_offset_.resize(T + 1);
        std::size_t total = 0;
        for (int t1 = 0; t1 <= T; ++t1) {
            r.phi_offset_[t1] = total;
            total += static_cast<std::size_t>(T - t1 + 1);
        }
        r.phi_table_.resize(total);
        for (int t1 = 0; t1 <= T; ++t1) {
            Mat cur = Mat::Identity(n, n);
            r.phi_table_[r.phi_offset_[t1]] = cur;
            for (int t2 = t1 + 1; t2 <= T; ++t2) {
                cur = r.L[t2 - 1] * cur;
                r.phi_table_[r.phi_offset_[t1] + static_cast<std::size_t>(t2 - t1)] = cur;
            }
        }
    }
    return r;
}

Mat dare_fixed_point(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, double tol, int max_iter) {
    Mat P = Q;
    for (int it = 0; it < max_iter; ++it) {
        Mat M = R + B.transpose() * P * B;
        Mat K = M.ldlt().solve(B.transpose() * P * A);
        Mat Pn = Q + A.transpose() * P * A - A.transpose() * P * B * K;
        Pn = 0.5 * (Pn + Pn.transpose());
        const double d = (Pn - P).cwiseAbs().maxCoeff();
        P = Pn;
        if (d < tol) return P;
    }
    fail(ErrorKind::NoConvergence, "Riccati fixed-point iteration did not converge");
}

Vec feedforward_window(const RiccatiSolution& ric, const LTVSystem& sys, int t, const Mat& cond_means) {
    const int T = ric.T;
    const int n = sys.n();
    if (t < 0 || t >= T) fail(ErrorKind::DimensionMismatch, "t out of range");
    if (cond_means.rows() != n) fail(ErrorKind::DimensionMismatch, "conditional means must have n rows");
    const int k = std::min<int>(static_cast<int>(cond_means.cols()), T - t);
    // g = sum_j Phi_{t+j+1,t+1}' P_{t+j+1} w_{t+j|t}, accumulated backward
    Vec g = Vec::Zero(n);
    for (int j = k - 1; j >= 0; --j) {
        const int tau = t + j;
        if (j + 1 < k) g = ric.L[tau + 1].transpose() * g;
        g += ric.P[tau + 1] * cond_means.col(j);
    }
    return -ric.Minv[t] * sys.B[t].transpose() * g;
}

Vec optimal_feedforward(const RiccatiSolution& ric, const LTVSystem& sys, int t, const Mat& cond_means) {
    if (t < 0 || t >= ric.T) fail(ErrorKind::DimensionMismatch, "t out of range");
    if (cond_means.cols() != ric.T - t)
        fail(ErrorKind::DimensionMismatch, "cond_means must have T - t columns, got " +
                                               std::to_string(cond_means.cols()));
    return feedforward_window(ric, sys, t, cond_means);
}

Vec optimal_action(const RiccatiSolution& ric, const LTVSystem& sys, int t, const Vec& x, const Mat& cond_means) {
    if (x.size() != sys.n()) fail(ErrorKind::DimensionMismatch, "state has wrong length");
    return -ric.K[t] * x + optimal_feedforward(ric, sys, t, cond_means);
}

Vec surrogate_optimal_action(const RiccatiSolution& ric, const LTVSystem& sys, int t, const Mat& w_realized) {
    return optimal_feedforward(ric, sys, t, w_realized);
}

Mat surrogate_actions(const RiccatiSolution& ric, const LTVSystem& sys, const Mat& W) {
    const int T = ric.T;
    const int n = sys.n();
    if (W.rows() != T || W.cols() != n) fail(ErrorKind::DimensionMismatch, "W must be T x n");
    Mat U(T, sys.m());
    // g_t = P_{t+1} w_t + L_{t+1}' g_{t+1}
    Vec g = Vec::Zero(n);
    for (int t = T - 1; t >= 0; --t) {
        if (t + 1 < T) g = ric.L[t + 1].transpose() * g;
        g += ric.P[t + 1] * W.row(t).transpose();
        U.row(t) = (-ric.Minv[t] * sys.B[t].transpose() * g).transpose();
    }
    return U;
}

Mat expected_action_cov(const RiccatiSolution& ric, const LTVSystem& sys, const PredictorModel& model, int t) {
    const int n = sys.n();
    if (model.n() != n) fail(ErrorKind::DimensionMismatch, "predictor dimension differs from the system state");
    const Mat gain = model.information_gain(t);
    const int k = static_cast<int>(gain.rows()) / n;
    // G = [Phi_{t+1,t+1}'P_{t+1}, ..., Phi_{t+k,t+1}'P_{t+k}]
    Mat G(n, k * n);
    Mat phi = Mat::Identity(n, n);
    for (int j = 0; j < k; ++j) {
        if (j > 0) phi = ric.L[t + j] * phi;
        G.middleCols(j * n, n) = phi.transpose() * ric.P[t + j + 1];
    }
    const Mat F = ric.Minv[t] * sys.B[t].transpose() * G;
    Mat S = F * gain * F.transpose();
    return 0.5 * (S + S.transpose());
}

std::vector<double> prediction_power_terms(const LTVSystem& sys, const RiccatiSolution& ric,
                                           const PredictorModel& model) {
    if (model.horizon() != sys.T) fail(ErrorKind::DimensionMismatch, "predictor horizon differs from system horizon");
    std::vector<double> out(static_cast<std::size_t>(sys.T));
    for (int t = 0; t < sys.T; ++t) out[t] = (ric.M[t] * expected_action_cov(ric, sys, model, t)).trace();
    return out;
}

double prediction_power_closed_form(const LTVSystem& sys, const RiccatiSolution& ric, const PredictorModel& model) {
    double s = 0.0;
    for (double v : prediction_power_terms(sys, ric, model)) s += v;
    return s;
}

std::string riccati_csv(const RiccatiSolution& ric) {
    std::ostringstream os;
    const auto n = ric.P.front().rows();
    const auto m = ric.K.empty() ? 0 : ric.K.front().rows();
    os << "t";
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) os << ",P_" << i << j;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j) os << ",K_" << i << j;
    os << "\n";
    for (int t = 0; t <= ric.T; ++t) {
        os << t;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) os << "," << fmt_double(ric.P[t](i, j));
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < n; ++j) {
                os << ",";
                if (t < ric.T) os << fmt_double(ric.K[t](i, j));
            }
        os << "\n";
    }
    return os.str();
}

}  // namespace ppower
