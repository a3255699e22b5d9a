#include "ppower/predictors.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ppower/error.hpp"
#include "ppower/rng.hpp"

namespace ppower {

namespace {

constexpr std::uint64_t kChanW = 0;
constexpr std::uint64_t kChanNoise = 1;
constexpr int kMultiStepGenericMaxT = 256;

// Stationary Riccati cost and closed loop for A = B = Q = R = 1.
void scalar_unit_dare(double& P, double& L) {
    P = 1.0;
    for (int i = 0; i < 10000; ++i) {
        const double Pn = 1.0 + P - P * P / (1.0 + P);
        if (std::abs(Pn - P) < 1e-15) {
            P = Pn;
            break;
        }
        P = Pn;
    }
    L = 1.0 - P / (1.0 + P);
}

}  // namespace

const char* to_string(PredictorKind k) {
    switch (k) {
        case PredictorKind::Baseline: return "baseline";
        case PredictorKind::AffineGaussian: return "affine-gaussian";
        case PredictorKind::ShiftedAffineGaussian: return "shifted-affine-gaussian";
        case PredictorKind::MultiStep1D: return "multistep-1d";
        case PredictorKind::BinaryPerfect: return "binary-perfect";
    }
    return "unknown";
}

HistoryView::HistoryView(const ProblemInstance& inst, int t) : inst_(&inst), t_(t) {
    if (t < 0 || t >= inst.horizon()) fail(ErrorKind::DimensionMismatch, "history time out of range");
}

Eigen::VectorXd HistoryView::W(int tau) const {
    if (tau >= t_)
        fail(ErrorKind::InformationLeak, "policy at t=" + std::to_string(t_) + " requested w_" + std::to_string(tau));
    if (tau < 0) fail(ErrorKind::DimensionMismatch, "negative time index");
    return inst_->W.row(tau).transpose();
}

Eigen::VectorXd HistoryView::V(int tau) const {
    if (tau > t_)
        fail(ErrorKind::InformationLeak, "policy at t=" + std::to_string(t_) + " requested v_" + std::to_string(tau));
    if (tau < 0) fail(ErrorKind::DimensionMismatch, "negative time index");
    return inst_->V.row(tau).transpose();
}

PredictorModel PredictorModel::baseline(int n, int T) {
    if (n <= 0 || T <= 0) fail(ErrorKind::InvalidModel, "baseline needs n, T > 0");
    PredictorModel m;
    m.kind_ = PredictorKind::Baseline;
    m.n_ = n;
    m.d_ = n;
    m.T_ = T;
    return m;
}

PredictorModel PredictorModel::affine_gaussian(double rho, const Mat& theta, int T) {
    if (T <= 0 || theta.size() == 0) fail(ErrorKind::InvalidModel, "affine predictor needs T > 0 and a theta");
    if (!(rho >= 0.0) || rho > std::sqrt(0.5) + 1e-12)
        fail(ErrorKind::InvalidModel, "rho must lie in [0, sqrt(2)/2], got " + std::to_string(rho));
    const auto d = theta.rows();
    Mat C = Mat::Identity(d, d) - rho * rho * theta * theta.transpose();
    C = 0.5 * (C + C.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(C);
    if (es.eigenvalues().minCoeff() < -1e-12)
        fail(ErrorKind::InvalidModel, "noise covariance I - rho^2 theta theta' is not PSD");
    const Vec s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    PredictorModel m;
    m.kind_ = PredictorKind::AffineGaussian;
    m.n_ = static_cast<int>(theta.cols());
    m.d_ = static_cast<int>(d);
    m.T_ = T;
    m.rho_ = rho;
    m.theta_ = theta;
    m.noise_sqrt_ = es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
    return m;
}

PredictorModel PredictorModel::shifted_affine_gaussian(double rho, const Mat& theta, int T) {
    PredictorModel m = affine_gaussian(rho, theta, T);
    m.kind_ = PredictorKind::ShiftedAffineGaussian;
    return m;
}

PredictorModel PredictorModel::multistep_1d(int variant, int T, std::array<double, 3> variances) {
    if (variant != 1 && variant != 2) fail(ErrorKind::InvalidModel, "multistep variant must be 1 or 2");
    if (T <= 0) fail(ErrorKind::InvalidModel, "T must be positive");
    for (double v : variances)
        if (!(v > 0.0)) fail(ErrorKind::InvalidModel, "component variances must be positive");
    if (variant == 2 && T > kMultiStepGenericMaxT)
        fail(ErrorKind::InvalidModel, "multistep variant 2 exact conditioning supports T <= " +
                                          std::to_string(kMultiStepGenericMaxT));
    PredictorModel m;
    m.kind_ = PredictorKind::MultiStep1D;
    m.n_ = 1;
    m.d_ = variant == 1 ? 2 : 1;
    m.T_ = T;
    m.variant_ = variant;
    m.var_ = variances;
    scalar_unit_dare(m.ms_P_, m.ms_L_);
    if (T <= kMultiStepGenericMaxT) m.build_multistep_gains();
    return m;
}

PredictorModel PredictorModel::binary_perfect(int n, int T) {
    if (n <= 0 || T <= 0) fail(ErrorKind::InvalidModel, "binary predictor needs n, T > 0");
    PredictorModel m;
    m.kind_ = PredictorKind::BinaryPerfect;
    m.n_ = n;
    m.d_ = n;
    m.T_ = T;
    return m;
}

std::string PredictorModel::describe() const {
    std::ostringstream os;
    os << to_string(kind_) << "(n=" << n_ << ",d=" << d_ << ",T=" << T_;
    if (kind_ == PredictorKind::AffineGaussian || kind_ == PredictorKind::ShiftedAffineGaussian) os << ",rho=" << rho_;
    if (kind_ == PredictorKind::MultiStep1D) os << ",variant=" << variant_;
    os << ")";
    return os.str();
}

int PredictorModel::window() const {
    switch (kind_) {
        case PredictorKind::ShiftedAffineGaussian:
        case PredictorKind::MultiStep1D: return 2;
        default: return 1;
    }
}

void PredictorModel::sample_rows(std::uint64_t seed, std::uint64_t index, int t0, int t1, Mat& W, Mat& V) const {
    if (t0 < 0 || t1 > T_ || t1 < t0) fail(ErrorKind::DimensionMismatch, "row range out of horizon");
    const int rows = t1 - t0;
    W.resize(rows, n_);
    V.resize(rows, d_);
    switch (kind_) {
        case PredictorKind::Baseline: {
            Vec w(n_);
            for (int r = 0; r < rows; ++r) {
                StreamRng g(seed, index, static_cast<std::uint64_t>(t0 + r), kChanW);
                g.normals(w);
                W.row(r) = w.transpose();
            }
            V.setZero();
            break;
        }
        case PredictorKind::AffineGaussian:
        case PredictorKind::ShiftedAffineGaussian: {
            const int shift = kind_ == PredictorKind::ShiftedAffineGaussian ? 1 : 0;
            Vec w(n_), z(d_);
            for (int r = 0; r < rows; ++r) {
                const int t = t0 + r;
                StreamRng gw(seed, index, static_cast<std::uint64_t>(t), kChanW);
                gw.normals(w);
                W.row(r) = w.transpose();
                if (shift) {
                    StreamRng gn(seed, index, static_cast<std::uint64_t>(t + 1), kChanW);
                    gn.normals(w);
                }
                StreamRng gz(seed, index, static_cast<std::uint64_t>(t + shift), kChanNoise);
                gz.normals(z);
                V.row(r) = (rho_ * theta_ * w + noise_sqrt_ * z).transpose();
            }
            break;
        }
        case PredictorKind::MultiStep1D: {
            const double sa = std::sqrt(var_[0]), sb = std::sqrt(var_[1]), sc = std::sqrt(var_[2]);
            for (int r = 0; r < rows; ++r) {
                const int t = t0 + r;
                StreamRng g(seed, index, static_cast<std::uint64_t>(t), kChanW);
                const double a = sa * g.normal();
                const double b = sb * g.normal();
                const double c = sc * g.normal();
                StreamRng gn(seed, index, static_cast<std::uint64_t>(t + 1), kChanW);
                const double a_next = sa * gn.normal();
                W(r, 0) = a + b + c;
                if (variant_ == 1) {
                    V(r, 0) = b;
                    V(r, 1) = a_next;
                } else {
                    V(r, 0) = ms_P_ * (a + b) + ms_L_ * ms_P_ * a_next;
                }
            }
            break;
        }
        case PredictorKind::BinaryPerfect: {
            for (int r = 0; r < rows; ++r) {
                StreamRng g(seed, index, static_cast<std::uint64_t>(t0 + r), kChanW);
                for (int i = 0; i < n_; ++i) W(r, i) = (g() >> 63) ? 1.0 : -1.0;
            }
            V = W;
            break;
        }
    }
}

ProblemInstance PredictorModel::sample_instance(std::uint64_t seed, std::uint64_t index) const {
    ProblemInstance inst;
    inst.seed = seed;
    inst.index = index;
    sample_rows(seed, index, 0, T_, inst.W, inst.V);
    return inst;
}

Vec PredictorModel::conditional_mean_W(const HistoryView& h, int tau) const {
    const int t = h.t();
    if (tau >= T_) fail(ErrorKind::UnsupportedTarget, "target tau=" + std::to_string(tau) + " is past the horizon");
    if (tau < t) fail(ErrorKind::UnsupportedTarget, "target tau precedes the current time");
    Vec out = Vec::Zero(n_);
    switch (kind_) {
        case PredictorKind::Baseline: break;
        case PredictorKind::AffineGaussian:
            if (tau == t) out = rho_ * theta_.transpose() * h.V(t);
            break;
        case PredictorKind::ShiftedAffineGaussian:
            if (tau == t && t >= 1) out = rho_ * theta_.transpose() * h.V(t - 1);
            if (tau == t + 1) out = rho_ * theta_.transpose() * h.V(t);
            break;
        case PredictorKind::MultiStep1D:
            if (variant_ == 1) out = multistep_direct_mean(h, tau);
            else out = multistep_generic_mean(h, tau);
            break;
        case PredictorKind::BinaryPerfect:
            if (tau == t) out = h.V(t);
            break;
    }
    return out;
}

Mat PredictorModel::conditional_means(const HistoryView& h) const {
    const int k = window();
    Mat out = Mat::Zero(n_, k);
    for (int j = 0; j < k; ++j)
        if (h.t() + j < T_) out.col(j) = conditional_mean_W(h, h.t() + j);
    return out;
}

Vec PredictorModel::multistep_direct_mean(const HistoryView& h, int tau) const {
    if (kind_ != PredictorKind::MultiStep1D || variant_ != 1)
        fail(ErrorKind::UnsupportedPredictor, "direct mean only exists for multistep variant 1");
    const int t = h.t();
    Vec out = Vec::Zero(1);
    if (tau == t) out[0] = h.V(t)[0] + (t >= 1 ? h.V(t - 1)[1] : 0.0);
    if (tau == t + 1) out[0] = h.V(t)[1];
    return out;
}

void PredictorModel::build_multistep_gains() {
    // latent z = (a_0..a_T, b_0..b_{T-1}, c_0..c_{T-1})
    const int T = T_;
    const int nz = (T + 1) + 2 * T;
    auto ia = [](int t) { return t; };
    auto ib = [T](int t) { return T + 1 + t; };
    auto ic = [T](int t) { return 2 * T + 1 + t; };
    Vec lam(nz);
    for (int t = 0; t <= T; ++t) lam[ia(t)] = var_[0];
    for (int t = 0; t < T; ++t) {
        lam[ib(t)] = var_[1];
        lam[ic(t)] = var_[2];
    }
    auto w_row = [&](int t) {
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nz);
        r[ia(t)] = 1.0;
        r[ib(t)] = 1.0;
        r[ic(t)] = 1.0;
        return r;
    };
    auto v_rows = [&](int t) {
        Mat r = Mat::Zero(d_, nz);
        if (variant_ == 1) {
            r(0, ib(t)) = 1.0;
            r(1, ia(t + 1)) = 1.0;
        } else {
            r(0, ia(t)) = ms_P_;
            r(0, ib(t)) = ms_P_;
            r(0, ia(t + 1)) = ms_L_ * ms_P_;
        }
        return r;
    };
    auto gains = std::make_shared<std::vector<MsGain>>(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        const int obs = t + (t + 1) * d_;
        Mat O(obs, nz);
        for (int s = 0; s < t; ++s) O.row(s) = w_row(s);
        for (int s = 0; s <= t; ++s) O.middleRows(t + s * d_, d_) = v_rows(s);
        Mat tgt = Mat::Zero(2, nz);
        tgt.row(0) = w_row(t);
        if (t + 1 < T) tgt.row(1) = w_row(t + 1);
        const Mat Cyy = O * lam.asDiagonal() * O.transpose();
        const Mat Cty = tgt * lam.asDiagonal() * O.transpose();
        Eigen::LDLT<Mat> ldlt(Cyy);
        MsGain g;
        g.gain = ldlt.solve(Cty.transpose()).transpose();
        Mat info = g.gain * Cty.transpose();
        g.info = 0.5 * (info + info.transpose());
        (*gains)[t] = std::move(g);
    }
    ms_gains_ = gains;
}

Vec PredictorModel::multistep_generic_mean(const HistoryView& h, int tau) const {
    if (kind_ != PredictorKind::MultiStep1D) fail(ErrorKind::UnsupportedPredictor, "not a multistep model");
    if (!ms_gains_) fail(ErrorKind::UnsupportedPredictor, "exact conditioning tables not built for this horizon");
    const int t = h.t();
    Vec out = Vec::Zero(1);
    if (tau > t + 1) return out;
    const MsGain& g = (*ms_gains_)[t];
    Vec y(g.gain.cols());
    for (int s = 0; s < t; ++s) y[s] = h.W(s)[0];
    for (int s = 0; s <= t; ++s) y.segment(t + s * d_, d_) = h.V(s);
    out[0] = g.gain.row(tau - t).dot(y);
    return out;
}

Mat PredictorModel::disturbance_cov() const {
    if (kind_ == PredictorKind::MultiStep1D) return Mat::Constant(1, 1, var_[0] + var_[1] + var_[2]);
    return Mat::Identity(n_, n_);
}

Mat PredictorModel::conditional_cov_W(int t, int tau) const {
    if (t < 0 || t >= T_) fail(ErrorKind::DimensionMismatch, "t out of range");
    if (tau >= T_ || tau < t) fail(ErrorKind::UnsupportedTarget, "target out of range");
    const Mat base = disturbance_cov();
    const int j = tau - t;
    if (j >= window()) return base;
    const Mat gain = information_gain(t);
    return base - gain.block(j * n_, j * n_, n_, n_);
}

Mat PredictorModel::information_gain(int t) const {
    if (t < 0 || t >= T_) fail(ErrorKind::DimensionMismatch, "t out of range");
    const int k = std::min(window(), T_ - t);
    Mat G = Mat::Zero(k * n_, k * n_);
    switch (kind_) {
        case PredictorKind::Baseline: break;
        case PredictorKind::AffineGaussian:
            G = rho_ * rho_ * theta_.transpose() * theta_;
            break;
        case PredictorKind::ShiftedAffineGaussian: {
            const Mat g = rho_ * rho_ * theta_.transpose() * theta_;
            if (t >= 1) G.topLeftCorner(n_, n_) = g;
            if (k > 1) G.block(n_, n_, n_, n_) = g;
            break;
        }
        case PredictorKind::MultiStep1D: {
            if (ms_gains_) {
                G = (*ms_gains_)[t].info.topLeftCorner(k, k);
            } else {
                G(0, 0) = var_[1] + (t >= 1 ? var_[0] : 0.0);
                if (k > 1) G(1, 1) = var_[0];
            }
            break;
        }
        case PredictorKind::BinaryPerfect:
            G = Mat::Identity(n_, n_);
            break;
    }
    return G;
}

}  // namespace ppower
