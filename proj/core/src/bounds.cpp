#include "ppower/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "descent.hpp"
#include "parallel.hpp"
#include "ppower/error.hpp"
#include "ppower/rng.hpp"

namespace ppower {

namespace {

Vec sym_eigs(const Mat& S) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

double min_eig(const Mat& S) { return sym_eigs(S).minCoeff(); }
double max_eig(const Mat& S) { return sym_eigs(S).maxCoeff(); }

}  // namespace

void CostConditioning::validate() const {
    auto pair_ok = [](double mu, double ell) { return mu >= 0 && ell >= mu && std::isfinite(ell); };
    if (!pair_ok(mu_x, ell_x) || !pair_ok(mu_u, ell_u) || !pair_ok(mu_A, ell_A) || !pair_ok(mu_B, ell_B))
        fail(ErrorKind::InvalidModel, "conditioning constants need 0 <= mu <= ell");
    if (!(mu_x > 0)) fail(ErrorKind::InvalidModel, "mu_x must be positive");
    if (!(ell_A < 1.0)) fail(ErrorKind::InvalidModel, "ell_A must be below 1");
}

CostConditioning CostConditioning::from_quadratic(const LTVSystem& sys) {
    sys.validate();
    CostConditioning c;
    const double inf = std::numeric_limits<double>::infinity();
    c.mu_x = c.mu_u = c.mu_A = c.mu_B = inf;
    c.ell_x = c.ell_u = c.ell_A = c.ell_B = 0.0;
    auto upd = [](double& lo, double& hi, const Mat& S) {
        const Vec e = sym_eigs(S);
        lo = std::min(lo, e.minCoeff());
        hi = std::max(hi, e.maxCoeff());
    };
    for (int t = 0; t < sys.T; ++t) {
        upd(c.mu_x, c.ell_x, 2.0 * sys.Q[t]);
        upd(c.mu_u, c.ell_u, 2.0 * sys.R[t]);
        upd(c.mu_A, c.ell_A, sys.A[t].transpose() * sys.A[t]);
        upd(c.mu_B, c.ell_B, sys.B[t].transpose() * sys.B[t]);
    }
    upd(c.mu_x, c.ell_x, 2.0 * sys.PT);
    c.mu_u = std::max(c.mu_u, 0.0);
    c.mu_A = std::max(c.mu_A, 0.0);
    c.mu_B = std::max(c.mu_B, 0.0);
    return c;
}

MuEllSequence mu_ell_recursion(const CostConditioning& c, int T, BSquared b2) {
    c.validate();
    if (T <= 0) fail(ErrorKind::InvalidModel, "T must be positive");
    const double b = b2 == BSquared::EllB ? c.ell_B : c.mu_B;
    MuEllSequence s;
    s.mu.assign(static_cast<std::size_t>(T + 1), 0.0);
    s.ell.assign(static_cast<std::size_t>(T + 1), 0.0);
    s.mu[T] = c.mu_x;
    s.ell[T] = c.ell_x;
    for (int t = T - 1; t >= 0; --t) {
        const double mn = s.mu[t + 1];
        const double den = c.mu_u + b * mn;
        // with mu_u = 0 the input absorbs everything and the propagated curvature vanishes
        const double inner = den > 0 ? c.mu_u * mn / den : 0.0;
        s.mu[t] = c.mu_x + c.mu_A * inner;
        s.ell[t] = c.ell_x + c.ell_A * s.ell[t + 1];
    }
    s.mu_floor = c.mu_x;
    s.ell_cap = c.ell_x / (1.0 - c.ell_A);
    return s;
}

double sigma_lower(const CostConditioning& c, double lambda, double mu_next, double ell_next, int n) {
    if (lambda < 0 || mu_next < 0 || ell_next < 0 || n <= 0)
        fail(ErrorKind::InvalidModel, "sigma_lower needs nonnegative inputs");
    const double den = c.ell_u + ell_next * std::sqrt(c.ell_B);
    if (den <= 0) return 0.0;
    return n * lambda * mu_next * mu_next * c.mu_B / (2.0 * den * den);
}

double power_lower_bound(const std::vector<Mat>& M, const std::vector<Mat>& Sigma) {
    if (M.size() != Sigma.size()) fail(ErrorKind::ShapeMismatch, "M and Sigma sequences differ in length");
    double s = 0.0;
    for (std::size_t t = 0; t < M.size(); ++t) {
        if (M[t].rows() != Sigma[t].rows() || M[t].cols() != Sigma[t].cols() || M[t].rows() != M[t].cols())
            fail(ErrorKind::ShapeMismatch, "M_t and Sigma_t must be square of equal size");
        s += (M[t] * Sigma[t]).trace();
    }
    return s;
}

double power_lower_bound(const std::vector<Mat>& M, const std::vector<double>& sigma) {
    if (M.size() != sigma.size()) fail(ErrorKind::ShapeMismatch, "M and sigma sequences differ in length");
    double s = 0.0;
    for (std::size_t t = 0; t < M.size(); ++t) {
        if (M[t].rows() != M[t].cols()) fail(ErrorKind::ShapeMismatch, "M_t must be square");
        s += min_eig(M[t]) * sigma[t];
    }
    return s;
}

double conditioning_lower_bound(const CostConditioning& c, const std::vector<double>& lambda, int n, BSquared b2) {
    const int T = static_cast<int>(lambda.size());
    const MuEllSequence s = mu_ell_recursion(c, T, b2);
    double total = 0.0;
    for (int t = 0; t < T; ++t) total += c.mu_u * sigma_lower(c, lambda[t], s.mu[t + 1], s.ell[t + 1], n);
    return total;
}

std::vector<double> one_step_lambda(const PredictorModel& model) {
    const int n = model.n();
    std::vector<double> out(static_cast<std::size_t>(model.horizon()));
    for (int t = 0; t < model.horizon(); ++t) {
        const Mat G = model.information_gain(t);
        out[t] = std::max(0.0, min_eig(G.topLeftCorner(n, n)));
    }
    return out;
}

SmoothFunction SmoothFunction::quadratic(const Mat& H, const Vec& b) {
    const Vec bb = b.size() ? b : Vec::Zero(H.rows());
    SmoothFunction f;
    f.dim = static_cast<int>(H.rows());
    f.value = [H, bb](const Vec& x) { return 0.5 * x.dot(H * x) + bb.dot(x); };
    f.grad = [H, bb](const Vec& x) { return Vec(0.5 * (H + H.transpose()) * x + bb); };
    return f;
}

InfConvResult infimal_convolution(const SmoothFunction& f, const SmoothFunction& omega, const Mat& B, const Vec& x,
                                  double grad_tol, int max_iter) {
    if (B.rows() != omega.dim || B.cols() != f.dim || x.size() != omega.dim)
        fail(ErrorKind::ShapeMismatch, "infimal convolution: B must be dim(omega) x dim(f)");
    auto fun = [&](const Vec& u) { return f.value(u) + omega.value(x - B * u); };
    auto grad = [&](const Vec& u) { return Vec(f.grad(u) - B.transpose() * omega.grad(x - B * u)); };
    const auto r = detail::bb_minimize(fun, grad, Vec::Zero(f.dim), grad_tol, max_iter, "infimal convolution");
    return {r.value, r.x, r.iterations};
}

SmoothFunction infimal_convolution_function(const SmoothFunction& f, const SmoothFunction& omega, const Mat& B) {
    SmoothFunction g;
    g.dim = omega.dim;
    g.value = [f, omega, B](const Vec& x) { return infimal_convolution(f, omega, B, x).value; };
    g.grad = [f, omega, B](const Vec& x) {
        const auto r = infimal_convolution(f, omega, B, x);
        return Vec(omega.grad(x - B * r.u));
    };
    return g;
}

double conjugate_numeric(const SmoothFunction& g, const Vec& y, double grad_tol) {
    if (y.size() != g.dim) fail(ErrorKind::ShapeMismatch, "conjugate: y has the wrong size");
    auto fun = [&](const Vec& x) { return g.value(x) - y.dot(x); };
    auto grad = [&](const Vec& x) { return Vec(g.grad(x) - y); };
    const auto r = detail::bb_minimize(fun, grad, Vec::Zero(g.dim), grad_tol, 100000, "conjugate");
    return -r.value;
}

CurvatureEstimate curvature_probe(const SmoothFunction& g, const Vec& lo, const Vec& hi, long chords,
                                  std::uint64_t seed) {
    if (lo.size() != g.dim || hi.size() != g.dim) fail(ErrorKind::ShapeMismatch, "probe box has the wrong size");
    if (chords < 1) fail(ErrorKind::InsufficientData, "need at least one chord");
    CurvatureEstimate c;
    c.mu_hat = std::numeric_limits<double>::infinity();
    c.ell_hat = 0.0;
    const Vec width = hi - lo;
    for (long k = 0; k < chords; ++k) {
        StreamRng rng(seed, static_cast<std::uint64_t>(k), 0, 3);
        Vec a(g.dim), b(g.dim);
        for (int i = 0; i < g.dim; ++i) a[i] = lo[i] + width[i] * rng.uniform();
        if (k % 2 == 0) {
            for (int i = 0; i < g.dim; ++i) b[i] = lo[i] + width[i] * rng.uniform();
        } else {
            // short chord, still long enough that gradient round-off stays small
            for (int i = 0; i < g.dim; ++i) b[i] = std::clamp(a[i] + 0.05 * width[i] * (2.0 * rng.uniform() - 1.0),
                                                              lo[i], hi[i]);
        }
        const Vec d = a - b;
        const double dd = d.squaredNorm();
        if (dd < 1e-12) continue;
        const Vec gd = g.grad(a) - g.grad(b);
        c.mu_hat = std::min(c.mu_hat, gd.dot(d) / dd);
        c.ell_hat = std::max(c.ell_hat, gd.norm() / std::sqrt(dd));
        ++c.chords;
    }
    return c;
}

namespace {

Mat sqrt_psd(const Mat& S) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

constexpr long kBatches = 100;

}  // namespace

PassthroughReport variance_passthrough_check(const std::function<Vec(const Vec&)>& g,
                                             const std::optional<PassthroughCertificate>& cert, const Vec& mean,
                                             const Mat& Sigma, long samples, std::uint64_t seed, int threads) {
    if (!cert || !(cert->gamma > 0) || !(cert->L >= cert->gamma))
        fail(ErrorKind::CertificateMissing, "a certificate with 0 < gamma <= L is required");
    const int d = static_cast<int>(mean.size());
    if (Sigma.rows() != d || Sigma.cols() != d) fail(ErrorKind::ShapeMismatch, "Sigma must match the mean");
    if (samples < 2 * kBatches) fail(ErrorKind::InsufficientData, "too few samples for batch means");
    const Mat S = sqrt_psd(Sigma);
    // secant probes against the certificate
    for (long k = 0; k < 2000; ++k) {
        StreamRng rng(seed, static_cast<std::uint64_t>(k), 1, 4);
        Vec z1(d), z2(d);
        rng.normals(z1);
        rng.normals(z2);
        const Vec a = mean + 2.0 * S * z1, b = mean + 2.0 * S * z2;
        const Vec dx = a - b;
        const Vec dg = g(a) - g(b);
        const double dd = dx.squaredNorm();
        if (dd < 1e-14) continue;
        if (dg.dot(dx) < cert->gamma * dd * (1.0 - 1e-9) - 1e-12 || dg.norm() > cert->L * std::sqrt(dd) * (1.0 + 1e-9))
            fail(ErrorKind::CertificateMissing, "secant probe contradicts the supplied (gamma, L)");
    }
    const long per = samples / kBatches;
    std::vector<Vec> bsum(kBatches, Vec::Zero(d));
    std::vector<Mat> bsq(kBatches, Mat::Zero(d, d));
    const int nt = detail::resolve_threads(threads);
#pragma omp parallel for num_threads(nt) schedule(static)
    for (long b = 0; b < kBatches; ++b) {
        Vec z(d);
        for (long i = b * per; i < (b + 1) * per; ++i) {
            StreamRng rng(seed, static_cast<std::uint64_t>(i), 0, 4);
            rng.normals(z);
            const Vec y = g(mean + S * z);
            bsum[b] += y;
            bsq[b].noalias() += y * y.transpose();
        }
    }
    Vec tot = Vec::Zero(d);
    Mat totsq = Mat::Zero(d, d);
    std::vector<double> lam(kBatches);
    for (long b = 0; b < kBatches; ++b) {
        tot += bsum[b];
        totsq += bsq[b];
        const Vec mb = bsum[b] / static_cast<double>(per);
        lam[b] = min_eig(bsq[b] / static_cast<double>(per) - mb * mb.transpose()) * per / (per - 1.0);
    }
    const double N = static_cast<double>(per * kBatches);
    const Vec mu = tot / N;
    PassthroughReport r;
    r.samples = per * kBatches;
    r.lambda_min = min_eig((totsq / N - mu * mu.transpose()) * N / (N - 1.0));
    double lm = 0.0;
    for (double v : lam) lm += v;
    lm /= kBatches;
    double ss = 0.0;
    for (double v : lam) ss += (v - lm) * (v - lm);
    r.std_error = std::sqrt(ss / (kBatches - 1.0) / kBatches);
    r.mu = min_eig(Sigma);
    r.bound = r.mu * cert->gamma * cert->gamma;
    r.pass = r.lambda_min >= r.bound - 3.0 * r.std_error;
    return r;
}

SolutionVarianceReport solution_variance_check(const Mat& F, const Mat& W, const Mat& B, const Mat& Sigma,
                                               long samples, std::uint64_t seed, int threads) {
    const int n = static_cast<int>(W.rows());
    const int m = static_cast<int>(F.rows());
    if (B.rows() != n || B.cols() != m || Sigma.rows() != n || Sigma.cols() != n || F.cols() != m || W.cols() != n)
        fail(ErrorKind::ShapeMismatch, "solution variance check: inconsistent shapes");
    if (samples < 2 * kBatches) fail(ErrorKind::InsufficientData, "too few samples for batch means");
    // the minimiser is linear in x for quadratics
    const Mat G = (F + B.transpose() * W * B).llt().solve(B.transpose() * W);
    const Mat S = sqrt_psd(Sigma);
    const long per = samples / kBatches;
    std::vector<Vec> bsum(kBatches, Vec::Zero(m));
    std::vector<double> bsq(kBatches, 0.0);
    const int nt = detail::resolve_threads(threads);
#pragma omp parallel for num_threads(nt) schedule(static)
    for (long b = 0; b < kBatches; ++b) {
        Vec z(n);
        for (long i = b * per; i < (b + 1) * per; ++i) {
            StreamRng rng(seed, static_cast<std::uint64_t>(i), 0, 5);
            rng.normals(z);
            const Vec u = G * (S * z);
            bsum[b] += u;
            bsq[b] += u.squaredNorm();
        }
    }
    Vec tot = Vec::Zero(m);
    double totsq = 0.0;
    std::vector<double> tr(kBatches);
    for (long b = 0; b < kBatches; ++b) {
        tot += bsum[b];
        totsq += bsq[b];
        const Vec mb = bsum[b] / static_cast<double>(per);
        tr[b] = (bsq[b] / per - mb.squaredNorm()) * per / (per - 1.0);
    }
    const double N = static_cast<double>(per * kBatches);
    SolutionVarianceReport r;
    r.samples = per * kBatches;
    r.trace = (totsq / N - (tot / N).squaredNorm()) * N / (N - 1.0);
    double mt = 0.0;
    for (double v : tr) mt += v;
    mt /= kBatches;
    double ss = 0.0;
    for (double v : tr) ss += (v - mt) * (v - mt);
    r.std_error = std::sqrt(ss / (kBatches - 1.0) / kBatches);
    Eigen::JacobiSVD<Mat> svd(B);
    const Vec sv = svd.singularValues();
    const double smin = sv.minCoeff(), smax = sv.maxCoeff();
    const double mu_w = min_eig(W), ell_w = max_eig(W), ell_f = max_eig(F);
    const double den = ell_f + ell_w * smax;
    r.bound = n * min_eig(Sigma) * mu_w * mu_w * smin * smin / (2.0 * den * den);
    r.pass = r.trace >= r.bound - 3.0 * r.std_error;
    return r;
}

}  // namespace ppower
