#include "ppower/scalar_dp.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/tools/minima.hpp>
#include <Eigen/Eigenvalues>

#include "parallel.hpp"
#include "ppower/error.hpp"
#include "ppower/rng.hpp"

namespace ppower {

ScalarDist ScalarDist::gaussian(double sd) {
    if (!(sd >= 0)) fail(ErrorKind::InvalidModel, "standard deviation must be nonnegative");
    if (sd == 0) return point();
    ScalarDist d;
    d.kind = Kind::Gaussian;
    d.sd = sd;
    return d;
}

ScalarDist ScalarDist::discrete(std::vector<double> nodes, std::vector<double> weights) {
    if (nodes.empty() || nodes.size() != weights.size()) fail(ErrorKind::InvalidModel, "discrete law shape");
    double s = 0;
    for (double w : weights) {
        if (w < 0) fail(ErrorKind::InvalidModel, "negative probability");
        s += w;
    }
    if (std::abs(s - 1.0) > 1e-12) fail(ErrorKind::InvalidModel, "probabilities must sum to 1");
    ScalarDist d;
    d.kind = Kind::Discrete;
    d.nodes = std::move(nodes);
    d.weights = std::move(weights);
    return d;
}

void gauss_hermite(int k, std::vector<double>& nodes, std::vector<double>& weights) {
    if (k < 1) fail(ErrorKind::InvalidModel, "quadrature needs at least one node");
    // Jacobi matrix of the monic probabilists' Hermite recurrence
    Mat J = Mat::Zero(k, k);
    for (int i = 1; i < k; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i));
    Eigen::SelfAdjointEigenSolver<Mat> es(J);
    nodes.resize(static_cast<std::size_t>(k));
    weights.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        nodes[i] = es.eigenvalues()[i];
        const double v = es.eigenvectors()(0, i);
        weights[i] = v * v;
    }
}

void ScalarDist::quadrature(int k, std::vector<double>& x, std::vector<double>& w) const {
    switch (kind) {
        case Kind::Point:
            x = {0.0};
            w = {1.0};
            return;
        case Kind::Discrete:
            x = nodes;
            w = weights;
            return;
        case Kind::Gaussian:
            gauss_hermite(k, x, w);
            for (double& v : x) v *= sd;
            return;
    }
}

double ScalarDist::variance() const {
    switch (kind) {
        case Kind::Point: return 0.0;
        case Kind::Gaussian: return sd * sd;
        case Kind::Discrete: {
            double m = 0, s = 0;
            for (std::size_t i = 0; i < nodes.size(); ++i) m += weights[i] * nodes[i];
            for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * (nodes[i] - m) * (nodes[i] - m);
            return s;
        }
    }
    return 0.0;
}

namespace {

double draw(const ScalarDist& d, StreamRng& rng) {
    switch (d.kind) {
        case ScalarDist::Kind::Point: return 0.0;
        case ScalarDist::Kind::Gaussian: return d.sd * rng.normal();
        case ScalarDist::Kind::Discrete: {
            const double u = rng.uniform();
            double c = 0;
            for (std::size_t i = 0; i < d.nodes.size(); ++i) {
                c += d.weights[i];
                if (u < c) return d.nodes[i];
            }
            return d.nodes.back();
        }
    }
    return 0.0;
}

}  // namespace

ScalarLaw ScalarLaw::marginal(int k) const {
    using K = ScalarDist::Kind;
    if (mean.kind == K::Point) return *this;
    ScalarLaw out;
    if (mean.kind != K::Discrete && residual.kind != K::Discrete) {
        out.residual = ScalarDist::gaussian(std::sqrt(mean.variance() + residual.variance()));
        return out;
    }
    std::vector<double> xm, wm, xr, wr, x, w;
    mean.quadrature(k, xm, wm);
    residual.quadrature(k, xr, wr);
    for (std::size_t i = 0; i < xm.size(); ++i)
        for (std::size_t j = 0; j < xr.size(); ++j) {
            x.push_back(xm[i] + xr[j]);
            w.push_back(wm[i] * wr[j]);
        }
    double s = 0;
    for (double v : w) s += v;
    for (double& v : w) v /= s;
    out.residual = ScalarDist::discrete(std::move(x), std::move(w));
    return out;
}

ScalarProblem ScalarProblem::from_lqr(const LTVSystem& sys, const ScalarLaw& law) {
    sys.validate();
    if (sys.n() != 1 || sys.m() != 1) fail(ErrorKind::BudgetExceeded, "scalar programme needs n = m = 1");
    if (!sys.is_time_invariant()) fail(ErrorKind::InvalidModel, "scalar programme needs a time-invariant system");
    ScalarProblem p;
    p.T = sys.T;
    p.A = sys.A[0](0, 0);
    p.B = sys.B[0](0, 0);
    p.x0 = sys.x0[0];
    const double q = sys.Q[0](0, 0), r = sys.R[0](0, 0), pt = sys.PT(0, 0);
    p.hx = [q](double x) { return q * x * x; };
    p.hu = [r](double u) { return r * u * u; };
    p.hT = [pt](double x) { return pt * x * x; };
    p.theta = law;
    return p;
}

ScalarLaw scalar_law(const PredictorModel& model) {
    if (model.n() != 1 || model.d() != 1) fail(ErrorKind::ShapeMismatch, "scalar law needs n = d = 1");
    ScalarLaw law;
    switch (model.kind()) {
        case PredictorKind::Baseline:
            law.residual = ScalarDist::gaussian(1.0);
            break;
        case PredictorKind::AffineGaussian: {
            const double g = model.rho() * model.theta()(0, 0);
            law.mean = ScalarDist::gaussian(std::abs(g));
            law.residual = ScalarDist::gaussian(std::sqrt(std::max(0.0, 1.0 - g * g)));
            break;
        }
        case PredictorKind::BinaryPerfect:
            law.mean = ScalarDist::discrete({-1.0, 1.0}, {0.5, 0.5});
            break;
        default:
            fail(ErrorKind::UnsupportedPredictor, "scalar programme covers one-step predictors only");
    }
    return law;
}

ScalarLaw deterministic_law() { return {}; }

namespace {

using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;

// spline on [a, a + (N-1) h], second-order Taylor continuation outside
struct GridFn {
    double a = 0, b = 0;
    std::unique_ptr<Spline> s;
    double fa = 0, da = 0, ca = 0, fb = 0, db = 0, cb = 0;

    void build(const std::vector<double>& v, double a0, double h) {
        a = a0;
        b = a0 + h * static_cast<double>(v.size() - 1);
        s = std::make_unique<Spline>(v.begin(), v.end(), a0, h);
        fa = (*s)(a);
        da = s->prime(a);
        ca = std::max(0.0, s->double_prime(a));
        fb = (*s)(b);
        db = s->prime(b);
        cb = std::max(0.0, s->double_prime(b));
    }
    double operator()(double x) const {
        if (x < a) {
            const double d = x - a;
            return fa + da * d + 0.5 * ca * d * d;
        }
        if (x > b) {
            const double d = x - b;
            return fb + db * d + 0.5 * cb * d * d;
        }
        return (*s)(x);
    }
};

template <class F>
std::pair<double, double> brent(F&& f, double lo, double hi, int bits) {
    boost::uintmax_t it = 500;
    return boost::math::tools::brent_find_minima(f, lo, hi, bits, it);
}

}  // namespace

struct ScalarDp::Impl {
    ScalarProblem p;
    DpOptions opt;
    std::vector<double> xm, wm, xr, wr;
    std::vector<GridFn> G;     // t = 0..T-1
    std::vector<GridFn> Cbar;  // t = 0..T (0 unused)
    std::vector<double> ymin;  // argmin of Cbar_t
    double u_hu = 0.0;

    double minimise_u(int t, double z) const {
        const GridFn& C = Cbar[t + 1];
        auto f = [&](double u) { return p.hu(u) + C(z + p.B * u); };
        if (p.B == 0.0) return u_hu;
        const double uc = (ymin[t + 1] - z) / p.B;
        const double lo = std::min(u_hu, uc) - 5.0, hi = std::max(u_hu, uc) + 5.0;
        return brent(f, lo, hi, opt.brent_bits).first;
    }
};

ScalarDp::ScalarDp(const ScalarProblem& prob, const ScalarLaw& law, const DpOptions& opt)
    : impl_(std::make_unique<Impl>()), T_(prob.T) {
    if (prob.T <= 0) fail(ErrorKind::InvalidModel, "T must be positive");
    if (!prob.hx || !prob.hu || !prob.hT) fail(ErrorKind::InvalidModel, "scalar costs missing");
    Impl& I = *impl_;
    I.p = prob;
    I.opt = opt;
    law.mean.quadrature(opt.quad_nodes, I.xm, I.wm);
    law.residual.quadrature(opt.quad_nodes, I.xr, I.wr);
    const int T = prob.T;
    const double h = opt.grid_step;
    const int ny = static_cast<int>(std::lround(2.0 * opt.y_half / h)) + 1;
    const int nz = static_cast<int>(std::lround(2.0 * opt.z_half / h)) + 1;
    I.G.resize(static_cast<std::size_t>(T));
    I.Cbar.resize(static_cast<std::size_t>(T + 1));
    I.ymin.assign(static_cast<std::size_t>(T + 1), 0.0);
    I.u_hu = brent(prob.hu, -50.0, 50.0, opt.brent_bits).first;

    auto locate_min = [&](int t) {
        const GridFn& C = I.Cbar[t];
        I.ymin[t] = brent([&](double y) { return C(y); }, -opt.y_half, opt.y_half, opt.brent_bits).first;
    };

    std::vector<double> vy(static_cast<std::size_t>(ny)), vz(static_cast<std::size_t>(nz));
    for (int i = 0; i < ny; ++i) {
        const double y = -opt.y_half + h * i;
        double s = 0;
        for (std::size_t j = 0; j < I.xr.size(); ++j) s += I.wr[j] * prob.hT(y + I.xr[j]);
        vy[i] = s;
    }
    I.Cbar[T].build(vy, -opt.y_half, h);
    locate_min(T);
    for (int t = T - 1; t >= 0; --t) {
        for (int i = 0; i < nz; ++i) {
            const double z = -opt.z_half + h * i;
            const double u = I.minimise_u(t, z);
            vz[i] = prob.hu(u) + I.Cbar[t + 1](z + prob.B * u);
        }
        I.G[t].build(vz, -opt.z_half, h);
        if (t == 0) break;
        const GridFn& Gt = I.G[t];
        for (int i = 0; i < ny; ++i) {
            const double y = -opt.y_half + h * i;
            double s = 0;
            for (std::size_t j = 0; j < I.xr.size(); ++j) {
                const double x = y + I.xr[j];
                double inner = 0;
                for (std::size_t k = 0; k < I.xm.size(); ++k) inner += I.wm[k] * Gt(prob.A * x + I.xm[k]);
                s += I.wr[j] * (prob.hx(x) + inner);
            }
            vy[i] = s;
        }
        I.Cbar[t].build(vy, -opt.y_half, h);
        locate_min(t);
    }
}

ScalarDp::~ScalarDp() = default;
ScalarDp::ScalarDp(ScalarDp&&) noexcept = default;

double ScalarDp::policy(int t, double x, double m) const {
    if (t < 0 || t >= T_) fail(ErrorKind::DimensionMismatch, "t out of range");
    return impl_->minimise_u(t, impl_->p.A * x + m);
}

double ScalarDp::q_gap(int t, double x, double m, double u) const {
    const double z = impl_->p.A * x + m;
    const double us = impl_->minimise_u(t, z);
    const auto& C = impl_->Cbar[t + 1];
    const auto& hu = impl_->p.hu;
    return hu(u) + C(z + impl_->p.B * u) - hu(us) - C(z + impl_->p.B * us);
}

double ScalarDp::cost_to_go(int t, double x, double m) const {
    if (t == T_) return impl_->p.hT(x);
    return impl_->p.hx(x) + impl_->G[t](impl_->p.A * x + m);
}

double ScalarDp::cbar(int t, double y) const { return impl_->Cbar.at(static_cast<std::size_t>(t))(y); }

double ScalarDp::expected_cost() const {
    double s = 0;
    for (std::size_t k = 0; k < impl_->xm.size(); ++k) s += impl_->wm[k] * cost_to_go(0, impl_->p.x0, impl_->xm[k]);
    return s;
}

namespace {

void check_budget(const ScalarProblem& prob, int t, const CheckOptions& opt) {
    if (prob.T > 4) fail(ErrorKind::BudgetExceeded, "condition checks run only for T <= 4");
    if (opt.outer > 1000 || opt.inner > 10000 || opt.outer < 2 || opt.inner < 1)
        fail(ErrorKind::BudgetExceeded, "sample budget outside outer <= 1e3, inner <= 1e4");
    if (t < 0 || t >= prob.T) fail(ErrorKind::DimensionMismatch, "t out of range");
}

}  // namespace

Condition1Result condition1_check(const ScalarProblem& prob, int t, const CheckOptions& opt) {
    check_budget(prob, t, opt);
    DpOptions dpo = opt.dp;
    dpo.quad_nodes = opt.inner;
    const ScalarDp dp(prob, prob.theta, dpo);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    const double deltas[] = {-3.0, -2.0, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.0, 3.0};
    for (int i = -8; i <= 8; ++i) {
        const double x = 0.5 * i;
        for (double m : {-1.0, 0.0, 1.0}) {
            const double us = dp.policy(t, x, m);
            for (double d : deltas) {
                const double r = dp.q_gap(t, x, m, us + d) / (d * d);
                lo = std::min(lo, r);
                hi = std::max(hi, r);
            }
        }
    }
    Condition1Result out;
    out.M = std::max(0.0, lo);
    out.spread = hi - lo;
    return out;
}

Condition2Result condition2_check(const ScalarProblem& prob, int t, const CheckOptions& opt) {
    check_budget(prob, t, opt);
    DpOptions dpo = opt.dp;
    dpo.quad_nodes = opt.inner;
    const ScalarDp dp(prob, prob.theta, dpo);
    const ScalarLaw base_law = prob.theta.marginal(opt.inner);
    const ScalarDp base(prob, base_law, dpo);
    std::vector<double> xm, wm;
    prob.theta.mean.quadrature(opt.inner, xm, wm);
    std::vector<double> v(static_cast<std::size_t>(opt.outer));
    for (long i = 0; i < opt.outer; ++i) {
        // X_t from the baseline policy's trajectory, which is F_t(0)-measurable
        double x = prob.x0;
        for (int s = 0; s < t; ++s) {
            StreamRng rng(opt.seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(s), 6);
            const double w = draw(prob.theta.mean, rng) + draw(prob.theta.residual, rng);
            x = prob.A * x + prob.B * base.policy(s, x, 0.0) + w;
        }
        double m1 = 0, m2 = 0;
        for (std::size_t k = 0; k < xm.size(); ++k) {
            const double u = dp.policy(t, x, xm[k]);
            m1 += wm[k] * u;
            m2 += wm[k] * u * u;
        }
        v[i] = std::max(0.0, m2 - m1 * m1);
    }
    double mean = 0;
    for (double a : v) mean += a;
    mean /= static_cast<double>(v.size());
    double ss = 0;
    for (double a : v) ss += (a - mean) * (a - mean);
    Condition2Result r;
    r.samples = opt.outer;
    r.sigma = mean;
    r.std_error = std::sqrt(ss / (v.size() - 1.0) / v.size());
    r.sigma_slack = std::max(0.0, mean - 2.0 * r.std_error);
    return r;
}

ScalarPowerReport scalar_power_mc(const ScalarProblem& prob, long count, std::uint64_t seed, int threads,
                                  const DpOptions& opt) {
    if (count < 2) fail(ErrorKind::InsufficientData, "Monte Carlo needs at least two instances");
    const ScalarDp dp(prob, prob.theta, opt);
    const ScalarDp base(prob, prob.theta.marginal(opt.quad_nodes), opt);
    std::vector<double> d(static_cast<std::size_t>(count)), cth(d.size()), cb(d.size());
    const int nt = detail::resolve_threads(threads);
#pragma omp parallel for num_threads(nt) schedule(static)
    for (long i = 0; i < count; ++i) {
        double x = prob.x0, xb = prob.x0, c = 0, c0 = 0;
        for (int t = 0; t < prob.T; ++t) {
            StreamRng rng(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(t), 0);
            const double m = draw(prob.theta.mean, rng);
            const double w = m + draw(prob.theta.residual, rng);
            const double u = dp.policy(t, x, m);
            const double ub = base.policy(t, xb, 0.0);
            c += prob.hx(x) + prob.hu(u);
            c0 += prob.hx(xb) + prob.hu(ub);
            x = prob.A * x + prob.B * u + w;
            xb = prob.A * xb + prob.B * ub + w;
        }
        c += prob.hT(x);
        c0 += prob.hT(xb);
        cth[i] = c;
        cb[i] = c0;
        d[i] = c0 - c;
    }
    auto mean_se = [](const std::vector<double>& v, double& m, double& se) {
        m = 0;
        for (double a : v) m += a;
        m /= static_cast<double>(v.size());
        double ss = 0;
        for (double a : v) ss += (a - m) * (a - m);
        se = std::sqrt(ss / (v.size() - 1.0) / v.size());
    };
    ScalarPowerReport r;
    r.count = count;
    double se_unused;
    mean_se(d, r.estimate, r.std_error);
    mean_se(cth, r.cost_theta, se_unused);
    mean_se(cb, r.cost_baseline, se_unused);
    r.exact = base.expected_cost() - dp.expected_cost();
    return r;
}

ScalarProblem nonquadratic_toy(int T, double rho, double c) {
    ScalarProblem p;
    p.T = T;
    p.A = 0.5;
    p.B = 1.0;
    p.hx = [c](double x) { return 0.5 * x * x + c * std::log1p(x * x); };
    p.hu = [](double u) { return 0.5 * u * u; };
    p.hT = p.hx;
    p.theta.mean = ScalarDist::gaussian(rho);
    p.theta.residual = ScalarDist::gaussian(std::sqrt(1.0 - rho * rho));
    return p;
}

}  // namespace ppower
