#include "ppower/rollout.hpp"

#include <cmath>

#include "descent.hpp"
#include "parallel.hpp"
#include "ppower/error.hpp"

namespace ppower {

double QuadraticCost::state_cost(int t, const Vec& x) const {
    const Mat& Q = t >= sys_->T ? sys_->PT : sys_->Q[t];
    return x.dot(Q * x);
}

double QuadraticCost::input_cost(int t, const Vec& u) const { return u.dot(sys_->R[t] * u); }

Vec QuadraticCost::state_grad(int t, const Vec& x) const {
    const Mat& Q = t >= sys_->T ? sys_->PT : sys_->Q[t];
    return 2.0 * Q * x;
}

Vec QuadraticCost::input_grad(int t, const Vec& u) const { return 2.0 * sys_->R[t] * u; }

Vec NoPredictionLQR::act(int t, const Vec& x, const HistoryView&) const { return -ric_->K[t] * x; }

Vec OptimalPredictive::act(int t, const Vec& x, const HistoryView& h) const {
    return -ric_->K[t] * x + feedforward_window(*ric_, *sys_, t, model_->conditional_means(h));
}

Vec LinearPredictive::act(int t, const Vec& x, const HistoryView& h) const {
    const Mat& U = ups_.size() == 1 ? ups_.front() : ups_.at(static_cast<std::size_t>(t));
    return -ric_->K[t] * x + U * h.V(t);
}

Vec PlannerPolicy::act(int t, const Vec& x, const HistoryView& h) const {
    const int T = sys_->T;
    Mat means = Mat::Zero(sys_->n(), T - t);
    const Mat w = model_->conditional_means(h);
    const int k = std::min<int>(static_cast<int>(w.cols()), T - t);
    means.leftCols(k) = w.leftCols(k);
    return certainty_equivalent_plan(*cost_, *sys_, t, x, means, opt_).col(0);
}

namespace {

double plan_objective(const CostModel& cost, const LTVSystem& sys, int t, const Vec& x, const Mat& means,
                      const Mat& U, Mat* grad) {
    const int T = sys.T;
    const int H = T - t;
    std::vector<Vec> xs(static_cast<std::size_t>(H + 1));
    xs[0] = x;
    double J = 0.0;
    for (int j = 0; j < H; ++j) {
        const int tau = t + j;
        J += cost.state_cost(tau, xs[j]) + cost.input_cost(tau, U.col(j));
        xs[j + 1] = sys.A[tau] * xs[j] + sys.B[tau] * U.col(j) + means.col(j);
    }
    J += cost.state_cost(T, xs[H]);
    if (grad) {
        grad->resize(U.rows(), H);
        Vec lam = cost.state_grad(T, xs[H]);
        for (int j = H - 1; j >= 0; --j) {
            const int tau = t + j;
            grad->col(j) = cost.input_grad(tau, U.col(j)) + sys.B[tau].transpose() * lam;
            lam = cost.state_grad(tau, xs[j]) + sys.A[tau].transpose() * lam;
        }
    }
    return J;
}

}  // namespace

Mat certainty_equivalent_plan(const CostModel& cost, const LTVSystem& sys, int t, const Vec& x, const Mat& means,
                              const PlannerOptions& opt) {
    const int H = sys.T - t;
    if (t < 0 || H <= 0) fail(ErrorKind::DimensionMismatch, "planning time out of range");
    if (means.rows() != sys.n() || means.cols() != H)
        fail(ErrorKind::DimensionMismatch, "means must be n x (T - t)");
    const int m = sys.m();
    auto as_plan = [&](const Vec& v) { return Eigen::Map<const Mat>(v.data(), m, H); };
    auto fun = [&](const Vec& v) { return plan_objective(cost, sys, t, x, means, as_plan(v), nullptr); };
    auto grad = [&](const Vec& v) {
        Mat g;
        plan_objective(cost, sys, t, x, means, as_plan(v), &g);
        return Vec(Eigen::Map<const Vec>(g.data(), g.size()));
    };
    const auto r = detail::bb_minimize(fun, grad, Vec::Zero(m * H), opt.grad_tol, opt.max_iter,
                                       "certainty-equivalent planner");
    return as_plan(r.x);
}

Trajectory run_policy(const LTVSystem& sys, const Policy& policy, const ProblemInstance& inst, const CostModel* cost) {
    const int T = sys.T;
    if (inst.horizon() != T) fail(ErrorKind::DimensionMismatch, "instance horizon differs from the system");
    if (inst.W.cols() != sys.n()) fail(ErrorKind::DimensionMismatch, "disturbance dimension differs from the state");
    QuadraticCost quad(sys);
    const CostModel& c = cost ? *cost : static_cast<const CostModel&>(quad);
    Trajectory tr;
    tr.X.resize(T + 1, sys.n());
    tr.U.resize(T, sys.m());
    tr.stage.resize(T + 1);
    Vec x = sys.x0;
    tr.X.row(0) = x.transpose();
    for (int t = 0; t < T; ++t) {
        const HistoryView h(inst, t);
        const Vec u = policy.act(t, x, h);
        if (u.size() != sys.m()) fail(ErrorKind::DimensionMismatch, "policy returned an action of the wrong size");
        tr.U.row(t) = u.transpose();
        tr.stage[t] = c.state_cost(t, x) + c.input_cost(t, u);
        x = sys.A[t] * x + sys.B[t] * u + inst.W.row(t).transpose();
        tr.X.row(t + 1) = x.transpose();
    }
    tr.stage[T] = c.state_cost(T, x);
    tr.total = tr.stage.sum();
    return tr;
}

namespace {

void mean_and_se(const std::vector<double>& v, double& mean, double& se) {
    const double n = static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += x;
    mean = s / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
}

}  // namespace

CostReport monte_carlo_cost(const LTVSystem& sys, const Policy& policy, const PredictorModel& model, long count,
                            std::uint64_t seed, int threads, bool keep) {
    if (count < 2) fail(ErrorKind::InsufficientData, "Monte Carlo needs at least two instances");
    std::vector<double> costs(static_cast<std::size_t>(count));
    const int nt = detail::resolve_threads(threads);
#pragma omp parallel for num_threads(nt) schedule(static)
    for (long i = 0; i < count; ++i) {
        const ProblemInstance inst = model.sample_instance(seed, static_cast<std::uint64_t>(i));
        costs[i] = run_policy(sys, policy, inst).total;
    }
    CostReport r;
    r.count = count;
    mean_and_se(costs, r.mean, r.std_error);
    if (keep) r.costs = std::move(costs);
    return r;
}

PowerEstimate prediction_power_mc(const LTVSystem& sys, const PredictorModel& model, long count, std::uint64_t seed,
                                  int threads) {
    if (count < 2) fail(ErrorKind::InsufficientData, "Monte Carlo needs at least two instances");
    const RiccatiSolution ric = riccati_backward(sys);
    const NoPredictionLQR base(ric);
    const OptimalPredictive pred(ric, sys, model);
    std::vector<double> cb(static_cast<std::size_t>(count)), cp(static_cast<std::size_t>(count)),
        diff(static_cast<std::size_t>(count));
    const int nt = detail::resolve_threads(threads);
#pragma omp parallel for num_threads(nt) schedule(static)
    for (long i = 0; i < count; ++i) {
        const ProblemInstance inst = model.sample_instance(seed, static_cast<std::uint64_t>(i));
        cb[i] = run_policy(sys, base, inst).total;
        cp[i] = run_policy(sys, pred, inst).total;
        diff[i] = cb[i] - cp[i];
    }
    PowerEstimate e;
    e.count = count;
    double se_b, se_p;
    mean_and_se(diff, e.estimate, e.std_error);
    mean_and_se(cb, e.baseline_cost, se_b);
    mean_and_se(cp, e.predictive_cost, se_p);
    e.unpaired_std_error = std::sqrt(se_b * se_b + se_p * se_p);
    return e;
}

}  // namespace ppower
