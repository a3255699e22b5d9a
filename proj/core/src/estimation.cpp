#include "ppower/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Eigenvalues>

#include "parallel.hpp"
#include "ppower/error.hpp"

namespace ppower {

namespace {

// rows [t_first, t_first + W.rows()) of one instance; anything before 0 reads as zero
void window_features(const Mat& W, const Mat& V, int t_first, int t, const FeatureWindow& fw, bool use_predictions,
                     Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
    const auto n = W.cols();
    const auto d = V.cols();
    Eigen::Index c = 0;
    if (use_predictions) {
        for (int j = 0; j < fw.predictions; ++j) {
            const int tau = t - j;
            if (tau >= 0) out.segment(c, d) = V.row(tau - t_first);
            else out.segment(c, d).setZero();
            c += d;
        }
    }
    for (int j = 1; j <= fw.disturbances; ++j) {
        const int tau = t - j;
        if (tau >= 0) out.segment(c, n) = W.row(tau - t_first);
        else out.segment(c, n).setZero();
        c += n;
    }
}

double mse_of(const LinearRegressor& f, const Mat& X, const Mat& Y) {
    if (X.rows() == 0) return 0.0;
    return (f.predict(X) - Y).squaredNorm() / static_cast<double>(X.rows());
}

}  // namespace

void SplitFractions::validate() const {
    if (!(train > 0 && val >= 0 && test > 0) || std::abs(train + val + test - 1.0) > 1e-9)
        fail(ErrorKind::InsufficientData, "split fractions must be positive and sum to 1");
}

void RegressionDataset::ranges(long& n_train, long& n_val, long& n_test) const {
    split.validate();
    const long N = static_cast<long>(inputs.rows());
    n_train = static_cast<long>(std::floor(split.train * static_cast<double>(N) + 1e-9));
    n_val = static_cast<long>(std::floor(split.val * static_cast<double>(N) + 1e-9));
    n_test = N - n_train - n_val;
}

Mat LinearRegressor::predict(const Mat& X) const {
    Mat out = X * weights;
    out.rowwise() += intercept.transpose();
    return out;
}

LinearRegressor fit_linear(const Mat& Xtr, const Mat& Ytr, const Mat& Xva, const Mat& Yva) {
    const auto N = Xtr.rows();
    const auto p = Xtr.cols();
    const auto q = Ytr.cols();
    if (N < p + 1) fail(ErrorKind::InsufficientData, "train rows must exceed the feature count");
    if (Ytr.rows() != N || Xva.rows() != Yva.rows() || (Xva.rows() > 0 && Xva.cols() != p))
        fail(ErrorKind::DimensionMismatch, "regression blocks disagree in shape");

    const Eigen::RowVectorXd xm = Xtr.colwise().mean();
    const Eigen::RowVectorXd ym = Ytr.colwise().mean();
    const Mat Xc = Xtr.rowwise() - xm;
    const Mat Yc = Ytr.rowwise() - ym;
    const double inv = 1.0 / static_cast<double>(N);
    const Mat G = (Xc.transpose() * Xc) * inv;
    const Mat b = (Xc.transpose() * Yc) * inv;

    LinearRegressor best;
    double best_mse = std::numeric_limits<double>::infinity();
    bool any = false;
    for (double lam : ridge_grid()) {
        Mat Gl = G;
        Gl.diagonal().array() += lam;
        Eigen::LLT<Mat> llt(Gl);
        if (llt.info() != Eigen::Success) continue;
        LinearRegressor f;
        f.weights = llt.solve(b);
        if (!f.weights.allFinite()) continue;
        f.intercept = (ym - xm * f.weights).transpose();
        f.ridge = lam;
        const double score = Xva.rows() > 0 ? mse_of(f, Xva, Yva) : mse_of(f, Xtr, Ytr);
        if (!any || score < best_mse) {
            best = f;
            best_mse = score;
            any = true;
        }
    }
    if (p == 0) {
        best.weights = Mat::Zero(0, q);
        best.intercept = ym.transpose();
        return best;
    }
    if (!any) fail(ErrorKind::RankDeficient, "normal equations singular for every ridge candidate");
    return best;
}

LinearRegressor fit_linear(const RegressionDataset& ds) {
    long ntr, nva, nte;
    ds.ranges(ntr, nva, nte);
    return fit_linear(ds.inputs.topRows(ntr), ds.targets.topRows(ntr), ds.inputs.middleRows(ntr, nva),
                      ds.targets.middleRows(ntr, nva));
}

Mat psd_project(const Mat& S) {
    Mat Ss = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(Ss);
    const Vec ev = es.eigenvalues().cwiseMax(0.0);
    Mat out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

CovarianceEstimate ecce(const RegressionDataset& ds, bool keep_residuals) {
    long ntr, nva, nte;
    ds.ranges(ntr, nva, nte);
    if (nte < 30) fail(ErrorKind::InsufficientData, "test split must hold at least 30 rows");
    const LinearRegressor f = fit_linear(ds);
    const Mat R = ds.targets.bottomRows(nte) - f.predict(ds.inputs.bottomRows(nte));
    CovarianceEstimate out;
    out.count = nte;
    out.matrix = psd_project(R.transpose() * R / static_cast<double>(nte));
    if (keep_residuals) out.residuals = R;
    return out;
}

long feature_count(const PredictorModel& model, int t, const FeatureWindow& fw, bool use_predictions) {
    long p;
    if (fw.full_history) p = static_cast<long>(t) * model.n() + (use_predictions ? static_cast<long>(t + 1) * model.d() : 0);
    else p = static_cast<long>(fw.disturbances) * model.n() + (use_predictions ? static_cast<long>(fw.predictions) * model.d() : 0);
    return p;
}

void history_features(const ProblemInstance& inst, int t, const FeatureWindow& fw, bool use_predictions,
                      Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
    const HistoryView h(inst, t);
    if (fw.full_history) {
        Eigen::Index c = 0;
        for (int tau = 0; tau < t; ++tau) {
            const Vec w = h.W(tau);
            out.segment(c, w.size()) = w.transpose();
            c += w.size();
        }
        if (use_predictions)
            for (int tau = 0; tau <= t; ++tau) {
                const Vec v = h.V(tau);
                out.segment(c, v.size()) = v.transpose();
                c += v.size();
            }
        return;
    }
    // the window reads only w_{<t} and v_{<=t}, the same rows the view would allow
    window_features(inst.W, inst.V, 0, t, fw, use_predictions, out);
}

std::vector<ProblemInstance> sample_instances(const PredictorModel& model, long count, std::uint64_t seed,
                                              int threads) {
    std::vector<ProblemInstance> out(static_cast<std::size_t>(count));
    const int nt = detail::resolve_threads(threads);
#pragma omp parallel for num_threads(nt) schedule(static)
    for (long i = 0; i < count; ++i) out[i] = model.sample_instance(seed, static_cast<std::uint64_t>(i));
    return out;
}

PowerEvaluation prediction_power_evaluate(const LTVSystem& sys, const std::vector<ProblemInstance>& instances,
                                          const PredictorModel& model, const FeatureWindow& fw,
                                          const SplitFractions& split, int threads) {
    const long N = static_cast<long>(instances.size());
    if (N < 1000) fail(ErrorKind::InsufficientData, "power evaluation needs at least 1000 instances");
    split.validate();
    const int T = sys.T;
    const int m = sys.m();
    for (int t = 0; t < T; ++t) {
        const long p = std::max(feature_count(model, t, fw, true), feature_count(model, t, fw, false));
        if (p > fw.max_features)
            fail(ErrorKind::HistoryFeatureOverflow, "feature window needs " + std::to_string(p) + " columns at t=" +
                                                        std::to_string(t));
    }
    const RiccatiSolution ric = riccati_backward(sys);
    const int nt = detail::resolve_threads(threads);

    std::vector<Mat> U(static_cast<std::size_t>(N));
#pragma omp parallel for num_threads(nt) schedule(static)
    for (long i = 0; i < N; ++i) U[i] = surrogate_actions(ric, sys, instances[i].W);

    RegressionDataset probe;
    probe.inputs.resize(N, 1);
    probe.split = split;
    long ntr, nva, nte;
    probe.ranges(ntr, nva, nte);
    if (nte < 30) fail(ErrorKind::InsufficientData, "test split must hold at least 30 instances");

    PowerEvaluation ev;
    ev.trace_baseline.assign(T, 0.0);
    ev.trace_theta.assign(T, 0.0);
    ev.m_min_eig.assign(T, 0.0);
    ev.test_count = nte;
    Mat contrib(nte, T);

#pragma omp parallel for num_threads(nt) schedule(dynamic)
    for (int t = 0; t < T; ++t) {
        Mat Y(N, m);
        for (long i = 0; i < N; ++i) Y.row(i) = U[i].row(t);
        double tr[2] = {0.0, 0.0};
        Mat c[2];
        for (int view = 0; view < 2; ++view) {
            const bool use_pred = view == 1;
            const long p = feature_count(model, t, fw, use_pred);
            Mat X(N, p);
            for (long i = 0; i < N; ++i) history_features(instances[i], t, fw, use_pred, X.row(i));
            const LinearRegressor f =
                fit_linear(X.topRows(ntr), Y.topRows(ntr), X.middleRows(ntr, nva), Y.middleRows(ntr, nva));
            const Mat R = Y.bottomRows(nte) - f.predict(X.bottomRows(nte));
            c[view] = ((R * ric.M[t]).cwiseProduct(R)).rowwise().sum();
            tr[view] = c[view].mean();
        }
        ev.trace_baseline[t] = tr[0];
        ev.trace_theta[t] = tr[1];
        Eigen::SelfAdjointEigenSolver<Mat> es(ric.M[t], Eigen::EigenvaluesOnly);
        ev.m_min_eig[t] = es.eigenvalues().minCoeff();
        contrib.col(t) = c[0] - c[1];
    }
    const Vec d = contrib.rowwise().sum();
    double s = 0.0;
    for (int t = 0; t < T; ++t) s += ev.trace_baseline[t] - ev.trace_theta[t];
    ev.estimate = s;
    const double mean = d.mean();
    const double var = (d.array() - mean).square().sum() / static_cast<double>(nte - 1);
    ev.std_error = std::sqrt(var / static_cast<double>(nte));
    return ev;
}

TotalCovarianceCheck total_covariance_check(const Mat& X, const std::vector<long>& labels_coarse,
                                            const std::vector<long>& labels_fine) {
    const long N = static_cast<long>(X.rows());
    if (N == 0) fail(ErrorKind::EmptyCell, "no samples");
    if (static_cast<long>(labels_coarse.size()) != N || static_cast<long>(labels_fine.size()) != N)
        fail(ErrorKind::DimensionMismatch, "one label per sample required");
    const auto q = X.cols();
    std::map<long, std::pair<Vec, long>> fine, coarse;
    std::map<long, long> parent;
    for (long i = 0; i < N; ++i) {
        auto& f = fine[labels_fine[i]];
        if (f.second == 0) f.first = Vec::Zero(q);
        f.first += X.row(i).transpose();
        ++f.second;
        auto& c = coarse[labels_coarse[i]];
        if (c.second == 0) c.first = Vec::Zero(q);
        c.first += X.row(i).transpose();
        ++c.second;
        auto it = parent.find(labels_fine[i]);
        if (it == parent.end()) parent[labels_fine[i]] = labels_coarse[i];
        else if (it->second != labels_coarse[i])
            fail(ErrorKind::DimensionMismatch, "fine labels do not refine the coarse labels");
    }
    for (auto& [k, v] : fine) {
        if (v.second == 0) fail(ErrorKind::EmptyCell, "empty fine cell");
        v.first /= static_cast<double>(v.second);
    }
    for (auto& [k, v] : coarse) {
        if (v.second == 0) fail(ErrorKind::EmptyCell, "empty coarse cell");
        v.first /= static_cast<double>(v.second);
    }
    TotalCovarianceCheck out;
    out.between = Mat::Zero(q, q);
    out.within_coarse = Mat::Zero(q, q);
    out.within_fine = Mat::Zero(q, q);
    for (long i = 0; i < N; ++i) {
        const Vec x = X.row(i).transpose();
        const Vec& mf = fine[labels_fine[i]].first;
        const Vec& mc = coarse[labels_coarse[i]].first;
        out.between += (mf - mc) * (mf - mc).transpose();
        out.within_coarse += (x - mc) * (x - mc).transpose();
        out.within_fine += (x - mf) * (x - mf).transpose();
    }
    const double inv = 1.0 / static_cast<double>(N);
    out.between *= inv;
    out.within_coarse *= inv;
    out.within_fine *= inv;
    out.defect = (out.between - (out.within_coarse - out.within_fine)).norm();
    return out;
}

StepMseComparison step_mse_compare(const PredictorModel& a, const PredictorModel& b, long train, long val, long test,
                                   std::uint64_t seed, const FeatureWindow& fw, int target_offset, int threads) {
    if (a.horizon() != b.horizon() || a.n() != b.n()) fail(ErrorKind::DimensionMismatch, "models disagree in shape");
    if (fw.full_history) fail(ErrorKind::HistoryFeatureOverflow, "step MSE uses a bounded window");
    if (test < 30 || train < 10) fail(ErrorKind::InsufficientData, "too few rows");
    const int T = a.horizon();
    const int n = a.n();
    const long N = train + val + test;
    const int steps = T - target_offset;
    const int nt = detail::resolve_threads(threads);
    const int back = std::max(fw.predictions - 1, fw.disturbances);

    StepMseComparison out;
    out.mse_a.assign(steps, 0.0);
    out.mse_b.assign(steps, 0.0);
    out.test_count = test;
    Vec per_a = Vec::Zero(test), per_b = Vec::Zero(test);

    const PredictorModel* models[2] = {&a, &b};
    for (int t = 0; t < steps; ++t) {
        const int t0 = std::max(0, t - back);
        const int t1 = t + 1 + target_offset;
        for (int k = 0; k < 2; ++k) {
            const PredictorModel& mod = *models[k];
            const long p = feature_count(mod, t, fw, true);
            Mat X(N, p), Y(N, n);
#pragma omp parallel for num_threads(nt) schedule(static)
            for (long i = 0; i < N; ++i) {
                Mat Wr, Vr;
                mod.sample_rows(seed, static_cast<std::uint64_t>(i), t0, t1, Wr, Vr);
                window_features(Wr, Vr, t0, t, fw, true, X.row(i));
                Y.row(i) = Wr.row(t + target_offset - t0);
            }
            const LinearRegressor f =
                fit_linear(X.topRows(train), Y.topRows(train), X.middleRows(train, val), Y.middleRows(train, val));
            const Vec r2 = (Y.bottomRows(test) - f.predict(X.bottomRows(test))).rowwise().squaredNorm() /
                           static_cast<double>(n);
            (k == 0 ? out.mse_a : out.mse_b)[t] = r2.mean();
            (k == 0 ? per_a : per_b) += r2;
        }
    }
    per_a /= static_cast<double>(steps);
    per_b /= static_cast<double>(steps);
    const Vec d = per_a - per_b;
    out.mean_a = per_a.mean();
    out.mean_b = per_b.mean();
    out.diff = d.mean();
    out.diff_se = std::sqrt((d.array() - out.diff).square().sum() / static_cast<double>(test - 1) /
                            static_cast<double>(test));
    return out;
}

// ---- per-entry MSE over pooled rows (declared with the predictors) ----

namespace {

struct RowBlock {
    Mat X, Y;
};

void fill_rows(const PredictorModel& model, long first, long count, std::uint64_t seed, int offset, RowBlock& blk,
               int nt) {
    const int T = model.horizon();
    const int per = T - offset;
    blk.X.resize(count, model.d());
    blk.Y.resize(count, model.n());
#pragma omp parallel for num_threads(nt) schedule(static)
    for (long r = 0; r < count; ++r) {
        const long row = first + r;
        const auto inst = static_cast<std::uint64_t>(row / per);
        const int t = static_cast<int>(row % per);
        Mat Wr, Vr;
        model.sample_rows(seed, inst, t, t + 1 + offset, Wr, Vr);
        blk.X.row(r) = Vr.row(0);
        blk.Y.row(r) = Wr.row(offset);
    }
}

constexpr long kTestBlock = 65536;

}  // namespace

MseComparison mse_compare(const PredictorModel& a, const PredictorModel& b, const MseConfig& cfg) {
    if (cfg.train_rows < 100) fail(ErrorKind::InsufficientData, "need at least 100 train rows");
    if (cfg.test_rows < 30) fail(ErrorKind::InsufficientData, "need at least 30 test rows");
    if (a.n() != b.n() || a.horizon() != b.horizon()) fail(ErrorKind::DimensionMismatch, "models disagree in shape");
    if (cfg.target_offset < 0 || cfg.target_offset >= a.horizon())
        fail(ErrorKind::UnsupportedTarget, "target offset outside the horizon");
    const int nt = detail::resolve_threads(cfg.threads);
    const int n = a.n();
    const PredictorModel* models[2] = {&a, &b};
    LinearRegressor fits[2];
    for (int k = 0; k < 2; ++k) {
        RowBlock tr, va;
        fill_rows(*models[k], 0, cfg.train_rows, cfg.seed, cfg.target_offset, tr, nt);
        fill_rows(*models[k], cfg.train_rows, cfg.val_rows, cfg.seed, cfg.target_offset, va, nt);
        fits[k] = fit_linear(tr.X, tr.Y, va.X, va.Y);
    }
    const long first = cfg.train_rows + cfg.val_rows;
    const long nblocks = (cfg.test_rows + kTestBlock - 1) / kTestBlock;
    // per block: sums of r_a^2, r_b^2, (r_a^2 - r_b^2), (r_a^2)^2, (r_b^2)^2, (r_a^2 - r_b^2)^2 per entry
    std::vector<Mat> sums(static_cast<std::size_t>(nblocks), Mat::Zero(6, n));
    for (long bi = 0; bi < nblocks; ++bi) {
        const long start = first + bi * kTestBlock;
        const long cnt = std::min(kTestBlock, cfg.test_rows - bi * kTestBlock);
        RowBlock ba, bb;
        fill_rows(a, start, cnt, cfg.seed, cfg.target_offset, ba, nt);
        fill_rows(b, start, cnt, cfg.seed, cfg.target_offset, bb, nt);
        const Mat ra = (ba.Y - fits[0].predict(ba.X)).array().square().matrix();
        const Mat rb = (bb.Y - fits[1].predict(bb.X)).array().square().matrix();
        const Mat df = ra - rb;
        Mat& s = sums[bi];
        s.row(0) = ra.colwise().sum();
        s.row(1) = rb.colwise().sum();
        s.row(2) = df.colwise().sum();
        s.row(3) = ra.array().square().matrix().colwise().sum();
        s.row(4) = rb.array().square().matrix().colwise().sum();
        s.row(5) = df.array().square().matrix().colwise().sum();
    }
    Mat tot = Mat::Zero(6, n);
    for (const Mat& s : sums) tot += s;
    const double N = static_cast<double>(cfg.test_rows);
    auto se = [N](double sum, double sumsq) {
        const double mean = sum / N;
        const double var = std::max(0.0, (sumsq - N * mean * mean) / (N - 1.0));
        return std::sqrt(var / N);
    };
    MseComparison out;
    MseResult* res[2] = {&out.a, &out.b};
    for (int k = 0; k < 2; ++k) {
        res[k]->mse = tot.row(k).transpose() / N;
        res[k]->std_error.resize(n);
        for (int i = 0; i < n; ++i) res[k]->std_error[i] = se(tot(k, i), tot(3 + k, i));
        res[k]->weights = fits[k].weights;
        res[k]->intercept = fits[k].intercept;
        res[k]->ridge = fits[k].ridge;
        res[k]->train_rows = cfg.train_rows;
        res[k]->test_rows = cfg.test_rows;
    }
    out.diff = tot.row(2).transpose() / N;
    out.diff_se.resize(n);
    for (int i = 0; i < n; ++i) out.diff_se[i] = se(tot(2, i), tot(5, i));
    return out;
}

MseResult mse_per_entry(const PredictorModel& model, const MseConfig& cfg) {
    return mse_compare(model, model, cfg).a;
}

}  // namespace ppower
