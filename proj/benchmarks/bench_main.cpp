#include <benchmark/benchmark.h>

#include "ppower/estimation.hpp"
#include "ppower/presets.hpp"
#include "ppower/rollout.hpp"
#include "ppower/scalar_dp.hpp"

using namespace ppower;

static void BM_RiccatiBackward(benchmark::State& st) {
    const LTVSystem sys = double_integrator(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(riccati_backward(sys));
    st.SetComplexityN(st.range(0));
}
BENCHMARK(BM_RiccatiBackward)->Arg(100)->Arg(1000)->Arg(10000)->Complexity();

static void BM_ClosedFormPower(benchmark::State& st) {
    const int T = static_cast<int>(st.range(0));
    const LTVSystem sys = double_integrator(T);
    const RiccatiSolution ric = riccati_backward(sys);
    const PredictorModel m = PredictorModel::affine_gaussian(0.5, skewed_theta(), T);
    for (auto _ : st) benchmark::DoNotOptimize(prediction_power_closed_form(sys, ric, m));
}
BENCHMARK(BM_ClosedFormPower)->Arg(100)->Arg(1000);

static void BM_PowerMonteCarlo(benchmark::State& st) {
    const LTVSystem sys = double_integrator(100);
    const PredictorModel m = PredictorModel::affine_gaussian(0.5, Mat::Identity(2, 2), 100);
    const int threads = static_cast<int>(st.range(0));
    for (auto _ : st) benchmark::DoNotOptimize(prediction_power_mc(sys, m, 2000, 1, threads));
    st.SetItemsProcessed(st.iterations() * 2000);
}
BENCHMARK(BM_PowerMonteCarlo)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

static void BM_ScalarDp(benchmark::State& st) {
    const LTVSystem sys = scalar_contractive(4);
    const ScalarLaw law = scalar_law(PredictorModel::affine_gaussian(0.5, Mat::Identity(1, 1), 4));
    const ScalarProblem prob = ScalarProblem::from_lqr(sys, law);
    for (auto _ : st) {
        ScalarDp dp(prob, law);
        benchmark::DoNotOptimize(dp.expected_cost());
    }
}
BENCHMARK(BM_ScalarDp)->Unit(benchmark::kMillisecond);

static void BM_PowerEvaluate(benchmark::State& st) {
    const int T = 20;
    const LTVSystem sys = double_integrator(T);
    const PredictorModel m = PredictorModel::affine_gaussian(0.5, skewed_theta(), T);
    const auto inst = sample_instances(m, st.range(0), 1);
    for (auto _ : st) benchmark::DoNotOptimize(prediction_power_evaluate(sys, inst, m));
}
BENCHMARK(BM_PowerEvaluate)->Arg(2000)->Arg(8000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
