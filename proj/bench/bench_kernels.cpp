// Serial reference against the OpenMP kernels. Results are bit-identical; the
// numbers here are wall time only.
#include <benchmark/benchmark.h>

#include <map>

#include "tripartite/ace.hpp"
#include "tripartite/inference.hpp"
#include "tripartite/simulation.hpp"

using namespace tripartite;

namespace {

Execution mode(const benchmark::State& state) {
  return state.range(0) ? Execution::parallel : Execution::serial;
}

const TrialDataset& trial(std::size_t n_per_arm) {
  static std::map<std::size_t, TrialDataset> cache;
  auto it = cache.find(n_per_arm);
  if (it == cache.end()) {
    auto spec = hba1c_like_spec();
    spec.n_per_arm = n_per_arm;
    it = cache.emplace(n_per_arm, generate_trial(spec, 1).data).first;
  }
  return it->second;
}

void BM_CounterfactualQuantities(benchmark::State& state) {
  const auto& ds = trial(2000);
  BatteryOptions bo;
  bo.j2r_imputations = 2;
  const auto models = run_battery(ds, bo, 1).models;
  MonteCarloOptions mc;
  mc.draws = 200;
  mc.seed = 3;
  mc.execution = mode(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(counterfactual_quantities(ds, models.chains, models.adherence, mc));
}

void BM_Bootstrap(benchmark::State& state) {
  const auto& ds = trial(150);
  BatteryOptions bo;
  bo.mc_draws = 20;
  bo.j2r_imputations = 4;
  BootstrapOptions opt;
  opt.replicates = 100;
  opt.seed = 5;
  opt.execution = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_ci(Estimator::s_plus_plus, ds, bo, opt));
}

void BM_Oracle(benchmark::State& state) {
  const auto spec = hba1c_like_spec();
  for (auto _ : state) benchmark::DoNotOptimize(oracle_truth(spec, 100000, 9, mode(state)));
}

void BM_GenerateTrial(benchmark::State& state) {
  auto spec = hba1c_like_spec();
  spec.n_per_arm = 20000;
  for (auto _ : state) benchmark::DoNotOptimize(generate_trial(spec, 11, mode(state)));
}

}  // namespace

BENCHMARK(BM_CounterfactualQuantities)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Bootstrap)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Oracle)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GenerateTrial)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
