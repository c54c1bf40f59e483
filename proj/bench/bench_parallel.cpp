#include "rfanova/estimation.hpp"
#include "rfanova/simulation.hpp"

#include <benchmark/benchmark.h>

using namespace rfanova;

namespace {

SimulatedData bench_data() {
  SimConfig cfg;
  cfg.n_train = 31;
  std::mt19937_64 rng(1);
  return generate(cfg, rng);
}

void BM_Evaluate(benchmark::State& state) {
  static const SimulatedData sim = bench_data();
  FitConfig cfg;
  cfg.domain = std::make_pair(0.0, 2.0);
  const Problem problem(sim.train, cfg);
  const FitState start = initial_state(problem);
  EvalOptions opts;
  opts.policy = state.range(0) ? ExecPolicy::kParallel : ExecPolicy::kSerial;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(problem, start, opts).objective);
}
BENCHMARK(BM_Evaluate)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMicrosecond);

void BM_Experiment(benchmark::State& state) {
  SimConfig cfg;
  cfg.replications = 8;
  cfg.fit.outer_max = 10;
  cfg.policy = state.range(0) ? ExecPolicy::kParallel : ExecPolicy::kSerial;
  for (auto _ : state) benchmark::DoNotOptimize(run_experiment(cfg).methods[0].pe_mean);
}
BENCHMARK(BM_Experiment)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
