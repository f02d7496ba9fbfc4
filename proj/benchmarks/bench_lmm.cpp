#include "rtpower/lmm.hpp"
#include "rtpower/scenario_io.hpp"
#include "rtpower/simulate.hpp"

#include <benchmark/benchmark.h>

using namespace rtpower;

namespace {

Scenario sized_scenario(int n_participants, int n_items) {
  Scenario s = bundled_scenario("lab_phonological");
  s.n_participants = n_participants;
  s.n_items = n_items;
  return s;
}

void BM_SimulateTrials(benchmark::State& state) {
  const Scenario s =
      sized_scenario(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  std::uint64_t seed = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_trials(s, seed++));
  }
}
BENCHMARK(BM_SimulateTrials)->Args({45, 90});

void BM_ProfiledDeviance(benchmark::State& state) {
  const Scenario s =
      sized_scenario(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const TrialTable table = simulate_trials(s, 7);
  const DesignBundle bundle =
      build_design(table, ModelSpec::relatedness_model(Criterion::reml), s.contrasts);
  ProfiledDevianceEvaluator evaluator(bundle);
  const Theta theta = default_start_theta(bundle);
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluator(theta));
  }
}
BENCHMARK(BM_ProfiledDeviance)->Args({45, 90})->Args({96, 90})->Args({96, 20});

void BM_FitLmm(benchmark::State& state) {
  const Scenario s =
      sized_scenario(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const TrialTable table = simulate_trials(s, 7);
  const DesignBundle bundle =
      build_design(table, ModelSpec::relatedness_model(Criterion::reml), s.contrasts);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_lmm(bundle));
  }
}
BENCHMARK(BM_FitLmm)->Args({12, 20})->Args({45, 90})->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
