#include <benchmark/benchmark.h>

#include <cmath>

#include "rulsurv/metrics.hpp"
#include "rulsurv/rng.hpp"

namespace {

struct Case {
  rulsurv::SurvivalDataset data;
  rulsurv::TimeGrid grid;
  std::vector<rulsurv::SurvivalCurve> curves;
};

Case make_case(std::size_t n) {
  const std::vector<double> beta{1.0, -0.5};
  auto data = rulsurv::generate_synthetic(n, 2, beta, 0.3, 1);
  auto grid = rulsurv::default_eval_grid(data);
  const auto times = rulsurv::evaluation_times(data, grid);
  std::vector<rulsurv::SurvivalCurve> curves;
  for (const auto& r : data.records()) {
    rulsurv::SurvivalCurve c{times, {}};
    const double rate = std::exp(beta[0] * r.x[0] + beta[1] * r.x[1]);
    for (double t : times) c.probabilities.push_back(std::exp(-rate * t));
    curves.push_back(std::move(c));
  }
  return {std::move(data), std::move(grid), std::move(curves)};
}

void BM_CIndex(benchmark::State& state) {
  const Case c = make_case(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(rulsurv::c_index(c.data, c.curves));
}

void BM_Evaluate(benchmark::State& state) {
  const Case c = make_case(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(rulsurv::evaluate(c.data, c.curves, c.grid));
}

}  // namespace

BENCHMARK(BM_CIndex)->Arg(100)->Arg(1000);
BENCHMARK(BM_Evaluate)->Arg(100)->Arg(1000);

BENCHMARK_MAIN();
