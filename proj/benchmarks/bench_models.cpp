#include <benchmark/benchmark.h>

#include "rulsurv/models.hpp"

namespace {

void BM_LinearCoxFit(benchmark::State& state) {
  const std::vector<double> beta{1.0, -0.5, 0.0, 0.25};
  const auto data = rulsurv::generate_synthetic(static_cast<std::size_t>(state.range(0)), 4, beta, 0.3, 2);
  for (auto _ : state) benchmark::DoNotOptimize(rulsurv::fit_linear_cox(data));
}

}  // namespace

BENCHMARK(BM_LinearCoxFit)->Arg(200)->Arg(2000);

BENCHMARK_MAIN();
