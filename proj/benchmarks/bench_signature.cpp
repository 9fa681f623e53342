#include <benchmark/benchmark.h>

#include <cmath>

#include "rulsurv/signature.hpp"

namespace {

std::vector<double> path_coords(std::size_t points) {
  std::vector<double> c;
  for (std::size_t i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    c.push_back(t);
    c.push_back(3.0 + 1.2 * t - 0.4 * std::sin(6.0 * t));
  }
  return c;
}

void BM_Signature(benchmark::State& state) {
  const auto points = static_cast<std::size_t>(state.range(0));
  const int depth = static_cast<int>(state.range(1));
  const auto coords = path_coords(points);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rulsurv::polyline_signature(2, coords, depth));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(points));
}

}  // namespace

BENCHMARK(BM_Signature)->ArgsProduct({{64, 512}, {2, 3, 4, 6}});

BENCHMARK_MAIN();
