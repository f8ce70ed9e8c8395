#include <benchmark/benchmark.h>

#include "graphpde/rng.hpp"
#include "graphpde/tape.hpp"

using namespace gpde;

namespace {

Tensor randt(std::vector<int64_t> shape, uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& x : t.data) x = rng.normal();
  return t;
}

void BM_MatmulForwardBackward(benchmark::State& state) {
  const int64_t n = state.range(0), d = state.range(1);
  const Tensor A = randt({n, d}, 1), W = randt({d, d}, 2);
  for (auto _ : state) {
    Tape t;
    const int a = t.leaf(A);
    const int w = t.leaf(W);
    const int loss = t.mean(t.matmul(a, w));
    t.backward(loss);
    benchmark::DoNotOptimize(t.grad(w));
  }
  state.SetItemsProcessed(int64_t(state.iterations()));
  // fwd + two backward GEMMs
  state.counters["flops"] = benchmark::Counter(
      double(state.iterations()) * 3.0 * 2.0 * double(n) * double(d) * double(d),
      benchmark::Counter::kIsRate);
}
BENCHMARK(BM_MatmulForwardBackward)->Args({1024, 96})->Args({256, 96});

}  // namespace

BENCHMARK_MAIN();
