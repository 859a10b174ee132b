#include <benchmark/benchmark.h>

#include "mvgmn/graph.hpp"
#include "mvgmn/model.hpp"
#include "mvgmn/ops.hpp"
#include "mvgmn/scan.hpp"

namespace mvgmn {
namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t({rows, cols});
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_SelectiveScan(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  ParamStore store;
  const SsmParams p = SsmParams::create(store, 64, 64, rng, "ssm");
  const Var x = Var::constant(random_matrix(L, 64, rng));
  Tape tape(store, false);
  for (auto _ : state) benchmark::DoNotOptimize(selective_scan(x, p, tape).value().ptr());
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SelectiveScan)->RangeMultiplier(4)->Range(64, 4096)->Complexity(benchmark::oN);

void BM_Aggregate(benchmark::State& state, Aggregator aggregator) {
  const auto L = static_cast<std::size_t>(state.range(0));
  ModelConfig c;
  c.views = 4;
  c.steps = L / 4;
  c.width = 64;
  c.blocks = 2;
  c.aggregator = aggregator;
  const Model model(c, 1);
  Rng rng(2);
  const FeatureGrid grid{c.views, c.steps, Var::constant(random_matrix(L, 64, rng))};
  Tape tape(model.params(), false);
  for (auto _ : state) benchmark::DoNotOptimize(model.aggregate(grid, tape).values.value().ptr());
  state.SetComplexityN(state.range(0));
}
BENCHMARK_CAPTURE(BM_Aggregate, ssm, Aggregator::Ssm)->RangeMultiplier(4)->Range(256, 4096)->Complexity();
BENCHMARK_CAPTURE(BM_Aggregate, attention, Aggregator::Attention)->RangeMultiplier(4)->Range(256, 4096)->Complexity();

void BM_KnnEdges(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Tensor x = random_matrix(n, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(knn_edges(x, 3).data());
}
BENCHMARK(BM_KnnEdges)->Arg(24)->Arg(96)->Arg(384);

void BM_GcnPropagate(benchmark::State& state) {
  const auto V = static_cast<std::size_t>(state.range(0));
  const std::size_t T = 8;
  Rng rng(4);
  const auto rule = rule_edges(V, T);
  const Tensor adj = assemble_adjacency({rule.time, rule.view}, V * T).normalized();
  const Var x = Var::constant(random_matrix(V * T, 32, rng));
  const Var w = Var::constant(random_matrix(32, 32, rng));
  for (auto _ : state) benchmark::DoNotOptimize(gcn_propagate(x, adj, w).value().ptr());
}
BENCHMARK(BM_GcnPropagate)->Arg(3)->Arg(6)->Arg(12);

void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  const Tensor a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  Tensor out({n, n});
  for (auto _ : state) {
    kernels::gemm_nn(a, b, out, false);
    benchmark::DoNotOptimize(out.ptr());
  }
}
BENCHMARK(BM_Gemm)->Arg(32)->Arg(64)->Arg(128);

}  // namespace
}  // namespace mvgmn

BENCHMARK_MAIN();
