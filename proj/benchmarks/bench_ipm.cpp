#include <benchmark/benchmark.h>

#include <random>

#include "cfr/ipm.hpp"

namespace {

cfr::Matrix points(cfr::Index m, cfr::Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  cfr::Matrix out(m, k);
  for (cfr::Index i = 0; i < out.size(); ++i) out(i) = n(rng);
  return out;
}

void run(benchmark::State& state, cfr::ipm::IpmKind kind) {
  const cfr::Index m = state.range(0);
  const cfr::Matrix a = points(m, 100, 1);
  const cfr::Matrix b = points(m, 100, 2);
  cfr::ipm::IpmConfig c;
  c.kind = kind;
  for (auto _ : state) benchmark::DoNotOptimize(cfr::ipm::ipm_value_and_gradient(a, b, c));
  state.SetComplexityN(m);
}

void BM_LinearMmd(benchmark::State& s) { run(s, cfr::ipm::IpmKind::linear_mmd); }
void BM_RbfMmd(benchmark::State& s) { run(s, cfr::ipm::IpmKind::rbf_mmd); }
void BM_Sinkhorn(benchmark::State& s) { run(s, cfr::ipm::IpmKind::sinkhorn_wasserstein); }

}  // namespace

BENCHMARK(BM_LinearMmd)->RangeMultiplier(2)->Range(32, 512)->Complexity();
BENCHMARK(BM_RbfMmd)->RangeMultiplier(2)->Range(32, 512)->Complexity();
BENCHMARK(BM_Sinkhorn)->RangeMultiplier(2)->Range(32, 512)->Complexity();
