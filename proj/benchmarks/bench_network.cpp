#include <benchmark/benchmark.h>

#include <random>

#include "cfr/network.hpp"

namespace {

// Default architecture (3 x 200 representation, 3 x 100 heads) on 25 inputs.
struct Fixture {
  cfr::nn::Network net;
  cfr::Matrix x;
  cfr::IntVector t;
  cfr::Vector y;

  explicit Fixture(cfr::Index batch) : net(make_net()) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    x.resize(batch, 25);
    for (cfr::Index i = 0; i < x.size(); ++i) x(i) = n(rng);
    t.resize(batch);
    y.resize(batch);
    for (cfr::Index i = 0; i < batch; ++i) {
      t(i) = static_cast<int>(i % 2);
      y(i) = n(rng);
    }
  }

  static cfr::nn::Network make_net() {
    cfr::nn::NetworkArchitecture a;
    a.input_dim = 25;
    return cfr::nn::Network::init(a, 1);
  }
};

void BM_Forward(benchmark::State& state) {
  const Fixture f(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(cfr::nn::forward(f.net, f.x, f.t));
}

void BM_Backward(benchmark::State& state) {
  const Fixture f(state.range(0));
  const cfr::Vector w = cfr::Vector::Ones(f.x.rows());
  for (auto _ : state)
    benchmark::DoNotOptimize(cfr::nn::backward(f.net, f.x, f.t, f.y, w, cfr::LossKind::squared));
}

}  // namespace

BENCHMARK(BM_Forward)->Arg(100)->Arg(500);
BENCHMARK(BM_Backward)->Arg(100)->Arg(500);
