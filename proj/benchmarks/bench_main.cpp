#include <benchmark/benchmark.h>

#include <random>

#include "selfens/consistency.hpp"
#include "selfens/network.hpp"

using namespace selfens;

namespace {

Tensor<float> random_batch(Shape shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

void BM_MlpForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const LayerSpecList layers = build_small_network(SmallPreset::kMlp, {2}, 2);
  Network<float> net(layers, {2});
  const NetworkParams<float> params = net.init_params(1);
  const Tensor<float> x = random_batch({batch, 2}, 2);
  const Tensor<float> grad = random_batch({batch, 2}, 3);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    const ForwardResult<float> f = net.forward(params, x, StochasticEvalContext<float>::train(++seed));
    benchmark::DoNotOptimize(net.backward(params, f.tape, grad));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_MlpForwardBackward)->Arg(100)->Arg(500);

void BM_SmallCnnForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Shape item{3, 16, 16};
  SmallNetworkOptions opts;
  opts.hidden = 16;
  const LayerSpecList layers = build_small_network(SmallPreset::kCnnSmall, item, 10, opts);
  Network<float> net(layers, item);
  const NetworkParams<float> params = net.init_params(1);
  const Tensor<float> x = random_batch({batch, 3, 16, 16}, 2);
  const Tensor<float> grad = random_batch({batch, 10}, 3);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    const ForwardResult<float> f = net.forward(params, x, StochasticEvalContext<float>::train(++seed));
    benchmark::DoNotOptimize(net.backward(params, f.tape, grad));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_SmallCnnForwardBackward)->Arg(32);

void BM_EnsembleUpdate(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  EnsembleState<float> z(rows, 10, 0.6);
  std::vector<std::size_t> idx(rows);
  for (std::size_t i = 0; i < rows; ++i) idx[i] = i;
  const Tensor<float> values = random_batch({rows, 10}, 4);
  for (auto _ : state) {
    z.update(idx, values);
    benchmark::DoNotOptimize(z.z().raw());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}
BENCHMARK(BM_EnsembleUpdate)->Arg(1000)->Arg(50000);

}  // namespace
BENCHMARK_MAIN();
