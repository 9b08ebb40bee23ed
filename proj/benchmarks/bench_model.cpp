#include "slnscreen/nn.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace {

slns::Tensor batch_of(std::size_t n) {
    slns::Tensor t({n, 100, 100, 3});
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    for (float& v : t.values()) v = d(rng);
    return t;
}

void BM_ModelForward(benchmark::State& state) {
    const slns::nn::Model model(slns::nn::ModelConfig::default_config());
    const auto batch = batch_of(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(model.forward(batch, slns::nn::Mode::infer));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ModelBackward(benchmark::State& state) {
    const slns::nn::Model model(slns::nn::ModelConfig::default_config());
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto batch = batch_of(n);
    std::vector<std::size_t> targets(n);
    for (std::size_t i = 0; i < n; ++i) targets[i] = i % 4;
    for (auto _ : state) benchmark::DoNotOptimize(model.backward(batch, targets, slns::nn::Mode::train, 1));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelBackward)->Arg(16)->Unit(benchmark::kMillisecond);

} // namespace
