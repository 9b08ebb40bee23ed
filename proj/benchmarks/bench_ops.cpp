#include "slnscreen/ops.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

slns::Tensor random(slns::Shape shape, std::uint64_t seed) {
    slns::Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    for (float& v : t.values()) v = d(rng);
    return t;
}

// Args: input extent, in channels, out channels.
void BM_Conv2d(benchmark::State& state) {
    const auto hw = static_cast<std::size_t>(state.range(0));
    slns::ConvSpec spec;
    spec.in_channels = static_cast<std::size_t>(state.range(1));
    spec.out_channels = static_cast<std::size_t>(state.range(2));
    const auto input = random({hw, hw, spec.in_channels}, 1);
    const auto kernels = random({3, 3, spec.in_channels, spec.out_channels}, 2);
    const slns::Tensor bias({spec.out_channels});
    for (auto _ : state) benchmark::DoNotOptimize(slns::conv2d(input, spec, kernels, bias));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(hw * hw * 9 * spec.in_channels * spec.out_channels));
}
BENCHMARK(BM_Conv2d)->Args({100, 3, 16})->Args({50, 16, 32})->Args({25, 32, 64})->Args({12, 64, 128});

void BM_Conv2dBackward(benchmark::State& state) {
    const auto hw = static_cast<std::size_t>(state.range(0));
    slns::ConvSpec spec;
    spec.in_channels = static_cast<std::size_t>(state.range(1));
    spec.out_channels = static_cast<std::size_t>(state.range(2));
    const auto input = random({hw, hw, spec.in_channels}, 1);
    const auto kernels = random({3, 3, spec.in_channels, spec.out_channels}, 2);
    const auto grad = random({hw, hw, spec.out_channels}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(slns::conv2d_backward(input, spec, kernels, grad));
}
BENCHMARK(BM_Conv2dBackward)->Args({100, 3, 16})->Args({25, 32, 64});

void BM_MaxPool(benchmark::State& state) {
    const auto hw = static_cast<std::size_t>(state.range(0));
    const auto input = random({hw, hw, 16}, 4);
    for (auto _ : state) benchmark::DoNotOptimize(slns::maxpool2d(input, 2, 2));
}
BENCHMARK(BM_MaxPool)->Arg(100)->Arg(50);

void BM_Dense(benchmark::State& state) {
    const auto in = static_cast<std::size_t>(state.range(0));
    const auto out = static_cast<std::size_t>(state.range(1));
    const auto input = random({in}, 5);
    const auto weights = random({in, out}, 6);
    const slns::Tensor bias({out});
    for (auto _ : state) benchmark::DoNotOptimize(slns::dense(input, weights, bias));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(in * out));
}
BENCHMARK(BM_Dense)->Args({4608, 256})->Args({256, 4});

} // namespace
