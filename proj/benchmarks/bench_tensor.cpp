#include <benchmark/benchmark.h>

#include "soundflow/rng.hpp"
#include "soundflow/tensor.hpp"

namespace {

soundflow::Tensor random_tensor(soundflow::Shape shape, soundflow::Rng& rng,
                                bool requires_grad = false) {
    std::vector<double> v(soundflow::shape_size(shape));
    for (double& x : v) x = rng.normal();
    return soundflow::Tensor(std::move(shape), std::move(v), requires_grad);
}

void BM_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    soundflow::Rng rng(7);
    auto a = random_tensor({n, n}, rng);
    auto b = random_tensor({n, n}, rng);
    for (auto _ : state) {
        auto c = soundflow::matmul(a, b);
        benchmark::DoNotOptimize(c.values().data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(256)->Arg(512);

void BM_softmax(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    soundflow::Rng rng(7);
    auto a = random_tensor({rows, 256}, rng);
    for (auto _ : state) {
        auto y = soundflow::softmax(a);
        benchmark::DoNotOptimize(y.values().data());
    }
}
BENCHMARK(BM_softmax)->Arg(64)->Arg(512);

void BM_backward_mlp(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    soundflow::Rng rng(7);
    auto x = random_tensor({n, 256}, rng);
    auto w1 = random_tensor({256, 1024}, rng, true);
    auto w2 = random_tensor({1024, 256}, rng, true);
    for (auto _ : state) {
        auto h = soundflow::silu(soundflow::matmul(x, w1));
        auto loss = soundflow::sum(soundflow::matmul(h, w2));
        soundflow::backward(loss);
        w1.zero_grad();
        w2.zero_grad();
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(BM_backward_mlp)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
