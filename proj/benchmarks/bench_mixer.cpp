#include <benchmark/benchmark.h>

#include "soundflow/features.hpp"
#include "soundflow/mixer.hpp"
#include "soundflow/rng.hpp"

namespace {

soundflow::MixerConfig bench_config() {
    soundflow::MixerConfig cfg;
    cfg.classes = {"Hum", "Tone", "Chirp"};
    cfg.clips_per_class = 12;
    cfg.duration_budget_s = 6.0;
    return cfg;
}

void BM_build_pool(benchmark::State& state) {
    soundflow::MixerConfig cfg = bench_config();
    cfg.clips_per_class = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        auto pool = soundflow::build_pool(cfg, 11);
        benchmark::DoNotOptimize(pool.clips.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 3);
}
BENCHMARK(BM_build_pool)->Arg(8)->Arg(40)->Unit(benchmark::kMillisecond);

void BM_simulate_mixture(benchmark::State& state) {
    soundflow::MixerConfig cfg = bench_config();
    cfg.compute_features = state.range(0) != 0;
    const soundflow::Pool pool = soundflow::build_pool(cfg, 11);
    soundflow::Rng rng(3);
    for (auto _ : state) {
        auto mix = soundflow::simulate_mixture(pool, rng, cfg);
        benchmark::DoNotOptimize(mix.samples.data());
    }
}
BENCHMARK(BM_simulate_mixture)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_compute_features(benchmark::State& state) {
    const double seconds = static_cast<double>(state.range(0));
    soundflow::FeatureConfig cfg;
    soundflow::Rng rng(5);
    std::vector<double> samples(static_cast<std::size_t>(seconds * cfg.sample_rate));
    for (double& s : samples) s = 0.1 * rng.normal();
    for (auto _ : state) {
        auto f = soundflow::compute_features(samples, cfg);
        benchmark::DoNotOptimize(f.data.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(samples.size()));
}
BENCHMARK(BM_compute_features)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
