#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "soundflow/model.hpp"
#include "soundflow/rng.hpp"
#include "soundflow/training.hpp"

namespace {

const std::string kCaption =
    "Hum, Start at 0.5s and End at 1.4s, it has Low Pitch and Normal Energy.";

soundflow::ModelConfig bench_config(int hidden) {
    soundflow::ModelConfig cfg;
    cfg.num_blocks = 4;
    cfg.hidden_dim = hidden;
    cfg.num_heads = 8;
    cfg.feature_channels = 64;
    cfg.max_frames = 250;
    cfg.time_embed_dim = 128;
    return cfg;
}

soundflow::Tensor random_features(int frames, int channels, soundflow::Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(frames) * channels);
    for (double& x : v) x = rng.normal();
    return soundflow::Tensor({static_cast<std::size_t>(frames), static_cast<std::size_t>(channels)},
                             std::move(v));
}

void BM_forward_velocity(benchmark::State& state) {
    const soundflow::VelocityModel model(bench_config(static_cast<int>(state.range(0))),
                                         soundflow::build_vocabulary({"Hum", "Tone"}), 7);
    soundflow::Rng rng(3);
    const soundflow::Tensor z = random_features(60, 64, rng);
    const auto bundle = model.encode_text(kCaption);
    for (auto _ : state) {
        auto v = model.forward_velocity(z, 0.5, bundle);
        benchmark::DoNotOptimize(v.values().data());
    }
}
BENCHMARK(BM_forward_velocity)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_train_step(benchmark::State& state) {
    soundflow::VelocityModel model(bench_config(256),
                                   soundflow::build_vocabulary({"Hum", "Tone"}), 7);
    soundflow::AdamW optim;
    soundflow::Rng rng(3);
    std::vector<soundflow::TrainItem> batch;
    for (int i = 0; i < state.range(0); ++i)
        batch.push_back({random_features(60, 64, rng), kCaption});
    const soundflow::Schedule schedule = soundflow::Schedule::linear();
    for (auto _ : state) {
        const double loss = soundflow::train_step(model, optim, batch, schedule, rng);
        benchmark::DoNotOptimize(loss);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_train_step)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_generate_features(benchmark::State& state) {
    const soundflow::VelocityModel model(bench_config(256),
                                         soundflow::build_vocabulary({"Hum", "Tone"}), 7);
    soundflow::Rng rng(3);
    for (auto _ : state) {
        auto f = soundflow::generate_features(model, kCaption, 60,
                                              static_cast<int>(state.range(0)), rng);
        benchmark::DoNotOptimize(f.data.data());
    }
}
BENCHMARK(BM_generate_features)->Arg(5)->Arg(25)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
