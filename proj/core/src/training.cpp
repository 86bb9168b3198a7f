#include "soundflow/training.hpp"

#include <stdexcept>

#include "soundflow/checkpoint.hpp"

namespace soundflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

Tensor to_fixed_frames(const FeatureSequence& seq, std::size_t frames) {
    const std::size_t channels = seq.channels;
    std::vector<double> values(frames * channels, 0.0);
    const std::size_t keep = std::min(frames, seq.frames);
    for (std::size_t f = 0; f < keep; ++f)
        for (std::size_t c = 0; c < channels; ++c)
            values[f * channels + c] = static_cast<double>(seq.data[f * channels + c]);
    return Tensor({frames, channels}, std::move(values));
}

void save_atomically(const std::filesystem::path& path, const VelocityModel& model,
                     const Schedule& schedule, const std::string& meta_json,
                     const AdamW& optim) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    save_checkpoint(tmp, model, schedule.name(), meta_json, &optim);
    std::filesystem::rename(tmp, path);
}

}  // namespace

TrainingData load_training_data(const std::filesystem::path& dataset_dir, int crop_frames) {
    if (crop_frames < 1) fail("load_training_data: crop_frames must be positive");
    TrainingData data;
    data.meta = read_dataset_meta(dataset_dir / "dataset.json");
    data.meta_json = dataset_meta_to_json(data.meta);
    const Manifest manifest = read_manifest(dataset_dir / "manifest.jsonl");
    data.items.reserve(manifest.records.size());
    for (const ManifestRecord& rec : manifest.records) {
        const FeatureSequence seq = read_features(dataset_dir / rec.features);
        data.items.push_back(
            TrainItem{to_fixed_frames(seq, static_cast<std::size_t>(crop_frames)), rec.caption});
    }
    if (data.items.empty()) fail("load_training_data: empty manifest in " + dataset_dir.string());
    return data;
}

double run_training(VelocityModel& model, AdamW& optim, const std::vector<TrainItem>& items,
                    const Schedule& schedule, const TrainOptions& opts,
                    const std::string& dataset_meta_json,
                    const std::filesystem::path& checkpoint_path, std::ostream& log) {
    if (items.empty()) fail("run_training: no training items");
    if (opts.batch_size < 1) fail("run_training: batch_size must be positive");
    if (opts.steps < 0) fail("run_training: steps must be nonnegative");
    if (opts.log_every < 1) fail("run_training: log_every must be positive");

    const auto total = static_cast<std::uint64_t>(opts.steps);
    double last_loss = 0.0;
    double window_sum = 0.0;
    std::size_t window_n = 0;
    while (optim.step_count < total) {
        // the stream index is the step about to run, so resuming from a
        // checkpoint continues the exact same sequence of draws
        Rng rng(derive_seed(opts.seed, optim.step_count));
        std::vector<TrainItem> batch;
        batch.reserve(static_cast<std::size_t>(opts.batch_size));
        for (int b = 0; b < opts.batch_size; ++b)
            batch.push_back(items[rng.uniform_int(0, items.size() - 1)]);

        last_loss = train_step(model, optim, batch, schedule, rng);
        window_sum += last_loss;
        ++window_n;

        if (optim.step_count == 1 || optim.step_count % static_cast<std::uint64_t>(opts.log_every) == 0 ||
            optim.step_count == total) {
            log << "step " << optim.step_count << " loss " << last_loss << " avg "
                << window_sum / static_cast<double>(window_n) << '\n';
            window_sum = 0.0;
            window_n = 0;
        }
        if (opts.checkpoint_every > 0 &&
            optim.step_count % static_cast<std::uint64_t>(opts.checkpoint_every) == 0 &&
            optim.step_count != total)
            save_atomically(checkpoint_path, model, schedule, dataset_meta_json, optim);
    }
    save_atomically(checkpoint_path, model, schedule, dataset_meta_json, optim);
    return last_loss;
}

FeatureSequence generate_features(const VelocityModel& model, const std::string& caption,
                                  int frames, int steps, Rng& rng) {
    if (frames < 1 || frames > model.config().max_frames)
        fail("generate_features: frames " + std::to_string(frames) + " outside [1, " +
             std::to_string(model.config().max_frames) + "]");
    const auto channels = static_cast<std::size_t>(model.config().feature_channels);
    std::vector<double> noise(static_cast<std::size_t>(frames) * channels);
    for (double& n : noise) n = rng.normal();
    const Tensor eps({static_cast<std::size_t>(frames), channels}, std::move(noise));

    const ConditionBundle bundle = model.encode_text(caption);
    const Tensor out = sample_ode(
        [&](const Tensor& x, double t) { return model.forward_velocity(x, t, bundle); }, eps,
        steps);

    FeatureSequence seq;
    seq.frames = static_cast<std::size_t>(frames);
    seq.channels = channels;
    seq.data.reserve(out.values().size());
    for (double v : out.values()) seq.data.push_back(static_cast<float>(v));
    return seq;
}

}  // namespace soundflow
