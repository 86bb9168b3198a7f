#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "soundflow/features.hpp"
#include "soundflow/manifest.hpp"
#include "soundflow/model.hpp"

namespace soundflow {

struct TrainOptions {
    int batch_size = 8;
    int steps = 1000;  // total optimizer steps; resuming continues toward this
    int crop_frames = 60;
    int log_every = 50;
    int checkpoint_every = 1000;  // 0 = only the final checkpoint
    std::uint64_t seed = 0;
};

// A dataset directory loaded into memory: one TrainItem per manifest record,
// features cropped or zero-padded at the tail to a fixed frame count so
// caption times stay aligned with frame indices.
struct TrainingData {
    std::vector<TrainItem> items;
    DatasetMeta meta;
    std::string meta_json;
};

TrainingData load_training_data(const std::filesystem::path& dataset_dir, int crop_frames);

// Runs optimizer steps until optim.step_count reaches opts.steps. Every step
// draws its batch and noise from a stream derived from (opts.seed, step
// index), so a resumed run reproduces an uninterrupted one bit for bit. The
// running loss is logged every log_every steps; the checkpoint (with
// optimizer state) is written to checkpoint_path every checkpoint_every
// steps and at the end. Returns the final step's loss.
double run_training(VelocityModel& model, AdamW& optim, const std::vector<TrainItem>& items,
                    const Schedule& schedule, const TrainOptions& opts,
                    const std::string& dataset_meta_json,
                    const std::filesystem::path& checkpoint_path, std::ostream& log);

// Integrates the learned velocity field from Gaussian noise to a feature
// sequence for one caption. Values come out in the model's (normalized)
// feature domain.
FeatureSequence generate_features(const VelocityModel& model, const std::string& caption,
                                  int frames, int steps, Rng& rng);

}  // namespace soundflow
