#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>

#include "soundflow/mixer.hpp"
#include "soundflow/model.hpp"
#include "soundflow/training.hpp"

namespace soundflow {

// A configuration or usage problem: the run never started. Commands report
// these with exit code 1, as opposed to failures of a validly configured run
// (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Everything a command needs to run. Every field has a default, so an empty
// config runs the toy pipeline end to end.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string schedule = "linear";
    int sample_steps = 25;   // ODE integration steps when sampling
    int sample_frames = 0;   // frames per sampled clip; 0 = derive from the caption
    std::string pool = "synthetic";  // "synthetic" or a directory of labeled WAV clips
    std::string out = "out";         // output directory
    double learning_rate = 1e-4;
    double weight_decay = 0.01;
    ModelConfig model;
    MixerConfig mixer;
    TrainOptions train;

    // Cross-field fixups: train.seed mirrors seed, the feature frontend
    // follows the mixer sample rate. The loaders call this; call it again
    // after mutating seed or mixer.sample_rate directly.
    void finalize();

    // Full structural validation; throws ConfigError naming the offending
    // key. Commands run this before touching the filesystem.
    void validate() const;
};

// Applies one "key = value" assignment. Unknown keys and malformed values
// are ConfigErrors naming the key. See config.cpp for the key table; keys
// use section prefixes: model.*, mixer.*, train.*, sample.*, plus the
// top-level seed, schedule, pool, and out.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

// Flat key-value text: one "key = value" per line; blank lines and lines
// whose first non-space character is '#' are skipped. Later lines override
// earlier ones. The result is finalized but NOT validated, so callers can
// layer flag overrides first.
RunConfig parse_run_config(std::istream& in);

// parse_run_config on a file; a missing or unreadable file is a ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace soundflow
