#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "soundflow/features.hpp"
#include "soundflow/manifest.hpp"
#include "soundflow/nld.hpp"
#include "soundflow/rng.hpp"
#include "soundflow/synth.hpp"

namespace soundflow {

struct MixerConfig {
    int sample_rate = 16000;
    int min_events = 1;
    int max_events = 3;
    double duration_budget_s = 9.6;  // hard requirement: < 10
    double min_mixture_s = 2.0;
    double min_event_s = 0.3;
    double max_event_s = 4.0;
    bool allow_overlap = true;
    int retry_cap = 20;
    std::size_t clips_per_class = 40;
    std::vector<std::string> classes;  // empty -> the full registry
    bool compute_features = true;      // invariant sweeps may skip the frontend
    FeatureConfig features;
};

// Structural checks every mixer entry point runs: positive grid-compatible
// sample rate, sane event-count range, duration budget below 10 s, event
// durations within [0.3, 4.0], registry class names, matching feature sample
// rate. Violations throw std::invalid_argument naming the field.
void validate_mixer_config(const MixerConfig& cfg);

// Annotated single-event clip pool plus the quantile thresholds and
// detector-domain calibration measured on it.
struct Pool {
    std::vector<SourceClip> clips;
    CategoryThresholds pitch_thresholds;
    CategoryThresholds energy_thresholds;
    std::map<std::string, ClassCalibration> calibration;
    std::vector<std::string> classes;
};

// Synthesizes clips_per_class clips per class (pitch uniform in the class
// band, gain uniform in [-30, -10] dB, duration on the 0.1 s grid in
// [min_event_s, max_event_s]), measures pitch/energy, computes pool
// thresholds, assigns categories, and fits the per-class calibration.
// Deterministic given the seed.
Pool build_pool(const MixerConfig& cfg, std::uint64_t seed);

// Builds a pool from a directory of labeled mono WAV clips at the mixer's
// sample rate. Layout: either one subdirectory per class holding its clips,
// or flat files named "<Class>_anything.wav". Labels must belong to the
// fixed class registry (the band detector only knows those). Clips are
// trimmed to the 0.1 s annotation grid and must then last between
// min_event_s and max_event_s; measurement, thresholds, and calibration then
// follow the synthetic path exactly. cfg.classes does not filter the
// directory; the pool's classes are whatever the directory provides.
Pool build_pool_from_dir(const MixerConfig& cfg, const std::filesystem::path& dir);

struct Mixture {
    std::vector<double> samples;
    int sample_rate = 0;
    double duration_s = 0.0;
    std::vector<EventAnnotation> annotations;
    std::string caption;
    // Raw (unnormalized) log-mel features; dataset assembly normalizes them
    // once pool-wide statistics exist.
    FeatureSequence features;
};

// Draws k events from the pool, places them on the 0.1 s grid inside a
// mixture whose duration lies on the 0.2 s grid within
// [min_mixture_s, duration_budget_s], sums the waveforms (peak-normalizing
// to -1 dBFS only if the sum clips), rounds annotation times to 0.1 s, and
// renders the caption. Placement that cannot satisfy the overlap policy
// within retry_cap attempts is an error.
Mixture simulate_mixture(const Pool& pool, Rng& rng, const MixerConfig& cfg);

// Simulates n mixtures, computes dataset-level feature statistics, writes
// WAV + normalized feature files plus manifest.jsonl and dataset.json under
// out_dir, and returns the manifest. Byte-reproducible from the seed.
Manifest build_dataset(const MixerConfig& cfg, std::size_t n, std::uint64_t seed,
                       const std::filesystem::path& out_dir);

// Same, but draws from an existing pool (synthetic or ingested) instead of
// synthesizing one from the seed.
Manifest build_dataset(const Pool& pool, const MixerConfig& cfg, std::size_t n,
                       std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace soundflow
