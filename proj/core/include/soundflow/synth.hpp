#pragma once

#include <string>
#include <vector>

#include "soundflow/analysis.hpp"
#include "soundflow/rng.hpp"

namespace soundflow {

// One synthetic event family member. Classes occupy pairwise-disjoint base
// frequency bands so a band-energy detector can tell them apart; `tonal`
// marks the classes whose fundamental the pitch estimator is expected to
// recover (within 2%).
struct EventClass {
    std::string name;
    double f_lo = 0.0;  // Hz, inclusive band edges for the fundamental/center
    double f_hi = 0.0;
    bool tonal = false;
};

// The fixed family of 8 classes, ordered by band.
const std::vector<EventClass>& event_classes();

// nullptr when the name is unknown.
const EventClass* find_event_class(const std::string& name);

// A single-event clip with its measured annotation attributes. Categories are
// meaningful only after a pool-level quantile pass; they default to Normal.
struct SourceClip {
    std::vector<double> samples;
    int sample_rate = 0;
    std::string label;
    double mean_pitch = kUnpitched;  // Hz, kUnpitched for noise-like clips
    double mean_energy = 0.0;        // dB
    Category pitch_category = Category::Normal;
    Category energy_category = Category::Normal;

    double duration_s() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

// Synthesizes one event. pitch_hz picks the fundamental (tonal classes) or
// band center (noise-like classes) and must lie inside the class band;
// duration_s must lie in [0.3, 4.0]. The clip is gain-normalized so that
// estimate_energy measures exactly gain_db, and mean_pitch/mean_energy are
// filled from the estimators. Deterministic given the rng state.
SourceClip synth_event(const std::string& event_class, double pitch_hz, double gain_db,
                       double duration_s, Rng& rng, int sample_rate = 16000);

}  // namespace soundflow
