#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "soundflow/features.hpp"
#include "soundflow/manifest.hpp"
#include "soundflow/nld.hpp"

namespace soundflow {

// ---- scoring types -----------------------------------------------------------

// The annotated events of one clip plus the clip duration they live in.
// Invariants (checked by the scoring functions): start < end and every event
// inside [0, duration].
struct EventList {
    std::vector<EventAnnotation> events;
    double duration_s = 0.0;
};

// Per-class detection tallies. Tallies from several clips add up, so a whole
// run can be scored by accumulating per-clip results before forming F1.
struct ClassTally {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;

    bool operator==(const ClassTally&) const = default;
};

struct F1Result {
    std::map<std::string, ClassTally> per_class;

    // 2tp / (2tp + fp + fn); 0 when the class never occurs.
    double class_f1(const std::string& label) const;
    // Unweighted mean over the classes present in the tallies. Classes absent
    // from both reference and hypothesis never get a tally, so they do not
    // dilute the mean. Empty result -> 0.
    double macro_f1() const;

    F1Result& operator+=(const F1Result& other);
};

// ---- event scoring -----------------------------------------------------------

// Cuts the time axis into fixed segments (the last may be partial). A class is
// active in a segment when any of its events overlaps the segment; activity is
// compared per class and segment. Durations must agree.
F1Result segment_f1(const EventList& ref, const EventList& hyp, double segment_s = 1.0);

// One-to-one matching per class: a hypothesis event can match a reference
// event of the same class when |onset difference| <= collar and |offset
// difference| <= max(collar, 0.2 * reference duration). The matching maximizes
// the number of matched pairs. Matched = TP, spare hypotheses = FP, spare
// references = FN.
F1Result event_f1(const EventList& ref, const EventList& hyp, double onset_collar_s = 0.2);

// The matching event_f1 counts: for every reference event the index of its
// matched hypothesis event, or -1 when unmatched. Deterministic.
std::vector<int> match_events(const EventList& ref, const EventList& hyp,
                              double onset_collar_s = 0.2);

// Fraction of aligned positions with equal entries. Lists must have equal
// length; two empty lists are identical, hence 1. Callers mark unmatched
// events with a sentinel that equals nothing (e.g. "") so a missed event
// counts as incorrect.
double category_accuracy(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

// ---- contours ------------------------------------------------------------------

// A per-frame measurement track. NaN marks frames where the quantity is
// undefined (e.g. pitch in silence); such frames are excluded from MAE.
struct Contour {
    std::vector<double> values;
    double frame_rate = 0.0;
};

// Mean |ref - hyp| over frames where both sides are finite, after truncating
// to the common length. Frame rates must agree; having no commonly defined
// frame is an error.
double framewise_mae(const Contour& ref, const Contour& hyp);

// Frame-wise tracks measured on raw (unnormalized) log-mel features:
// the energy track is the full-range envelope in dB; the pitch track is the
// full-range spectral centroid in Hz, defined only on frames within
// `silence_rel_db` of the clip's loudest frame.
Contour feature_energy_contour(const FeatureSequence& raw, const FeatureConfig& cfg);
Contour feature_pitch_contour(const FeatureSequence& raw, const FeatureConfig& cfg,
                              double silence_rel_db = -45.0);

// ---- event detection -----------------------------------------------------------

struct DetectorConfig {
    double on_rel_db = -30.0;   // switch on when the band envelope rises here, rel. peak
    double off_rel_db = -36.0;  // switch off below this, rel. peak
    double floor_db = -60.0;    // absolute envelope floor; silence never switches on
    // A band's reference peak is floored at the loudest band's peak minus this
    // margin. A band holding only the spectral skirt of a neighbor's event
    // (tens of dB down) then never forms its own reference level, while true
    // events stay within the mixer's gain spread of the loudest one.
    double peak_floor_rel_clip_db = -10.0;
    double min_duration_s = 0.2;
    double merge_gap_s = 0.1;
};

// Band-energy event detector for the synthetic class family. Takes features
// as stored (normalized with meta.stats), undoes the normalization, and scans
// each class's frequency band with a hysteresis threshold relative to that
// band's peak. Detected windows shorter than min_duration_s are dropped after
// gaps up to merge_gap_s are bridged. Every event gets pitch and energy
// categories from the calibrated band centroid / band energy against the
// pool thresholds in meta. Classes outside the registry are rejected.
EventList detect_events(const FeatureSequence& normalized, const DatasetMeta& meta,
                        const FeatureConfig& features_cfg = {},
                        const DetectorConfig& detector_cfg = {});

// A detection plus the continuous estimates its categories were thresholded
// from: calibrated pitch (Hz) and mean in-band level (dB). Sampling uses
// them to resynthesize audio from detected feature activity.
struct DetectedEvent {
    EventAnnotation annotation;
    double pitch_hz = 0.0;
    double energy_db = 0.0;
};

std::vector<DetectedEvent> detect_events_detailed(const FeatureSequence& normalized,
                                                  const DatasetMeta& meta,
                                                  const FeatureConfig& features_cfg = {},
                                                  const DetectorConfig& detector_cfg = {});

// ---- run-level evaluation --------------------------------------------------------

struct EvalOptions {
    double segment_s = 1.0;
    double onset_collar_s = 0.2;
    double pitch_silence_rel_db = -45.0;
    FeatureConfig features;
};

// Everything needed to score one generated clip against its reference.
// Contours may be empty; they then contribute no frames to the MAEs.
struct EvalItem {
    std::string id;
    EventList ref_events;
    EventList hyp_events;
    Contour ref_pitch, hyp_pitch;
    Contour ref_energy, hyp_energy;
};

// Aggregated scores for a run. Primitive tallies are stored; the headline
// numbers are derived from them, so serialization is lossless.
struct EvalReport {
    std::int64_t clips = 0;
    std::map<std::string, ClassTally> segment;
    std::map<std::string, ClassTally> event;
    std::int64_t events_total = 0;  // reference events, matched or not
    std::int64_t pitch_correct = 0;
    std::int64_t energy_correct = 0;
    double pitch_abs_sum = 0.0;  // pooled |ref - hyp| over defined frames
    std::int64_t pitch_frames = 0;
    double energy_abs_sum = 0.0;
    std::int64_t energy_frames = 0;

    double segment_macro_f1() const;
    double event_macro_f1() const;
    double pitch_accuracy() const;   // correct / events_total, 0 when empty
    double energy_accuracy() const;
    double pitch_mae() const;  // pooled mean, NaN when no frames were defined
    double energy_mae() const;

    bool operator==(const EvalReport&) const = default;
};

EvalReport evaluate_items(const std::vector<EvalItem>& items, const EvalOptions& opts = {});

// Scores a generated dataset directory against a reference directory. Both
// must hold manifest.jsonl + dataset.json, with feature files next to them;
// the two manifests must cover exactly the same ids. Hypothesis events are
// taken from the generated manifest (the sampler writes detector output
// there); contours are measured on the feature files of both sides.
EvalReport evaluate_run(const std::filesystem::path& ref_dir,
                        const std::filesystem::path& gen_dir, const EvalOptions& opts = {});

// Lossless JSON round trip and the human-readable summary table.
std::string eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const std::string& text);
std::string format_eval_table(const EvalReport& report);

}  // namespace soundflow
