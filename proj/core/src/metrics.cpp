#include "soundflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <utility>

#include <json.hpp>

#include "soundflow/synth.hpp"

namespace soundflow {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void validate_event_list(const EventList& list, const char* who) {
    if (!(list.duration_s > 0.0)) fail(std::string(who) + ": clip duration must be positive");
    for (const EventAnnotation& e : list.events) {
        if (!(e.start_s < e.end_s))
            fail(std::string(who) + ": event '" + e.label + "' has start >= end");
        if (e.start_s < -1e-9 || e.end_s > list.duration_s + 1e-9)
            fail(std::string(who) + ": event '" + e.label + "' leaves [0, duration]");
    }
}

void require_same_duration(const EventList& ref, const EventList& hyp, const char* who) {
    if (std::abs(ref.duration_s - hyp.duration_s) > 1e-9)
        fail(std::string(who) + ": reference and hypothesis durations differ (" +
             std::to_string(ref.duration_s) + " vs " + std::to_string(hyp.duration_s) + ")");
}

std::set<std::string> labels_of(const EventList& a, const EventList& b) {
    std::set<std::string> labels;
    for (const EventAnnotation& e : a.events) labels.insert(e.label);
    for (const EventAnnotation& e : b.events) labels.insert(e.label);
    return labels;
}

// Segments a class is active in: every segment its events overlap. Segment s
// spans [s*L, (s+1)*L), so the covered range of one event is
// [floor(start/L), ceil(end/L) - 1].
std::vector<char> activity(const EventList& list, const std::string& label,
                           std::size_t segments, double segment_s) {
    std::vector<char> active(segments, 0);
    for (const EventAnnotation& e : list.events) {
        if (e.label != label) continue;
        const auto first = static_cast<std::size_t>(
            std::max(0.0, std::floor(e.start_s / segment_s)));
        const auto last_excl = static_cast<std::size_t>(std::ceil(e.end_s / segment_s));
        for (std::size_t s = first; s < last_excl && s < segments; ++s) active[s] = 1;
    }
    return active;
}

// Maximum bipartite matching (augmenting paths). compatible[r][h] says whether
// reference r may pair with hypothesis h; returns for each r the matched h or
// -1. Deterministic: references and hypotheses are tried in index order.
std::vector<int> max_matching(const std::vector<std::vector<char>>& compatible,
                              std::size_t num_hyp) {
    const std::size_t num_ref = compatible.size();
    std::vector<int> hyp_to_ref(num_hyp, -1);

    std::function<bool(std::size_t, std::vector<char>&)> augment =
        [&](std::size_t r, std::vector<char>& visited) {
            for (std::size_t h = 0; h < num_hyp; ++h) {
                if (!compatible[r][h] || visited[h]) continue;
                visited[h] = 1;
                if (hyp_to_ref[h] < 0 ||
                    augment(static_cast<std::size_t>(hyp_to_ref[h]), visited)) {
                    hyp_to_ref[h] = static_cast<int>(r);
                    return true;
                }
            }
            return false;
        };

    for (std::size_t r = 0; r < num_ref; ++r) {
        std::vector<char> visited(num_hyp, 0);
        augment(r, visited);
    }

    std::vector<int> ref_to_hyp(num_ref, -1);
    for (std::size_t h = 0; h < num_hyp; ++h)
        if (hyp_to_ref[h] >= 0) ref_to_hyp[static_cast<std::size_t>(hyp_to_ref[h])] =
            static_cast<int>(h);
    return ref_to_hyp;
}

bool events_match(const EventAnnotation& ref, const EventAnnotation& hyp, double collar) {
    const double offset_collar = std::max(collar, 0.2 * (ref.end_s - ref.start_s));
    return std::abs(hyp.start_s - ref.start_s) <= collar &&
           std::abs(hyp.end_s - ref.end_s) <= offset_collar;
}

void accumulate_abs_diff(const Contour& ref, const Contour& hyp, double& sum,
                         std::int64_t& count) {
    if (ref.values.empty() || hyp.values.empty()) return;
    if (!(ref.frame_rate > 0.0) || std::abs(ref.frame_rate - hyp.frame_rate) > 1e-9)
        fail("contour comparison: frame rates differ or are not positive");
    const std::size_t n = std::min(ref.values.size(), hyp.values.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(ref.values[i]) || !std::isfinite(hyp.values[i])) continue;
        sum += std::abs(ref.values[i] - hyp.values[i]);
        count += 1;
    }
}

double tally_f1(const ClassTally& t) {
    const std::int64_t denom = 2 * t.tp + t.fp + t.fn;
    return denom > 0 ? 2.0 * static_cast<double>(t.tp) / static_cast<double>(denom) : 0.0;
}

}  // namespace

// ---- F1Result ------------------------------------------------------------------

double F1Result::class_f1(const std::string& label) const {
    const auto it = per_class.find(label);
    return it == per_class.end() ? 0.0 : tally_f1(it->second);
}

double F1Result::macro_f1() const {
    if (per_class.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [label, tally] : per_class) sum += tally_f1(tally);
    return sum / static_cast<double>(per_class.size());
}

F1Result& F1Result::operator+=(const F1Result& other) {
    for (const auto& [label, tally] : other.per_class) {
        ClassTally& mine = per_class[label];
        mine.tp += tally.tp;
        mine.fp += tally.fp;
        mine.fn += tally.fn;
    }
    return *this;
}

// ---- F1 metrics ------------------------------------------------------------------

F1Result segment_f1(const EventList& ref, const EventList& hyp, double segment_s) {
    if (!(segment_s > 0.0)) fail("segment_f1: segment length must be positive");
    validate_event_list(ref, "segment_f1 reference");
    validate_event_list(hyp, "segment_f1 hypothesis");
    require_same_duration(ref, hyp, "segment_f1");

    const auto segments =
        static_cast<std::size_t>(std::ceil(ref.duration_s / segment_s - 1e-12));
    F1Result result;
    for (const std::string& label : labels_of(ref, hyp)) {
        const std::vector<char> in_ref = activity(ref, label, segments, segment_s);
        const std::vector<char> in_hyp = activity(hyp, label, segments, segment_s);
        ClassTally& tally = result.per_class[label];
        for (std::size_t s = 0; s < segments; ++s) {
            if (in_ref[s] && in_hyp[s]) tally.tp += 1;
            else if (in_hyp[s]) tally.fp += 1;
            else if (in_ref[s]) tally.fn += 1;
        }
    }
    return result;
}

std::vector<int> match_events(const EventList& ref, const EventList& hyp,
                              double onset_collar_s) {
    if (!(onset_collar_s >= 0.0)) fail("match_events: collar must be non-negative");
    validate_event_list(ref, "event matching reference");
    validate_event_list(hyp, "event matching hypothesis");
    require_same_duration(ref, hyp, "event matching");

    std::vector<int> result(ref.events.size(), -1);
    for (const std::string& label : labels_of(ref, hyp)) {
        std::vector<std::size_t> refs, hyps;
        for (std::size_t i = 0; i < ref.events.size(); ++i)
            if (ref.events[i].label == label) refs.push_back(i);
        for (std::size_t i = 0; i < hyp.events.size(); ++i)
            if (hyp.events[i].label == label) hyps.push_back(i);

        std::vector<std::vector<char>> compatible(refs.size(),
                                                  std::vector<char>(hyps.size(), 0));
        for (std::size_t r = 0; r < refs.size(); ++r)
            for (std::size_t h = 0; h < hyps.size(); ++h)
                compatible[r][h] =
                    events_match(ref.events[refs[r]], hyp.events[hyps[h]], onset_collar_s);

        const std::vector<int> local = max_matching(compatible, hyps.size());
        for (std::size_t r = 0; r < refs.size(); ++r)
            if (local[r] >= 0)
                result[refs[r]] = static_cast<int>(hyps[static_cast<std::size_t>(local[r])]);
    }
    return result;
}

F1Result event_f1(const EventList& ref, const EventList& hyp, double onset_collar_s) {
    const std::vector<int> matches = match_events(ref, hyp, onset_collar_s);

    F1Result result;
    for (const std::string& label : labels_of(ref, hyp)) result.per_class[label];
    for (std::size_t i = 0; i < ref.events.size(); ++i) {
        ClassTally& tally = result.per_class[ref.events[i].label];
        if (matches[i] >= 0) tally.tp += 1;
        else tally.fn += 1;
    }
    std::vector<char> hyp_matched(hyp.events.size(), 0);
    for (int h : matches)
        if (h >= 0) hyp_matched[static_cast<std::size_t>(h)] = 1;
    for (std::size_t h = 0; h < hyp.events.size(); ++h)
        if (!hyp_matched[h]) result.per_class[hyp.events[h].label].fp += 1;
    return result;
}

double category_accuracy(const std::vector<std::string>& ref,
                         const std::vector<std::string>& hyp) {
    if (ref.size() != hyp.size())
        fail("category_accuracy: lists have different lengths (" + std::to_string(ref.size()) +
             " vs " + std::to_string(hyp.size()) + ")");
    if (ref.empty()) return 1.0;  // two empty lists are identical
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ref.size(); ++i)
        if (ref[i] == hyp[i]) correct += 1;
    return static_cast<double>(correct) / static_cast<double>(ref.size());
}

// ---- contours ---------------------------------------------------------------------

double framewise_mae(const Contour& ref, const Contour& hyp) {
    if (ref.values.empty() || hyp.values.empty())
        fail("framewise_mae: a contour is empty");
    double sum = 0.0;
    std::int64_t count = 0;
    accumulate_abs_diff(ref, hyp, sum, count);
    if (count == 0) fail("framewise_mae: no frame is defined on both sides");
    return sum / static_cast<double>(count);
}

Contour feature_energy_contour(const FeatureSequence& raw, const FeatureConfig& cfg) {
    Contour c;
    c.frame_rate = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.hop);
    c.values = band_envelope_db(raw, cfg, 0.0, static_cast<double>(cfg.sample_rate));
    return c;
}

Contour feature_pitch_contour(const FeatureSequence& raw, const FeatureConfig& cfg,
                              double silence_rel_db) {
    const Contour energy = feature_energy_contour(raw, cfg);
    double peak = -std::numeric_limits<double>::infinity();
    for (double db : energy.values) peak = std::max(peak, db);

    Contour c;
    c.frame_rate = energy.frame_rate;
    c.values.resize(raw.frames, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t f = 0; f < raw.frames; ++f) {
        if (energy.values[f] < peak + silence_rel_db) continue;
        c.values[f] = band_centroid_hz(raw, f, f + 1, cfg, 0.0,
                                       static_cast<double>(cfg.sample_rate));
    }
    return c;
}

// ---- detection --------------------------------------------------------------------

std::vector<DetectedEvent> detect_events_detailed(const FeatureSequence& normalized,
                                                  const DatasetMeta& meta,
                                                  const FeatureConfig& features_cfg,
                                                  const DetectorConfig& detector_cfg) {
    if (meta.sample_rate != features_cfg.sample_rate)
        fail("detect_events: dataset sample rate " + std::to_string(meta.sample_rate) +
             " does not match the feature config's " +
             std::to_string(features_cfg.sample_rate));
    if (!(detector_cfg.on_rel_db > detector_cfg.off_rel_db))
        fail("detect_events: the on threshold must sit above the off threshold");
    if (detector_cfg.min_duration_s < 0.0 || detector_cfg.merge_gap_s < 0.0)
        fail("detect_events: durations must be non-negative");
    if (meta.classes.empty()) fail("detect_events: the dataset lists no classes");

    FeatureSequence raw = normalized;
    denormalize_features(raw, meta.stats);
    const double fps =
        static_cast<double>(features_cfg.sample_rate) / static_cast<double>(features_cfg.hop);

    struct BandScan {
        const EventClass* cls;
        std::vector<double> env;
        double peak;
    };
    std::vector<BandScan> bands;
    bands.reserve(meta.classes.size());
    double clip_peak = -std::numeric_limits<double>::infinity();
    for (const std::string& name : meta.classes) {
        const EventClass* cls = find_event_class(name);
        if (!cls)
            fail("detect_events: class '" + name + "' is not in the synthetic registry");
        BandScan scan;
        scan.cls = cls;
        scan.env = band_envelope_db(raw, features_cfg, cls->f_lo, cls->f_hi);
        scan.peak = -std::numeric_limits<double>::infinity();
        for (double db : scan.env) scan.peak = std::max(scan.peak, db);
        clip_peak = std::max(clip_peak, scan.peak);
        bands.push_back(std::move(scan));
    }

    std::vector<DetectedEvent> out;
    for (std::size_t c = 0; c < bands.size(); ++c) {
        const std::string& name = meta.classes[c];
        const EventClass* cls = bands[c].cls;
        const std::vector<double>& env = bands[c].env;

        const double peak =
            std::max(bands[c].peak, clip_peak + detector_cfg.peak_floor_rel_clip_db);
        const double on_th = std::max(peak + detector_cfg.on_rel_db, detector_cfg.floor_db);
        const double off_th = std::max(peak + detector_cfg.off_rel_db, detector_cfg.floor_db);

        // hysteresis scan -> [begin, end) frame spans
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        bool on = false;
        std::size_t begin = 0;
        for (std::size_t f = 0; f < env.size(); ++f) {
            if (!on && env[f] >= on_th) {
                on = true;
                begin = f;
            } else if (on && env[f] < off_th) {
                on = false;
                spans.emplace_back(begin, f);
            }
        }
        if (on) spans.emplace_back(begin, env.size());

        // bridge short gaps, then drop short spans
        std::vector<std::pair<std::size_t, std::size_t>> merged;
        for (const auto& span : spans) {
            if (!merged.empty() &&
                static_cast<double>(span.first - merged.back().second) / fps <=
                    detector_cfg.merge_gap_s + 1e-9)
                merged.back().second = span.second;
            else
                merged.push_back(span);
        }

        const ClassCalibration cal =
            meta.calibration.count(name) ? meta.calibration.at(name) : ClassCalibration{};
        for (const auto& [b, e] : merged) {
            if (static_cast<double>(e - b) / fps < detector_cfg.min_duration_s - 1e-9) continue;
            DetectedEvent det;
            det.annotation.label = name;
            det.annotation.start_s = static_cast<double>(b) / fps;
            det.annotation.end_s = static_cast<double>(e) / fps;
            det.pitch_hz = band_centroid_hz(raw, b, e, features_cfg, cls->f_lo, cls->f_hi) +
                           cal.pitch_offset;
            double in_band_db = 0.0;
            for (std::size_t f = b; f < e; ++f) in_band_db += env[f];
            in_band_db /= static_cast<double>(e - b);
            det.energy_db = in_band_db + cal.energy_offset;
            det.annotation.pitch = categorize_value(det.pitch_hz, meta.pitch_thresholds);
            det.annotation.energy = categorize_value(det.energy_db, meta.energy_thresholds);
            out.push_back(std::move(det));
        }
    }

    std::sort(out.begin(), out.end(), [](const DetectedEvent& a, const DetectedEvent& b) {
        return std::tie(a.annotation.start_s, a.annotation.label, a.annotation.end_s) <
               std::tie(b.annotation.start_s, b.annotation.label, b.annotation.end_s);
    });
    return out;
}

EventList detect_events(const FeatureSequence& normalized, const DatasetMeta& meta,
                        const FeatureConfig& features_cfg, const DetectorConfig& detector_cfg) {
    std::vector<DetectedEvent> detailed =
        detect_events_detailed(normalized, meta, features_cfg, detector_cfg);
    EventList out;
    out.duration_s = static_cast<double>(normalized.frames) *
                     static_cast<double>(features_cfg.hop) /
                     static_cast<double>(features_cfg.sample_rate);
    for (DetectedEvent& det : detailed) out.events.push_back(std::move(det.annotation));
    return out;
}

// ---- run-level evaluation -----------------------------------------------------------

double EvalReport::segment_macro_f1() const {
    F1Result r;
    r.per_class = segment;
    return r.macro_f1();
}

double EvalReport::event_macro_f1() const {
    F1Result r;
    r.per_class = event;
    return r.macro_f1();
}

double EvalReport::pitch_accuracy() const {
    return events_total > 0
               ? static_cast<double>(pitch_correct) / static_cast<double>(events_total)
               : 0.0;
}

double EvalReport::energy_accuracy() const {
    return events_total > 0
               ? static_cast<double>(energy_correct) / static_cast<double>(events_total)
               : 0.0;
}

double EvalReport::pitch_mae() const {
    return pitch_frames > 0 ? pitch_abs_sum / static_cast<double>(pitch_frames)
                            : std::numeric_limits<double>::quiet_NaN();
}

double EvalReport::energy_mae() const {
    return energy_frames > 0 ? energy_abs_sum / static_cast<double>(energy_frames)
                             : std::numeric_limits<double>::quiet_NaN();
}

EvalReport evaluate_items(const std::vector<EvalItem>& items, const EvalOptions& opts) {
    EvalReport report;
    F1Result seg_total, ev_total;
    for (const EvalItem& item : items) {
        report.clips += 1;
        seg_total += segment_f1(item.ref_events, item.hyp_events, opts.segment_s);
        ev_total += event_f1(item.ref_events, item.hyp_events, opts.onset_collar_s);

        const std::vector<int> matches =
            match_events(item.ref_events, item.hyp_events, opts.onset_collar_s);
        for (std::size_t i = 0; i < item.ref_events.events.size(); ++i) {
            const EventAnnotation& ref = item.ref_events.events[i];
            report.events_total += 1;
            if (matches[i] < 0) continue;  // a missed event cannot be category-correct
            const EventAnnotation& hyp =
                item.hyp_events.events[static_cast<std::size_t>(matches[i])];
            if (hyp.pitch == ref.pitch) report.pitch_correct += 1;
            if (hyp.energy == ref.energy) report.energy_correct += 1;
        }

        accumulate_abs_diff(item.ref_pitch, item.hyp_pitch, report.pitch_abs_sum,
                            report.pitch_frames);
        accumulate_abs_diff(item.ref_energy, item.hyp_energy, report.energy_abs_sum,
                            report.energy_frames);
    }
    report.segment = std::move(seg_total.per_class);
    report.event = std::move(ev_total.per_class);
    return report;
}

EvalReport evaluate_run(const std::filesystem::path& ref_dir,
                        const std::filesystem::path& gen_dir, const EvalOptions& opts) {
    const Manifest ref = read_manifest(ref_dir / "manifest.jsonl");
    const Manifest gen = read_manifest(gen_dir / "manifest.jsonl");
    const DatasetMeta ref_meta = read_dataset_meta(ref_dir / "dataset.json");
    const DatasetMeta gen_meta = read_dataset_meta(gen_dir / "dataset.json");

    std::map<std::string, const ManifestRecord*> gen_by_id;
    for (const ManifestRecord& rec : gen.records)
        if (!gen_by_id.emplace(rec.id, &rec).second)
            throw std::runtime_error("evaluate_run: duplicate generated id '" + rec.id + "'");

    std::vector<std::string> missing, unexpected;
    std::set<std::string> ref_ids;
    for (const ManifestRecord& rec : ref.records) {
        ref_ids.insert(rec.id);
        if (!gen_by_id.count(rec.id)) missing.push_back(rec.id);
    }
    for (const ManifestRecord& rec : gen.records)
        if (!ref_ids.count(rec.id)) unexpected.push_back(rec.id);
    if (!missing.empty() || !unexpected.empty()) {
        std::ostringstream msg;
        msg << "evaluate_run: manifests cover different ids;";
        if (!missing.empty()) {
            msg << " missing from generated run:";
            for (const std::string& id : missing) msg << ' ' << id;
            msg << ';';
        }
        if (!unexpected.empty()) {
            msg << " unexpected in generated run:";
            for (const std::string& id : unexpected) msg << ' ' << id;
        }
        throw std::runtime_error(msg.str());
    }

    const auto contours = [&opts](const std::filesystem::path& dir, const ManifestRecord& rec,
                                  const FeatureStats& stats, Contour& pitch, Contour& energy) {
        if (rec.features.empty()) return;
        FeatureSequence f = read_features(dir / rec.features);
        denormalize_features(f, stats);
        pitch = feature_pitch_contour(f, opts.features, opts.pitch_silence_rel_db);
        energy = feature_energy_contour(f, opts.features);
    };

    std::vector<EvalItem> items;
    items.reserve(ref.records.size());
    for (const ManifestRecord& rec : ref.records) {
        const ManifestRecord& hyp = *gen_by_id.at(rec.id);
        EvalItem item;
        item.id = rec.id;
        item.ref_events = EventList{rec.events, rec.duration_s};
        item.hyp_events = EventList{hyp.events, hyp.duration_s};
        contours(ref_dir, rec, ref_meta.stats, item.ref_pitch, item.ref_energy);
        contours(gen_dir, hyp, gen_meta.stats, item.hyp_pitch, item.hyp_energy);
        items.push_back(std::move(item));
    }
    return evaluate_items(items, opts);
}

// ---- report serialization -------------------------------------------------------------

namespace {

json tallies_to_json(const std::map<std::string, ClassTally>& tallies) {
    json j = json::object();
    for (const auto& [label, t] : tallies)
        j[label] = json{{"tp", t.tp}, {"fp", t.fp}, {"fn", t.fn}};
    return j;
}

std::map<std::string, ClassTally> tallies_from_json(const json& j) {
    std::map<std::string, ClassTally> out;
    for (const auto& [label, t] : j.items())
        out[label] = ClassTally{t.at("tp").get<std::int64_t>(), t.at("fp").get<std::int64_t>(),
                                t.at("fn").get<std::int64_t>()};
    return out;
}

}  // namespace

std::string eval_report_to_json(const EvalReport& report) {
    json derived{{"segment_f1", report.segment_macro_f1()},
                 {"event_f1", report.event_macro_f1()},
                 {"pitch_accuracy", report.pitch_accuracy()},
                 {"energy_accuracy", report.energy_accuracy()}};
    if (report.pitch_frames > 0) derived["pitch_mae_hz"] = report.pitch_mae();
    if (report.energy_frames > 0) derived["energy_mae_db"] = report.energy_mae();

    const json j{{"clips", report.clips},
                 {"segment", tallies_to_json(report.segment)},
                 {"event", tallies_to_json(report.event)},
                 {"events_total", report.events_total},
                 {"pitch_correct", report.pitch_correct},
                 {"energy_correct", report.energy_correct},
                 {"pitch_abs_sum", report.pitch_abs_sum},
                 {"pitch_frames", report.pitch_frames},
                 {"energy_abs_sum", report.energy_abs_sum},
                 {"energy_frames", report.energy_frames},
                 {"derived", derived}};
    return j.dump(2);
}

EvalReport eval_report_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        EvalReport r;
        r.clips = j.at("clips").get<std::int64_t>();
        r.segment = tallies_from_json(j.at("segment"));
        r.event = tallies_from_json(j.at("event"));
        r.events_total = j.at("events_total").get<std::int64_t>();
        r.pitch_correct = j.at("pitch_correct").get<std::int64_t>();
        r.energy_correct = j.at("energy_correct").get<std::int64_t>();
        r.pitch_abs_sum = j.at("pitch_abs_sum").get<double>();
        r.pitch_frames = j.at("pitch_frames").get<std::int64_t>();
        r.energy_abs_sum = j.at("energy_abs_sum").get<double>();
        r.energy_frames = j.at("energy_frames").get<std::int64_t>();
        return r;
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("eval report: malformed JSON: ") + e.what());
    }
}

std::string format_eval_table(const EvalReport& report) {
    std::ostringstream out;
    const auto mae_text = [](double v) {
        if (!std::isfinite(v)) return std::string("n/a");
        std::ostringstream s;
        s << std::fixed << std::setprecision(2) << v;
        return s.str();
    };
    out << std::fixed << std::setprecision(4);
    out << std::setw(6) << "clips" << std::setw(9) << "F1_seg" << std::setw(10) << "F1_event"
        << std::setw(11) << "pitch_ACC" << std::setw(14) << "pitch_MAE_Hz" << std::setw(12)
        << "energy_ACC" << std::setw(15) << "energy_MAE_dB" << '\n';
    out << std::setw(6) << report.clips << std::setw(9) << report.segment_macro_f1()
        << std::setw(10) << report.event_macro_f1() << std::setw(11) << report.pitch_accuracy()
        << std::setw(14) << mae_text(report.pitch_mae()) << std::setw(12)
        << report.energy_accuracy() << std::setw(15) << mae_text(report.energy_mae()) << '\n';

    out << '\n'
        << std::setw(12) << "class" << std::setw(8) << "seg_tp" << std::setw(8) << "seg_fp"
        << std::setw(8) << "seg_fn" << std::setw(9) << "seg_F1" << '\n';
    for (const auto& [label, t] : report.segment)
        out << std::setw(12) << label << std::setw(8) << t.tp << std::setw(8) << t.fp
            << std::setw(8) << t.fn << std::setw(9) << tally_f1(t) << '\n';
    return out.str();
}

}  // namespace soundflow
