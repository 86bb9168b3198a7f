#include "soundflow/mixer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "soundflow/audio_io.hpp"

namespace soundflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace

void validate_mixer_config(const MixerConfig& cfg) {
    if (cfg.sample_rate <= 0 || cfg.sample_rate % 10 != 0)
        fail("mixer config: sample rate must be a positive multiple of 10, got " +
             std::to_string(cfg.sample_rate));
    if (cfg.min_events < 1 || cfg.max_events < cfg.min_events)
        fail("mixer config: bad event count range [" + std::to_string(cfg.min_events) + ", " +
             std::to_string(cfg.max_events) + "]");
    if (!(cfg.duration_budget_s < 10.0))
        fail("mixer config: duration budget must stay below 10 s, got " +
             std::to_string(cfg.duration_budget_s));
    if (cfg.min_mixture_s <= 0.0 || cfg.min_mixture_s > cfg.duration_budget_s)
        fail("mixer config: bad minimum mixture duration");
    if (cfg.min_event_s < 0.3 || cfg.max_event_s > 4.0 || cfg.min_event_s > cfg.max_event_s)
        fail("mixer config: event durations must satisfy 0.3 <= min <= max <= 4.0");
    if (cfg.max_event_s > cfg.duration_budget_s)
        fail("mixer config: longest event (" + std::to_string(cfg.max_event_s) +
             " s) does not fit the duration budget");
    if (cfg.retry_cap < 1) fail("mixer config: retry cap must be positive");
    if (cfg.clips_per_class < 1) fail("mixer config: clips_per_class must be positive");
    for (const std::string& c : cfg.classes)
        if (find_event_class(c) == nullptr) fail("mixer config: unknown class '" + c + "'");
    if (cfg.features.sample_rate != cfg.sample_rate)
        fail("mixer config: feature sample rate differs from mixer sample rate");
}

namespace {

std::vector<std::string> effective_classes(const MixerConfig& cfg) {
    if (!cfg.classes.empty()) return cfg.classes;
    std::vector<std::string> all;
    for (const EventClass& c : event_classes()) all.push_back(c.name);
    return all;
}

// Quantile thresholds, per-clip categories, and the per-class calibration —
// shared by the synthetic and ingested pool paths.
void finish_pool(Pool& pool, const MixerConfig& cfg) {
    // Pool-level quantiles: pitch over pitched clips only, energy over all.
    std::vector<double> pitches, energies;
    for (const SourceClip& c : pool.clips) {
        if (c.mean_pitch != kUnpitched) pitches.push_back(c.mean_pitch);
        energies.push_back(c.mean_energy);
    }
    if (pitches.size() < 4)
        throw std::runtime_error("clip pool: fewer than 4 pitched clips; cannot form quantiles");
    pool.pitch_thresholds = compute_thresholds(pitches);
    pool.energy_thresholds = compute_thresholds(energies);

    for (SourceClip& c : pool.clips) {
        c.pitch_category = c.mean_pitch != kUnpitched
                               ? categorize_value(c.mean_pitch, pool.pitch_thresholds)
                               : Category::Normal;
        c.energy_category = categorize_value(c.mean_energy, pool.energy_thresholds);
    }

    // Fit the per-class map from feature-domain estimates (band centroid,
    // in-band dB) back to the estimator domain (fundamental Hz, waveform dB),
    // so the detector can reuse the pool thresholds above.
    struct Accum {
        double pitch = 0.0;
        std::size_t pitched = 0;
        double energy = 0.0;
        std::size_t total = 0;
    };
    std::map<std::string, Accum> acc;
    for (const SourceClip& c : pool.clips) {
        const EventClass& cls = *find_event_class(c.label);
        const FeatureSequence feats = compute_features(c.samples, cfg.features);
        const std::vector<double> env = band_envelope_db(feats, cfg.features, cls.f_lo, cls.f_hi);
        double env_mean = 0.0;
        for (double db : env) env_mean += db;
        env_mean /= static_cast<double>(env.size());
        Accum& a = acc[c.label];
        a.energy += c.mean_energy - env_mean;
        a.total += 1;
        if (c.mean_pitch != kUnpitched) {
            const double centroid =
                band_centroid_hz(feats, 0, feats.frames, cfg.features, cls.f_lo, cls.f_hi);
            a.pitch += c.mean_pitch - centroid;
            a.pitched += 1;
        }
    }
    for (const auto& [name, a] : acc) {
        ClassCalibration cal;
        cal.energy_offset = a.total > 0 ? a.energy / static_cast<double>(a.total) : 0.0;
        cal.pitch_offset = a.pitched > 0 ? a.pitch / static_cast<double>(a.pitched) : 0.0;
        pool.calibration[name] = cal;
    }
}

}  // namespace

Pool build_pool(const MixerConfig& cfg, std::uint64_t seed) {
    validate_mixer_config(cfg);
    Pool pool;
    pool.classes = effective_classes(cfg);

    const int min_tenths = static_cast<int>(std::lround(cfg.min_event_s * 10.0));
    const int max_tenths = static_cast<int>(std::lround(cfg.max_event_s * 10.0));

    std::size_t clip_index = 0;
    for (const std::string& name : pool.classes) {
        const EventClass& cls = *find_event_class(name);
        for (std::size_t i = 0; i < cfg.clips_per_class; ++i, ++clip_index) {
            Rng rng(derive_seed(seed, clip_index));
            const double pitch = rng.uniform(cls.f_lo, cls.f_hi);
            const double gain = rng.uniform(-30.0, -10.0);
            const double dur =
                static_cast<double>(rng.uniform_int(min_tenths, max_tenths)) / 10.0;
            pool.clips.push_back(synth_event(name, pitch, gain, dur, rng, cfg.sample_rate));
        }
    }

    finish_pool(pool, cfg);
    return pool;
}

Pool build_pool_from_dir(const MixerConfig& cfg, const std::filesystem::path& dir) {
    validate_mixer_config(cfg);
    if (!std::filesystem::is_directory(dir))
        fail("build_pool_from_dir: '" + dir.string() + "' is not a directory");

    // Gather (label, path) pairs: class subdirectories first, then flat
    // "<Class>_*.wav" files. Sorted paths keep the pool order deterministic.
    std::vector<std::pair<std::string, std::filesystem::path>> sources;
    std::vector<std::filesystem::path> entries;
    for (const auto& e : std::filesystem::directory_iterator(dir)) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& entry : entries) {
        if (std::filesystem::is_directory(entry)) {
            std::vector<std::filesystem::path> wavs;
            for (const auto& f : std::filesystem::directory_iterator(entry))
                if (f.path().extension() == ".wav") wavs.push_back(f.path());
            std::sort(wavs.begin(), wavs.end());
            for (const auto& w : wavs) sources.emplace_back(entry.filename().string(), w);
        } else if (entry.extension() == ".wav") {
            const std::string stem = entry.stem().string();
            sources.emplace_back(stem.substr(0, stem.find('_')), entry);
        }
    }
    if (sources.empty())
        fail("build_pool_from_dir: no .wav clips under '" + dir.string() + "'");

    Pool pool;
    const std::size_t grid = static_cast<std::size_t>(cfg.sample_rate) / 10;  // 0.1 s
    for (const auto& [label, path] : sources) {
        if (find_event_class(label) == nullptr)
            fail("build_pool_from_dir: '" + path.string() + "' has label '" + label +
                 "', which is not a registry class");
        AudioData audio = read_wav(path);
        if (audio.sample_rate != cfg.sample_rate)
            fail("build_pool_from_dir: '" + path.string() + "' has sample rate " +
                 std::to_string(audio.sample_rate) + ", expected " +
                 std::to_string(cfg.sample_rate));
        // Trim to the annotation grid so placement arithmetic stays exact.
        audio.samples.resize(audio.samples.size() / grid * grid);
        const double dur = static_cast<double>(audio.samples.size()) / cfg.sample_rate;
        if (dur < cfg.min_event_s - 1e-9 || dur > cfg.max_event_s + 1e-9)
            fail("build_pool_from_dir: '" + path.string() + "' lasts " + std::to_string(dur) +
                 " s after grid trimming; event clips must lie in [" +
                 std::to_string(cfg.min_event_s) + ", " + std::to_string(cfg.max_event_s) + "]");

        SourceClip clip;
        clip.label = label;
        clip.sample_rate = cfg.sample_rate;
        clip.mean_pitch = estimate_pitch(audio.samples, cfg.sample_rate);
        clip.mean_energy = estimate_energy(audio.samples, cfg.sample_rate);
        clip.samples = std::move(audio.samples);
        pool.clips.push_back(std::move(clip));
        if (std::find(pool.classes.begin(), pool.classes.end(), label) == pool.classes.end())
            pool.classes.push_back(label);
    }
    std::sort(pool.classes.begin(), pool.classes.end());

    finish_pool(pool, cfg);
    return pool;
}

Mixture simulate_mixture(const Pool& pool, Rng& rng, const MixerConfig& cfg) {
    validate_mixer_config(cfg);
    if (pool.clips.empty()) fail("simulate_mixture: empty pool");

    const int budget_fifths = static_cast<int>(std::floor(cfg.duration_budget_s * 5.0 + 1e-9));
    const int min_mix_fifths = static_cast<int>(std::ceil(cfg.min_mixture_s * 5.0 - 1e-9));

    // Choose events. Each event must fit the budget on its own; without
    // overlap the running total must fit as well, since the events will
    // occupy disjoint spans. A draw violating that is redrawn up to the
    // retry cap.
    const int budget_tenths = budget_fifths * 2;
    const int k = static_cast<int>(rng.uniform_int(cfg.min_events, cfg.max_events));
    std::vector<const SourceClip*> chosen;
    std::vector<int> lengths_tenths;
    int total_tenths = 0;
    int longest_tenths = 0;
    for (int e = 0; e < k; ++e) {
        const SourceClip* clip = nullptr;
        int len_tenths = 0;
        for (int attempt = 0; attempt < cfg.retry_cap; ++attempt) {
            const SourceClip* cand =
                &pool.clips[rng.uniform_int(0, static_cast<int>(pool.clips.size()) - 1)];
            const int cand_tenths = static_cast<int>(std::lround(cand->duration_s() * 10.0));
            const int needed = cfg.allow_overlap ? cand_tenths : total_tenths + cand_tenths;
            if (needed <= budget_tenths) {
                clip = cand;
                len_tenths = cand_tenths;
                break;
            }
        }
        if (clip == nullptr)
            throw std::runtime_error("simulate_mixture: no pool clip fits the budget after " +
                                     std::to_string(cfg.retry_cap) + " attempts");
        chosen.push_back(clip);
        lengths_tenths.push_back(len_tenths);
        total_tenths += len_tenths;
        longest_tenths = std::max(longest_tenths, len_tenths);
    }

    // Mixture duration on the 0.2 s grid, long enough for the longest event
    // (every event, if they must not overlap).
    const int occupied_tenths = cfg.allow_overlap ? longest_tenths : total_tenths;
    const int dur_lo_fifths = std::max(min_mix_fifths, (occupied_tenths + 1) / 2);
    if (dur_lo_fifths > budget_fifths)
        throw std::runtime_error(
            "simulate_mixture: chosen events do not fit the 0.2 s duration grid "
            "within the budget");
    const int dur_fifths = static_cast<int>(rng.uniform_int(dur_lo_fifths, budget_fifths));
    const int dur_tenths = dur_fifths * 2;
    const double duration = static_cast<double>(dur_fifths) / 5.0;

    // Place each event on the 0.1 s grid.
    struct Placement {
        const SourceClip* clip;
        int start_tenths;
        int end_tenths;
    };
    std::vector<Placement> placed;
    if (cfg.allow_overlap) {
        for (int e = 0; e < k; ++e) {
            const int start =
                static_cast<int>(rng.uniform_int(0, dur_tenths - lengths_tenths[e]));
            placed.push_back({chosen[e], start, start + lengths_tenths[e]});
        }
    } else {
        // Distribute the free space among the k+1 gaps: k sorted draws from
        // {0..slack} are the gap prefix sums, so every disjoint left-to-right
        // arrangement is reachable and placement never fails. The events were
        // drawn i.i.d., so fixing draw order = time order introduces no bias.
        const int slack = dur_tenths - total_tenths;
        std::vector<int> offsets(static_cast<std::size_t>(k));
        for (int& g : offsets) g = static_cast<int>(rng.uniform_int(0, slack));
        std::sort(offsets.begin(), offsets.end());
        int prefix = 0;
        for (int e = 0; e < k; ++e) {
            const int start = offsets[static_cast<std::size_t>(e)] + prefix;
            placed.push_back({chosen[e], start, start + lengths_tenths[e]});
            prefix += lengths_tenths[e];
        }
    }

    // mix
    Mixture mix;
    mix.sample_rate = cfg.sample_rate;
    mix.duration_s = duration;
    mix.samples.assign(static_cast<std::size_t>(dur_tenths) * cfg.sample_rate / 10, 0.0);
    for (const Placement& p : placed) {
        const std::size_t offset =
            static_cast<std::size_t>(p.start_tenths) * cfg.sample_rate / 10;
        for (std::size_t i = 0; i < p.clip->samples.size(); ++i)
            mix.samples[offset + i] += p.clip->samples[i];
    }
    double peak = 0.0;
    for (double s : mix.samples) peak = std::max(peak, std::abs(s));
    if (peak > 1.0) {
        const double g = std::pow(10.0, -1.0 / 20.0) / peak;  // settle at -1 dBFS
        for (double& s : mix.samples) s *= g;
    }

    for (const Placement& p : placed) {
        EventAnnotation a;
        a.label = p.clip->label;
        a.start_s = static_cast<double>(p.start_tenths) / 10.0;
        a.end_s = static_cast<double>(p.end_tenths) / 10.0;
        a.pitch = p.clip->pitch_category;
        a.energy = p.clip->energy_category;
        mix.annotations.push_back(std::move(a));
    }
    std::stable_sort(mix.annotations.begin(), mix.annotations.end(),
                     [](const EventAnnotation& a, const EventAnnotation& b) {
                         if (a.start_s != b.start_s) return a.start_s < b.start_s;
                         if (a.end_s != b.end_s) return a.end_s < b.end_s;
                         return a.label < b.label;
                     });
    mix.caption = render_nld(mix.annotations);
    if (cfg.compute_features) mix.features = compute_features(mix.samples, cfg.features);
    return mix;
}

Manifest build_dataset(const MixerConfig& cfg, std::size_t n, std::uint64_t seed,
                       const std::filesystem::path& out_dir) {
    validate_mixer_config(cfg);
    MixerConfig effective = cfg;
    effective.compute_features = true;
    return build_dataset(build_pool(effective, derive_seed(seed, 0)), cfg, n, seed, out_dir);
}

Manifest build_dataset(const Pool& pool, const MixerConfig& cfg, std::size_t n,
                       std::uint64_t seed, const std::filesystem::path& out_dir) {
    validate_mixer_config(cfg);
    if (n == 0) fail("build_dataset: n must be positive");
    if (pool.clips.empty()) fail("build_dataset: empty pool");
    MixerConfig effective = cfg;
    effective.compute_features = true;  // features are a required artifact

    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    try {
        Manifest manifest;
        std::vector<FeatureSequence> features;
        features.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            Rng rng(derive_seed(seed, 1 + i));
            Mixture mix = simulate_mixture(pool, rng, effective);

            char id[32];
            std::snprintf(id, sizeof(id), "%06zu", i);
            ManifestRecord rec;
            rec.id = id;
            rec.wav = std::string(id) + ".wav";
            rec.features = std::string(id) + ".acft";
            rec.duration_s = mix.duration_s;
            rec.events = mix.annotations;
            rec.caption = mix.caption;

            const auto wav_path = out_dir / rec.wav;
            write_wav(wav_path, mix.samples, mix.sample_rate);
            written.push_back(wav_path);

            features.push_back(std::move(mix.features));
            manifest.records.push_back(std::move(rec));
        }

        std::vector<const FeatureSequence*> ptrs;
        ptrs.reserve(features.size());
        for (const FeatureSequence& f : features) ptrs.push_back(&f);
        const FeatureStats stats = compute_feature_stats(ptrs);
        for (std::size_t i = 0; i < n; ++i) {
            normalize_features(features[i], stats);
            const auto feat_path = out_dir / manifest.records[i].features;
            write_features(feat_path, features[i]);
            written.push_back(feat_path);
        }

        DatasetMeta meta;
        meta.sample_rate = effective.sample_rate;
        meta.stats = stats;
        meta.pitch_thresholds = pool.pitch_thresholds;
        meta.energy_thresholds = pool.energy_thresholds;
        meta.calibration = pool.calibration;
        meta.classes = pool.classes;
        write_dataset_meta(out_dir / "dataset.json", meta);
        written.push_back(out_dir / "dataset.json");

        write_manifest(out_dir / "manifest.jsonl", manifest);
        return manifest;
    } catch (...) {
        // leave no partial dataset behind
        std::error_code ec;
        for (const auto& p : written) std::filesystem::remove(p, ec);
        throw;
    }
}

}  // namespace soundflow
