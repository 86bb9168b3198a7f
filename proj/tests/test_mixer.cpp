#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "soundflow/analysis.hpp"
#include "soundflow/mixer.hpp"
#include "soundflow/nld.hpp"
#include "soundflow/rng.hpp"

using namespace soundflow;
namespace fs = std::filesystem;

namespace {

MixerConfig small_config() {
    MixerConfig cfg;
    cfg.classes = {"Hum", "Tone"};
    cfg.clips_per_class = 8;
    cfg.compute_features = false;
    return cfg;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Returns time in integer tenths of a second, failing if off-grid.
long long tenths(double seconds) {
    const double scaled = seconds * 10.0;
    const double rounded = std::round(scaled);
    REQUIRE(std::abs(scaled - rounded) < 1e-9);
    return static_cast<long long>(rounded);
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("soundflow_mixer_" + tag);
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("pool synthesis is deterministic and self-consistent") {
    const MixerConfig cfg = small_config();
    const Pool pool = build_pool(cfg, 99);
    const Pool again = build_pool(cfg, 99);

    REQUIRE(pool.clips.size() == 16);
    CHECK(pool.classes == std::vector<std::string>{"Hum", "Tone"});

    for (std::size_t i = 0; i < pool.clips.size(); ++i) {
        const SourceClip& clip = pool.clips[i];
        CHECK((clip.label == "Hum" || clip.label == "Tone"));
        CHECK(clip.sample_rate == cfg.sample_rate);
        CHECK(clip.duration_s() >= cfg.min_event_s - 1e-9);
        CHECK(clip.duration_s() <= cfg.max_event_s + 1e-9);
        // categories must agree with the pool thresholds and measured values
        if (clip.mean_pitch != kUnpitched) {
            CHECK(clip.pitch_category == categorize_value(clip.mean_pitch, pool.pitch_thresholds));
        } else {
            CHECK(clip.pitch_category == Category::Normal);
        }
        CHECK(clip.energy_category == categorize_value(clip.mean_energy, pool.energy_thresholds));
        // determinism: bit-identical waveforms and measurements
        CHECK(again.clips[i].samples == clip.samples);
        CHECK(again.clips[i].mean_pitch == clip.mean_pitch);
        CHECK(again.clips[i].mean_energy == clip.mean_energy);
    }
    CHECK(pool.pitch_thresholds.q25 < pool.pitch_thresholds.q75);
    CHECK(pool.energy_thresholds.q25 < pool.energy_thresholds.q75);
    // both classes are tonal, so every clip should carry a pitch
    for (const SourceClip& clip : pool.clips) CHECK(clip.mean_pitch != kUnpitched);
    // calibration was fitted for each class
    CHECK(pool.calibration.count("Hum") == 1);
    CHECK(pool.calibration.count("Tone") == 1);
}

TEST_CASE("mixtures satisfy the grid, containment, and caption invariants") {
    MixerConfig cfg = small_config();
    cfg.max_event_s = 2.0;
    const Pool pool = build_pool(cfg, 7);

    SUBCASE("overlap allowed") { cfg.allow_overlap = true; }
    SUBCASE("overlap forbidden") { cfg.allow_overlap = false; }

    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(derive_seed(1234, seed));
        const Mixture mix = simulate_mixture(pool, rng, cfg);

        // duration on the 0.2 s grid, within [min_mixture_s, budget], < 10 s
        const long long dur_tenths = tenths(mix.duration_s);
        CHECK(dur_tenths % 2 == 0);
        CHECK(mix.duration_s >= cfg.min_mixture_s - 1e-9);
        CHECK(mix.duration_s <= cfg.duration_budget_s + 1e-9);
        CHECK(mix.duration_s < 10.0);
        CHECK(mix.samples.size() ==
              static_cast<std::size_t>(dur_tenths) * static_cast<std::size_t>(cfg.sample_rate) / 10);

        // event count and containment on the 0.1 s grid
        const std::size_t k = mix.annotations.size();
        CHECK(k >= static_cast<std::size_t>(cfg.min_events));
        CHECK(k <= static_cast<std::size_t>(cfg.max_events));
        std::vector<std::pair<long long, long long>> spans;
        for (const EventAnnotation& a : mix.annotations) {
            const long long s = tenths(a.start_s);
            const long long e = tenths(a.end_s);
            CHECK(s >= 0);
            CHECK(s < e);
            CHECK(e <= dur_tenths);
            spans.emplace_back(s, e);
        }
        CHECK(std::is_sorted(spans.begin(), spans.end()));
        if (!cfg.allow_overlap) {
            for (std::size_t i = 1; i < spans.size(); ++i)
                CHECK(spans[i].first >= spans[i - 1].second);
        }

        // the caption round-trips to exactly the annotations
        CHECK(parse_nld(mix.caption) == mix.annotations);
        CHECK(render_nld(mix.annotations) == mix.caption);

        // no clipping after the peak guard
        double peak = 0.0;
        for (double s : mix.samples) peak = std::max(peak, std::abs(s));
        CHECK(peak <= 1.0 + 1e-12);
    }
}

TEST_CASE("single fixed-length events keep their duration in the annotation") {
    MixerConfig cfg = small_config();
    cfg.min_events = 1;
    cfg.max_events = 1;
    cfg.min_event_s = 1.5;
    cfg.max_event_s = 1.5;
    const Pool pool = build_pool(cfg, 3);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(5, seed));
        const Mixture mix = simulate_mixture(pool, rng, cfg);
        REQUIRE(mix.annotations.size() == 1);
        CHECK(tenths(mix.annotations[0].end_s) - tenths(mix.annotations[0].start_s) == 15);
    }
}

TEST_CASE("feature computation can be requested per mixture") {
    MixerConfig cfg = small_config();
    cfg.compute_features = true;
    const Pool pool = build_pool(cfg, 11);
    Rng rng(42);
    const Mixture mix = simulate_mixture(pool, rng, cfg);
    const std::size_t hop = static_cast<std::size_t>(cfg.features.hop);
    const std::size_t expect_frames = (mix.samples.size() + hop - 1) / hop;
    CHECK(mix.features.frames == expect_frames);
    CHECK(mix.features.channels == static_cast<std::size_t>(cfg.features.mel_bands));
}

TEST_CASE("simulate_mixture validates its inputs") {
    MixerConfig cfg = small_config();
    const Pool pool = build_pool(cfg, 1);
    Rng rng(0);

    MixerConfig bad = cfg;
    bad.min_events = 0;
    CHECK_THROWS_AS(simulate_mixture(pool, rng, bad), std::invalid_argument);
    bad = cfg;
    bad.max_events = 0;
    CHECK_THROWS_AS(simulate_mixture(pool, rng, bad), std::invalid_argument);
    bad = cfg;
    bad.duration_budget_s = 10.0;  // must stay strictly below 10 s
    CHECK_THROWS_AS(simulate_mixture(pool, rng, bad), std::invalid_argument);
    CHECK_THROWS_AS(simulate_mixture(Pool{}, rng, cfg), std::invalid_argument);
}

TEST_CASE("build_dataset writes a reproducible, self-consistent corpus") {
    MixerConfig cfg = small_config();
    cfg.clips_per_class = 6;
    cfg.max_events = 2;
    cfg.max_event_s = 1.5;

    TempDir dir_a("a");
    TempDir dir_b("b");
    const Manifest manifest = build_dataset(cfg, 12, 2024, dir_a.path);
    REQUIRE(manifest.records.size() == 12);

    const Manifest reread = read_manifest(dir_a.path / "manifest.jsonl");
    REQUIRE(reread.records.size() == 12);

    const DatasetMeta meta = read_dataset_meta(dir_a.path / "dataset.json");
    CHECK(meta.sample_rate == cfg.sample_rate);
    CHECK(meta.classes == cfg.classes);
    REQUIRE(meta.stats.mean.size() == static_cast<std::size_t>(cfg.features.mel_bands));

    std::set<std::string> ids;
    double grand_sum = 0.0;
    double grand_sq = 0.0;
    std::size_t grand_n = 0;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const ManifestRecord& rec = manifest.records[i];
        CHECK(rec.id == reread.records[i].id);
        CHECK(rec.caption == reread.records[i].caption);
        CHECK(rec.events == reread.records[i].events);
        CHECK(ids.insert(rec.id).second);  // ids unique
        CHECK(fs::exists(dir_a.path / rec.wav));
        CHECK(fs::exists(dir_a.path / rec.features));
        CHECK(parse_nld(rec.caption) == rec.events);

        const FeatureSequence feats = read_features(dir_a.path / rec.features);
        CHECK(feats.channels == static_cast<std::size_t>(cfg.features.mel_bands));
        for (float v : feats.data) {
            grand_sum += v;
            grand_sq += static_cast<double>(v) * v;
        }
        grand_n += feats.data.size();
    }
    // stored features are normalized with the dataset statistics, so the
    // corpus-wide mean is ~0 and the variance ~1
    const double mean = grand_sum / static_cast<double>(grand_n);
    const double var = grand_sq / static_cast<double>(grand_n) - mean * mean;
    CHECK(std::abs(mean) < 1e-3);
    CHECK(std::abs(var - 1.0) < 1e-2);

    // byte-identical reproduction from the same seed
    build_dataset(cfg, 12, 2024, dir_b.path);
    CHECK(read_file(dir_a.path / "manifest.jsonl") == read_file(dir_b.path / "manifest.jsonl"));
    CHECK(read_file(dir_a.path / "dataset.json") == read_file(dir_b.path / "dataset.json"));
    CHECK(read_file(dir_a.path / manifest.records[0].wav) ==
          read_file(dir_b.path / manifest.records[0].wav));
    CHECK(read_file(dir_a.path / manifest.records[0].features) ==
          read_file(dir_b.path / manifest.records[0].features));

    CHECK_THROWS_AS(build_dataset(cfg, 0, 1, dir_a.path / "zero"), std::invalid_argument);
}
