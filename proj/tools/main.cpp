// Command-line surface for the pipeline: build captioned mixture datasets,
// train the conditional velocity model, sample feature sequences (and
// resynthesized audio) from captions, score a generated run against its
// reference, and verify every backward rule against finite differences.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
// Logs go to stderr; summaries to stdout; artifacts to files.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "soundflow/audio_io.hpp"
#include "soundflow/checkpoint.hpp"
#include "soundflow/config.hpp"
#include "soundflow/flow.hpp"
#include "soundflow/manifest.hpp"
#include "soundflow/metrics.hpp"
#include "soundflow/mixer.hpp"
#include "soundflow/model.hpp"
#include "soundflow/nld.hpp"
#include "soundflow/synth.hpp"
#include "soundflow/tensor.hpp"
#include "soundflow/training.hpp"

namespace {

using namespace soundflow;

// ---- shared flag handling ---------------------------------------------------

struct Common {
    CLI::App* sub = nullptr;
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
};

void add_common(CLI::App* sub, Common& c) {
    c.sub = sub;
    sub->add_option("--config", c.config, "key = value config file");
    sub->add_option("--seed", c.seed, "master random seed (overrides the config file)");
    sub->add_option("--out", c.out, "output directory (overrides the config file)");
}

RunConfig resolve_config(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
    if (c.sub->count("--seed") > 0) cfg.seed = c.seed;
    if (c.sub->count("--out") > 0) cfg.out = c.out;
    cfg.finalize();
    return cfg;
}

std::string trim(const std::string& s) {
    const std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// ---- mix --------------------------------------------------------------------

int run_mix(const Common& common, std::size_t n) {
    RunConfig cfg = resolve_config(common);
    if (n == 0) throw ConfigError("mix: --n must be positive");
    cfg.validate();

    const std::filesystem::path out_dir = cfg.out;
    Manifest manifest;
    if (cfg.pool == "synthetic") {
        manifest = build_dataset(cfg.mixer, n, cfg.seed, out_dir);
    } else {
        if (!std::filesystem::is_directory(cfg.pool))
            throw ConfigError("mix: pool directory not found: " + cfg.pool);
        const Pool pool = build_pool_from_dir(cfg.mixer, cfg.pool);
        manifest = build_dataset(pool, cfg.mixer, n, cfg.seed, out_dir);
    }

    std::size_t events = 0;
    std::map<std::string, std::size_t> by_class;
    std::map<Category, std::size_t> by_pitch, by_energy;
    for (const ManifestRecord& rec : manifest.records)
        for (const EventAnnotation& ev : rec.events) {
            ++events;
            ++by_class[ev.label];
            ++by_pitch[ev.pitch];
            ++by_energy[ev.energy];
        }

    std::cout << "wrote " << (out_dir / "manifest.jsonl").string() << "\n";
    std::cout << "items " << manifest.records.size() << "\n";
    std::cout << "events " << events << "\n";
    for (const auto& [name, count] : by_class) std::cout << "class " << name << " " << count << "\n";
    const auto category_line = [](const char* what, std::map<Category, std::size_t>& m) {
        std::cout << what << " Low " << m[Category::Low] << " Normal " << m[Category::Normal]
                  << " High " << m[Category::High] << "\n";
    };
    category_line("pitch", by_pitch);
    category_line("energy", by_energy);
    return 0;
}

// ---- train ------------------------------------------------------------------

int run_train(const Common& common, const std::string& data, int steps_override) {
    RunConfig cfg = resolve_config(common);
    if (common.sub->count("--steps") > 0) cfg.train.steps = steps_override;
    cfg.validate();

    const std::filesystem::path data_dir = data;
    const std::filesystem::path manifest_path = data_dir / "manifest.jsonl";
    if (!std::filesystem::exists(manifest_path))
        throw ConfigError("train: manifest not found at " + manifest_path.string());
    if (!std::filesystem::exists(data_dir / "dataset.json"))
        throw ConfigError("train: dataset.json not found at " +
                          (data_dir / "dataset.json").string());

    const TrainingData dataset = load_training_data(data_dir, cfg.train.crop_frames);
    const std::vector<std::string> vocab = build_vocabulary(dataset.meta.classes);

    ModelConfig expected = cfg.model;
    expected.vocab_size = static_cast<int>(vocab.size());

    const std::filesystem::path out_dir = cfg.out;
    const std::filesystem::path ckpt = out_dir / "model.acmp";

    std::optional<VelocityModel> model;
    AdamW optim;
    optim.lr = cfg.learning_rate;
    optim.weight_decay = cfg.weight_decay;
    if (std::filesystem::exists(ckpt)) {
        LoadedCheckpoint loaded = load_checkpoint(ckpt, &expected);
        if (loaded.schedule_name != cfg.schedule)
            throw ConfigError("train: checkpoint " + ckpt.string() +
                              " was trained with schedule '" + loaded.schedule_name +
                              "' but the config says '" + cfg.schedule + "'");
        if (!loaded.dataset_meta_json.empty() &&
            loaded.dataset_meta_json != dataset.meta_json)
            std::cerr << "warning: dataset context differs from the checkpoint's; "
                         "continuing with the current dataset\n";
        model.emplace(std::move(loaded.model));
        if (loaded.optimizer) {
            optim = std::move(*loaded.optimizer);
            optim.lr = cfg.learning_rate;
            optim.weight_decay = cfg.weight_decay;
        }
        std::cerr << "resuming " << ckpt.string() << " at step " << optim.step_count << "\n";
    } else {
        model.emplace(cfg.model, vocab, cfg.seed);
    }

    if (optim.step_count >= static_cast<std::uint64_t>(cfg.train.steps))
        std::cerr << "checkpoint already at step " << optim.step_count << " >= target "
                  << cfg.train.steps << "; nothing to train\n";

    std::filesystem::create_directories(out_dir);
    const Schedule schedule = Schedule::from_name(cfg.schedule);
    const double final_loss = run_training(*model, optim, dataset.items, schedule, cfg.train,
                                           dataset.meta_json, ckpt, std::cerr);
    std::cout << "checkpoint " << ckpt.string() << "\n";
    std::cout << "steps " << optim.step_count << " final_loss " << final_loss << "\n";
    return 0;
}

// ---- sample -----------------------------------------------------------------

// Per-class template resynthesis: each detection becomes a fresh synthetic
// event at the detected pitch/level, overlaid at the detected offset.
std::vector<double> render_detected(const std::vector<DetectedEvent>& detections,
                                    double duration_s, int sample_rate, Rng& rng) {
    std::vector<double> mix(
        static_cast<std::size_t>(std::lround(duration_s * sample_rate)), 0.0);
    for (const DetectedEvent& det : detections) {
        const EventClass* cls = find_event_class(det.annotation.label);
        if (cls == nullptr) continue;  // meta classes were registry-checked upstream
        const double dur =
            std::clamp(det.annotation.end_s - det.annotation.start_s, 0.3, 4.0);
        const double pitch = std::clamp(det.pitch_hz, cls->f_lo, cls->f_hi);
        const double gain = std::clamp(det.energy_db, -60.0, 0.0);
        const SourceClip clip = synth_event(cls->name, pitch, gain, dur, rng, sample_rate);
        const auto offset =
            static_cast<std::size_t>(std::lround(det.annotation.start_s * sample_rate));
        if (offset >= mix.size()) continue;
        if (offset + clip.samples.size() > mix.size())
            mix.resize(offset + clip.samples.size(), 0.0);
        for (std::size_t i = 0; i < clip.samples.size(); ++i) mix[offset + i] += clip.samples[i];
    }
    double peak = 0.0;
    for (double s : mix) peak = std::max(peak, std::abs(s));
    if (peak > 1.0) {
        const double g = std::pow(10.0, -1.0 / 20.0) / peak;  // settle at -1 dBFS
        for (double& s : mix) s *= g;
    }
    return mix;
}

int run_sample(const Common& common, const std::string& checkpoint,
               const std::string& captions_path, int steps_override, int frames_override) {
    RunConfig cfg = resolve_config(common);
    if (common.sub->count("--steps") > 0) cfg.sample_steps = steps_override;
    if (common.sub->count("--frames") > 0) cfg.sample_frames = frames_override;
    cfg.validate();

    if (!std::filesystem::exists(checkpoint))
        throw ConfigError("sample: checkpoint not found: " + checkpoint);
    if (!std::filesystem::exists(captions_path))
        throw ConfigError("sample: captions file not found: " + captions_path);

    const LoadedCheckpoint loaded = load_checkpoint(checkpoint);
    const VelocityModel& model = loaded.model;
    std::optional<DatasetMeta> meta;
    if (!loaded.dataset_meta_json.empty())
        meta = dataset_meta_from_json(loaded.dataset_meta_json);

    if (cfg.sample_frames > model.config().max_frames)
        throw ConfigError("sample: --frames " + std::to_string(cfg.sample_frames) +
                          " exceeds the checkpoint's max_frames " +
                          std::to_string(model.config().max_frames));

    // Caption lines: either the caption alone (ids are the line numbers) or
    // "id<TAB>caption" so generated records line up with a reference run.
    struct Item {
        std::string id;
        std::string caption;
        int frames = 0;
    };
    std::vector<Item> items;
    {
        std::ifstream in(captions_path);
        std::string line;
        std::size_t line_no = 0;
        std::set<std::string> seen;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string where = "sample: captions line " + std::to_string(line_no);
            Item item;
            const std::size_t tab = line.find('\t');
            if (tab != std::string::npos) {
                item.id = trim(line.substr(0, tab));
                item.caption = trim(line.substr(tab + 1));
                if (item.id.empty()) throw ConfigError(where + ": empty id before the tab");
            } else {
                char buf[16];
                std::snprintf(buf, sizeof(buf), "%06zu", items.size());
                item.id = buf;
                item.caption = trim(line);
            }
            if (item.caption.empty()) throw ConfigError(where + ": empty caption");
            if (!seen.insert(item.id).second)
                throw ConfigError(where + ": duplicate id '" + item.id + "'");
            try {
                const auto tokens = tokenize(item.caption, model.vocabulary());
                if (static_cast<int>(tokens.size()) > model.config().max_text_tokens)
                    throw std::invalid_argument(
                        "caption has " + std::to_string(tokens.size()) +
                        " tokens; the model accepts " +
                        std::to_string(model.config().max_text_tokens));
            } catch (const std::exception& e) {
                throw ConfigError(where + ": " + e.what());
            }
            items.push_back(std::move(item));
        }
    }
    if (items.empty()) throw ConfigError("sample: no captions in " + captions_path);

    const FeatureConfig& fcfg = cfg.mixer.features;
    const double fps =
        static_cast<double>(fcfg.sample_rate) / static_cast<double>(fcfg.hop);
    for (Item& item : items) {
        int frames = cfg.sample_frames;
        if (frames == 0) {
            // Derive from the caption's last event, with a little tail room;
            // captions that are not annotation-shaped get a 60-frame default.
            double end_s = 0.0;
            try {
                for (const EventAnnotation& ev : parse_nld(item.caption))
                    end_s = std::max(end_s, ev.end_s);
            } catch (const std::exception&) {
                end_s = 0.0;
            }
            frames = end_s > 0.0 ? static_cast<int>(std::lround(end_s * fps)) + 5 : 60;
            frames = std::clamp(frames, 25, model.config().max_frames);
        }
        item.frames = frames;
    }

    const std::filesystem::path out_dir = cfg.out;
    std::filesystem::create_directories(out_dir);

    Manifest manifest;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const Item& item = items[i];
        Rng rng(derive_seed(cfg.seed, i));
        const FeatureSequence feats =
            generate_features(model, item.caption, item.frames, cfg.sample_steps, rng);

        ManifestRecord rec;
        rec.id = item.id;
        rec.caption = item.caption;
        rec.features = item.id + ".acft";
        rec.duration_s = static_cast<double>(item.frames) / fps;
        write_features(out_dir / rec.features, feats);

        if (meta) {
            const std::vector<DetectedEvent> detections =
                detect_events_detailed(feats, *meta, fcfg);
            for (const DetectedEvent& det : detections) rec.events.push_back(det.annotation);
            rec.wav = item.id + ".wav";
            write_wav(out_dir / rec.wav,
                      render_detected(detections, rec.duration_s, fcfg.sample_rate, rng),
                      fcfg.sample_rate);
        }

        std::cerr << "sampled " << rec.id << " frames " << item.frames << " events "
                  << rec.events.size() << "\n";
        manifest.records.push_back(std::move(rec));
    }

    if (meta) write_dataset_meta(out_dir / "dataset.json", *meta);
    write_manifest(out_dir / "manifest.jsonl", manifest);
    std::cout << "wrote " << manifest.records.size() << " records to "
              << (out_dir / "manifest.jsonl").string() << "\n";
    return 0;
}

// ---- eval ---------------------------------------------------------------------

int run_eval(const Common& common, const std::string& ref, const std::string& gen) {
    RunConfig cfg = resolve_config(common);
    cfg.validate();
    for (const std::string& dir : {ref, gen}) {
        for (const char* name : {"manifest.jsonl", "dataset.json"}) {
            const std::filesystem::path p = std::filesystem::path(dir) / name;
            if (!std::filesystem::exists(p))
                throw ConfigError("eval: " + p.string() + " not found");
        }
    }

    EvalOptions opts;
    opts.features = cfg.mixer.features;
    const EvalReport report = evaluate_run(ref, gen, opts);

    const std::filesystem::path out_dir = cfg.out;
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path report_path = out_dir / "report.json";
    std::ofstream(report_path) << eval_report_to_json(report) << "\n";
    std::cerr << "wrote " << report_path.string() << "\n";
    std::cout << format_eval_table(report);
    return 0;
}

// ---- gradcheck ------------------------------------------------------------------

Tensor random_tensor(Rng& rng, Shape shape, bool requires_grad = true) {
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = rng.normal();
    return Tensor(std::move(shape), std::move(values), requires_grad);
}

// Scalar readout for shape-preserving ops: a fixed random weighting so the
// upstream gradient exercises every output coordinate differently.
Tensor weighted(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

struct OpCheck {
    std::string name;
    std::function<double(Rng&)> run;  // one seeded instance -> max relative error
};

std::vector<OpCheck> build_op_checks() {
    std::vector<OpCheck> checks;
    const auto unary = [](auto op, Shape shape) {
        return [op, shape](Rng& rng) {
            const Tensor x = random_tensor(rng, shape);
            const Tensor w = random_tensor(rng, shape, false);
            return grad_check([&](const Tensor& p) { return weighted(op(p), w); }, x);
        };
    };

    checks.push_back({"add", [](Rng& rng) {
                          const Tensor a = random_tensor(rng, {3, 4});
                          const Tensor b = random_tensor(rng, {3, 4});
                          const Tensor w = random_tensor(rng, {3, 4}, false);
                          const double ea = grad_check(
                              [&](const Tensor& p) { return weighted(add(p, b), w); }, a);
                          const double eb = grad_check(
                              [&](const Tensor& p) { return weighted(add(a, p), w); }, b);
                          return std::max(ea, eb);
                      }});
    checks.push_back({"add_bias_rows", [](Rng& rng) {
                          const Tensor a = random_tensor(rng, {3, 4});
                          const Tensor b = random_tensor(rng, {4});
                          const Tensor w = random_tensor(rng, {3, 4}, false);
                          const double ea = grad_check(
                              [&](const Tensor& p) { return weighted(add(p, b), w); }, a);
                          const double eb = grad_check(
                              [&](const Tensor& p) { return weighted(add(a, p), w); }, b);
                          return std::max(ea, eb);
                      }});
    checks.push_back({"sub", [](Rng& rng) {
                          const Tensor a = random_tensor(rng, {3, 4});
                          const Tensor b = random_tensor(rng, {3, 4});
                          const Tensor w = random_tensor(rng, {3, 4}, false);
                          const double ea = grad_check(
                              [&](const Tensor& p) { return weighted(sub(p, b), w); }, a);
                          const double eb = grad_check(
                              [&](const Tensor& p) { return weighted(sub(a, p), w); }, b);
                          return std::max(ea, eb);
                      }});
    checks.push_back({"mul", [](Rng& rng) {
                          const Tensor a = random_tensor(rng, {3, 4});
                          const Tensor b = random_tensor(rng, {3, 4});
                          const Tensor w = random_tensor(rng, {3, 4}, false);
                          const double ea = grad_check(
                              [&](const Tensor& p) { return weighted(mul(p, b), w); }, a);
                          const double eb = grad_check(
                              [&](const Tensor& p) { return weighted(mul(a, p), w); }, b);
                          return std::max(ea, eb);
                      }});
    checks.push_back({"scale", [](Rng& rng) {
                          const double s = rng.uniform(-2.0, 2.0);
                          const Tensor x = random_tensor(rng, {3, 4});
                          const Tensor w = random_tensor(rng, {3, 4}, false);
                          return grad_check(
                              [&](const Tensor& p) { return weighted(scale(p, s), w); }, x);
                      }});
    checks.push_back({"scale_by", [](Rng& rng) {
                          const Tensor x = random_tensor(rng, {3, 4});
                          const Tensor s = random_tensor(rng, {1});
                          const Tensor w = random_tensor(rng, {3, 4}, false);
                          const double ex = grad_check(
                              [&](const Tensor& p) { return weighted(scale_by(p, s), w); }, x);
                          const double es = grad_check(
                              [&](const Tensor& p) { return weighted(scale_by(x, p), w); }, s);
                          return std::max(ex, es);
                      }});
    checks.push_back({"matmul", [](Rng& rng) {
                          const Tensor a = random_tensor(rng, {3, 4});
                          const Tensor b = random_tensor(rng, {4, 2});
                          const Tensor w = random_tensor(rng, {3, 2}, false);
                          const double ea = grad_check(
                              [&](const Tensor& p) { return weighted(matmul(p, b), w); }, a);
                          const double eb = grad_check(
                              [&](const Tensor& p) { return weighted(matmul(a, p), w); }, b);
                          return std::max(ea, eb);
                      }});
    checks.push_back({"matmul_batched", [](Rng& rng) {
                          const Tensor a = random_tensor(rng, {2, 3, 4});
                          const Tensor b = random_tensor(rng, {2, 4, 2});
                          const Tensor w = random_tensor(rng, {2, 3, 2}, false);
                          const double ea = grad_check(
                              [&](const Tensor& p) { return weighted(matmul(p, b), w); }, a);
                          const double eb = grad_check(
                              [&](const Tensor& p) { return weighted(matmul(a, p), w); }, b);
                          return std::max(ea, eb);
                      }});
    checks.push_back(
        {"softmax", [unary](Rng& rng) {
             return unary([](const Tensor& p) { return softmax(p); }, Shape{3, 5})(rng);
         }});
    checks.push_back({"layer_norm", [](Rng& rng) {
                          const Tensor x = random_tensor(rng, {4, 6});
                          const Tensor g = random_tensor(rng, {6});
                          const Tensor b = random_tensor(rng, {6});
                          const Tensor w = random_tensor(rng, {4, 6}, false);
                          const double ex = grad_check(
                              [&](const Tensor& p) { return weighted(layer_norm(p, g, b), w); },
                              x);
                          const double eg = grad_check(
                              [&](const Tensor& p) { return weighted(layer_norm(x, p, b), w); },
                              g);
                          const double eb = grad_check(
                              [&](const Tensor& p) { return weighted(layer_norm(x, g, p), w); },
                              b);
                          return std::max({ex, eg, eb});
                      }});
    checks.push_back({"tanh", [unary](Rng& rng) {
                          return unary([](const Tensor& p) { return tanh(p); }, Shape{3, 4})(rng);
                      }});
    checks.push_back({"silu", [unary](Rng& rng) {
                          return unary([](const Tensor& p) { return silu(p); }, Shape{3, 4})(rng);
                      }});
    checks.push_back({"sum", [](Rng& rng) {
                          const Tensor x = random_tensor(rng, {3, 4});
                          return grad_check([](const Tensor& p) { return sum(p); }, x);
                      }});
    checks.push_back({"mean_axis", [](Rng& rng) {
                          const std::size_t axis = rng.uniform_int(0, 1);
                          const Tensor x = random_tensor(rng, {3, 4});
                          const Tensor w = random_tensor(rng, {axis == 0 ? 4u : 3u}, false);
                          return grad_check(
                              [&](const Tensor& p) { return weighted(mean_axis(p, axis), w); },
                              x);
                      }});
    checks.push_back({"mse", [](Rng& rng) {
                          const Tensor a = random_tensor(rng, {3, 4});
                          const Tensor b = random_tensor(rng, {3, 4});
                          const double ea =
                              grad_check([&](const Tensor& p) { return mse(p, b); }, a);
                          const double eb =
                              grad_check([&](const Tensor& p) { return mse(a, p); }, b);
                          return std::max(ea, eb);
                      }});
    checks.push_back({"reshape", [](Rng& rng) {
                          const Tensor x = random_tensor(rng, {3, 4});
                          const Tensor w = random_tensor(rng, {2, 6}, false);
                          return grad_check(
                              [&](const Tensor& p) { return weighted(reshape(p, {2, 6}), w); },
                              x);
                      }});
    checks.push_back({"transpose", [](Rng& rng) {
                          const Tensor x = random_tensor(rng, {3, 4});
                          const Tensor w = random_tensor(rng, {4, 3}, false);
                          return grad_check(
                              [&](const Tensor& p) { return weighted(transpose(p), w); }, x);
                      }});
    checks.push_back({"permute", [](Rng& rng) {
                          const std::vector<std::size_t> axes =
                              rng.uniform01() < 0.5 ? std::vector<std::size_t>{1, 2, 0}
                                                    : std::vector<std::size_t>{2, 0, 1};
                          const Tensor x = random_tensor(rng, {2, 3, 4});
                          Shape out_shape(3);
                          for (std::size_t i = 0; i < 3; ++i)
                              out_shape[i] = x.shape()[axes[i]];
                          const Tensor w = random_tensor(rng, out_shape, false);
                          return grad_check(
                              [&](const Tensor& p) { return weighted(permute(p, axes), w); }, x);
                      }});
    checks.push_back({"concat", [](Rng& rng) {
                          const std::size_t axis = rng.uniform_int(0, 1);
                          const Shape sa{2, 3};
                          const Shape sb = axis == 0 ? Shape{1, 3} : Shape{2, 2};
                          const Shape so = axis == 0 ? Shape{3, 3} : Shape{2, 5};
                          const Tensor a = random_tensor(rng, sa);
                          const Tensor b = random_tensor(rng, sb);
                          const Tensor w = random_tensor(rng, so, false);
                          const double ea = grad_check(
                              [&](const Tensor& p) { return weighted(concat({p, b}, axis), w); },
                              a);
                          const double eb = grad_check(
                              [&](const Tensor& p) { return weighted(concat({a, p}, axis), w); },
                              b);
                          return std::max(ea, eb);
                      }});
    checks.push_back({"embedding", [](Rng& rng) {
                          const Tensor table = random_tensor(rng, {7, 5});
                          // a repeated id exercises gradient accumulation
                          const std::vector<std::size_t> ids{0, 3, 3, 6, 1};
                          const Tensor w = random_tensor(rng, {5, 5}, false);
                          return grad_check(
                              [&](const Tensor& p) { return weighted(embedding(p, ids), w); },
                              table);
                      }});
    checks.push_back({"broadcast_rows", [](Rng& rng) {
                          const Tensor v = random_tensor(rng, {6});
                          const Tensor w = random_tensor(rng, {4, 6}, false);
                          return grad_check(
                              [&](const Tensor& p) { return weighted(broadcast_rows(p, 4), w); },
                              v);
                      }});
    checks.push_back({"rope", [](Rng& rng) {
                          const std::vector<double> positions{0.0, 1.0, 2.0, 3.0};
                          const bool headed = rng.uniform01() < 0.5;
                          const Shape shape = headed ? Shape{4, 2, 6} : Shape{4, 6};
                          const Tensor x = random_tensor(rng, shape);
                          const Tensor w = random_tensor(rng, shape, false);
                          return grad_check(
                              [&](const Tensor& p) { return weighted(rope(p, positions), w); },
                              x);
                      }});
    return checks;
}

// One end-to-end instance: the full training loss (interpolate, velocity
// network, regression target, mean squared error) on a tiny model, checked
// against finite differences parameter by parameter.
double e2e_instance(std::uint64_t seed, int index) {
    Rng rng(derive_seed(seed, 9000 + static_cast<std::uint64_t>(index)));
    ModelConfig mc;
    mc.num_blocks = 1;
    mc.hidden_dim = 4;
    mc.num_heads = 2;
    mc.feature_channels = 2;
    mc.max_frames = 6;
    mc.max_text_tokens = 24;
    mc.time_embed_dim = 4;
    VelocityModel model(mc, build_vocabulary({"Hum"}), derive_seed(seed, index));
    // Nudge every parameter off its init point: the zero-initialized gates,
    // modulation maps, and output head would otherwise leave most of the
    // network without gradient, and the check would only see the head.
    for (auto& [name, param] : model.parameters())
        for (double& v : param.mutable_values()) v += 0.2 * rng.normal();

    const Schedule schedule = index % 2 == 0 ? Schedule::linear() : Schedule::cosine();
    const double t = rng.uniform(0.05, 0.95);
    const Tensor x = random_tensor(rng, {4, 2}, false);
    const Tensor eps = random_tensor(rng, {4, 2}, false);
    const std::string caption =
        "Hum, Start at 0.1s and End at 0.4s, it has Low Pitch and High Energy.";

    const auto loss_fn = [&]() {
        const Tensor z_t = interpolate(x, eps, t, schedule);
        const Tensor u = target_velocity(x, eps, t, schedule);
        const Tensor v = model.forward_velocity(z_t, t, caption);
        return cfm_loss(v, u);
    };

    // A finer step than the per-op checks: the full network stacks enough
    // curvature that 1e-3 leaves the truncation error near the tolerance.
    constexpr double kStep = 1e-4;
    double worst = 0.0;
    for (const auto& [name, param] : model.parameters()) {
        const auto f = [&, name = name](const Tensor& p) {
            Tensor& slot = model.parameters().at(name);
            const Tensor saved = slot;
            slot = p;
            const Tensor loss = loss_fn();
            slot = saved;
            return loss;
        };
        worst = std::max(worst, grad_check(f, param, kStep));
    }
    return worst;
}

int run_gradcheck(const Common& common, bool corrupt_tanh) {
    RunConfig cfg = resolve_config(common);
    cfg.validate();
    detail::corrupt_tanh_backward = corrupt_tanh;
    if (corrupt_tanh) std::cerr << "tanh backward rule deliberately corrupted\n";

    constexpr double kTolerance = 1e-4;
    constexpr int kSeedsPerOp = 4;
    constexpr int kEndToEnd = 16;

    bool all_pass = true;
    int instances = 0;
    double overall = 0.0;
    const auto row = [&](const std::string& name, int count, double err) {
        const bool pass = err < kTolerance;
        all_pass = all_pass && pass;
        instances += count;
        overall = std::max(overall, err);
        char line[128];
        std::snprintf(line, sizeof(line), "%-22s instances %-3d max_rel_err %.3e  %s",
                      name.c_str(), count, err, pass ? "PASS" : "FAIL");
        std::cout << line << "\n";
    };

    const std::vector<OpCheck> checks = build_op_checks();
    for (std::size_t op = 0; op < checks.size(); ++op) {
        double err = 0.0;
        for (int k = 0; k < kSeedsPerOp; ++k) {
            Rng rng(derive_seed(cfg.seed, 100 * (op + 1) + static_cast<std::uint64_t>(k)));
            err = std::max(err, checks[op].run(rng));
        }
        row("op " + checks[op].name, kSeedsPerOp, err);
    }

    double e2e_err = 0.0;
    for (int k = 0; k < kEndToEnd; ++k) e2e_err = std::max(e2e_err, e2e_instance(cfg.seed, k));
    row("end_to_end cfm_loss", kEndToEnd, e2e_err);

    std::cout << "gradcheck: " << instances << " instances, max relative error " << overall
              << ", tolerance " << kTolerance << ": " << (all_pass ? "PASS" : "FAIL") << "\n";
    if (!all_pass) throw std::runtime_error("gradcheck failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "soundflow: simulate captioned sound mixtures, train a flow-matching velocity "
        "model, sample from captions, and score timestamp/pitch/energy control"};
    app.require_subcommand(1);

    Common mix_common, train_common, sample_common, eval_common, grad_common;

    CLI::App* mix = app.add_subcommand("mix", "build an annotated mixture dataset");
    add_common(mix, mix_common);
    std::size_t mix_n = 100;
    mix->add_option("--n", mix_n, "number of mixtures to simulate");

    CLI::App* train = app.add_subcommand("train", "train the velocity model on a dataset");
    add_common(train, train_common);
    std::string train_data;
    int train_steps = 0;
    train->add_option("--data", train_data, "dataset directory (from `mix`)")->required();
    train->add_option("--steps", train_steps, "total optimizer steps (overrides the config)");

    CLI::App* sample = app.add_subcommand("sample", "generate feature sequences from captions");
    add_common(sample, sample_common);
    std::string sample_checkpoint, sample_captions;
    int sample_steps = 0, sample_frames = 0;
    sample->add_option("--checkpoint", sample_checkpoint, "trained model file")->required();
    sample->add_option("--captions", sample_captions,
                       "text file, one caption (or id<TAB>caption) per line")
        ->required();
    sample->add_option("--steps", sample_steps, "ODE integration steps (overrides the config)");
    sample->add_option("--frames", sample_frames,
                       "frames per clip (overrides the config; 0 derives from the caption)");

    CLI::App* eval = app.add_subcommand("eval", "score a generated run against its reference");
    add_common(eval, eval_common);
    std::string eval_ref, eval_gen;
    eval->add_option("--ref", eval_ref, "reference dataset directory")->required();
    eval->add_option("--gen", eval_gen, "generated dataset directory")->required();

    CLI::App* grad = app.add_subcommand("gradcheck",
                                        "verify every backward rule against finite differences");
    add_common(grad, grad_common);
    bool corrupt_tanh = false;
    grad->add_flag("--corrupt-tanh", corrupt_tanh)->group("");  // test hook, hidden

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the usage error
        return code == 0 ? 0 : 1;
    }

    try {
        if (*mix) return run_mix(mix_common, mix_n);
        if (*train) return run_train(train_common, train_data, train_steps);
        if (*sample)
            return run_sample(sample_common, sample_checkpoint, sample_captions, sample_steps,
                              sample_frames);
        if (*eval) return run_eval(eval_common, eval_ref, eval_gen);
        if (*grad) return run_gradcheck(grad_common, corrupt_tanh);
        std::cerr << "no command given\n";
        return 1;
    } catch (const soundflow::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
