#include "soundflow/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "soundflow/flow.hpp"

namespace soundflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

long long parse_ll(const std::string& key, const std::string& value, long long lo,
                   long long hi) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        if (v < lo || v > hi)
            fail("config: " + key + " = " + value + " is outside [" + std::to_string(lo) +
                 ", " + std::to_string(hi) + "]");
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        fail("config: " + key + " wants an integer, got '" + value + "'");
    }
}

int parse_int(const std::string& key, const std::string& value) {
    return static_cast<int>(parse_ll(key, value, std::numeric_limits<int>::min(),
                                     std::numeric_limits<int>::max()));
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size() || value.find('-') != std::string::npos)
            throw std::invalid_argument("not a plain unsigned integer");
        return v;
    } catch (const std::exception&) {
        fail("config: " + key + " wants an unsigned integer, got '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        if (!std::isfinite(v)) throw std::invalid_argument("not finite");
        return v;
    } catch (const std::exception&) {
        fail("config: " + key + " wants a finite number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    fail("config: " + key + " wants true/false, got '" + value + "'");
}

std::vector<std::string> parse_list(const std::string& key, const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) fail("config: " + key + " has an empty list entry");
        out.push_back(item);
    }
    return out;
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "schedule") cfg.schedule = value;
    else if (key == "pool") cfg.pool = value;
    else if (key == "out") cfg.out = value;
    else if (key == "sample.steps") cfg.sample_steps = parse_int(key, value);
    else if (key == "sample.frames") cfg.sample_frames = parse_int(key, value);
    else if (key == "model.num_blocks") cfg.model.num_blocks = parse_int(key, value);
    else if (key == "model.hidden_dim") cfg.model.hidden_dim = parse_int(key, value);
    else if (key == "model.num_heads") cfg.model.num_heads = parse_int(key, value);
    else if (key == "model.feature_channels") cfg.model.feature_channels = parse_int(key, value);
    else if (key == "model.max_frames") cfg.model.max_frames = parse_int(key, value);
    else if (key == "model.max_text_tokens") cfg.model.max_text_tokens = parse_int(key, value);
    else if (key == "model.time_embed_dim") cfg.model.time_embed_dim = parse_int(key, value);
    else if (key == "mixer.sample_rate") cfg.mixer.sample_rate = parse_int(key, value);
    else if (key == "mixer.min_events") cfg.mixer.min_events = parse_int(key, value);
    else if (key == "mixer.max_events") cfg.mixer.max_events = parse_int(key, value);
    else if (key == "mixer.duration_budget_s")
        cfg.mixer.duration_budget_s = parse_double(key, value);
    else if (key == "mixer.min_mixture_s") cfg.mixer.min_mixture_s = parse_double(key, value);
    else if (key == "mixer.min_event_s") cfg.mixer.min_event_s = parse_double(key, value);
    else if (key == "mixer.max_event_s") cfg.mixer.max_event_s = parse_double(key, value);
    else if (key == "mixer.allow_overlap") cfg.mixer.allow_overlap = parse_bool(key, value);
    else if (key == "mixer.retry_cap") cfg.mixer.retry_cap = parse_int(key, value);
    else if (key == "mixer.clips_per_class")
        cfg.mixer.clips_per_class =
            static_cast<std::size_t>(parse_ll(key, value, 1, 1'000'000));
    else if (key == "mixer.classes") cfg.mixer.classes = parse_list(key, value);
    else if (key == "train.batch_size") cfg.train.batch_size = parse_int(key, value);
    else if (key == "train.steps") cfg.train.steps = parse_int(key, value);
    else if (key == "train.crop_frames") cfg.train.crop_frames = parse_int(key, value);
    else if (key == "train.log_every") cfg.train.log_every = parse_int(key, value);
    else if (key == "train.checkpoint_every") cfg.train.checkpoint_every = parse_int(key, value);
    else if (key == "train.learning_rate") cfg.learning_rate = parse_double(key, value);
    else if (key == "train.weight_decay") cfg.weight_decay = parse_double(key, value);
    else fail("config: unknown key '" + key + "'");
}

RunConfig parse_run_config(std::istream& in) {
    RunConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = trim(line);
        if (text.empty() || text[0] == '#') continue;
        const std::size_t eq = text.find('=');
        if (eq == std::string::npos)
            fail("config line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                 text + "'");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (key.empty())
            fail("config line " + std::to_string(line_no) + ": missing key before '='");
        try {
            apply_config_entry(cfg, key, value);
        } catch (const ConfigError& e) {
            fail("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    cfg.finalize();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail("config file not found: " + path.string());
    return parse_run_config(in);
}

void RunConfig::finalize() {
    train.seed = seed;
    mixer.features.sample_rate = mixer.sample_rate;
}

void RunConfig::validate() const {
    try {
        // vocab_size 0 is "adopt the vocabulary handed in" — resolved when a
        // model is built, so probe the rest of the config with a stand-in.
        ModelConfig probe = model;
        if (probe.vocab_size == 0) probe.vocab_size = 1;
        probe.validate();
        validate_mixer_config(mixer);
        Schedule::from_name(schedule);
    } catch (const std::exception& e) {
        fail(std::string("config: ") + e.what());
    }
    if (sample_steps < 1) fail("config: sample.steps must be at least 1");
    if (sample_frames < 0) fail("config: sample.frames must be non-negative");
    if (sample_frames > model.max_frames)
        fail("config: sample.frames " + std::to_string(sample_frames) +
             " exceeds model.max_frames " + std::to_string(model.max_frames));
    if (pool.empty()) fail("config: pool must name a directory or 'synthetic'");
    if (out.empty()) fail("config: out must name a directory");
    if (!(learning_rate > 0.0)) fail("config: train.learning_rate must be positive");
    if (weight_decay < 0.0) fail("config: train.weight_decay must be non-negative");
    if (train.batch_size < 1) fail("config: train.batch_size must be at least 1");
    if (train.steps < 1) fail("config: train.steps must be at least 1");
    if (train.crop_frames < 1) fail("config: train.crop_frames must be at least 1");
    if (train.crop_frames > model.max_frames)
        fail("config: train.crop_frames " + std::to_string(train.crop_frames) +
             " exceeds model.max_frames " + std::to_string(model.max_frames));
    if (train.log_every < 1) fail("config: train.log_every must be at least 1");
    if (train.checkpoint_every < 0) fail("config: train.checkpoint_every must be non-negative");
    if (train.seed != seed)
        fail("config: training seed diverged from the run seed; call finalize()");
    if (mixer.features.sample_rate != mixer.sample_rate)
        fail("config: feature sample rate diverged from the mixer's; call finalize()");
}

}  // namespace soundflow
