#include "soundflow/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace soundflow {

namespace {

constexpr char kMagic[4] = {'A', 'C', 'M', 'P'};

[[noreturn]] void corrupt(const std::string& why) {
    throw std::runtime_error("checkpoint: " + why);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) corrupt(std::string("truncated at ") + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in, const char* what) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) corrupt(std::string("truncated at ") + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in, const char* what) {
    return std::bit_cast<double>(get_u64(in, what));
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        corrupt("key " + key + " has non-integer value \"" + value + "\"");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        corrupt("key " + key + " has non-numeric value \"" + value + "\"");
    }
}

void write_record(std::ostream& out, const std::string& name, const Shape& shape,
                  const std::vector<double>& values) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t dim : shape) put_u64(out, dim);
    for (double v : values) put_f64(out, v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const VelocityModel& model,
                     const std::string& schedule_name, const std::string& dataset_meta_json,
                     const AdamW* optimizer) {
    if (dataset_meta_json.find('\n') != std::string::npos)
        throw std::invalid_argument("save_checkpoint: dataset meta must be single-line JSON");

    const ModelConfig& cfg = model.config();
    std::ostringstream kv;
    kv << "model.num_blocks=" << cfg.num_blocks << '\n'
       << "model.hidden_dim=" << cfg.hidden_dim << '\n'
       << "model.num_heads=" << cfg.num_heads << '\n'
       << "model.feature_channels=" << cfg.feature_channels << '\n'
       << "model.vocab_size=" << cfg.vocab_size << '\n'
       << "model.max_frames=" << cfg.max_frames << '\n'
       << "model.max_text_tokens=" << cfg.max_text_tokens << '\n'
       << "model.time_embed_dim=" << cfg.time_embed_dim << '\n'
       << "schedule=" << schedule_name << '\n';
    kv << "vocab=";
    for (std::size_t i = 0; i < model.vocabulary().size(); ++i) {
        if (i) kv << ' ';
        kv << model.vocabulary()[i];
    }
    kv << '\n';
    if (!dataset_meta_json.empty()) kv << "dataset_meta=" << dataset_meta_json << '\n';
    if (optimizer != nullptr) {
        kv << "optim.step_count=" << optimizer->step_count << '\n'
           << "optim.lr=" << format_double(optimizer->lr) << '\n'
           << "optim.beta1=" << format_double(optimizer->beta1) << '\n'
           << "optim.beta2=" << format_double(optimizer->beta2) << '\n'
           << "optim.eps=" << format_double(optimizer->eps) << '\n'
           << "optim.weight_decay=" << format_double(optimizer->weight_decay) << '\n';
    }
    const std::string kv_block = kv.str();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    out.write(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(kv_block.size()));
    out.write(kv_block.data(), static_cast<std::streamsize>(kv_block.size()));

    std::size_t records = model.parameters().size();
    if (optimizer != nullptr) records += optimizer->m.size() + optimizer->v.size();
    put_u32(out, static_cast<std::uint32_t>(records));

    for (const auto& [name, tensor] : model.parameters())
        write_record(out, name, tensor.shape(), tensor.values());
    if (optimizer != nullptr) {
        for (const auto& [name, moments] : optimizer->m)
            write_record(out, "optim.m." + name, {moments.size()}, moments);
        for (const auto& [name, moments] : optimizer->v)
            write_record(out, "optim.v." + name, {moments.size()}, moments);
    }
    if (!out) throw std::runtime_error("save_checkpoint: write to " + path.string() + " failed");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) corrupt("cannot open " + path.string());

    char magic[4];
    if (!in.read(magic, 4)) corrupt("truncated at magic");
    if (std::string(magic, 4) != std::string(kMagic, 4))
        corrupt("bad magic; not a checkpoint file");
    const std::uint32_t version = get_u32(in, "version");
    if (version != kCheckpointVersion)
        corrupt("format version " + std::to_string(version) + " unsupported (expected " +
                std::to_string(kCheckpointVersion) + ")");

    const std::uint32_t kv_len = get_u32(in, "config length");
    std::string kv_block(kv_len, '\0');
    if (!in.read(kv_block.data(), kv_len)) corrupt("truncated inside the config block");

    std::map<std::string, std::string> kv;
    std::istringstream lines(kv_block);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) corrupt("config line without '=': \"" + line + "\"");
        if (!kv.emplace(line.substr(0, eq), line.substr(eq + 1)).second)
            corrupt("duplicate config key " + line.substr(0, eq));
    }
    auto require = [&kv](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) corrupt("config key " + key + " missing");
        return it->second;
    };

    ModelConfig cfg;
    cfg.num_blocks = parse_int("model.num_blocks", require("model.num_blocks"));
    cfg.hidden_dim = parse_int("model.hidden_dim", require("model.hidden_dim"));
    cfg.num_heads = parse_int("model.num_heads", require("model.num_heads"));
    cfg.feature_channels = parse_int("model.feature_channels", require("model.feature_channels"));
    cfg.vocab_size = parse_int("model.vocab_size", require("model.vocab_size"));
    cfg.max_frames = parse_int("model.max_frames", require("model.max_frames"));
    cfg.max_text_tokens = parse_int("model.max_text_tokens", require("model.max_text_tokens"));
    cfg.time_embed_dim = parse_int("model.time_embed_dim", require("model.time_embed_dim"));

    if (expected != nullptr) {
        auto check = [](const char* field, int have, int want) {
            if (have != want)
                corrupt(std::string("config mismatch on ") + field + ": checkpoint has " +
                        std::to_string(have) + ", expected " + std::to_string(want));
        };
        check("num_blocks", cfg.num_blocks, expected->num_blocks);
        check("hidden_dim", cfg.hidden_dim, expected->hidden_dim);
        check("num_heads", cfg.num_heads, expected->num_heads);
        check("feature_channels", cfg.feature_channels, expected->feature_channels);
        if (expected->vocab_size != 0) check("vocab_size", cfg.vocab_size, expected->vocab_size);
        check("max_frames", cfg.max_frames, expected->max_frames);
        check("max_text_tokens", cfg.max_text_tokens, expected->max_text_tokens);
        check("time_embed_dim", cfg.time_embed_dim, expected->time_embed_dim);
    }

    std::vector<std::string> vocab;
    {
        std::istringstream words(require("vocab"));
        std::string word;
        while (words >> word) vocab.push_back(word);
    }

    LoadedCheckpoint loaded{VelocityModel(cfg, vocab, 0), require("schedule"), "", std::nullopt};
    if (const auto it = kv.find("dataset_meta"); it != kv.end())
        loaded.dataset_meta_json = it->second;
    if (kv.count("optim.step_count") != 0) {
        AdamW optim;
        optim.step_count =
            static_cast<std::uint64_t>(parse_double("optim.step_count", require("optim.step_count")));
        optim.lr = parse_double("optim.lr", require("optim.lr"));
        optim.beta1 = parse_double("optim.beta1", require("optim.beta1"));
        optim.beta2 = parse_double("optim.beta2", require("optim.beta2"));
        optim.eps = parse_double("optim.eps", require("optim.eps"));
        optim.weight_decay = parse_double("optim.weight_decay", require("optim.weight_decay"));
        loaded.optimizer = std::move(optim);
    }

    auto& params = loaded.model.parameters();
    std::set<std::string> missing;
    for (const auto& [name, tensor] : params) missing.insert(name);

    const std::uint32_t records = get_u32(in, "record count");
    for (std::uint32_t r = 0; r < records; ++r) {
        const std::uint32_t name_len = get_u32(in, "record name length");
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) corrupt("truncated inside a record name");
        const std::uint32_t rank = get_u32(in, "record rank");
        Shape shape(rank);
        std::size_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape[i] = static_cast<std::size_t>(get_u64(in, "record shape"));
            count *= shape[i];
        }
        std::vector<double> values(count);
        for (double& value : values) value = get_f64(in, name.c_str());

        if (name.rfind("optim.m.", 0) == 0 || name.rfind("optim.v.", 0) == 0) {
            const bool first = name[6] == 'm';
            const std::string target = name.substr(8);
            const auto it = params.find(target);
            if (it == params.end()) corrupt("optimizer record for unknown parameter " + target);
            if (count != it->second.size())
                corrupt("optimizer record " + name + " has " + std::to_string(count) +
                        " values, parameter has " + std::to_string(it->second.size()));
            if (!loaded.optimizer)
                corrupt("optimizer record " + name + " without optimizer config keys");
            (first ? loaded.optimizer->m : loaded.optimizer->v)[target] = std::move(values);
            continue;
        }

        const auto it = params.find(name);
        if (it == params.end()) corrupt("unknown parameter record " + name);
        if (it->second.shape() != shape)
            corrupt("parameter " + name + " has shape " + shape_str(shape) +
                    " in the file but the config implies " + shape_str(it->second.shape()));
        if (missing.erase(name) == 0) corrupt("duplicate parameter record " + name);
        it->second.mutable_values() = std::move(values);
    }
    if (!missing.empty()) corrupt("parameter " + *missing.begin() + " missing from the file");
    return loaded;
}

}  // namespace soundflow
