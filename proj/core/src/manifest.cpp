#include "soundflow/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace soundflow {

namespace {

using nlohmann::json;

json event_to_json(const EventAnnotation& e) {
    return json{{"label", e.label},
                {"start_s", e.start_s},
                {"end_s", e.end_s},
                {"pitch", category_name(e.pitch)},
                {"energy", category_name(e.energy)}};
}

EventAnnotation event_from_json(const json& j) {
    EventAnnotation e;
    e.label = j.at("label").get<std::string>();
    e.start_s = j.at("start_s").get<double>();
    e.end_s = j.at("end_s").get<double>();
    e.pitch = category_from_name(j.at("pitch").get<std::string>());
    e.energy = category_from_name(j.at("energy").get<std::string>());
    return e;
}

json thresholds_to_json(const CategoryThresholds& t) {
    return json{{"q25", t.q25}, {"q50", t.q50}, {"q75", t.q75}};
}

CategoryThresholds thresholds_from_json(const json& j) {
    return CategoryThresholds{j.at("q25").get<double>(), j.at("q50").get<double>(),
                              j.at("q75").get<double>()};
}

json meta_to_json_obj(const DatasetMeta& meta) {
    json calib = json::object();
    for (const auto& [cls, c] : meta.calibration)
        calib[cls] = json{{"pitch_offset", c.pitch_offset}, {"energy_offset", c.energy_offset}};
    return json{{"sample_rate", meta.sample_rate},
                {"feature_mean", meta.stats.mean},
                {"feature_std", meta.stats.std_dev},
                {"pitch_thresholds", thresholds_to_json(meta.pitch_thresholds)},
                {"energy_thresholds", thresholds_to_json(meta.energy_thresholds)},
                {"calibration", calib},
                {"classes", meta.classes}};
}

DatasetMeta meta_from_json_obj(const json& j) {
    DatasetMeta meta;
    meta.sample_rate = j.at("sample_rate").get<int>();
    meta.stats.mean = j.at("feature_mean").get<std::vector<double>>();
    meta.stats.std_dev = j.at("feature_std").get<std::vector<double>>();
    meta.pitch_thresholds = thresholds_from_json(j.at("pitch_thresholds"));
    meta.energy_thresholds = thresholds_from_json(j.at("energy_thresholds"));
    for (const auto& [cls, c] : j.at("calibration").items())
        meta.calibration[cls] = ClassCalibration{c.at("pitch_offset").get<double>(),
                                                 c.at("energy_offset").get<double>()};
    meta.classes = j.at("classes").get<std::vector<std::string>>();
    return meta;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_manifest: cannot open " + path.string());
    for (const ManifestRecord& r : m.records) {
        json events = json::array();
        for (const EventAnnotation& e : r.events) events.push_back(event_to_json(e));
        const json line{{"id", r.id},       {"wav", r.wav},
                        {"features", r.features}, {"duration_s", r.duration_s},
                        {"events", events}, {"caption", r.caption}};
        f << line.dump() << '\n';
    }
    if (!f) throw std::runtime_error("write_manifest: short write to " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_manifest: cannot open " + path.string());
    Manifest m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("read_manifest: " + path.string() + " line " +
                                     std::to_string(line_no) + ": " + e.what());
        }
        ManifestRecord r;
        r.id = j.at("id").get<std::string>();
        r.wav = j.at("wav").get<std::string>();
        r.features = j.at("features").get<std::string>();
        r.duration_s = j.at("duration_s").get<double>();
        for (const json& e : j.at("events")) r.events.push_back(event_from_json(e));
        r.caption = j.at("caption").get<std::string>();
        m.records.push_back(std::move(r));
    }
    return m;
}

std::string dataset_meta_to_json(const DatasetMeta& meta) {
    // single-line so the string can ride along in line-oriented containers
    return meta_to_json_obj(meta).dump();
}

DatasetMeta dataset_meta_from_json(const std::string& text) {
    try {
        return meta_from_json_obj(json::parse(text));
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("dataset meta: malformed JSON: ") + e.what());
    }
}

void write_dataset_meta(const std::filesystem::path& path, const DatasetMeta& meta) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_dataset_meta: cannot open " + path.string());
    f << dataset_meta_to_json(meta) << '\n';
    if (!f) throw std::runtime_error("write_dataset_meta: short write to " + path.string());
}

DatasetMeta read_dataset_meta(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_dataset_meta: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return dataset_meta_from_json(text);
}

}  // namespace soundflow
