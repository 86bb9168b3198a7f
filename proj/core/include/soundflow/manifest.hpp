#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "soundflow/analysis.hpp"
#include "soundflow/features.hpp"
#include "soundflow/nld.hpp"

namespace soundflow {

// One dataset item. Paths are stored as written (normally relative to the
// manifest's directory).
struct ManifestRecord {
    std::string id;
    std::string wav;       // waveform file, may be empty for feature-only items
    std::string features;  // feature file
    double duration_s = 0.0;
    std::vector<EventAnnotation> events;
    std::string caption;
};

struct Manifest {
    std::vector<ManifestRecord> records;
};

// One JSON object per line with fields
//   id, wav, features, duration_s, events[{label,start_s,end_s,pitch,energy}], caption
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

// Maps the detector's feature-domain estimates back into the pool's
// estimator domain: YIN-style pitch ~ spectral centroid + pitch_offset,
// waveform dB ~ in-band feature dB + energy_offset, fitted per class on the
// pool clips.
struct ClassCalibration {
    double pitch_offset = 0.0;   // Hz
    double energy_offset = 0.0;  // dB
};

// Dataset-level sidecar persisted next to the manifest: everything a later
// stage needs to treat new clips consistently with the pool.
struct DatasetMeta {
    int sample_rate = 16000;
    FeatureStats stats;
    CategoryThresholds pitch_thresholds;
    CategoryThresholds energy_thresholds;
    std::map<std::string, ClassCalibration> calibration;
    std::vector<std::string> classes;  // classes present in the pool
};

void write_dataset_meta(const std::filesystem::path& path, const DatasetMeta& meta);
DatasetMeta read_dataset_meta(const std::filesystem::path& path);

// Serialization of DatasetMeta to/from a JSON string (used by checkpoints,
// which embed the dataset context they were trained against).
std::string dataset_meta_to_json(const DatasetMeta& meta);
DatasetMeta dataset_meta_from_json(const std::string& text);

}  // namespace soundflow
