#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "soundflow/model.hpp"

namespace soundflow {

// Self-describing model container: magic bytes "ACMP", a format version, a
// length-prefixed UTF-8 key=value block (model config, schedule name,
// vocabulary, dataset context), then the parameters as named records of
// (name, shape, little-endian float64 payload). Optimizer moments ride along
// as "optim."-prefixed records when a training run wants to be resumable.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const VelocityModel& model,
                     const std::string& schedule_name, const std::string& dataset_meta_json,
                     const AdamW* optimizer = nullptr);

struct LoadedCheckpoint {
    VelocityModel model;
    std::string schedule_name;
    std::string dataset_meta_json;  // empty if the checkpoint carries none
    std::optional<AdamW> optimizer;
};

// Loads and validates a checkpoint. Bad magic, a version mismatch, a
// missing, unknown, or misshapen parameter record, and truncation are all
// errors stating the cause. When `expected` is given, the embedded config
// must match it field for field.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const ModelConfig* expected = nullptr);

}  // namespace soundflow
