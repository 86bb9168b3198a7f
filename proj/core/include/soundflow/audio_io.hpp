#pragma once

#include <filesystem>
#include <vector>

namespace soundflow {

struct AudioData {
    std::vector<double> samples;  // mono, nominal range [-1, 1]
    int sample_rate = 0;
};

// 16-bit PCM mono WAV. Samples are clamped to [-1, 1] and quantized on
// write; a round trip is exact to within one quantization step (1/32768).
void write_wav(const std::filesystem::path& path, const std::vector<double>& samples,
               int sample_rate);

// Reads the formats write_wav produces. Anything else (float/ADPCM encoding,
// multi-channel, other bit depths) is rejected with a descriptive error.
AudioData read_wav(const std::filesystem::path& path);

}  // namespace soundflow
