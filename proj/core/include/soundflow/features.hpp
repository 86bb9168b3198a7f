#pragma once

#include <complex>
#include <filesystem>
#include <vector>

namespace soundflow {

// In-place radix-2 FFT (decimation in time). Size must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse = false);

struct FeatureConfig {
    int sample_rate = 16000;
    std::size_t window = 1024;  // 64 ms Hann window
    std::size_t hop = 640;      // 40 ms -> 25 frames/s
    std::size_t mel_bands = 64;
    double fmin_hz = 20.0;
    double fmax_hz = 8000.0;
};

// frames x channels, row-major. Values are log mel-band powers, optionally
// mean/variance normalized per channel against a dataset-level statistic.
struct FeatureSequence {
    std::size_t frames = 0;
    std::size_t channels = 0;
    std::vector<double> data;

    double& at(std::size_t frame, std::size_t channel) { return data[frame * channels + channel]; }
    double at(std::size_t frame, std::size_t channel) const {
        return data[frame * channels + channel];
    }
};

// Hann-windowed STFT power -> triangular mel filterbank -> log(power + 1e-10).
// Frames start at multiples of hop; the tail is zero-padded, so a clip of
// k*hop samples yields exactly k frames.
FeatureSequence compute_features(const std::vector<double>& samples, const FeatureConfig& cfg);

// Per-channel statistics for dataset-level normalization.
struct FeatureStats {
    std::vector<double> mean;
    std::vector<double> std_dev;  // floored away from zero
};

FeatureStats compute_feature_stats(const std::vector<const FeatureSequence*>& sequences);
void normalize_features(FeatureSequence& f, const FeatureStats& stats);
void denormalize_features(FeatureSequence& f, const FeatureStats& stats);

// Binary feature file: magic "ACFT", then frames and channels as little-endian
// uint32, then the payload as little-endian float32, row-major.
void write_features(const std::filesystem::path& path, const FeatureSequence& f);
FeatureSequence read_features(const std::filesystem::path& path);

// ---- band measurements on raw (unnormalized) log-mel features ---------------

// Center frequency of each mel band in Hz.
std::vector<double> mel_band_centers_hz(const FeatureConfig& cfg);

// Per-frame 10*log10 of the total power in the channels whose center lies in
// [f_lo, f_hi]. The basis of the band-activity event detector.
std::vector<double> band_envelope_db(const FeatureSequence& raw, const FeatureConfig& cfg,
                                     double f_lo, double f_hi);

// Power-weighted mean center frequency over frames [frame_begin, frame_end),
// restricted to the band. A coarse in-band pitch proxy.
double band_centroid_hz(const FeatureSequence& raw, std::size_t frame_begin,
                        std::size_t frame_end, const FeatureConfig& cfg, double f_lo,
                        double f_hi);

}  // namespace soundflow
