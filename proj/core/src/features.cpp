#include "soundflow/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace soundflow {

namespace {

constexpr double kLogFloor = 1e-10;
constexpr double kStdFloor = 1e-6;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters over FFT power bins, one row per mel band.
struct MelBank {
    std::size_t bins;   // window/2 + 1
    std::size_t bands;
    std::vector<double> weights;  // bands x bins, row-major (mostly zero)
};

MelBank build_mel_bank(const FeatureConfig& cfg) {
    MelBank bank;
    bank.bins = cfg.window / 2 + 1;
    bank.bands = cfg.mel_bands;
    bank.weights.assign(bank.bands * bank.bins, 0.0);

    const double mel_lo = hz_to_mel(cfg.fmin_hz);
    const double mel_hi = hz_to_mel(cfg.fmax_hz);
    std::vector<double> edges(cfg.mel_bands + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                          static_cast<double>(cfg.mel_bands + 1));

    const double bin_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.window);
    for (std::size_t b = 0; b < bank.bands; ++b) {
        const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
        for (std::size_t k = 0; k < bank.bins; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            double w = 0.0;
            if (f > lo && f < mid) w = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi) w = (hi - f) / (hi - mid);
            if (w > 0.0) bank.weights[b * bank.bins + k] = w;
        }
    }
    return bank;
}

void put_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f, const std::string& what) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("read_features: truncated " + what);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

void fft(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft: size must be a power of two, got " +
                                    std::to_string(n));
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse)
        for (auto& z : a) z /= static_cast<double>(n);
}

FeatureSequence compute_features(const std::vector<double>& samples, const FeatureConfig& cfg) {
    if (cfg.window == 0 || (cfg.window & (cfg.window - 1)) != 0)
        throw std::invalid_argument("compute_features: window must be a power of two");
    if (cfg.hop == 0) throw std::invalid_argument("compute_features: hop must be positive");
    if (samples.empty()) throw std::invalid_argument("compute_features: empty clip");

    const MelBank bank = build_mel_bank(cfg);
    std::vector<double> hann(cfg.window);
    for (std::size_t i = 0; i < cfg.window; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                       static_cast<double>(cfg.window));

    const std::size_t frames = (samples.size() + cfg.hop - 1) / cfg.hop;
    FeatureSequence out;
    out.frames = frames;
    out.channels = cfg.mel_bands;
    out.data.assign(frames * cfg.mel_bands, 0.0);

    std::vector<std::complex<double>> buf(cfg.window);
    std::vector<double> power(bank.bins);
    for (std::size_t fr = 0; fr < frames; ++fr) {
        const std::size_t start = fr * cfg.hop;
        for (std::size_t i = 0; i < cfg.window; ++i) {
            const std::size_t idx = start + i;
            buf[i] = idx < samples.size() ? samples[idx] * hann[i] : 0.0;
        }
        fft(buf);
        for (std::size_t k = 0; k < bank.bins; ++k) power[k] = std::norm(buf[k]);
        for (std::size_t b = 0; b < bank.bands; ++b) {
            const double* w = bank.weights.data() + b * bank.bins;
            double acc = 0.0;
            for (std::size_t k = 0; k < bank.bins; ++k) acc += w[k] * power[k];
            out.at(fr, b) = std::log(acc + kLogFloor);
        }
    }
    return out;
}

FeatureStats compute_feature_stats(const std::vector<const FeatureSequence*>& sequences) {
    if (sequences.empty())
        throw std::invalid_argument("compute_feature_stats: no sequences");
    const std::size_t channels = sequences.front()->channels;
    std::vector<double> sum(channels, 0.0), sumsq(channels, 0.0);
    std::size_t total_frames = 0;
    for (const FeatureSequence* f : sequences) {
        if (f->channels != channels)
            throw std::invalid_argument("compute_feature_stats: channel count mismatch: " +
                                        std::to_string(f->channels) + " vs " +
                                        std::to_string(channels));
        for (std::size_t fr = 0; fr < f->frames; ++fr)
            for (std::size_t c = 0; c < channels; ++c) {
                const double v = f->at(fr, c);
                sum[c] += v;
                sumsq[c] += v * v;
            }
        total_frames += f->frames;
    }
    if (total_frames == 0) throw std::invalid_argument("compute_feature_stats: no frames");

    FeatureStats stats;
    stats.mean.resize(channels);
    stats.std_dev.resize(channels);
    const double n = static_cast<double>(total_frames);
    for (std::size_t c = 0; c < channels; ++c) {
        stats.mean[c] = sum[c] / n;
        const double var = std::max(0.0, sumsq[c] / n - stats.mean[c] * stats.mean[c]);
        stats.std_dev[c] = std::max(std::sqrt(var), kStdFloor);
    }
    return stats;
}

void normalize_features(FeatureSequence& f, const FeatureStats& stats) {
    if (stats.mean.size() != f.channels)
        throw std::invalid_argument("normalize_features: stats have " +
                                    std::to_string(stats.mean.size()) + " channels, features " +
                                    std::to_string(f.channels));
    for (std::size_t fr = 0; fr < f.frames; ++fr)
        for (std::size_t c = 0; c < f.channels; ++c)
            f.at(fr, c) = (f.at(fr, c) - stats.mean[c]) / stats.std_dev[c];
}

void denormalize_features(FeatureSequence& f, const FeatureStats& stats) {
    if (stats.mean.size() != f.channels)
        throw std::invalid_argument("denormalize_features: stats have " +
                                    std::to_string(stats.mean.size()) + " channels, features " +
                                    std::to_string(f.channels));
    for (std::size_t fr = 0; fr < f.frames; ++fr)
        for (std::size_t c = 0; c < f.channels; ++c)
            f.at(fr, c) = f.at(fr, c) * stats.std_dev[c] + stats.mean[c];
}

void write_features(const std::filesystem::path& path, const FeatureSequence& f) {
    if (f.data.size() != f.frames * f.channels)
        throw std::invalid_argument("write_features: data size does not match frames x channels");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_features: cannot open " + path.string());
    out.write("ACFT", 4);
    put_u32(out, static_cast<std::uint32_t>(f.frames));
    put_u32(out, static_cast<std::uint32_t>(f.channels));
    for (double v : f.data) {
        const auto x = static_cast<float>(v);
        std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
        put_u32(out, bits);
    }
    if (!out) throw std::runtime_error("write_features: short write to " + path.string());
}

FeatureSequence read_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_features: cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "ACFT", 4) != 0)
        throw std::runtime_error("read_features: bad magic in " + path.string());
    FeatureSequence f;
    f.frames = get_u32(in, "frame count");
    f.channels = get_u32(in, "channel count");
    f.data.resize(f.frames * f.channels);
    for (double& v : f.data) {
        const std::uint32_t bits = get_u32(in, "payload");
        v = static_cast<double>(std::bit_cast<float>(bits));
    }
    return f;
}

std::vector<double> mel_band_centers_hz(const FeatureConfig& cfg) {
    const double mel_lo = hz_to_mel(cfg.fmin_hz);
    const double mel_hi = hz_to_mel(cfg.fmax_hz);
    std::vector<double> centers(cfg.mel_bands);
    for (std::size_t b = 0; b < cfg.mel_bands; ++b)
        centers[b] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(b + 1) /
                                            static_cast<double>(cfg.mel_bands + 1));
    return centers;
}

namespace {

std::vector<std::size_t> band_channels(const FeatureConfig& cfg, double f_lo, double f_hi) {
    std::vector<std::size_t> out;
    const std::vector<double> centers = mel_band_centers_hz(cfg);
    for (std::size_t b = 0; b < centers.size(); ++b)
        if (centers[b] >= f_lo && centers[b] <= f_hi) out.push_back(b);
    if (out.empty())
        throw std::invalid_argument("band [" + std::to_string(f_lo) + ", " +
                                    std::to_string(f_hi) + "] Hz covers no mel channel");
    return out;
}

}  // namespace

std::vector<double> band_envelope_db(const FeatureSequence& raw, const FeatureConfig& cfg,
                                     double f_lo, double f_hi) {
    if (raw.channels != cfg.mel_bands)
        throw std::invalid_argument("band_envelope_db: features have " +
                                    std::to_string(raw.channels) + " channels, config expects " +
                                    std::to_string(cfg.mel_bands));
    const std::vector<std::size_t> chans = band_channels(cfg, f_lo, f_hi);
    std::vector<double> env(raw.frames);
    for (std::size_t fr = 0; fr < raw.frames; ++fr) {
        double power = 0.0;
        for (std::size_t c : chans) power += std::exp(raw.at(fr, c));
        env[fr] = 10.0 * std::log10(power);
    }
    return env;
}

double band_centroid_hz(const FeatureSequence& raw, std::size_t frame_begin,
                        std::size_t frame_end, const FeatureConfig& cfg, double f_lo,
                        double f_hi) {
    if (frame_begin >= frame_end || frame_end > raw.frames)
        throw std::invalid_argument("band_centroid_hz: bad frame range [" +
                                    std::to_string(frame_begin) + ", " +
                                    std::to_string(frame_end) + ") of " +
                                    std::to_string(raw.frames));
    const std::vector<std::size_t> chans = band_channels(cfg, f_lo, f_hi);
    const std::vector<double> centers = mel_band_centers_hz(cfg);
    double weighted = 0.0, total = 0.0;
    for (std::size_t fr = frame_begin; fr < frame_end; ++fr)
        for (std::size_t c : chans) {
            const double p = std::exp(raw.at(fr, c));
            weighted += p * centers[c];
            total += p;
        }
    return weighted / total;
}

}  // namespace soundflow
