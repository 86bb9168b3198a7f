#include "soundflow/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace soundflow {

namespace {

constexpr double kPitchFloorHz = 50.0;
constexpr double kPitchCeilHz = 2000.0;
constexpr double kDipThreshold = 0.15;
constexpr double kFrameSeconds = 0.05;
constexpr double kHopSeconds = 0.025;
constexpr double kRmsFloor = 1e-9;  // -180 dB, keeps lone quiet frames finite

double quantile(const std::vector<double>& sorted, double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

// Fundamental of one frame via the cumulative mean normalized difference
// function; kUnpitched when no dip crosses the threshold.
double frame_pitch(const double* x, std::size_t frame_len, int sample_rate) {
    const auto tau_min = static_cast<std::size_t>(
        std::ceil(static_cast<double>(sample_rate) / kPitchCeilHz));
    const auto tau_max = static_cast<std::size_t>(
        std::floor(static_cast<double>(sample_rate) / kPitchFloorHz));
    if (tau_max + 1 >= frame_len) return kUnpitched;
    const std::size_t window = frame_len - tau_max;

    std::vector<double> dprime(tau_max + 1, 1.0);
    double running = 0.0;
    for (std::size_t tau = 1; tau <= tau_max; ++tau) {
        double d = 0.0;
        for (std::size_t j = 0; j < window; ++j) {
            const double diff = x[j] - x[j + tau];
            d += diff * diff;
        }
        running += d;
        dprime[tau] = running > 0.0 ? d * static_cast<double>(tau) / running : 1.0;
    }

    std::size_t tau = tau_min;
    while (tau <= tau_max && dprime[tau] >= kDipThreshold) ++tau;
    if (tau > tau_max) return kUnpitched;
    // walk to the bottom of this dip
    while (tau + 1 <= tau_max && dprime[tau + 1] < dprime[tau]) ++tau;

    double refined = static_cast<double>(tau);
    if (tau > 1 && tau < tau_max) {
        const double a = dprime[tau - 1], b = dprime[tau], c = dprime[tau + 1];
        const double denom = a + c - 2.0 * b;
        if (denom > 0.0) refined += std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
    }
    return static_cast<double>(sample_rate) / refined;
}

struct FrameGrid {
    std::size_t frame_len;
    std::size_t hop;
    std::size_t count;
};

FrameGrid make_grid(std::size_t n, int sample_rate) {
    FrameGrid g{};
    g.frame_len = static_cast<std::size_t>(std::lround(kFrameSeconds * sample_rate));
    g.hop = static_cast<std::size_t>(std::lround(kHopSeconds * sample_rate));
    if (n < g.frame_len) {
        g.frame_len = n;  // single whole-clip frame for very short input
        g.count = 1;
    } else {
        g.count = (n - g.frame_len) / g.hop + 1;
    }
    return g;
}

}  // namespace

std::string category_name(Category c) {
    switch (c) {
        case Category::Low: return "Low";
        case Category::Normal: return "Normal";
        case Category::High: return "High";
    }
    throw std::logic_error("category_name: bad enum value");
}

Category category_from_name(const std::string& name) {
    if (name == "Low") return Category::Low;
    if (name == "Normal") return Category::Normal;
    if (name == "High") return Category::High;
    throw std::invalid_argument("category_from_name: unknown category '" + name + "'");
}

CategoryThresholds compute_thresholds(const std::vector<double>& values) {
    if (values.size() < 4)
        throw std::invalid_argument("compute_thresholds: need at least 4 values, got " +
                                    std::to_string(values.size()));
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    return CategoryThresholds{quantile(sorted, 0.25), quantile(sorted, 0.50),
                              quantile(sorted, 0.75)};
}

Category categorize_value(double value, const CategoryThresholds& t) {
    if (value < t.q25) return Category::Low;
    if (value > t.q75) return Category::High;
    return Category::Normal;
}

std::pair<CategoryThresholds, std::vector<Category>> categorize(
    const std::vector<double>& values) {
    CategoryThresholds t = compute_thresholds(values);
    std::vector<Category> cats;
    cats.reserve(values.size());
    for (double v : values) cats.push_back(categorize_value(v, t));
    return {t, cats};
}

std::vector<double> pitch_contour(const std::vector<double>& samples, int sample_rate) {
    if (sample_rate <= 0) throw std::invalid_argument("pitch_contour: bad sample rate");
    const FrameGrid g = make_grid(samples.size(), sample_rate);
    std::vector<double> out;
    out.reserve(g.count);
    for (std::size_t i = 0; i < g.count; ++i)
        out.push_back(frame_pitch(samples.data() + i * g.hop, g.frame_len, sample_rate));
    return out;
}

double estimate_pitch(const std::vector<double>& samples, int sample_rate) {
    if (sample_rate <= 0) throw std::invalid_argument("estimate_pitch: bad sample rate");
    const double dur_ms = 1000.0 * static_cast<double>(samples.size()) / sample_rate;
    if (dur_ms < 64.0)
        throw std::invalid_argument("estimate_pitch: clip too short (" +
                                    std::to_string(dur_ms) + " ms < 64 ms)");
    double total = 0.0;
    std::size_t voiced = 0;
    for (double f : pitch_contour(samples, sample_rate)) {
        if (f != kUnpitched) {
            total += f;
            ++voiced;
        }
    }
    return voiced > 0 ? total / static_cast<double>(voiced) : kUnpitched;
}

std::vector<double> energy_contour(const std::vector<double>& samples, int sample_rate) {
    if (samples.empty()) throw std::invalid_argument("energy_contour: empty clip");
    if (sample_rate <= 0) throw std::invalid_argument("energy_contour: bad sample rate");
    const FrameGrid g = make_grid(samples.size(), sample_rate);
    std::vector<double> out;
    out.reserve(g.count);
    for (std::size_t i = 0; i < g.count; ++i) {
        const double* x = samples.data() + i * g.hop;
        double acc = 0.0;
        for (std::size_t j = 0; j < g.frame_len; ++j) acc += x[j] * x[j];
        const double rms = std::sqrt(acc / static_cast<double>(g.frame_len));
        out.push_back(20.0 * std::log10(std::max(rms, kRmsFloor)));
    }
    return out;
}

double estimate_energy(const std::vector<double>& samples, int sample_rate) {
    if (samples.empty()) throw std::invalid_argument("estimate_energy: empty clip");
    const bool all_zero =
        std::all_of(samples.begin(), samples.end(), [](double s) { return s == 0.0; });
    if (all_zero) return -std::numeric_limits<double>::infinity();
    const std::vector<double> frames = energy_contour(samples, sample_rate);
    double total = 0.0;
    for (double db : frames) total += db;
    return total / static_cast<double>(frames.size());
}

}  // namespace soundflow
