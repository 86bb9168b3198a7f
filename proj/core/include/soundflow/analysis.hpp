#pragma once

#include <string>
#include <utility>
#include <vector>

namespace soundflow {

// ---- categorical annotation -------------------------------------------------

enum class Category { Low, Normal, High };

std::string category_name(Category c);
Category category_from_name(const std::string& name);  // throws on anything else

// Quantile cuts for one attribute over a clip pool. q50 is carried along for
// audit output; only q25/q75 decide categories.
struct CategoryThresholds {
    double q25 = 0.0;
    double q50 = 0.0;
    double q75 = 0.0;
};

// Quantiles by linear interpolation at positions (n-1)*p over the sorted
// values. Requires at least 4 values.
CategoryThresholds compute_thresholds(const std::vector<double>& values);

// Low if strictly below q25, High if strictly above q75, Normal otherwise
// (so an all-equal pool maps everything to Normal).
Category categorize_value(double value, const CategoryThresholds& t);

std::pair<CategoryThresholds, std::vector<Category>> categorize(
    const std::vector<double>& values);

// ---- clip analysis ----------------------------------------------------------

// Sentinel returned when no frame in a clip carries a detectable fundamental.
inline constexpr double kUnpitched = -1.0;

// Average fundamental frequency in Hz over voiced frames, via the cumulative
// mean normalized difference function (threshold 0.15, search 50-2000 Hz,
// parabolic refinement of the dip). Frames without an accepted dip are
// skipped; if every frame is skipped the clip is kUnpitched. Requires at
// least 64 ms of audio.
double estimate_pitch(const std::vector<double>& samples, int sample_rate);

// Per-frame fundamental (Hz, kUnpitched where voiceless) on 50 ms frames with
// 25 ms hop; the frame rate is therefore 40 frames/s.
std::vector<double> pitch_contour(const std::vector<double>& samples, int sample_rate);

// Mean over 50 ms frames (50% overlap) of per-frame 20*log10(RMS). Frames are
// floored at a tiny RMS so one silent frame cannot drag the mean to -inf; an
// all-zero clip returns -infinity. Requires a nonempty clip.
double estimate_energy(const std::vector<double>& samples, int sample_rate);

// The per-frame dB values estimate_energy averages (50 ms frames, 25 ms hop).
std::vector<double> energy_contour(const std::vector<double>& samples, int sample_rate);

}  // namespace soundflow
