#include "soundflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace soundflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Band edges are pairwise disjoint with gaps so that per-class band filters
// (and the event detector built on them) never see a neighbor's energy.
const std::vector<EventClass> kClasses = {
    {"Drone", 80.0, 140.0, true},      // slow AM sine
    {"Thump", 170.0, 290.0, true},     // repeating decaying bursts
    {"Hum", 340.0, 560.0, true},       // two close partials beating
    {"Tone", 650.0, 1050.0, true},     // plain sine
    {"Whistle", 1200.0, 1900.0, true}, // vibrato sine
    {"Chirp", 2300.0, 3600.0, false},  // repeated upward sweeps
    {"Hiss", 4200.0, 5800.0, false},   // random-phase sine stack
    {"Crackle", 6400.0, 7800.0, false} // band noise under a spiky envelope
};

void render_drone(std::vector<double>& x, double f0, int rate, Rng& rng) {
    const double am_rate = rng.uniform(2.0, 4.0);
    const double phase0 = rng.uniform(0.0, kTwoPi);
    const double am_phase = rng.uniform(0.0, kTwoPi);
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double t = static_cast<double>(n) / rate;
        const double am = 0.75 + 0.25 * std::sin(kTwoPi * am_rate * t + am_phase);
        x[n] = am * std::sin(kTwoPi * f0 * t + phase0);
    }
}

void render_thump(std::vector<double>& x, double f0, int rate, Rng& rng) {
    const double burst_rate = rng.uniform(5.0, 9.0);
    const double decay = rng.uniform(20.0, 30.0);
    const double phase0 = rng.uniform(0.0, kTwoPi);
    const double period = 1.0 / burst_rate;
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double t = static_cast<double>(n) / rate;
        const double tau = std::fmod(t, period);
        const double env = (1.0 - std::exp(-tau / 0.004)) * std::exp(-decay * tau);
        x[n] = env * std::sin(kTwoPi * f0 * t + phase0);
    }
}

void render_hum(std::vector<double>& x, double f0, int rate, Rng& rng) {
    const double p1 = rng.uniform(0.0, kTwoPi);
    const double p2 = rng.uniform(0.0, kTwoPi);
    const double f1 = 1.015 * f0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double t = static_cast<double>(n) / rate;
        x[n] = 0.5 * (std::sin(kTwoPi * f0 * t + p1) + std::sin(kTwoPi * f1 * t + p2));
    }
}

void render_tone(std::vector<double>& x, double f0, int rate, Rng& rng) {
    const double phase0 = rng.uniform(0.0, kTwoPi);
    for (std::size_t n = 0; n < x.size(); ++n)
        x[n] = std::sin(kTwoPi * f0 * static_cast<double>(n) / rate + phase0);
}

void render_whistle(std::vector<double>& x, double f0, int rate, Rng& rng) {
    const double vib_rate = rng.uniform(4.0, 6.0);
    const double vib_phase = rng.uniform(0.0, kTwoPi);
    double phase = rng.uniform(0.0, kTwoPi);
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double t = static_cast<double>(n) / rate;
        const double f = f0 * (1.0 + 0.015 * std::sin(kTwoPi * vib_rate * t + vib_phase));
        x[n] = std::sin(phase);
        phase += kTwoPi * f / rate;
    }
}

void render_chirp(std::vector<double>& x, double center, double f_lo, double f_hi, int rate,
                  Rng& rng) {
    const double sweep_len = rng.uniform(0.15, 0.3);
    const double f_start = std::max(f_lo, center / 1.25);
    const double f_end = std::min(f_hi, center * 1.25);
    double phase = rng.uniform(0.0, kTwoPi);
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double t = static_cast<double>(n) / rate;
        const double frac = std::fmod(t, sweep_len) / sweep_len;
        const double f = f_start * std::pow(f_end / f_start, frac);
        // sin^2 window per sweep removes the broadband click at the reset
        const double win = std::sin(std::numbers::pi * frac);
        x[n] = win * win * std::sin(phase);
        phase += kTwoPi * f / rate;
    }
}

void render_sine_stack(std::vector<double>& x, double center, double f_lo, double f_hi,
                       double half_width, std::size_t partials, int rate, Rng& rng) {
    const double lo = std::max(f_lo, center - half_width);
    const double hi = std::min(f_hi, center + half_width);
    std::vector<double> freqs(partials), phases(partials), amps(partials);
    for (std::size_t k = 0; k < partials; ++k) {
        freqs[k] = rng.uniform(lo, hi);
        phases[k] = rng.uniform(0.0, kTwoPi);
        amps[k] = rng.uniform(0.5, 1.0) / static_cast<double>(partials);
    }
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double t = static_cast<double>(n) / rate;
        double s = 0.0;
        for (std::size_t k = 0; k < partials; ++k)
            s += amps[k] * std::sin(kTwoPi * freqs[k] * t + phases[k]);
        x[n] = s;
    }
}

void render_crackle(std::vector<double>& x, double center, double f_lo, double f_hi, int rate,
                    Rng& rng) {
    render_sine_stack(x, center, f_lo, f_hi, 500.0, 30, rate, rng);
    // spiky envelope: random impulses through a one-pole decay
    const double impulses_per_s = rng.uniform(40.0, 80.0);
    const double p_impulse = impulses_per_s / rate;
    const double leak = std::exp(-80.0 / rate);
    double env = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        env *= leak;
        if (rng.uniform01() < p_impulse) env += rng.uniform(0.3, 1.0);
        x[n] *= 0.08 + std::min(env, 1.5);
    }
}

}  // namespace

const std::vector<EventClass>& event_classes() { return kClasses; }

const EventClass* find_event_class(const std::string& name) {
    for (const EventClass& c : kClasses)
        if (c.name == name) return &c;
    return nullptr;
}

SourceClip synth_event(const std::string& event_class, double pitch_hz, double gain_db,
                       double duration_s, Rng& rng, int sample_rate) {
    const EventClass* cls = find_event_class(event_class);
    if (cls == nullptr)
        throw std::invalid_argument("synth_event: unknown class '" + event_class + "'");
    if (duration_s < 0.3 || duration_s > 4.0)
        throw std::invalid_argument("synth_event: duration " + std::to_string(duration_s) +
                                    " s outside [0.3, 4.0]");
    if (pitch_hz < cls->f_lo || pitch_hz > cls->f_hi)
        throw std::invalid_argument("synth_event: pitch " + std::to_string(pitch_hz) +
                                    " Hz outside the " + cls->name + " band [" +
                                    std::to_string(cls->f_lo) + ", " + std::to_string(cls->f_hi) +
                                    "]");
    if (sample_rate <= 0)
        throw std::invalid_argument("synth_event: bad sample rate " +
                                    std::to_string(sample_rate));

    const auto n_samples = static_cast<std::size_t>(std::lround(duration_s * sample_rate));
    std::vector<double> x(n_samples, 0.0);

    if (cls->name == "Drone") render_drone(x, pitch_hz, sample_rate, rng);
    else if (cls->name == "Thump") render_thump(x, pitch_hz, sample_rate, rng);
    else if (cls->name == "Hum") render_hum(x, pitch_hz, sample_rate, rng);
    else if (cls->name == "Tone") render_tone(x, pitch_hz, sample_rate, rng);
    else if (cls->name == "Whistle") render_whistle(x, pitch_hz, sample_rate, rng);
    else if (cls->name == "Chirp") render_chirp(x, pitch_hz, cls->f_lo, cls->f_hi, sample_rate, rng);
    else if (cls->name == "Hiss")
        render_sine_stack(x, pitch_hz, cls->f_lo, cls->f_hi, 500.0, 40, sample_rate, rng);
    else render_crackle(x, pitch_hz, cls->f_lo, cls->f_hi, sample_rate, rng);

    // A -66 dB in-band bed keeps every analysis frame above digital silence,
    // so gain scaling shifts each frame's dB identically and the
    // normalization below is exact.
    for (std::size_t n = 0; n < n_samples; ++n) {
        const double t = static_cast<double>(n) / sample_rate;
        x[n] += 5e-4 * std::sin(kTwoPi * pitch_hz * t);
    }

    // 10 ms raised-cosine edges against clicks
    const auto ramp = static_cast<std::size_t>(std::lround(0.01 * sample_rate));
    for (std::size_t n = 0; n < std::min(ramp, n_samples); ++n) {
        const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(n) / ramp);
        x[n] *= w;
        x[n_samples - 1 - n] *= w;
    }

    // normalize so the energy estimator reads exactly gain_db
    const double measured = estimate_energy(x, sample_rate);
    const double gain = std::pow(10.0, (gain_db - measured) / 20.0);
    double peak = 0.0;
    for (double& s : x) {
        s *= gain;
        peak = std::max(peak, std::abs(s));
    }
    if (peak > 1.0)  // safety cap; unreachable for the gain ranges the mixer uses
        for (double& s : x) s *= 0.99 / peak;

    SourceClip clip;
    clip.samples = std::move(x);
    clip.sample_rate = sample_rate;
    clip.label = cls->name;
    clip.mean_energy = estimate_energy(clip.samples, sample_rate);
    clip.mean_pitch = estimate_pitch(clip.samples, sample_rate);
    return clip;
}

}  // namespace soundflow
