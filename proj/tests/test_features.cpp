#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "soundflow/features.hpp"
#include "soundflow/rng.hpp"

using namespace soundflow;

namespace {

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

// O(n^2) reference transform.
std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j)
            out[k] += x[j] * std::polar(1.0, -2.0 * std::numbers::pi *
                                                 static_cast<double>(k * j) /
                                                 static_cast<double>(n));
    return out;
}

std::vector<double> sine(double freq, double seconds, int rate) {
    std::vector<double> x(static_cast<std::size_t>(seconds * rate));
    for (std::size_t n = 0; n < x.size(); ++n)
        x[n] = 0.4 * std::sin(2.0 * std::numbers::pi * freq * n / rate);
    return x;
}

}  // namespace

TEST_CASE("fft matches a naive DFT") {
    Rng rng(3);
    std::vector<std::complex<double>> x(16);
    for (auto& z : x) z = {rng.normal(), rng.normal()};
    auto ref = naive_dft(x);
    auto got = x;
    fft(got);
    for (std::size_t k = 0; k < x.size(); ++k) {
        CHECK(got[k].real() == doctest::Approx(ref[k].real()).epsilon(1e-10));
        CHECK(got[k].imag() == doctest::Approx(ref[k].imag()).epsilon(1e-10));
    }
}

TEST_CASE("fft basic identities") {
    SUBCASE("impulse transforms to a flat spectrum") {
        std::vector<std::complex<double>> x(8, 0.0);
        x[0] = 1.0;
        fft(x);
        for (const auto& z : x) {
            CHECK(z.real() == doctest::Approx(1.0).epsilon(1e-14));
            CHECK(std::abs(z.imag()) < 1e-14);
        }
    }
    SUBCASE("inverse undoes forward") {
        Rng rng(9);
        std::vector<std::complex<double>> x(64);
        for (auto& z : x) z = {rng.normal(), rng.normal()};
        auto y = x;
        fft(y);
        fft(y, /*inverse=*/true);
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(std::abs(y[i] - x[i]) < 1e-12);
    }
    SUBCASE("energy is preserved (Parseval)") {
        Rng rng(10);
        std::vector<std::complex<double>> x(128);
        for (auto& z : x) z = {rng.normal(), 0.0};
        double time_energy = 0.0;
        for (const auto& z : x) time_energy += std::norm(z);
        fft(x);
        double freq_energy = 0.0;
        for (const auto& z : x) freq_energy += std::norm(z);
        CHECK(freq_energy / static_cast<double>(x.size()) ==
              doctest::Approx(time_energy).epsilon(1e-12));
    }
    SUBCASE("non-power-of-two rejected") {
        std::vector<std::complex<double>> x(12);
        CHECK_THROWS_AS(fft(x), std::invalid_argument);
    }
}

TEST_CASE("feature frontend frame contract") {
    FeatureConfig cfg;
    // one second at the default hop of 640 -> exactly 25 frames
    auto f = compute_features(sine(1000.0, 1.0, 16000), cfg);
    CHECK(f.frames == 25);
    CHECK(f.channels == 64);
    // 2.4 s -> 60 frames
    CHECK(compute_features(sine(1000.0, 2.4, 16000), cfg).frames == 60);
}

TEST_CASE("a pure tone concentrates power at the right mel band") {
    FeatureConfig cfg;
    const double freq = 1000.0;
    auto f = compute_features(sine(freq, 1.0, 16000), cfg);
    const auto centers = mel_band_centers_hz(cfg);
    // strongest channel in a middle frame
    std::size_t best = 0;
    for (std::size_t c = 1; c < f.channels; ++c)
        if (f.at(12, c) > f.at(12, best)) best = c;
    CHECK(std::abs(centers[best] - freq) < 120.0);
}

TEST_CASE("mel band centers are ordered and bounded") {
    FeatureConfig cfg;
    const auto centers = mel_band_centers_hz(cfg);
    REQUIRE(centers.size() == cfg.mel_bands);
    CHECK(centers.front() > cfg.fmin_hz);
    CHECK(centers.back() < cfg.fmax_hz);
    for (std::size_t i = 0; i + 1 < centers.size(); ++i) CHECK(centers[i] < centers[i + 1]);
}

TEST_CASE("features are bit-deterministic") {
    FeatureConfig cfg;
    const auto x = sine(700.0, 1.0, 16000);
    CHECK(compute_features(x, cfg).data == compute_features(x, cfg).data);
}

TEST_CASE("normalization statistics") {
    Rng rng(21);
    FeatureSequence f;
    f.frames = 50;
    f.channels = 4;
    f.data.resize(200);
    for (double& v : f.data) v = 3.0 + 2.0 * rng.normal();
    auto stats = compute_feature_stats({&f});
    normalize_features(f, stats);
    for (std::size_t c = 0; c < f.channels; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t fr = 0; fr < f.frames; ++fr) mean += f.at(fr, c);
        mean /= static_cast<double>(f.frames);
        for (std::size_t fr = 0; fr < f.frames; ++fr) {
            const double d = f.at(fr, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(f.frames);
        CHECK(std::abs(mean) < 1e-10);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }
    denormalize_features(f, stats);
    double back_mean = 0.0;
    for (double v : f.data) back_mean += v;
    CHECK(back_mean / 200.0 == doctest::Approx(3.0).epsilon(0.2));

    FeatureSequence wrong;
    wrong.frames = 1;
    wrong.channels = 3;
    wrong.data.resize(3);
    CHECK_THROWS_AS(normalize_features(wrong, stats), std::invalid_argument);
}

TEST_CASE("feature file round trip") {
    Rng rng(31);
    FeatureSequence f;
    f.frames = 7;
    f.channels = 5;
    f.data.resize(35);
    for (double& v : f.data) v = rng.normal();

    const auto path = temp_file("soundflow_test_feat.acft");
    write_features(path, f);
    FeatureSequence back = read_features(path);
    REQUIRE(back.frames == 7);
    REQUIRE(back.channels == 5);
    for (std::size_t i = 0; i < f.data.size(); ++i)
        CHECK(back.data[i] == static_cast<double>(static_cast<float>(f.data[i])));
    std::filesystem::remove(path);
}

TEST_CASE("feature file error paths") {
    const auto path = temp_file("soundflow_test_feat_bad.acft");
    {
        std::ofstream f(path, std::ios::binary);
        f << "WRONGMAGIC";
    }
    CHECK_THROWS_WITH_AS(read_features(path), doctest::Contains("magic"), std::runtime_error);
    {
        std::ofstream f(path, std::ios::binary);
        f << "ACFT";  // truncated header
    }
    CHECK_THROWS_WITH_AS(read_features(path), doctest::Contains("truncated"), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("band envelope separates a tone from silence") {
    FeatureConfig cfg;
    std::vector<double> x(32000, 0.0);  // 2 s: tone occupies the second half
    for (std::size_t n = 16000; n < 32000; ++n)
        x[n] = 0.4 * std::sin(2.0 * std::numbers::pi * 700.0 * static_cast<double>(n) / 16000.0);
    auto f = compute_features(x, cfg);
    auto env = band_envelope_db(f, cfg, 650.0, 1050.0);
    REQUIRE(env.size() == 50);
    // mid-silence vs mid-tone, away from the boundary frame
    CHECK(env[40] - env[10] > 40.0);
    CHECK_THROWS_AS(band_envelope_db(f, cfg, 2.0, 3.0), std::invalid_argument);
}

TEST_CASE("band centroid tracks the tone frequency") {
    FeatureConfig cfg;
    for (double freq : {700.0, 800.0, 900.0}) {
        auto f = compute_features(sine(freq, 1.0, 16000), cfg);
        const double c = band_centroid_hz(f, 2, 23, cfg, 650.0, 1050.0);
        CAPTURE(freq);
        CHECK(std::abs(c - freq) < 80.0);
    }
    // monotone in frequency
    auto f1 = compute_features(sine(700.0, 1.0, 16000), cfg);
    auto f2 = compute_features(sine(900.0, 1.0, 16000), cfg);
    CHECK(band_centroid_hz(f1, 2, 23, cfg, 650.0, 1050.0) <
          band_centroid_hz(f2, 2, 23, cfg, 650.0, 1050.0));
}
