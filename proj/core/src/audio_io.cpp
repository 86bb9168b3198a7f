#include "soundflow/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace soundflow {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t off) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(s[off])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 3])) << 24;
}

std::uint16_t get_u16(const std::string& s, std::size_t off) {
    return static_cast<std::uint16_t>(static_cast<unsigned char>(s[off]) |
                                      static_cast<unsigned char>(s[off + 1]) << 8);
}

}  // namespace

void write_wav(const std::filesystem::path& path, const std::vector<double>& samples,
               int sample_rate) {
    if (samples.empty()) throw std::invalid_argument("write_wav: empty sample buffer");
    if (sample_rate <= 0)
        throw std::invalid_argument("write_wav: sample rate must be positive, got " +
                                    std::to_string(sample_rate));

    const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put_u32(out, 36 + data_bytes);
    out += "WAVE";
    out += "fmt ";
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, static_cast<std::uint32_t>(sample_rate));
    put_u32(out, static_cast<std::uint32_t>(sample_rate * 2));  // byte rate
    put_u16(out, 2);                                            // block align
    put_u16(out, 16);                                           // bits per sample
    out += "data";
    put_u32(out, data_bytes);
    for (double s : samples) {
        double clamped = std::clamp(s, -1.0, 1.0);
        auto q = static_cast<std::int16_t>(std::lrint(clamped * 32767.0));
        put_u16(out, static_cast<std::uint16_t>(q));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_wav: cannot open " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write_wav: short write to " + path.string());
}

AudioData read_wav(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_wav: cannot open " + path.string());
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    auto bad = [&](const std::string& why) -> std::runtime_error {
        return std::runtime_error("read_wav: " + path.string() + ": " + why);
    };
    if (buf.size() < 12 || buf.compare(0, 4, "RIFF") != 0 || buf.compare(8, 4, "WAVE") != 0)
        throw bad("not a RIFF/WAVE file");

    AudioData audio;
    bool have_fmt = false;
    std::size_t off = 12;
    while (off + 8 <= buf.size()) {
        const std::string chunk_id = buf.substr(off, 4);
        const std::uint32_t chunk_size = get_u32(buf, off + 4);
        const std::size_t body = off + 8;
        if (body + chunk_size > buf.size()) throw bad("truncated chunk '" + chunk_id + "'");

        if (chunk_id == "fmt ") {
            if (chunk_size < 16) throw bad("fmt chunk too small");
            const std::uint16_t format = get_u16(buf, body);
            const std::uint16_t channels = get_u16(buf, body + 2);
            const std::uint32_t rate = get_u32(buf, body + 4);
            const std::uint16_t bits = get_u16(buf, body + 14);
            if (format != 1) throw bad("unsupported encoding " + std::to_string(format) +
                                       " (only 16-bit PCM)");
            if (channels != 1) throw bad("expected mono, got " + std::to_string(channels) +
                                         " channels");
            if (bits != 16) throw bad("expected 16 bits per sample, got " + std::to_string(bits));
            audio.sample_rate = static_cast<int>(rate);
            have_fmt = true;
        } else if (chunk_id == "data") {
            if (!have_fmt) throw bad("data chunk before fmt chunk");
            if (chunk_size % 2 != 0) throw bad("odd data chunk size");
            const std::size_t n = chunk_size / 2;
            audio.samples.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                auto q = static_cast<std::int16_t>(get_u16(buf, body + 2 * i));
                audio.samples[i] = static_cast<double>(q) / 32767.0;
            }
            return audio;
        }
        // chunks are word-aligned
        off = body + chunk_size + (chunk_size % 2);
    }
    throw bad("no data chunk");
}

}  // namespace soundflow
