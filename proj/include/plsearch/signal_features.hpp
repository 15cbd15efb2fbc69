#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "plsearch/binary.hpp"
#include "plsearch/error.hpp"

namespace plsearch {

// Mono PCM audio, amplitudes nominally in [-1, 1].
struct PcmSignal {
    std::vector<double> samples;
    double sample_rate = 0.0;

    double duration() const { return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
};

struct FilterbankConfig {
    std::size_t n_channels = 7;
    double q_factor = 10.0;
    double f_low = 100.0;
    double f_high = 6400.0;
    double frame_hop = 0.010;     // seconds
    double frame_window = 0.060;  // seconds

    void validate(double sample_rate) const {
        if (!(sample_rate > 0)) throw ConfigError("sample rate must be positive");
        if (n_channels < 1) throw ConfigError("filterbank needs at least one channel");
        if (!(q_factor > 0)) throw ConfigError("q factor must be positive");
        if (!(f_low > 0)) throw ConfigError("f_low must be positive");
        if (!(f_low < f_high)) throw ConfigError("f_low must be below f_high");
        if (!(f_high < sample_rate / 2)) throw ConfigError("f_high must be below the Nyquist frequency");
        if (!(frame_hop > 0)) throw ConfigError("frame hop must be positive");
        if (!(frame_window >= frame_hop)) throw ConfigError("frame window must be at least one hop");
    }

    std::size_t hop_samples(double sample_rate) const {
        return static_cast<std::size_t>(std::llround(frame_hop * sample_rate));
    }
    std::size_t window_samples(double sample_rate) const {
        return static_cast<std::size_t>(std::llround(frame_window * sample_rate));
    }
};

// Second-order band-pass section, a0 normalised to 1.
struct BandPassFilter {
    double b0 = 0, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
    double center_hz = 0;
    double bandwidth_hz = 0;  // nominal -3 dB width, center / Q

    double magnitude(double freq_hz, double sample_rate) const {
        const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / sample_rate);
        const std::complex<double> z2 = z1 * z1;
        return std::abs((b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2));
    }
};

// Per-frame filterbank energies, frame-major: frame t occupies
// data[t * dim, (t + 1) * dim).
struct BaseFeatureSeq {
    std::size_t dim = 0;
    std::vector<double> data;
    double hop_seconds = 0;
    double window_seconds = 0;

    std::size_t frame_count() const { return dim == 0 ? 0 : data.size() / dim; }
    std::span<const double> frame(std::size_t t) const { return {data.data() + t * dim, dim}; }
    std::span<double> frame(std::size_t t) { return {data.data() + t * dim, dim}; }
};

// Centers are geometric between f_low and f_high; a single channel sits at f_low.
inline std::vector<BandPassFilter> design_filterbank(const FilterbankConfig& config, double sample_rate) {
    config.validate(sample_rate);
    std::vector<BandPassFilter> bank;
    bank.reserve(config.n_channels);
    const double ratio = config.f_high / config.f_low;
    for (std::size_t k = 0; k < config.n_channels; ++k) {
        const double center = config.n_channels == 1
            ? config.f_low
            : config.f_low * std::pow(ratio, static_cast<double>(k) / static_cast<double>(config.n_channels - 1));
        // Constant 0 dB peak-gain resonator (bilinear transform of s/Q / (s^2 + s/Q + 1)).
        const double w0 = 2.0 * std::numbers::pi * center / sample_rate;
        const double alpha = std::sin(w0) / (2.0 * config.q_factor);
        const double a0 = 1.0 + alpha;
        BandPassFilter f;
        f.b0 = alpha / a0;
        f.b1 = 0.0;
        f.b2 = -alpha / a0;
        f.a1 = -2.0 * std::cos(w0) / a0;
        f.a2 = (1.0 - alpha) / a0;
        f.center_hz = center;
        f.bandwidth_hz = center / config.q_factor;
        bank.push_back(f);
    }
    return bank;
}

// Number of whole analysis windows that fit, stepping by one hop.
inline std::size_t frame_count_for(std::size_t n_samples, std::size_t hop, std::size_t window) {
    if (n_samples < window || hop == 0) return 0;
    return (n_samples - window) / hop + 1;
}

// Feature t is the per-channel mean squared filter output over the window
// starting at sample t * hop. Filters run continuously from a zero state.
inline BaseFeatureSeq extract_base_features(const PcmSignal& signal, const FilterbankConfig& config) {
    const auto bank = design_filterbank(config, signal.sample_rate);
    const std::size_t hop = config.hop_samples(signal.sample_rate);
    const std::size_t window = config.window_samples(signal.sample_rate);
    if (hop == 0 || window < hop) throw ConfigError("hop/window shorter than one sample");
    const std::size_t frames = frame_count_for(signal.samples.size(), hop, window);
    if (frames == 0) throw RangeError("signal shorter than one analysis window");

    // Energies are accumulated per chunk of gcd(hop, window) samples so that
    // overlapping windows reuse exact partial sums.
    const std::size_t chunk = std::gcd(hop, window);
    const std::size_t chunks_per_hop = hop / chunk;
    const std::size_t chunks_per_window = window / chunk;
    const std::size_t n_chunks = (frames - 1) * chunks_per_hop + chunks_per_window;

    BaseFeatureSeq out;
    out.dim = bank.size();
    out.data.assign(frames * out.dim, 0.0);
    out.hop_seconds = static_cast<double>(hop) / signal.sample_rate;
    out.window_seconds = static_cast<double>(window) / signal.sample_rate;

    std::vector<double> chunk_energy(n_chunks);
    for (std::size_t ch = 0; ch < bank.size(); ++ch) {
        const BandPassFilter& f = bank[ch];
        double s1 = 0.0, s2 = 0.0;  // transposed direct form II state
        for (std::size_t c = 0; c < n_chunks; ++c) {
            double acc = 0.0;
            const std::size_t base = c * chunk;
            for (std::size_t i = 0; i < chunk; ++i) {
                const double x = signal.samples[base + i];
                const double y = f.b0 * x + s1;
                s1 = f.b1 * x - f.a1 * y + s2;
                s2 = f.b2 * x - f.a2 * y;
                acc += y * y;
            }
            chunk_energy[c] = acc;
        }
        for (std::size_t t = 0; t < frames; ++t) {
            double e = 0.0;
            const std::size_t first = t * chunks_per_hop;
            for (std::size_t c = 0; c < chunks_per_window; ++c) e += chunk_energy[first + c];
            out.data[t * out.dim + ch] = e / static_cast<double>(window);
        }
    }
    return out;
}

// RIFF/WAVE PCM 16-bit, mono or stereo (stereo is averaged to mono).
inline PcmSignal decode_wav_bytes(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (bytes.size() < 12) throw FormatError("not a RIFF/WAVE file");
    if (r.get_string(4) != "RIFF") throw FormatError("not a RIFF/WAVE file");
    (void)r.get<std::uint32_t>();
    if (r.get_string(4) != "WAVE") throw FormatError("not a RIFF/WAVE file");

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    while (r.remaining() >= 8) {
        const std::string id = r.get_string(4);
        const std::uint32_t size = r.get<std::uint32_t>();
        if (id == "fmt ") {
            if (size < 16 || r.remaining() < size) throw FormatError("truncated fmt chunk");
            format = r.get<std::uint16_t>();
            channels = r.get<std::uint16_t>();
            rate = r.get<std::uint32_t>();
            (void)r.get<std::uint32_t>();  // byte rate
            (void)r.get<std::uint16_t>();  // block align
            bits = r.get<std::uint16_t>();
            std::size_t consumed = 16;
            if (format == 0xFFFE && size >= 40) {
                (void)r.get<std::uint16_t>();  // cbSize
                (void)r.get<std::uint16_t>();  // valid bits
                (void)r.get<std::uint32_t>();  // channel mask
                format = r.get<std::uint16_t>();  // leading bytes of the subformat GUID
                consumed += 10;
            }
            (void)r.get_string(size - consumed + (size & 1u));
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw FormatError("data chunk before fmt chunk");
            if (format != 1) throw DecodeError("unsupported WAV codec (only integer PCM is handled)");
            if (bits != 16) throw DecodeError("unsupported WAV sample width: " + std::to_string(bits) + " bits");
            if (channels != 1 && channels != 2) throw DecodeError("unsupported channel count: " + std::to_string(channels));
            if (rate == 0) throw FormatError("zero sample rate");
            if (r.remaining() < size) throw FormatError("truncated data chunk");
            const std::size_t frame_bytes = 2u * channels;
            const std::size_t n = size / frame_bytes;
            PcmSignal sig;
            sig.sample_rate = rate;
            sig.samples.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                if (channels == 1) {
                    sig.samples[i] = r.get<std::int16_t>() / 32768.0;
                } else {
                    const double left = r.get<std::int16_t>() / 32768.0;
                    const double right = r.get<std::int16_t>() / 32768.0;
                    sig.samples[i] = 0.5 * (left + right);
                }
            }
            return sig;
        } else {
            if (r.remaining() < size) throw FormatError("truncated chunk '" + id + "'");
            (void)r.get_string(size + ((size & 1u) && r.remaining() > size ? 1 : 0));
        }
    }
    throw FormatError("WAV file has no data chunk");
}

inline PcmSignal decode_wav(const std::filesystem::path& path) {
    return decode_wav_bytes(read_file_bytes(path));
}

inline std::int16_t to_pcm16(double x) {
    const double scaled = std::round(x * 32768.0);
    if (scaled > 32767.0) return 32767;
    if (scaled < -32768.0) return -32768;
    return static_cast<std::int16_t>(scaled);
}

// Mono 16-bit PCM.
inline std::vector<std::uint8_t> encode_wav(const PcmSignal& signal) {
    const auto rate = static_cast<std::uint32_t>(std::llround(signal.sample_rate));
    const auto data_bytes = static_cast<std::uint32_t>(signal.samples.size() * 2);
    ByteWriter w;
    w.put_bytes("RIFF");
    w.put<std::uint32_t>(36 + data_bytes);
    w.put_bytes("WAVE");
    w.put_bytes("fmt ");
    w.put<std::uint32_t>(16);
    w.put<std::uint16_t>(1);
    w.put<std::uint16_t>(1);
    w.put<std::uint32_t>(rate);
    w.put<std::uint32_t>(rate * 2);
    w.put<std::uint16_t>(2);
    w.put<std::uint16_t>(16);
    w.put_bytes("data");
    w.put<std::uint32_t>(data_bytes);
    for (double x : signal.samples) w.put<std::int16_t>(to_pcm16(x));
    return std::move(w.bytes());
}

inline void write_wav(const std::filesystem::path& path, const PcmSignal& signal) {
    write_file_bytes(path, encode_wav(signal));
}

} // namespace plsearch
