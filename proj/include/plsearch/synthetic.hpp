#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "plsearch/error.hpp"
#include "plsearch/signal_features.hpp"
#include "plsearch/vq.hpp"

namespace plsearch {

// Portable random source: the engine is fully specified by the standard, the
// conversions below are ours, so streams are identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(eng_() % n); }
    std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
    bool chance(double p) { return uniform() < p; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    double exponential() {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return -std::log(u);
    }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Piecewise-stationary codeword stream: each regime draws from a random
// support of a few codewords with skewed weights, and repeats the previous
// codeword with some probability so neighbouring frames correlate.
struct StreamSpec {
    std::size_t length = 360000;
    std::size_t alphabet = 128;
    std::size_t min_support = 8;
    std::size_t max_support = 40;
    std::size_t min_dwell = 200;
    std::size_t max_dwell = 3000;
    double stickiness = 0.6;

    void validate() const {
        if (alphabet == 0 || alphabet > 65536) throw ConfigError("alphabet size out of range");
        if (min_support == 0 || min_support > max_support || max_support > alphabet) {
            throw ConfigError("regime support sizes must satisfy 1 <= min <= max <= alphabet");
        }
        if (min_dwell == 0 || min_dwell > max_dwell) throw ConfigError("dwell range must satisfy 1 <= min <= max");
        if (!(stickiness >= 0.0 && stickiness < 1.0)) throw ConfigError("stickiness must lie in [0, 1)");
    }
};

struct Regime {
    std::vector<std::uint16_t> support;
    std::vector<double> cumulative;  // normalised, last entry 1

    std::uint16_t draw(Rng& rng) const {
        const double u = rng.uniform();
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        const auto k = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), support.size() - 1);
        return support[k];
    }
};

inline Regime random_regime(const StreamSpec& spec, Rng& rng) {
    Regime r;
    const std::size_t k = rng.between(spec.min_support, spec.max_support);
    std::vector<std::uint16_t> all(spec.alphabet);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint16_t>(i);
    for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.below(all.size() - i)]);
    r.support.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        total += rng.exponential();
        r.cumulative.push_back(total);
    }
    for (double& c : r.cumulative) c /= total;
    return r;
}

inline CodewordSeq synth_codeword_stream(const StreamSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    CodewordSeq seq;
    seq.alphabet_size = spec.alphabet;
    seq.codes.reserve(spec.length);
    while (seq.codes.size() < spec.length) {
        const Regime regime = random_regime(spec, rng);
        const std::size_t dwell = std::min(rng.between(spec.min_dwell, spec.max_dwell), spec.length - seq.codes.size());
        for (std::size_t i = 0; i < dwell; ++i) {
            if (!seq.codes.empty() && i > 0 && rng.chance(spec.stickiness)) {
                seq.codes.push_back(seq.codes.back());
            } else {
                seq.codes.push_back(regime.draw(rng));
            }
        }
    }
    return seq;
}

// Copies clip into stored at frame `at`, replacing each frame with a random
// codeword with probability corrupt.
inline void plant_clip(CodewordSeq& stored, const CodewordSeq& clip, std::size_t at, double corrupt, Rng& rng) {
    if (clip.alphabet_size != stored.alphabet_size) throw ShapeError("clip and stream alphabets differ");
    if (at > stored.size() || clip.size() > stored.size() - at) throw RangeError("planted clip exceeds the stream");
    for (std::size_t i = 0; i < clip.size(); ++i) {
        stored.codes[at + i] =
            corrupt > 0.0 && rng.chance(corrupt) ? static_cast<std::uint16_t>(rng.below(stored.alphabet_size)) : clip.codes[i];
    }
}

// Audio corpus: a stored recording assembled from tonal textures, query
// clips built from a separate texture pool, and copies of the queries planted
// at known positions.
struct AudioGenSpec {
    double sample_rate = 32000.0;
    double stored_seconds = 3600.0;
    std::size_t queries = 20;
    double query_seconds = 15.0;
    std::size_t copies_per_query = 1;
    double snr_db = std::numeric_limits<double>::infinity();  // noise added to the stored signal
    double hop_seconds = 0.010;
    double guard_seconds = 1.0;  // silence before every planted copy
    std::size_t textures = 24;

    void validate() const {
        if (!(sample_rate >= 8000.0)) throw ConfigError("sample rate must be at least 8000 Hz");
        if (!(stored_seconds > 0.0) || !(query_seconds > 0.0)) throw ConfigError("durations must be positive");
        if (!(hop_seconds > 0.0) || !(guard_seconds >= 0.0)) throw ConfigError("hop and guard must be positive");
        if (textures == 0) throw ConfigError("need at least one texture");
        const double needed = static_cast<double>(queries * copies_per_query) * (query_seconds + guard_seconds + 1.0);
        if (needed > stored_seconds) throw ConfigError("stored recording too short for the planted copies");
        if (std::isnan(snr_db)) throw ConfigError("snr must be a number");
    }
};

struct PlantedCopy {
    std::size_t query = 0;
    std::size_t start_sample = 0;
    std::size_t start_frame = 0;
    double start_seconds = 0.0;
};

struct AudioCorpus {
    PcmSignal stored;
    std::vector<PcmSignal> queries;
    std::vector<PlantedCopy> truth;
};

namespace detail {

struct Partial {
    double freq, amp, am_rate, am_depth, am_phase;
};

struct Texture {
    std::vector<Partial> partials;
    double noise;
};

inline Texture random_texture(Rng& rng) {
    Texture t;
    const std::size_t k = rng.between(2, 5);
    for (std::size_t i = 0; i < k; ++i) {
        Partial p;
        p.freq = 120.0 * std::pow(6000.0 / 120.0, rng.uniform());
        p.amp = rng.uniform(0.03, 0.15);
        p.am_rate = rng.uniform(0.2, 4.0);
        p.am_depth = rng.uniform(0.0, 0.8);
        p.am_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        t.partials.push_back(p);
    }
    t.noise = rng.uniform(0.002, 0.02);
    return t;
}

// Renders `count` samples of a texture starting at local time zero.
inline void render_texture(const Texture& tex, double sr, std::size_t count, Rng& rng, std::vector<double>& out) {
    const double two_pi = 2.0 * std::numbers::pi;
    std::vector<double> phase(tex.partials.size());
    for (double& p : phase) p = rng.uniform(0.0, two_pi);
    for (std::size_t i = 0; i < count; ++i) {
        const double time = static_cast<double>(i) / sr;
        double x = 0.0;
        for (std::size_t k = 0; k < tex.partials.size(); ++k) {
            const Partial& p = tex.partials[k];
            const double env = 1.0 - p.am_depth * 0.5 * (1.0 + std::sin(two_pi * p.am_rate * time + p.am_phase));
            x += p.amp * env * std::sin(two_pi * p.freq * time + phase[k]);
        }
        out.push_back(x + tex.noise * rng.normal());
    }
}

inline void render_chunks(const std::vector<Texture>& pool, double sr, std::size_t count, Rng& rng,
                          std::vector<double>& out) {
    const std::size_t target = out.size() + count;
    while (out.size() < target) {
        const auto len = static_cast<std::size_t>(rng.uniform(1.0, 8.0) * sr);
        render_texture(pool[rng.below(pool.size())], sr, std::min(len, target - out.size()), rng, out);
    }
}

} // namespace detail

inline AudioCorpus generate_corpus(const AudioGenSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const double sr = spec.sample_rate;
    const auto hop = static_cast<std::size_t>(std::llround(spec.hop_seconds * sr));
    const auto guard = static_cast<std::size_t>(std::llround(spec.guard_seconds * sr));
    const auto query_len = static_cast<std::size_t>(std::llround(spec.query_seconds * sr));
    const auto stored_len = static_cast<std::size_t>(std::llround(spec.stored_seconds * sr));

    std::vector<detail::Texture> stored_pool, query_pool;
    for (std::size_t i = 0; i < spec.textures; ++i) stored_pool.push_back(detail::random_texture(rng));
    for (std::size_t i = 0; i < std::max<std::size_t>(spec.textures, 2 * spec.queries); ++i) {
        query_pool.push_back(detail::random_texture(rng));
    }

    AudioCorpus corpus;
    corpus.queries.resize(spec.queries);
    for (auto& q : corpus.queries) {
        q.sample_rate = sr;
        q.samples.reserve(query_len);
        detail::render_chunks(query_pool, sr, query_len, rng, q.samples);
    }

    corpus.stored.sample_rate = sr;
    corpus.stored.samples.reserve(stored_len);
    detail::render_chunks(stored_pool, sr, stored_len, rng, corpus.stored.samples);

    // One copy per slot; slots split the recording evenly, copies sit at a
    // random hop-aligned offset inside their slot after the silent guard.
    const std::size_t n_copies = spec.queries * spec.copies_per_query;
    std::vector<std::size_t> order(n_copies);
    for (std::size_t i = 0; i < n_copies; ++i) order[i] = i % std::max<std::size_t>(spec.queries, 1);
    for (std::size_t i = n_copies; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const std::size_t slot = n_copies == 0 ? 0 : stored_len / n_copies;
    for (std::size_t s = 0; s < n_copies; ++s) {
        const std::size_t room = slot - guard - query_len;
        const std::size_t first = (s * slot + guard + hop - 1) / hop * hop;
        const std::size_t start = first + rng.below((room - hop) / hop + 1) * hop;
        std::fill(corpus.stored.samples.begin() + static_cast<std::ptrdiff_t>(start - guard),
                  corpus.stored.samples.begin() + static_cast<std::ptrdiff_t>(start), 0.0);
        const auto& q = corpus.queries[order[s]].samples;
        std::copy(q.begin(), q.end(), corpus.stored.samples.begin() + static_cast<std::ptrdiff_t>(start));
        corpus.truth.push_back({order[s], start, start / hop, static_cast<double>(start) / sr});
    }

    if (std::isfinite(spec.snr_db)) {
        double power = 0.0;
        for (double x : corpus.stored.samples) power += x * x;
        power /= static_cast<double>(corpus.stored.samples.size());
        const double sd = std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0));
        for (double& x : corpus.stored.samples) x += sd * rng.normal();
    }
    std::sort(corpus.truth.begin(), corpus.truth.end(),
              [](const PlantedCopy& a, const PlantedCopy& b) { return a.start_sample < b.start_sample; });
    return corpus;
}

} // namespace plsearch
