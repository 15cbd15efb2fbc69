#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "plsearch/error.hpp"
#include "plsearch/vq.hpp"

namespace plsearch {

// Codeword counts over a W-frame window. Counts are kept as integers so the
// one-frame step of sqrt(2) is exact.
struct Histogram {
    std::vector<std::uint32_t> counts;
    std::size_t window = 0;

    std::size_t bins() const { return counts.size(); }
    bool operator==(const Histogram&) const = default;
};

inline Histogram histogram_at(const CodewordSeq& seq, std::size_t t, std::size_t window) {
    if (window == 0) throw RangeError("window must be at least one frame");
    if (t > seq.size() || window > seq.size() - t) {
        throw RangeError("window [" + std::to_string(t) + ", " + std::to_string(t + window) +
                         ") exceeds sequence of length " + std::to_string(seq.size()));
    }
    Histogram h;
    h.window = window;
    h.counts.assign(seq.alphabet_size, 0);
    for (std::size_t k = t; k < t + window; ++k) {
        const auto c = seq.codes[k];
        if (c >= seq.alphabet_size) throw RangeError("codeword " + std::to_string(c) + " outside the alphabet");
        ++h.counts[c];
    }
    return h;
}

inline void slide_in_place(Histogram& h, std::size_t out_code, std::size_t in_code) {
    if (out_code >= h.bins() || in_code >= h.bins()) throw RangeError("codeword outside histogram bins");
    if (h.counts[out_code] == 0) {
        throw ConsistencyError("cannot remove codeword " + std::to_string(out_code) + " from an empty bin");
    }
    --h.counts[out_code];
    ++h.counts[in_code];
}

inline Histogram slide(Histogram h, std::size_t out_code, std::size_t in_code) {
    slide_in_place(h, out_code, in_code);
    return h;
}

// Exact squared L2 distance between two histograms of equal shape.
inline std::uint64_t squared_distance(const Histogram& a, const Histogram& b) {
    if (a.bins() != b.bins()) throw ShapeError("histogram bin counts differ");
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < a.bins(); ++i) {
        const std::int64_t d = static_cast<std::int64_t>(a.counts[i]) - static_cast<std::int64_t>(b.counts[i]);
        s += static_cast<std::uint64_t>(d * d);
    }
    return s;
}

inline double distance(const Histogram& a, const Histogram& b) {
    return std::sqrt(static_cast<double>(squared_distance(a, b)));
}

} // namespace plsearch
