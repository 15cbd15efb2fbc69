#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "plsearch/error.hpp"
#include "plsearch/pla.hpp"

namespace plsearch {

inline constexpr std::size_t kDefaultBlockLength = 50;

// A run of consecutive compressed features inside one segment, summarised by
// its first member and the largest member distance from it.
struct Block {
    std::size_t start = 0;
    std::size_t length = 0;
    std::size_t segment = 0;
    std::vector<double> representative;  // (z..., delta) of the first member
    double radius = 0.0;

    std::size_t end() const { return start + length; }
    bool operator==(const Block&) const = default;
};

inline double coordinate_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw SegmentMismatchError("compressed features of different dimension");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// Tiles every segment's compressed run with blocks of length a, restarting
// at each segment start; the last block of a segment may be short.
inline std::vector<Block> build_blocks(const CompressedTrack& track, std::size_t a) {
    if (a == 0) throw ConfigError("block length must be at least 1");
    std::vector<Block> blocks;
    for (std::size_t j = 0; j < track.segment_count(); ++j) {
        const std::size_t end = track.segment_end(j);
        for (std::size_t s = track.segment_start(j); s < end; s += a) {
            Block b;
            b.start = s;
            b.length = std::min(a, end - s);
            b.segment = j;
            const auto rep = track.coords(s);
            b.representative.assign(rep.begin(), rep.end());
            for (std::size_t t = s + 1; t < b.end(); ++t) {
                b.radius = std::max(b.radius, coordinate_distance(track.coords(t), rep));
            }
            blocks.push_back(std::move(b));
        }
    }
    return blocks;
}

// Triangle-inequality bound on the compressed distance of every member; may
// be negative.
inline double block_lower_bound(const Block& b, const CompressedFeature& yq) {
    return compressed_distance(b.representative, yq) - b.radius;
}

} // namespace plsearch
