#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "plsearch/binary.hpp"
#include "plsearch/dynseg.hpp"
#include "plsearch/error.hpp"
#include "plsearch/histogram.hpp"
#include "plsearch/pla.hpp"
#include "plsearch/sampling.hpp"

namespace plsearch {

inline constexpr std::uint32_t kIndexVersion = 1;
inline constexpr std::size_t kAnchorStride = 4096;

struct IndexParams {
    std::size_t window = 1500;
    double sigma = 0.9;
    std::size_t segments = 1000;
    std::size_t delta = 500;
    std::size_t block = kDefaultBlockLength;
    SegmentationMethod method = SegmentationMethod::coarse;

    void validate() const {
        if (window == 0) throw ConfigError("window must be at least one frame");
        if (!(sigma > 0.0 && sigma <= 1.0)) throw ConfigError("sigma must lie in (0, 1]");
        if (segments == 0) throw ConfigError("need at least one segment");
        if (block == 0) throw ConfigError("block length must be at least 1");
        if (window > UINT32_MAX || segments > UINT32_MAX || delta > UINT32_MAX || block > UINT32_MAX) {
            throw ConfigError("index parameter exceeds 32 bits");
        }
    }
    bool operator==(const IndexParams&) const = default;
};

struct BuildStats {
    std::size_t positions = 0;
    std::size_t segments = 0;
    SegmentationMethod method = SegmentationMethod::none;
    std::size_t probes = 0;              // dimension evaluations spent by the boundary search
    double initial_objective = 0.0;      // length-weighted mean dimension of the equi-partition
    double objective = 0.0;              // same for the chosen boundaries
    double mean_dim = 0.0;               // length-weighted mean dimension of the fitted segments
    std::size_t max_dim = 0;
    std::size_t blocks = 0;
    std::size_t compressed_values = 0;
    double seconds_moments = 0.0;
    double seconds_segmentation = 0.0;
    double seconds_fit = 0.0;
    double seconds_compress = 0.0;
    double seconds_blocks = 0.0;
};

// The persisted index plus derived data (compressed track, anchor histograms)
// rebuilt after building or loading.
struct PLIndex {
    IndexParams params;
    std::size_t bins = 0;
    std::uint64_t codebook_hash = 0;
    CodewordSeq codes;
    std::vector<Segment> segments;
    std::vector<Block> blocks;

    CompressedTrack track;
    std::vector<Histogram> anchors;

    std::size_t positions() const { return codes.size() - params.window + 1; }
    std::size_t window() const { return params.window; }

    void prepare(std::size_t threads = 1) {
        track = CompressedTrack(codes, params.window, segments, threads);
        anchors.clear();
        const std::size_t p = positions();
        Histogram h = histogram_at(codes, 0, params.window);
        for (std::size_t t = 0; t < p; ++t) {
            if (t % kAnchorStride == 0) anchors.push_back(h);
            if (t + 1 < p) slide_in_place(h, codes.codes[t], codes.codes[t + params.window]);
        }
    }
};

namespace detail {

inline bool same_bits(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::equal(a.data(), a.data() + a.size(), b.data(), [](double x, double y) {
               return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
           });
}

inline bool same_bits(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
               return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
           });
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

// Field-exact comparison of everything that is persisted.
inline bool persisted_equal(const PLIndex& a, const PLIndex& b) {
    if (!(a.params == b.params) || a.bins != b.bins || a.codebook_hash != b.codebook_hash || !(a.codes == b.codes)) {
        return false;
    }
    if (a.segments.size() != b.segments.size() || a.blocks.size() != b.blocks.size()) return false;
    for (std::size_t j = 0; j < a.segments.size(); ++j) {
        const Segment &x = a.segments[j], &y = b.segments[j];
        if (x.start != y.start || x.end != y.end || !detail::same_bits(x.mean, y.mean) ||
            !detail::same_bits(x.basis, y.basis)) {
            return false;
        }
    }
    for (std::size_t i = 0; i < a.blocks.size(); ++i) {
        const Block &x = a.blocks[i], &y = b.blocks[i];
        if (x.start != y.start || x.length != y.length || x.segment != y.segment ||
            std::bit_cast<std::uint64_t>(x.radius) != std::bit_cast<std::uint64_t>(y.radius) ||
            !detail::same_bits(x.representative, y.representative)) {
            return false;
        }
    }
    return true;
}

// Checks every structural invariant of a prepared index; throws InvariantError.
inline void validate_index(const PLIndex& idx) {
    auto fail = [](const std::string& what) { throw InvariantError("index invariant violated: " + what); };
    const std::size_t n = idx.bins;
    const std::size_t w = idx.params.window;
    if (n == 0 || idx.codes.alphabet_size != n) fail("codeword alphabet does not match bin count");
    if (w == 0 || idx.codes.size() < w) fail("stored stream shorter than the window");
    for (auto c : idx.codes.codes) {
        if (c >= n) fail("codeword " + std::to_string(c) + " outside the alphabet");
    }
    const std::size_t p = idx.positions();
    if (idx.segments.empty() || idx.segments.size() != idx.params.segments) fail("segment count mismatch");
    std::size_t expect = 0;
    for (std::size_t j = 0; j < idx.segments.size(); ++j) {
        const Segment& s = idx.segments[j];
        if (s.start != expect || s.end <= s.start) fail("segments do not tile the positions (segment " + std::to_string(j) + ")");
        expect = s.end;
        if (s.bins() != n || static_cast<std::size_t>(s.basis.rows()) != n) fail("segment " + std::to_string(j) + " has wrong bin count");
        if (s.dim() == 0 || s.dim() > n) fail("segment " + std::to_string(j) + " has invalid dimension");
        if (!s.mean.allFinite() || !s.basis.allFinite()) fail("segment " + std::to_string(j) + " has non-finite values");
        const Eigen::MatrixXd gram = s.basis.transpose() * s.basis;
        const double err = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
        if (err > 1e-9) fail("segment " + std::to_string(j) + " basis is not orthonormal");
    }
    if (expect != p) fail("segments do not cover every position");

    if (idx.track.size() != p) fail("derived compressed track is missing");
    std::size_t next = 0;
    for (std::size_t i = 0; i < idx.blocks.size(); ++i) {
        const Block& b = idx.blocks[i];
        if (b.start != next || b.length == 0 || b.length > idx.params.block) fail("blocks do not tile the positions");
        if (b.segment >= idx.segments.size()) fail("block references a missing segment");
        const Segment& s = idx.segments[b.segment];
        if (b.start < s.start || b.end() > s.end) fail("block spans a segment boundary");
        if ((b.start - s.start) % idx.params.block != 0) fail("block does not start on the segment's grid");
        if (b.representative.size() != s.dim() + 1) fail("block representative has wrong dimension");
        if (!(b.radius >= 0.0) || !std::isfinite(b.radius)) fail("block radius invalid");
        const auto rep = idx.track.coords(b.start);
        for (std::size_t k = 0; k < rep.size(); ++k) {
            if (std::abs(rep[k] - b.representative[k]) > 1e-9 * (1.0 + std::abs(rep[k]))) {
                fail("block representative differs from the compressed feature at its start");
            }
        }
        for (std::size_t t = b.start + 1; t < b.end(); ++t) {
            if (coordinate_distance(idx.track.coords(t), b.representative) > b.radius + 1e-9 * (1.0 + b.radius)) {
                fail("block radius does not cover member " + std::to_string(t));
            }
        }
        next = b.end();
    }
    if (next != p) fail("blocks do not cover every position");
}

// Histogram sweep, boundary search, per-segment PCA, compression of every
// position and block sampling.
inline PLIndex build_index(const CodewordSeq& stored, const IndexParams& params, std::uint64_t codebook_hash = 0,
                           std::size_t threads = 1, BuildStats* stats = nullptr) {
    params.validate();
    if (stored.alphabet_size == 0 || stored.alphabet_size > 65536) throw ConfigError("alphabet size out of range");
    if (stored.size() < params.window) {
        throw RangeError("stored stream of " + std::to_string(stored.size()) + " frames is shorter than the window of " +
                         std::to_string(params.window));
    }
    threads = std::max<std::size_t>(1, threads);
    BuildStats st;
    PLIndex idx;
    idx.params = params;
    idx.bins = stored.alphabet_size;
    idx.codebook_hash = codebook_hash;
    idx.codes = stored;
    const std::size_t p = idx.positions();
    if (params.segments > p) {
        throw ConfigError(std::to_string(params.segments) + " segments requested for " + std::to_string(p) + " positions");
    }

    auto t0 = std::chrono::steady_clock::now();
    const MomentTable table(stored, params.window);
    st.seconds_moments = detail::seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const DimensionOracle oracle = pca_dimension_oracle(table, params.sigma);
    SegmentationResult initial = equi_partition(p, params.segments);
    evaluate_segmentation(initial, oracle);
    const SegmentationResult seg = run_segmentation(params.method, initial, params.delta, oracle);
    st.seconds_segmentation = detail::seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    idx.segments.resize(params.segments);
    auto fit = [&](std::size_t j) {
        const std::size_t a = seg.boundaries[j], b = seg.boundaries[j + 1];
        idx.segments[j] = fit_segment_from_moments(table.range(a, b), a, b, params.sigma);
    };
    const std::size_t fit_threads = std::min(threads, params.segments);
    if (fit_threads == 1) {
        for (std::size_t j = 0; j < params.segments; ++j) fit(j);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t k = 0; k < fit_threads; ++k) {
            pool.emplace_back([&, k] {
                for (std::size_t j = k; j < params.segments; j += fit_threads) fit(j);
            });
        }
    }
    st.seconds_fit = detail::seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    idx.prepare(threads);
    st.seconds_compress = detail::seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    idx.blocks = build_blocks(idx.track, params.block);
    st.seconds_blocks = detail::seconds_since(t0);

    st.positions = p;
    st.segments = params.segments;
    st.method = params.method;
    st.probes = seg.probes;
    st.initial_objective = initial.objective;
    st.objective = seg.objective;
    double weighted = 0.0;
    for (const auto& s : idx.segments) {
        weighted += static_cast<double>(s.length() * s.dim());
        st.max_dim = std::max(st.max_dim, s.dim());
    }
    st.mean_dim = weighted / static_cast<double>(p);
    st.blocks = idx.blocks.size();
    st.compressed_values = idx.track.stored_values();
    if (stats) *stats = st;
    return idx;
}

inline std::vector<std::uint8_t> serialize_index(const PLIndex& idx) {
    ByteWriter w;
    w.put_bytes("PLAI");
    w.put<std::uint32_t>(kIndexVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(idx.params.window));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(idx.bins));
    w.put<double>(idx.params.sigma);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(idx.params.block));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(idx.params.delta));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(idx.params.segments));
    w.put<std::uint64_t>(idx.codes.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(idx.params.method));
    w.put<std::uint64_t>(idx.codebook_hash);
    const bool narrow = idx.bins <= 256;
    for (auto c : idx.codes.codes) {
        if (narrow) {
            w.put<std::uint8_t>(static_cast<std::uint8_t>(c));
        } else {
            w.put<std::uint16_t>(c);
        }
    }
    for (const Segment& s : idx.segments) {
        w.put<std::uint64_t>(s.start);
        w.put<std::uint64_t>(s.end);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(s.dim()));
        w.put_f64s({s.mean.data(), static_cast<std::size_t>(s.mean.size())});
        w.put_f64s({s.basis.data(), static_cast<std::size_t>(s.basis.size())});
    }
    w.put<std::uint64_t>(idx.blocks.size());
    for (const Block& b : idx.blocks) {
        w.put<std::uint64_t>(b.start);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(b.length));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(b.segment));
        w.put<double>(b.radius);
        w.put_f64s(b.representative);
    }
    w.put<std::uint64_t>(crc64(w.bytes()));
    return std::move(w.bytes());
}

// Checks, in order: magic, version, checksum (a truncated file fails here),
// structure, then the index invariants on the rebuilt derived data.
inline PLIndex deserialize_index(std::span<const std::uint8_t> bytes, std::size_t threads = 1) {
    if (bytes.size() < 4 || std::string(bytes.begin(), bytes.begin() + 4) != "PLAI") {
        throw BadMagicError("not an index file (bad magic)");
    }
    if (bytes.size() < 8) throw ChecksumError("index file truncated");
    {
        ByteReader r(bytes.subspan(4, 4));
        const auto version = r.get<std::uint32_t>();
        if (version != kIndexVersion) {
            throw VersionError("unsupported index version " + std::to_string(version) + " (expected " +
                               std::to_string(kIndexVersion) + ")");
        }
    }
    if (bytes.size() < 16) throw ChecksumError("index file truncated");
    const auto body = bytes.first(bytes.size() - 8);
    ByteReader tail(bytes.last(8));
    if (tail.get<std::uint64_t>() != crc64(body)) throw ChecksumError("index checksum mismatch (corrupt or truncated)");

    ByteReader r(body);
    r.get_string(8);
    PLIndex idx;
    idx.params.window = r.get<std::uint32_t>();
    idx.bins = r.get<std::uint32_t>();
    idx.params.sigma = r.get<double>();
    idx.params.block = r.get<std::uint32_t>();
    idx.params.delta = r.get<std::uint32_t>();
    idx.params.segments = r.get<std::uint32_t>();
    const auto length = r.get<std::uint64_t>();
    const auto method = r.get<std::uint8_t>();
    if (method > static_cast<std::uint8_t>(SegmentationMethod::dp)) throw FormatError("unknown segmentation method tag");
    idx.params.method = static_cast<SegmentationMethod>(method);
    idx.codebook_hash = r.get<std::uint64_t>();
    if (idx.bins == 0 || idx.bins > 65536) throw FormatError("bin count out of range");
    if (idx.params.window == 0 || length < idx.params.window) throw FormatError("stored length shorter than the window");
    if (idx.params.segments == 0 || idx.params.block == 0) throw FormatError("zero segment count or block length");

    const bool narrow = idx.bins <= 256;
    if (r.remaining() / (narrow ? 1 : 2) < length) throw FormatError("codeword array truncated");
    idx.codes.alphabet_size = idx.bins;
    idx.codes.codes.resize(length);
    for (auto& c : idx.codes.codes) c = narrow ? r.get<std::uint8_t>() : r.get<std::uint16_t>();

    const std::size_t n = idx.bins;
    if (r.remaining() / (20 + 8 * n) < idx.params.segments) throw FormatError("segment table truncated");
    idx.segments.resize(idx.params.segments);
    for (Segment& s : idx.segments) {
        s.start = r.get<std::uint64_t>();
        s.end = r.get<std::uint64_t>();
        const auto dim = r.get<std::uint32_t>();
        if (dim == 0 || dim > n) throw FormatError("segment dimension out of range");
        s.sigma = idx.params.sigma;
        s.mean.resize(static_cast<Eigen::Index>(n));
        r.get_f64s({s.mean.data(), n});
        if (r.remaining() / 8 / n < dim) throw FormatError("segment basis truncated");
        s.basis.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
        r.get_f64s({s.basis.data(), n * dim});
    }
    const auto n_blocks = r.get<std::uint64_t>();
    if (r.remaining() / 32 < n_blocks) throw FormatError("block table truncated");
    idx.blocks.resize(n_blocks);
    for (Block& b : idx.blocks) {
        b.start = r.get<std::uint64_t>();
        b.length = r.get<std::uint32_t>();
        b.segment = r.get<std::uint32_t>();
        b.radius = r.get<double>();
        if (b.segment >= idx.segments.size()) throw FormatError("block references a missing segment");
        b.representative.resize(idx.segments[b.segment].dim() + 1);
        r.get_f64s(b.representative);
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after the block table");

    // Tiling has to hold before the compressed track can be rebuilt.
    std::size_t expect = 0;
    for (const Segment& s : idx.segments) {
        if (s.start != expect || s.end <= s.start) throw InvariantError("index invariant violated: segments do not tile");
        expect = s.end;
    }
    if (expect != idx.positions()) throw InvariantError("index invariant violated: segments do not cover every position");
    for (auto c : idx.codes.codes) {
        if (c >= n) throw InvariantError("index invariant violated: codeword outside the alphabet");
    }
    idx.prepare(threads);
    validate_index(idx);
    return idx;
}

inline void save_index(const PLIndex& idx, const std::filesystem::path& path) {
    write_file_bytes(path, serialize_index(idx));
}

inline PLIndex load_index(const std::filesystem::path& path, std::size_t threads = 1) {
    return deserialize_index(read_file_bytes(path), threads);
}

} // namespace plsearch
