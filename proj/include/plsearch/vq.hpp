#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <set>
#include <span>
#include <thread>
#include <vector>

#include "plsearch/binary.hpp"
#include "plsearch/error.hpp"
#include "plsearch/signal_features.hpp"

namespace plsearch {

struct Codebook {
    std::size_t dim = 0;
    std::vector<double> centroids;  // size() * dim, row-major

    std::size_t size() const { return dim == 0 ? 0 : centroids.size() / dim; }
    std::span<const double> centroid(std::size_t i) const { return {centroids.data() + i * dim, dim}; }
    std::span<double> centroid(std::size_t i) { return {centroids.data() + i * dim, dim}; }

    bool operator==(const Codebook&) const = default;
};

// Codeword indices of a quantised feature stream, all below alphabet_size.
struct CodewordSeq {
    std::vector<std::uint16_t> codes;
    std::size_t alphabet_size = 0;

    std::size_t size() const { return codes.size(); }
    bool operator==(const CodewordSeq&) const = default;
};

struct LbgOptions {
    std::size_t target_size = 128;
    double epsilon = 1e-3;  // split offset, in units of per-dimension standard deviation
    std::size_t max_iters = 100;
    double tol = 1e-4;
    std::size_t threads = 1;
};

// One entry per Lloyd iteration: distortion measured right after assignment.
struct LbgTraceEntry {
    std::size_t codebook_size;
    std::size_t iteration;
    double distortion;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline std::size_t nearest(std::span<const double> f, const Codebook& cb, double* best_out = nullptr) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cb.size(); ++i) {
        const double d = squared_distance(f, cb.centroid(i));
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    if (best_out) *best_out = best_d;
    return best;
}

// Assigns every feature to its nearest centroid; returns mean distortion.
inline double assign_all(const BaseFeatureSeq& features, const Codebook& cb, std::vector<std::uint32_t>& labels,
                         std::vector<double>& dists, std::size_t threads) {
    const std::size_t n = features.frame_count();
    labels.resize(n);
    dists.resize(n);
    auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t t = lo; t < hi; ++t) {
            double d;
            labels[t] = static_cast<std::uint32_t>(nearest(features.frame(t), cb, &d));
            dists[t] = d;
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, n / 4096 + 1));
    if (threads == 1) {
        work(0, n);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t step = (n + threads - 1) / threads;
        for (std::size_t k = 0; k < threads; ++k) {
            const std::size_t lo = k * step, hi = std::min(n, lo + step);
            if (lo < hi) pool.emplace_back(work, lo, hi);
        }
    }
    double total = 0.0;
    for (double d : dists) total += d;
    return total / static_cast<double>(n);
}

inline std::size_t count_distinct(const BaseFeatureSeq& features, std::size_t cap) {
    std::set<std::vector<double>> seen;
    for (std::size_t t = 0; t < features.frame_count() && seen.size() < cap; ++t) {
        auto f = features.frame(t);
        seen.emplace(f.begin(), f.end());
    }
    return seen.size();
}

} // namespace detail

// Nearest centroid by squared Euclidean distance; ties go to the smallest index.
inline std::size_t quantize(std::span<const double> feature, const Codebook& codebook) {
    if (feature.size() != codebook.dim) {
        throw ShapeError("feature dimension " + std::to_string(feature.size()) + " does not match codebook dimension " +
                         std::to_string(codebook.dim));
    }
    if (codebook.size() == 0) throw ConfigError("empty codebook");
    return detail::nearest(feature, codebook);
}

inline CodewordSeq quantize_all(const BaseFeatureSeq& features, const Codebook& codebook) {
    if (features.dim != codebook.dim) throw ShapeError("feature/codebook dimension mismatch");
    if (codebook.size() > 65536) throw ConfigError("codebook larger than 65536 entries");
    CodewordSeq out;
    out.alphabet_size = codebook.size();
    out.codes.resize(features.frame_count());
    for (std::size_t t = 0; t < features.frame_count(); ++t) {
        out.codes[t] = static_cast<std::uint16_t>(quantize(features.frame(t), codebook));
    }
    return out;
}

// Linde-Buzo-Gray: start from the global mean, split every centroid by
// +/- epsilon * stddev, then run Lloyd iterations until the relative drop in
// distortion falls under tol. Empty cells are re-seeded with the member of the
// most populated cell that lies farthest from its centroid.
inline Codebook train_lbg(const BaseFeatureSeq& features, const LbgOptions& opt,
                          std::vector<LbgTraceEntry>* trace = nullptr) {
    if (opt.target_size == 0 || !std::has_single_bit(opt.target_size)) {
        throw ConfigError("codebook size must be a power of two, got " + std::to_string(opt.target_size));
    }
    const std::size_t n = features.frame_count();
    const std::size_t dim = features.dim;
    if (n == 0 || dim == 0) throw TrainingError("no training features");
    if (detail::count_distinct(features, opt.target_size) < opt.target_size) {
        throw TrainingError("fewer distinct feature vectors than the requested codebook size");
    }

    std::vector<double> mean(dim, 0.0), stddev(dim, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        auto f = features.frame(t);
        for (std::size_t k = 0; k < dim; ++k) mean[k] += f[k];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t t = 0; t < n; ++t) {
        auto f = features.frame(t);
        for (std::size_t k = 0; k < dim; ++k) stddev[k] += (f[k] - mean[k]) * (f[k] - mean[k]);
    }
    for (double& s : stddev) s = std::sqrt(s / static_cast<double>(n));

    Codebook cb;
    cb.dim = dim;
    cb.centroids = mean;

    std::vector<std::uint32_t> labels;
    std::vector<double> dists;
    auto lloyd = [&]() {
        const std::size_t size = cb.size();
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t it = 0; it < opt.max_iters; ++it) {
            const double distortion = detail::assign_all(features, cb, labels, dists, opt.threads);
            if (trace) trace->push_back({size, it, distortion});
            if (distortion == 0.0) break;
            if (std::isfinite(prev) && (prev - distortion) / prev < opt.tol) break;
            prev = distortion;

            std::vector<double> sums(size * dim, 0.0);
            std::vector<std::size_t> counts(size, 0);
            for (std::size_t t = 0; t < n; ++t) {
                const std::size_t c = labels[t];
                ++counts[c];
                auto f = features.frame(t);
                for (std::size_t k = 0; k < dim; ++k) sums[c * dim + k] += f[k];
            }
            for (std::size_t c = 0; c < size; ++c) {
                if (counts[c] == 0) continue;
                for (std::size_t k = 0; k < dim; ++k) {
                    cb.centroids[c * dim + k] = sums[c * dim + k] / static_cast<double>(counts[c]);
                }
            }
            for (std::size_t c = 0; c < size; ++c) {
                if (counts[c] != 0) continue;
                const std::size_t donor = static_cast<std::size_t>(
                    std::max_element(counts.begin(), counts.end()) - counts.begin());
                // Distances to the updated centroids; the farthest member of the donor
                // cell seeds the empty one.
                std::size_t pick = n;
                double pick_d = 0.0;
                for (std::size_t t = 0; t < n; ++t) {
                    if (labels[t] != donor) continue;
                    const double d = detail::squared_distance(features.frame(t), cb.centroid(donor));
                    if (d > pick_d) {
                        pick_d = d;
                        pick = t;
                    }
                }
                if (pick == n) {
                    for (std::size_t t = 0; t < n; ++t) {
                        const double d = detail::squared_distance(features.frame(t), cb.centroid(labels[t]));
                        if (d > pick_d) {
                            pick_d = d;
                            pick = t;
                        }
                    }
                }
                if (pick == n) throw TrainingError("cannot re-seed empty cell: all features coincide with centroids");
                auto f = features.frame(pick);
                std::copy(f.begin(), f.end(), cb.centroid(c).begin());
                --counts[labels[pick]];
                labels[pick] = static_cast<std::uint32_t>(c);
                counts[c] = 1;
            }
        }
    };

    lloyd();
    while (cb.size() < opt.target_size) {
        Codebook split;
        split.dim = dim;
        split.centroids.reserve(cb.centroids.size() * 2);
        for (std::size_t c = 0; c < cb.size(); ++c) {
            auto v = cb.centroid(c);
            for (std::size_t k = 0; k < dim; ++k) split.centroids.push_back(v[k] + opt.epsilon * stddev[k]);
        }
        for (std::size_t c = 0; c < cb.size(); ++c) {
            auto v = cb.centroid(c);
            for (std::size_t k = 0; k < dim; ++k) split.centroids.push_back(v[k] - opt.epsilon * stddev[k]);
        }
        cb = std::move(split);
        lloyd();
    }
    return cb;
}

inline double mean_distortion(const BaseFeatureSeq& features, const Codebook& cb) {
    double total = 0.0;
    for (std::size_t t = 0; t < features.frame_count(); ++t) {
        double d;
        detail::nearest(features.frame(t), cb, &d);
        total += d;
    }
    return total / static_cast<double>(features.frame_count());
}

// "TSCB", u32 version, u32 n, u32 dim, then n*dim little-endian f64.
inline constexpr std::uint32_t kCodebookVersion = 1;

inline std::vector<std::uint8_t> serialize_codebook(const Codebook& cb) {
    ByteWriter w;
    w.put_bytes("TSCB");
    w.put<std::uint32_t>(kCodebookVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cb.size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cb.dim));
    w.put_f64s(cb.centroids);
    return std::move(w.bytes());
}

inline Codebook deserialize_codebook(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (bytes.size() < 4 || r.get_string(4) != "TSCB") throw BadMagicError("not a codebook file");
    const auto version = r.get<std::uint32_t>();
    if (version != kCodebookVersion) throw VersionError("unsupported codebook version " + std::to_string(version));
    const auto n = r.get<std::uint32_t>();
    const auto dim = r.get<std::uint32_t>();
    if (n == 0 || dim == 0) throw FormatError("codebook header declares an empty codebook");
    if (r.remaining() != static_cast<std::size_t>(n) * dim * 8) throw FormatError("codebook payload size mismatch");
    Codebook cb;
    cb.dim = dim;
    cb.centroids.resize(static_cast<std::size_t>(n) * dim);
    r.get_f64s(cb.centroids);
    for (double v : cb.centroids) {
        if (!std::isfinite(v)) throw FormatError("codebook contains non-finite values");
    }
    return cb;
}

inline std::uint64_t codebook_hash(const Codebook& cb) { return crc64(serialize_codebook(cb)); }

inline void save_codebook(const Codebook& cb, const std::filesystem::path& path) {
    write_file_bytes(path, serialize_codebook(cb));
}

inline Codebook load_codebook(const std::filesystem::path& path) {
    return deserialize_codebook(read_file_bytes(path));
}

} // namespace plsearch
