#pragma once

// Naive reference computations used as test oracles. None of them share code
// with the library beyond the plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "plsearch/synthetic.hpp"
#include "plsearch/vq.hpp"

namespace oracle {

using plsearch::CodewordSeq;
using plsearch::Rng;

inline std::vector<double> histogram(const CodewordSeq& s, std::size_t t, std::size_t w) {
    std::vector<double> h(s.alphabet_size, 0.0);
    for (std::size_t k = t; k < t + w; ++k) h[s.codes[k]] += 1.0;
    return h;
}

inline double l2(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// d(t) for every position, each histogram counted from scratch.
inline std::vector<double> distance_trace(const CodewordSeq& stored, const CodewordSeq& query, std::size_t w) {
    const auto q = histogram(query, 0, w);
    std::vector<double> out;
    for (std::size_t t = 0; t + w <= stored.size(); ++t) out.push_back(l2(histogram(stored, t, w), q));
    return out;
}

// Same trace with a sliding count vector; the distance is still summed
// over every bin at each position.
inline std::vector<double> sliding_distance_trace(const CodewordSeq& stored, const CodewordSeq& query, std::size_t w) {
    const auto q = histogram(query, 0, w);
    auto h = histogram(stored, 0, w);
    std::vector<double> out;
    for (std::size_t t = 0; t + w <= stored.size(); ++t) {
        if (t > 0) {
            h[stored.codes[t - 1]] -= 1.0;
            h[stored.codes[t + w - 1]] += 1.0;
        }
        out.push_back(l2(h, q));
    }
    return out;
}

// Cyclic Jacobi eigenvalue iteration for a symmetric matrix (row-major).
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i * n + i];
    std::sort(ev.rbegin(), ev.rend());
    return ev;
}

// Two-pass covariance of explicit histograms, then the minimal rank reaching
// sigma of the eigenvalue mass (1 for a zero spectrum).
inline std::size_t dimension(const CodewordSeq& s, std::size_t from, std::size_t to, std::size_t w, double sigma) {
    const std::size_t n = s.alphabet_size;
    std::vector<std::vector<double>> xs;
    for (std::size_t t = from; t < to; ++t) xs.push_back(histogram(s, t, w));
    std::vector<double> mean(n, 0.0);
    for (const auto& x : xs)
        for (std::size_t i = 0; i < n; ++i) mean[i] += x[i];
    for (double& m : mean) m /= static_cast<double>(xs.size());
    std::vector<double> cov(n * n, 0.0);
    for (const auto& x : xs)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) cov[i * n + j] += (x[i] - mean[i]) * (x[j] - mean[j]);
    for (double& c : cov) c /= static_cast<double>(xs.size());
    auto ev = jacobi_eigenvalues(cov, n);
    double total = 0.0;
    for (double& e : ev) total += (e = std::max(e, 0.0));
    if (total <= 1e-12) return 1;
    double cum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cum += ev[i];
        if (cum >= sigma * total * (1.0 - 1e-9)) return i + 1;
    }
    return n;
}

// Every boundary placement with t_j in [c_j - r_j, c_j + r_j] for the given
// radii; returns the minimal sum of length * dim.
inline std::uint64_t best_segmentation(const std::vector<std::size_t>& centers, const std::vector<std::size_t>& radii,
                                       const std::function<std::size_t(std::size_t, std::size_t)>& dim,
                                       std::vector<std::size_t>* argbest = nullptr) {
    const std::size_t m = centers.size() - 1;
    std::vector<std::size_t> cur(centers);
    std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
    std::function<void(std::size_t)> rec = [&](std::size_t j) {
        if (j == m) {
            std::uint64_t cost = 0;
            for (std::size_t k = 1; k <= m; ++k) {
                if (cur[k] <= cur[k - 1]) return;
                cost += (cur[k] - cur[k - 1]) * dim(cur[k - 1], cur[k]);
            }
            if (cost < best) {
                best = cost;
                if (argbest) *argbest = cur;
            }
            return;
        }
        for (std::size_t t = centers[j] - radii[j]; t <= centers[j] + radii[j]; ++t) {
            cur[j] = t;
            rec(j + 1);
        }
    };
    rec(1);
    return best;
}

// Plain Lloyd k-means from the given starting centroids.
inline std::vector<std::vector<double>> kmeans(const std::vector<std::vector<double>>& pts,
                                               std::vector<std::vector<double>> c, int iters) {
    for (int it = 0; it < iters; ++it) {
        std::vector<std::vector<double>> sum(c.size(), std::vector<double>(pts[0].size(), 0.0));
        std::vector<std::size_t> cnt(c.size(), 0);
        for (const auto& p : pts) {
            std::size_t best = 0;
            double bd = 1e300;
            for (std::size_t k = 0; k < c.size(); ++k) {
                double d = 0.0;
                for (std::size_t i = 0; i < p.size(); ++i) d += (p[i] - c[k][i]) * (p[i] - c[k][i]);
                if (d < bd) {
                    bd = d;
                    best = k;
                }
            }
            ++cnt[best];
            for (std::size_t i = 0; i < p.size(); ++i) sum[best][i] += p[i];
        }
        for (std::size_t k = 0; k < c.size(); ++k)
            if (cnt[k])
                for (std::size_t i = 0; i < c[k].size(); ++i) c[k][i] = sum[k][i] / static_cast<double>(cnt[k]);
    }
    return c;
}

// Stream of two stationary regimes over disjoint codeword sets, switching
// at frame `change`.
inline CodewordSeq two_regime_stream(std::size_t length, std::size_t change, std::size_t alphabet, std::uint64_t seed) {
    Rng rng(seed);
    CodewordSeq s;
    s.alphabet_size = alphabet;
    const std::size_t half = alphabet / 2;
    for (std::size_t i = 0; i < length; ++i) {
        const bool second = i >= change;
        const std::size_t span = second ? alphabet - half : half;
        const std::size_t k = rng.below(std::min<std::size_t>(span, 3));
        s.codes.push_back(static_cast<std::uint16_t>((second ? half : 0) + k));
    }
    return s;
}

inline CodewordSeq random_stream(std::size_t length, std::size_t alphabet, Rng& rng) {
    CodewordSeq s;
    s.alphabet_size = alphabet;
    for (std::size_t i = 0; i < length; ++i) s.codes.push_back(static_cast<std::uint16_t>(rng.below(alphabet)));
    return s;
}

} // namespace oracle
