#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "plsearch/error.hpp"
#include "plsearch/histogram.hpp"

namespace plsearch {

// Raw first and second moments of a set of histograms, kept as exact
// integers: count, per-bin sums, and the packed upper triangle of sum x x^T.
struct Moments {
    std::size_t bins = 0;
    std::int64_t count = 0;
    std::vector<std::int64_t> sum;
    std::vector<std::int64_t> cross;

    static std::size_t packed_size(std::size_t n) { return n * (n + 1) / 2; }
    // Index of (a, b) with a <= b in the packed upper triangle.
    static std::size_t packed(std::size_t n, std::size_t a, std::size_t b) {
        return a * n - a * (a - 1) / 2 + (b - a);
    }

    explicit Moments(std::size_t n = 0) : bins(n), sum(n, 0), cross(packed_size(n), 0) {}

    std::int64_t at(std::size_t a, std::size_t b) const {
        return a <= b ? cross[packed(bins, a, b)] : cross[packed(bins, b, a)];
    }

    void add(const Histogram& h) {
        ++count;
        for (std::size_t a = 0; a < bins; ++a) {
            const std::int64_t xa = h.counts[a];
            if (xa == 0) continue;
            sum[a] += xa;
            for (std::size_t b = a; b < bins; ++b) cross[packed(bins, a, b)] += xa * h.counts[b];
        }
    }

    Moments& operator+=(const Moments& o) {
        count += o.count;
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += o.sum[i];
        for (std::size_t i = 0; i < cross.size(); ++i) cross[i] += o.cross[i];
        return *this;
    }
    Moments& operator-=(const Moments& o) {
        count -= o.count;
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] -= o.sum[i];
        for (std::size_t i = 0; i < cross.size(); ++i) cross[i] -= o.cross[i];
        return *this;
    }
    bool operator==(const Moments&) const = default;
};

inline Moments moments_of(std::span<const Histogram> histograms) {
    if (histograms.empty()) throw RangeError("cannot take moments of an empty histogram range");
    Moments m(histograms.front().bins());
    for (const auto& h : histograms) {
        if (h.bins() != m.bins) throw ShapeError("histograms in a range must share a bin count");
        m.add(h);
    }
    return m;
}

namespace detail {

// Integrates moments of the histogram trajectory between events. A bin's
// contribution only changes when its count changes, so each slide touches the
// two affected rows of the cross matrix: O(n) per frame instead of O(n^2).
class LazyMomentAccumulator {
public:
    LazyMomentAccumulator(const Histogram& start, std::size_t t0)
        : n_(start.bins()), x_(start.counts.begin(), start.counts.end()), last_(start.bins(), t0), acc_(start.bins()) {}

    // Frames before t saw the old counts; from t on, one `out` becomes `in`.
    void change(std::size_t out, std::size_t in, std::size_t t) {
        if (out == in) return;
        flush_row(out, t, n_);
        flush_row(in, t, out);
        if (x_[out] == 0) throw ConsistencyError("moment accumulator slid an empty bin");
        --x_[out];
        ++x_[in];
        last_[out] = t;
        last_[in] = t;
    }

    // Closes the integration interval at t and returns the accumulated moments.
    Moments finish(std::size_t t, std::size_t frames) {
        for (std::size_t a = 0; a < n_; ++a) {
            if (x_[a] == 0) {
                last_[a] = t;
                continue;
            }
            acc_.sum[a] += x_[a] * static_cast<std::int64_t>(t - last_[a]);
            for (std::size_t b = a; b < n_; ++b) {
                if (x_[b] == 0) continue;
                const std::size_t since = std::max(last_[a], last_[b]);
                acc_.cross[Moments::packed(n_, a, b)] += x_[a] * x_[b] * static_cast<std::int64_t>(t - since);
            }
        }
        for (std::size_t a = 0; a < n_; ++a) last_[a] = t;
        acc_.count = static_cast<std::int64_t>(frames);
        Moments out = acc_;
        std::fill(acc_.sum.begin(), acc_.sum.end(), 0);
        std::fill(acc_.cross.begin(), acc_.cross.end(), 0);
        acc_.count = 0;
        return out;
    }

    Histogram histogram(std::size_t window) const {
        Histogram h;
        h.window = window;
        h.counts.assign(x_.begin(), x_.end());
        return h;
    }

private:
    void flush_row(std::size_t i, std::size_t t, std::size_t skip) {
        const std::int64_t xi = x_[i];
        if (xi != 0) {
            acc_.sum[i] += xi * static_cast<std::int64_t>(t - last_[i]);
            for (std::size_t c = 0; c < n_; ++c) {
                if (c == skip || x_[c] == 0) continue;
                const std::size_t since = std::max(last_[i], last_[c]);
                const std::size_t idx = i <= c ? Moments::packed(n_, i, c) : Moments::packed(n_, c, i);
                acc_.cross[idx] += xi * x_[c] * static_cast<std::int64_t>(t - since);
            }
        }
    }

    std::size_t n_;
    std::vector<std::int64_t> x_;
    std::vector<std::size_t> last_;
    Moments acc_;
};

} // namespace detail

// Prefix moments of the sliding-window histogram trajectory, checkpointed
// every `stride` positions. Any range query costs at most two partial
// integrations of < stride frames plus O(n^2), independent of range length.
// The table keeps a pointer to the codeword sequence, which must outlive it.
class MomentTable {
public:
    MomentTable(const CodewordSeq& seq, std::size_t window, std::size_t stride = 0)
        : seq_(&seq), window_(window), bins_(seq.alphabet_size) {
        positions_ = position_count_checked(seq, window);
        stride_ = stride != 0 ? stride : std::max<std::size_t>(64, 8 * bins_);
        const std::size_t n_checkpoints = positions_ / stride_ + 1;
        const std::size_t packed = Moments::packed_size(bins_);
        sums_.assign(n_checkpoints * bins_, 0);
        cross_.assign(n_checkpoints * packed, 0);
        hists_.assign(n_checkpoints * bins_, 0);

        Histogram h = histogram_at(seq, 0, window);
        detail::LazyMomentAccumulator acc(h, 0);
        Moments running(bins_);
        store_histogram(0, h);
        for (std::size_t k = 1; k < n_checkpoints; ++k) {
            const std::size_t from = (k - 1) * stride_, to = k * stride_;
            for (std::size_t p = from + 1; p < to; ++p) acc.change(seq.codes[p - 1], seq.codes[p - 1 + window], p);
            running += acc.finish(to, to - from);
            std::copy(running.sum.begin(), running.sum.end(), sums_.begin() + static_cast<std::ptrdiff_t>(k * bins_));
            std::copy(running.cross.begin(), running.cross.end(),
                      cross_.begin() + static_cast<std::ptrdiff_t>(k * packed));
            if (to < positions_) {
                acc.change(seq.codes[to - 1], seq.codes[to - 1 + window], to);
                store_histogram(k, acc.histogram(window));
            }
        }
    }

    std::size_t positions() const { return positions_; }
    std::size_t bins() const { return bins_; }
    std::size_t window() const { return window_; }
    std::size_t stride() const { return stride_; }

    // Moments of histograms at positions [from, to).
    Moments range(std::size_t from, std::size_t to) const {
        if (!(from < to)) throw RangeError("inverted or empty position range");
        if (to > positions_) throw RangeError("position range exceeds the trajectory");
        Moments m = prefix(to);
        m -= prefix(from);
        return m;
    }

    Moments prefix(std::size_t t) const {
        const std::size_t k = t / stride_;
        const std::size_t base = k * stride_;
        Moments m(bins_);
        m.count = static_cast<std::int64_t>(base);
        const std::size_t packed = Moments::packed_size(bins_);
        std::copy_n(sums_.begin() + static_cast<std::ptrdiff_t>(k * bins_), bins_, m.sum.begin());
        std::copy_n(cross_.begin() + static_cast<std::ptrdiff_t>(k * packed), packed, m.cross.begin());
        if (t == base) return m;
        Histogram h;
        h.window = window_;
        h.counts.assign(hists_.begin() + static_cast<std::ptrdiff_t>(k * bins_),
                        hists_.begin() + static_cast<std::ptrdiff_t>((k + 1) * bins_));
        detail::LazyMomentAccumulator acc(h, base);
        for (std::size_t p = base + 1; p < t; ++p) acc.change(seq_->codes[p - 1], seq_->codes[p - 1 + window_], p);
        m += acc.finish(t, t - base);
        return m;
    }

private:
    static std::size_t position_count_checked(const CodewordSeq& seq, std::size_t window) {
        if (window == 0 || seq.size() < window) throw RangeError("stream shorter than the window");
        return seq.size() - window + 1;
    }

    void store_histogram(std::size_t k, const Histogram& h) {
        std::copy(h.counts.begin(), h.counts.end(), hists_.begin() + static_cast<std::ptrdiff_t>(k * bins_));
    }

    const CodewordSeq* seq_;
    std::size_t window_;
    std::size_t bins_;
    std::size_t positions_ = 0;
    std::size_t stride_ = 0;
    std::vector<std::int64_t> sums_;
    std::vector<std::int64_t> cross_;
    std::vector<std::uint32_t> hists_;
};

// Eigen-decomposition of a range covariance, eigenvalues in descending order.
// Bins with exactly zero variance are dropped before solving: their rows and
// columns are zero, so they contribute only zero eigenvalues.
struct Spectrum {
    Eigen::VectorXd mean;
    std::vector<double> eigenvalues;       // descending, clamped at 0
    Eigen::MatrixXd eigenvectors;          // n x k, columns match eigenvalues (if requested)
};

inline Spectrum covariance_spectrum(const Moments& m, bool with_vectors) {
    if (m.count <= 0) throw RangeError("empty moment range");
    const std::size_t n = m.bins;
    const auto count = static_cast<__int128>(m.count);
    Spectrum s;
    s.mean.resize(static_cast<Eigen::Index>(n));
    for (std::size_t a = 0; a < n; ++a) s.mean[static_cast<Eigen::Index>(a)] = static_cast<double>(m.sum[a]) / static_cast<double>(m.count);

    std::vector<std::size_t> active;
    for (std::size_t a = 0; a < n; ++a) {
        const __int128 var = count * m.at(a, a) - static_cast<__int128>(m.sum[a]) * m.sum[a];
        if (var > 0) active.push_back(a);
    }
    const auto k = static_cast<Eigen::Index>(active.size());
    if (k == 0) {
        if (with_vectors) s.eigenvectors.resize(static_cast<Eigen::Index>(n), 0);
        return s;
    }
    const double scale = 1.0 / (static_cast<double>(m.count) * static_cast<double>(m.count));
    Eigen::MatrixXd cov(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = i; j < k; ++j) {
            const std::size_t a = active[static_cast<std::size_t>(i)], b = active[static_cast<std::size_t>(j)];
            const __int128 num = count * m.at(a, b) - static_cast<__int128>(m.sum[a]) * m.sum[b];
            cov(i, j) = cov(j, i) = static_cast<double>(num) * scale;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, with_vectors ? Eigen::ComputeEigenvectors
                                                                         : Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw InvariantError("covariance eigen-decomposition failed");
    s.eigenvalues.resize(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) s.eigenvalues[static_cast<std::size_t>(i)] = std::max(0.0, es.eigenvalues()[k - 1 - i]);
    if (with_vectors) {
        s.eigenvectors = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), k);
        for (Eigen::Index c = 0; c < k; ++c) {
            Eigen::VectorXd v = es.eigenvectors().col(k - 1 - c);
            // Fix the sign so the largest-magnitude entry is positive.
            Eigen::Index arg;
            v.cwiseAbs().maxCoeff(&arg);
            if (v[arg] < 0) v = -v;
            for (Eigen::Index i = 0; i < k; ++i) s.eigenvectors(static_cast<Eigen::Index>(active[static_cast<std::size_t>(i)]), c) = v[i];
        }
    }
    return s;
}

// Smallest m whose leading eigenvalues reach a fraction sigma of the total.
// A zero spectrum has rank 1 by convention.
inline std::size_t contribution_rank(std::span<const double> descending, double sigma) {
    if (!(sigma > 0.0 && sigma <= 1.0)) throw ConfigError("contribution threshold must lie in (0, 1]");
    double total = 0.0;
    for (double v : descending) total += std::max(0.0, v);
    if (!(total > 0.0)) return 1;
    const double target = sigma * total * (1.0 - 1e-12);
    double cum = 0.0;
    for (std::size_t i = 0; i < descending.size(); ++i) {
        cum += std::max(0.0, descending[i]);
        if (cum >= target) return i + 1;
    }
    return descending.size();
}

// Affine subspace approximating the histograms of positions [start, end).
struct Segment {
    std::size_t start = 0;
    std::size_t end = 0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd basis;  // bins x dim, orthonormal columns
    double sigma = 0.9;

    std::size_t dim() const { return static_cast<std::size_t>(basis.cols()); }
    std::size_t bins() const { return static_cast<std::size_t>(mean.size()); }
    std::size_t length() const { return end - start; }
};

// Projected coordinates z plus the residual norm delta.
struct CompressedFeature {
    Eigen::VectorXd z;
    double delta = 0.0;

    std::size_t dim() const { return static_cast<std::size_t>(z.size()); }
    bool operator==(const CompressedFeature& o) const {
        return z.size() == o.z.size() && (z.array() == o.z.array()).all() && delta == o.delta;
    }
};

inline Segment fit_segment_from_moments(const Moments& m, std::size_t start, std::size_t end, double sigma) {
    if (!(start < end)) throw RangeError("segment range must be non-empty");
    Spectrum s = covariance_spectrum(m, true);
    Segment seg;
    seg.start = start;
    seg.end = end;
    seg.sigma = sigma;
    seg.mean = std::move(s.mean);
    const std::size_t rank = contribution_rank(s.eigenvalues, sigma);
    const auto n = static_cast<Eigen::Index>(m.bins);
    const bool degenerate = s.eigenvalues.empty() || !(s.eigenvalues.front() > 0.0);
    if (degenerate) {
        seg.basis = Eigen::MatrixXd::Zero(n, 1);
        seg.basis(0, 0) = 1.0;
    } else {
        seg.basis = s.eigenvectors.leftCols(static_cast<Eigen::Index>(rank));
    }
    return seg;
}

// PCA of a histogram range: centroid, leading eigenvectors up to contribution
// threshold sigma. The segment's positions are [start, start + size).
inline Segment fit_segment(std::span<const Histogram> histograms, double sigma, std::size_t start = 0) {
    if (histograms.empty()) throw RangeError("cannot fit a segment to an empty range");
    return fit_segment_from_moments(moments_of(histograms), start, start + histograms.size(), sigma);
}

// Subspace dimensionality of positions [from, to) at threshold sigma.
inline std::size_t range_dimension(const MomentTable& table, std::size_t from, std::size_t to, double sigma) {
    if (!(from < to)) throw RangeError("range_dimension needs from < to");
    const Spectrum s = covariance_spectrum(table.range(from, to), false);
    return contribution_rank(s.eigenvalues, sigma);
}

inline Eigen::VectorXd to_vector(const Histogram& h) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(h.bins()));
    for (std::size_t i = 0; i < h.bins(); ++i) v[static_cast<Eigen::Index>(i)] = h.counts[i];
    return v;
}

namespace detail {
inline void check_bins(const Segment& seg, Eigen::Index n) {
    if (seg.mean.size() != n) {
        throw ShapeError("vector of dimension " + std::to_string(n) + " does not match segment with " +
                         std::to_string(seg.mean.size()) + " bins");
    }
}
} // namespace detail

inline Eigen::VectorXd project(const Segment& seg, const Eigen::VectorXd& x) {
    detail::check_bins(seg, x.size());
    return seg.basis.transpose() * (x - seg.mean);
}
inline Eigen::VectorXd project(const Segment& seg, const Histogram& x) { return project(seg, to_vector(x)); }

inline Eigen::VectorXd reconstruct(const Segment& seg, const Eigen::VectorXd& z) {
    if (z.size() != seg.basis.cols()) throw ShapeError("coordinate vector does not match segment dimension");
    return seg.basis * z + seg.mean;
}

inline double projection_distance(const Segment& seg, const Eigen::VectorXd& x) {
    detail::check_bins(seg, x.size());
    const Eigen::VectorXd centered = x - seg.mean;
    const Eigen::VectorXd z = seg.basis.transpose() * centered;
    return (centered - seg.basis * z).norm();
}
inline double projection_distance(const Segment& seg, const Histogram& x) { return projection_distance(seg, to_vector(x)); }

inline CompressedFeature compress(const Segment& seg, const Eigen::VectorXd& x) {
    detail::check_bins(seg, x.size());
    const Eigen::VectorXd centered = x - seg.mean;
    CompressedFeature y;
    y.z = seg.basis.transpose() * centered;
    y.delta = (centered - seg.basis * y.z).norm();
    return y;
}
inline CompressedFeature compress(const Segment& seg, const Histogram& x) { return compress(seg, to_vector(x)); }

// Lower-bounds ||x_S - x_Q|| while dominating ||z_S - z_Q||.
inline double compressed_distance(const CompressedFeature& a, const CompressedFeature& b) {
    if (a.dim() != b.dim()) throw SegmentMismatchError("compressed features come from different segment maps");
    const double dd = a.delta - b.delta;
    return std::sqrt((a.z - b.z).squaredNorm() + dd * dd);
}

// Same distance with the stored feature given as raw coordinates (z..., delta).
inline double compressed_distance(std::span<const double> stored, const CompressedFeature& q) {
    if (stored.size() != q.dim() + 1) throw SegmentMismatchError("compressed features come from different segment maps");
    double s = 0.0;
    const std::size_t m = q.dim();
    for (std::size_t i = 0; i < m; ++i) {
        const double d = stored[i] - q.z[static_cast<Eigen::Index>(i)];
        s += d * d;
    }
    const double dd = stored[m] - q.delta;
    return std::sqrt(s + dd * dd);
}

// Compressed features of every trajectory position, stored flat: position t
// of segment j occupies dim_j + 1 doubles (z..., delta).
class CompressedTrack {
public:
    CompressedTrack() = default;

    CompressedTrack(const CodewordSeq& seq, std::size_t window, const std::vector<Segment>& segments,
                    std::size_t threads = 1) {
        if (segments.empty()) throw RangeError("no segments to compress");
        positions_ = segments.back().end;
        seg_of_.resize(positions_);
        seg_start_.resize(segments.size());
        seg_end_.resize(segments.size());
        seg_dim_.resize(segments.size());
        seg_offset_.resize(segments.size());
        std::size_t offset = 0;
        for (std::size_t j = 0; j < segments.size(); ++j) {
            const Segment& s = segments[j];
            if (s.start != (j == 0 ? 0 : segments[j - 1].end) || s.end <= s.start) {
                throw InvariantError("segments must tile the positions contiguously");
            }
            seg_start_[j] = s.start;
            seg_end_[j] = s.end;
            seg_dim_[j] = s.dim();
            seg_offset_[j] = offset;
            offset += s.length() * (s.dim() + 1);
            for (std::size_t t = s.start; t < s.end; ++t) seg_of_[t] = static_cast<std::uint32_t>(j);
        }
        coords_.resize(offset);

        auto work = [&](std::size_t j) {
            const Segment& s = segments[j];
            Histogram h = histogram_at(seq, s.start, window);
            Eigen::VectorXd x = to_vector(h);
            Eigen::VectorXd centered(x.size()), z(static_cast<Eigen::Index>(s.dim()));
            double* out = coords_.data() + seg_offset_[j];
            for (std::size_t t = s.start; t < s.end; ++t) {
                centered.noalias() = x - s.mean;
                z.noalias() = s.basis.transpose() * centered;
                centered.noalias() -= s.basis * z;
                for (Eigen::Index i = 0; i < z.size(); ++i) *out++ = z[i];
                *out++ = centered.norm();
                if (t + 1 < s.end) {
                    const auto o = seq.codes[t], in = seq.codes[t + window];
                    x[o] -= 1.0;
                    x[in] += 1.0;
                }
            }
        };
        threads = std::max<std::size_t>(1, std::min(threads, segments.size()));
        if (threads == 1) {
            for (std::size_t j = 0; j < segments.size(); ++j) work(j);
        } else {
            std::vector<std::jthread> pool;
            for (std::size_t k = 0; k < threads; ++k) {
                pool.emplace_back([&, k] {
                    for (std::size_t j = k; j < segments.size(); j += threads) work(j);
                });
            }
        }
    }

    std::size_t size() const { return positions_; }
    std::size_t segment_of(std::size_t t) const { return seg_of_[t]; }
    std::size_t segment_dim(std::size_t j) const { return seg_dim_[j]; }
    std::size_t segment_count() const { return seg_dim_.size(); }
    std::size_t segment_start(std::size_t j) const { return seg_start_[j]; }
    std::size_t segment_end(std::size_t j) const { return seg_end_[j]; }

    std::span<const double> coords(std::size_t t) const {
        const std::size_t j = seg_of_[t];
        const std::size_t stride = seg_dim_[j] + 1;
        return {coords_.data() + seg_offset_[j] + (t - seg_start_[j]) * stride, stride};
    }

    CompressedFeature feature(std::size_t t) const {
        const auto c = coords(t);
        CompressedFeature y;
        y.z = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size() - 1));
        y.delta = c.back();
        return y;
    }

    std::size_t stored_values() const { return coords_.size(); }

private:
    std::size_t positions_ = 0;
    std::vector<std::uint32_t> seg_of_;
    std::vector<std::size_t> seg_start_;
    std::vector<std::size_t> seg_end_;
    std::vector<std::size_t> seg_dim_;
    std::vector<std::size_t> seg_offset_;
    std::vector<double> coords_;
};

} // namespace plsearch
