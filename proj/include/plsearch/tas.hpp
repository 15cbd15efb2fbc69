#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "plsearch/error.hpp"
#include "plsearch/histogram.hpp"

namespace plsearch {

struct Match {
    std::size_t position = 0;  // window start, in frames
    double distance = 0.0;

    bool operator==(const Match&) const = default;
};

struct SearchParams {
    double theta = 85.0;
    std::size_t window = 1;

    void validate() const {
        if (!(theta >= 0) || !std::isfinite(theta)) throw ConfigError("search threshold must be finite and >= 0");
        if (window == 0) throw ConfigError("window must be at least one frame");
    }
};

// Absolute slack applied to floating-point lower bounds before they are
// compared against theta, so rounding can never turn a bound unsound.
inline double bound_slack(double theta) { return 1e-7 + 1e-9 * theta; }

// Frames to advance after observing distance d (or a lower bound on it): no
// window within that span can come closer than theta, since one frame moves a
// histogram by at most sqrt(2).
inline std::size_t skip_width(double d, double theta) {
    if (!(d > theta)) return 1;
    // The 1e-12 keeps exact multiples of sqrt(2) from rounding down a step.
    const double steps = (d - theta) / std::numbers::sqrt2;
    return static_cast<std::size_t>(std::floor(steps * (1.0 + 1e-12))) + 1;
}

// What the scan did at each stored position; used to audit skip safety
// against the brute-force distance trace.
enum class ScanMark : std::uint8_t {
    untouched = 0,
    full_evaluated,       // exact histogram distance computed
    skipped,              // jumped over by a skip width
    block_pruned,         // jumped over by a block lower bound
    compressed_rejected,  // compressed distance above theta, no verification
};

struct SearchCounters {
    std::size_t positions = 0;
    std::size_t full_evaluations = 0;
    std::size_t compressed_evaluations = 0;
    std::size_t block_checks = 0;
    std::size_t block_prunes = 0;
    std::size_t frames_skipped = 0;
    std::size_t frames_pruned = 0;
    std::size_t slide_steps = 0;
    std::size_t query_compressions = 0;
    std::size_t query_cache_hits = 0;
};

struct SearchReport {
    std::vector<Match> matches;
    SearchCounters counters;
};

// Produces stored-window histograms by sliding. With anchors, a seek starts
// from the closest anchor at or before t unless the current position is
// already at least that close.
class HistogramCursor {
public:
    HistogramCursor(const CodewordSeq& seq, std::size_t window, const std::vector<Histogram>* anchors = nullptr,
                    std::size_t anchor_stride = 0)
        : seq_(&seq), window_(window), anchors_(anchors), stride_(anchor_stride) {}

    const Histogram& seek(std::size_t t) {
        if (t + window_ > seq_->size()) throw RangeError("cursor position beyond the last window");
        std::size_t floor_anchor = 0;
        const bool use_anchor = anchors_ && stride_ > 0 && !anchors_->empty();
        if (use_anchor) floor_anchor = (t / stride_) * stride_;
        const bool can_continue = valid_ && pos_ <= t && (!use_anchor || pos_ >= floor_anchor);
        if (!can_continue) {
            if (use_anchor) {
                hist_ = (*anchors_)[t / stride_];
                pos_ = floor_anchor;
            } else {
                hist_ = histogram_at(*seq_, t, window_);
                steps_ += window_;
                pos_ = t;
            }
            valid_ = true;
        }
        while (pos_ < t) {
            slide_in_place(hist_, seq_->codes[pos_], seq_->codes[pos_ + window_]);
            ++pos_;
            ++steps_;
        }
        return hist_;
    }

    std::size_t slide_steps() const { return steps_; }

private:
    const CodewordSeq* seq_;
    std::size_t window_;
    const std::vector<Histogram>* anchors_;
    std::size_t stride_;
    Histogram hist_;
    std::size_t pos_ = 0;
    bool valid_ = false;
    std::size_t steps_ = 0;
};

// Histogram of the first W query frames; longer queries are truncated.
inline Histogram query_histogram(const CodewordSeq& query, std::size_t window) {
    if (query.size() < window) {
        throw ConfigError("query has " + std::to_string(query.size()) + " frames, fewer than the window of " +
                          std::to_string(window));
    }
    return histogram_at(query, 0, window);
}

inline std::size_t position_count(const CodewordSeq& stored, std::size_t window) {
    if (window == 0 || stored.size() < window) {
        throw RangeError("stored stream of " + std::to_string(stored.size()) + " frames is shorter than the window");
    }
    return stored.size() - window + 1;
}

namespace detail {

inline void check_alphabets(const CodewordSeq& stored, const CodewordSeq& query) {
    if (stored.alphabet_size != query.alphabet_size) throw ShapeError("stored and query codebooks differ in size");
}

inline void mark(std::vector<ScanMark>* audit, std::size_t from, std::size_t to, ScanMark m) {
    if (!audit) return;
    for (std::size_t k = from; k < to && k < audit->size(); ++k) (*audit)[k] = m;
}

} // namespace detail

// Baseline time-series active search: evaluate d(t), report when d <= theta,
// then advance by skip_width(d).
inline SearchReport tas_scan(const CodewordSeq& stored, const CodewordSeq& query, const SearchParams& params,
                             std::vector<ScanMark>* audit = nullptr) {
    params.validate();
    detail::check_alphabets(stored, query);
    const std::size_t positions = position_count(stored, params.window);
    const Histogram xq = query_histogram(query, params.window);
    const double slack = bound_slack(params.theta);
    if (audit) audit->assign(positions, ScanMark::untouched);

    SearchReport report;
    report.counters.positions = positions;
    HistogramCursor cursor(stored, params.window);
    std::size_t t = 0;
    while (t < positions) {
        const Histogram& xs = cursor.seek(t);
        const double d = distance(xs, xq);
        ++report.counters.full_evaluations;
        detail::mark(audit, t, t + 1, ScanMark::full_evaluated);
        if (d <= params.theta) report.matches.push_back({t, d});
        const std::size_t w = skip_width(std::max(0.0, d - slack), params.theta);
        detail::mark(audit, t + 1, t + w, ScanMark::skipped);
        report.counters.frames_skipped += std::min(w, positions - t) - 1;
        t += w;
    }
    report.counters.slide_steps = cursor.slide_steps();
    return report;
}

inline std::vector<Match> tas_search(const CodewordSeq& stored, const CodewordSeq& query, const SearchParams& params) {
    return tas_scan(stored, query, params).matches;
}

// Exhaustive oracle: d(t) at every position. The optional trace receives all
// distances for skip-safety audits.
inline SearchReport brute_force_scan(const CodewordSeq& stored, const CodewordSeq& query, const SearchParams& params,
                                     std::vector<double>* trace = nullptr) {
    params.validate();
    detail::check_alphabets(stored, query);
    const std::size_t positions = position_count(stored, params.window);
    const Histogram xq = query_histogram(query, params.window);
    if (trace) trace->assign(positions, 0.0);

    SearchReport report;
    report.counters.positions = positions;
    HistogramCursor cursor(stored, params.window);
    for (std::size_t t = 0; t < positions; ++t) {
        const double d = distance(cursor.seek(t), xq);
        ++report.counters.full_evaluations;
        if (trace) (*trace)[t] = d;
        if (d <= params.theta) report.matches.push_back({t, d});
    }
    report.counters.slide_steps = cursor.slide_steps();
    return report;
}

inline std::vector<Match> brute_force_search(const CodewordSeq& stored, const CodewordSeq& query,
                                             const SearchParams& params, std::vector<double>* trace = nullptr) {
    return brute_force_scan(stored, query, params, trace).matches;
}

} // namespace plsearch
