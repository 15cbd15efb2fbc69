#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "plsearch/error.hpp"
#include "plsearch/index_io.hpp"
#include "plsearch/sampling.hpp"
#include "plsearch/tas.hpp"

namespace plsearch {

enum class SearchMode { proposed, tas, bruteforce };

inline std::string_view to_string(SearchMode m) {
    switch (m) {
    case SearchMode::proposed: return "proposed";
    case SearchMode::tas: return "tas";
    case SearchMode::bruteforce: return "bruteforce";
    }
    return "unknown";
}

inline SearchMode parse_search_mode(std::string_view s) {
    if (s == "proposed") return SearchMode::proposed;
    if (s == "tas") return SearchMode::tas;
    if (s == "bruteforce") return SearchMode::bruteforce;
    throw ConfigError("unknown search mode '" + std::string(s) + "'");
}

// The query histogram and its compressed form under each segment, computed
// on first use.
class QueryCompression {
public:
    QueryCompression(const PLIndex& index, Histogram xq)
        : index_(&index), xq_(std::move(xq)), x_(to_vector(xq_)), cache_(index.segments.size()),
          ready_(index.segments.size(), false) {
        if (xq_.bins() != index.bins) throw ConfigError("query histogram does not match the index alphabet");
    }

    const CompressedFeature& get(std::size_t j) {
        if (j >= cache_.size()) throw RangeError("segment id " + std::to_string(j) + " out of range");
        if (ready_[j]) {
            ++hits_;
            return cache_[j];
        }
        cache_[j] = compress(index_->segments[j], x_);
        ready_[j] = true;
        ++computed_;
        return cache_[j];
    }

    const Histogram& histogram() const { return xq_; }
    std::size_t computations() const { return computed_; }
    std::size_t cache_hits() const { return hits_; }

private:
    const PLIndex* index_;
    Histogram xq_;
    Eigen::VectorXd x_;
    std::vector<CompressedFeature> cache_;
    std::vector<bool> ready_;
    std::size_t computed_ = 0;
    std::size_t hits_ = 0;
};

inline const CompressedFeature& compress_query(QueryCompression& qc, std::size_t j) { return qc.get(j); }

// Cursor over the stored histograms that restarts from the anchor at or
// before the requested position.
inline HistogramCursor make_verification_cursor(const PLIndex& index) {
    return HistogramCursor(index.codes, index.params.window, &index.anchors, kAnchorStride);
}

inline std::optional<Match> verify(HistogramCursor& cursor, std::size_t t, const Histogram& xq, double theta,
                                   double* distance_out = nullptr) {
    const double d = distance(cursor.seek(t), xq);
    if (distance_out) *distance_out = d;
    if (d <= theta) return Match{t, d};
    return std::nullopt;
}

namespace detail {

inline Histogram index_query_histogram(const PLIndex& index, const CodewordSeq& query, const SearchParams& params) {
    params.validate();
    if (params.window != index.params.window) {
        throw ConfigError("query window " + std::to_string(params.window) + " differs from the index window " +
                          std::to_string(index.params.window));
    }
    if (query.alphabet_size != index.bins) throw ConfigError("query codebook size differs from the index");
    return query_histogram(query, params.window);
}

} // namespace detail

// Two-stage scan: block lower bounds, then compressed distances, and exact
// verification of the survivors. Skips use the best lower bound available
// at each position, so the match set equals the exhaustive one.
inline SearchReport proposed_scan(const PLIndex& index, const CodewordSeq& query, const SearchParams& params,
                                  std::vector<ScanMark>* audit = nullptr) {
    QueryCompression qc(index, detail::index_query_histogram(index, query, params));
    const std::size_t positions = index.positions();
    const double theta = params.theta;
    const double slack = bound_slack(theta);
    if (audit) audit->assign(positions, ScanMark::untouched);

    SearchReport report;
    auto& c = report.counters;
    c.positions = positions;
    HistogramCursor cursor = make_verification_cursor(index);
    const auto& blocks = index.blocks;
    std::size_t bi = 0;
    std::size_t checked = blocks.size();
    std::size_t t = 0;
    while (t < positions) {
        while (blocks[bi].end() <= t) ++bi;
        const Block& b = blocks[bi];
        if (checked != bi) {
            checked = bi;
            ++c.block_checks;
            if (block_lower_bound(b, qc.get(b.segment)) - slack > theta) {
                ++c.block_prunes;
                c.frames_pruned += b.end() - t;
                detail::mark(audit, t, b.end(), ScanMark::block_pruned);
                t = b.end();
                continue;
            }
        }
        const double dc = compressed_distance(index.track.coords(t), qc.get(b.segment));
        ++c.compressed_evaluations;
        double bound = dc;
        if (dc <= theta + slack) {
            double d;
            if (auto m = verify(cursor, t, qc.histogram(), theta, &d)) report.matches.push_back(*m);
            ++c.full_evaluations;
            detail::mark(audit, t, t + 1, ScanMark::full_evaluated);
            bound = d;
        } else {
            detail::mark(audit, t, t + 1, ScanMark::compressed_rejected);
        }
        const std::size_t w = skip_width(std::max(0.0, bound - slack), theta);
        detail::mark(audit, t + 1, t + w, ScanMark::skipped);
        c.frames_skipped += std::min(w, positions - t) - 1;
        t += w;
    }
    c.slide_steps = cursor.slide_steps();
    c.query_compressions = qc.computations();
    c.query_cache_hits = qc.cache_hits();
    return report;
}

inline SearchReport proposed_scan(const PLIndex& index, const CodewordSeq& query, double theta,
                                  std::vector<ScanMark>* audit = nullptr) {
    return proposed_scan(index, query, SearchParams{theta, index.params.window}, audit);
}

inline std::vector<Match> proposed_search(const PLIndex& index, const CodewordSeq& query, double theta) {
    return proposed_scan(index, query, theta).matches;
}

inline SearchReport run_search(const PLIndex& index, const CodewordSeq& query, double theta, SearchMode mode) {
    const SearchParams params{theta, index.params.window};
    detail::index_query_histogram(index, query, params);
    switch (mode) {
    case SearchMode::proposed: return proposed_scan(index, query, params);
    case SearchMode::tas: return tas_scan(index.codes, query, params);
    case SearchMode::bruteforce: return brute_force_scan(index.codes, query, params);
    }
    throw ConfigError("unknown search mode");
}

} // namespace plsearch
