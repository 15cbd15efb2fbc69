#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "plsearch/error.hpp"
#include "plsearch/pla.hpp"

namespace plsearch {

enum class SegmentationMethod : std::uint8_t { none = 0, local = 1, coarse = 2, dp = 3 };

inline std::string_view to_string(SegmentationMethod m) {
    switch (m) {
    case SegmentationMethod::none: return "none";
    case SegmentationMethod::local: return "local";
    case SegmentationMethod::coarse: return "coarse";
    case SegmentationMethod::dp: return "dp";
    }
    return "unknown";
}

inline SegmentationMethod parse_segmentation_method(std::string_view s) {
    if (s == "none") return SegmentationMethod::none;
    if (s == "local") return SegmentationMethod::local;
    if (s == "coarse") return SegmentationMethod::coarse;
    if (s == "dp") return SegmentationMethod::dp;
    throw ConfigError("unknown segmentation method '" + std::string(s) + "'");
}

// c(from, to): subspace dimensionality of trajectory positions [from, to).
using DimensionOracle = std::function<std::size_t(std::size_t, std::size_t)>;

inline DimensionOracle pca_dimension_oracle(const MomentTable& table, double sigma) {
    return [&table, sigma](std::size_t from, std::size_t to) { return range_dimension(table, from, to, sigma); };
}

struct SegmentationResult {
    std::vector<std::size_t> boundaries;  // t_0 = 0 < t_1 < ... < t_M = length
    std::vector<std::size_t> dims;        // c(t_{j-1}, t_j) per segment
    std::uint64_t weighted_dims = 0;      // sum of (t_j - t_{j-1}) * c_j
    double objective = 0.0;               // weighted_dims / length
    std::size_t probes = 0;               // dimension evaluations spent placing boundaries

    std::size_t segments() const { return boundaries.empty() ? 0 : boundaries.size() - 1; }
    std::size_t length() const { return boundaries.empty() ? 0 : boundaries.back(); }
};

struct ShiftableRange {
    std::size_t center = 0;
    std::size_t delta = 0;  // after clipping

    std::size_t lo() const { return center - delta; }
    std::size_t hi() const { return center + delta; }
};

// Per-boundary bookkeeping of the coarse-to-fine search.
struct CoarseBoundaryStats {
    std::size_t boundary = 0;
    std::size_t delta = 0;
    std::int64_t k_estimate = 0;
    std::size_t u = 0;
    std::size_t coarse_probes = 0;   // dimension evaluations in steps 1 and 2
    std::size_t refine_probes = 0;   // dimension evaluations in step 3
};

inline SegmentationResult equi_partition(std::size_t length, std::size_t segments) {
    if (segments == 0) throw ConfigError("need at least one segment");
    if (segments > length) {
        throw RangeError("cannot cut " + std::to_string(length) + " positions into " + std::to_string(segments) +
                         " segments");
    }
    SegmentationResult r;
    r.boundaries.resize(segments + 1);
    for (std::size_t j = 0; j <= segments; ++j) r.boundaries[j] = (2 * j * length + segments) / (2 * segments);
    return r;
}

inline void validate_boundaries(const std::vector<std::size_t>& b) {
    if (b.size() < 2 || b.front() != 0) throw InvariantError("boundaries must start at 0 and contain an end");
    for (std::size_t j = 1; j < b.size(); ++j) {
        if (b[j] <= b[j - 1]) throw InvariantError("boundaries must be strictly increasing");
    }
}

// Fills dims and the averaged objective for a boundary set.
inline void evaluate_segmentation(SegmentationResult& r, const DimensionOracle& dim) {
    validate_boundaries(r.boundaries);
    r.dims.resize(r.segments());
    r.weighted_dims = 0;
    for (std::size_t j = 1; j < r.boundaries.size(); ++j) {
        r.dims[j - 1] = dim(r.boundaries[j - 1], r.boundaries[j]);
        r.weighted_dims += (r.boundaries[j] - r.boundaries[j - 1]) * r.dims[j - 1];
    }
    r.objective = static_cast<double>(r.weighted_dims) / static_cast<double>(r.length());
}

// Ranges t_j^0 +/- delta, shrunk so neighbouring ranges can neither touch nor
// cross: for interior neighbours each side may take (gap - 1) / 2, against a
// fixed end point the full gap - 1. Entries 0 and M are the fixed ends.
inline std::vector<ShiftableRange> shiftable_ranges(const std::vector<std::size_t>& initial, std::size_t delta) {
    validate_boundaries(initial);
    const std::size_t last = initial.size() - 1;
    std::vector<ShiftableRange> out(initial.size());
    for (std::size_t j = 0; j <= last; ++j) {
        out[j].center = initial[j];
        if (j == 0 || j == last) continue;
        const std::size_t gap_l = initial[j] - initial[j - 1];
        const std::size_t gap_r = initial[j + 1] - initial[j];
        const std::size_t lim_l = j - 1 == 0 ? gap_l - 1 : (gap_l - 1) / 2;
        const std::size_t lim_r = j + 1 == last ? gap_r - 1 : (gap_r - 1) / 2;
        out[j].delta = std::min({delta, lim_l, lim_r});
    }
    return out;
}

// Numerator of the two-segment average for a boundary at t between fixed
// neighbours left and right (the denominator right - left is constant).
inline std::uint64_t local_cost(std::size_t left, std::size_t t, std::size_t right, std::size_t c_left,
                                std::size_t c_right) {
    return static_cast<std::uint64_t>(t - left) * c_left + static_cast<std::uint64_t>(right - t) * c_right;
}

inline std::uint64_t local_objective(std::size_t left, std::size_t t, std::size_t right, const DimensionOracle& dim) {
    return local_cost(left, t, right, dim(left, t), dim(t, right));
}

namespace detail {

// Lexicographic preference: lower cost, then closer to the initial position,
// then earlier.
inline bool better_candidate(std::uint64_t cost, std::size_t t, std::uint64_t best_cost, std::size_t best_t,
                             std::size_t center) {
    if (cost != best_cost) return cost < best_cost;
    const std::size_t d = t > center ? t - center : center - t;
    const std::size_t bd = best_t > center ? best_t - center : center - best_t;
    if (d != bd) return d < bd;
    return t < best_t;
}

class CountingOracle {
public:
    explicit CountingOracle(const DimensionOracle& f) : f_(&f) {}
    std::size_t operator()(std::size_t a, std::size_t b) {
        ++count_;
        return (*f_)(a, b);
    }
    std::size_t count() const { return count_; }

private:
    const DimensionOracle* f_;
    std::size_t count_ = 0;
};

} // namespace detail

// Forward recursion: each interior boundary, left to right, moves to the
// position in its shiftable range minimising the average dimensionality of
// its two adjoining segments, with the left neighbour already optimised and
// the right one still at its initial position. Exhaustive over the range.
inline SegmentationResult local_optimize(const SegmentationResult& initial, std::size_t delta,
                                         const DimensionOracle& dim) {
    const auto ranges = shiftable_ranges(initial.boundaries, delta);
    detail::CountingOracle probe(dim);
    SegmentationResult r;
    r.boundaries = initial.boundaries;
    const std::size_t last = r.boundaries.size() - 1;
    for (std::size_t j = 1; j < last; ++j) {
        const std::size_t left = r.boundaries[j - 1];
        const std::size_t right = initial.boundaries[j + 1];
        const ShiftableRange& s = ranges[j];
        std::uint64_t best_cost = std::numeric_limits<std::uint64_t>::max();
        std::size_t best_t = s.center;
        for (std::size_t t = s.lo(); t <= s.hi(); ++t) {
            const std::uint64_t cost = local_cost(left, t, right, probe(left, t), probe(t, right));
            if (detail::better_candidate(cost, t, best_cost, best_t, s.center)) {
                best_cost = cost;
                best_t = t;
            }
        }
        r.boundaries[j] = best_t;
    }
    r.probes = probe.count();
    evaluate_segmentation(r, dim);
    return r;
}

// Estimated number of positions inside the shiftable range where either
// segment's dimensionality changes, from the six edge/center probes. The
// piecewise rule is empirical; the result is clamped to at least 1.
inline std::int64_t estimate_kj(std::int64_t c_ll, std::int64_t c_lc, std::int64_t c_lr, std::int64_t c_rl,
                                std::int64_t c_rc, std::int64_t c_rr) {
    std::int64_t k;
    if (c_lr <= c_rr && c_ll < c_rl) {
        k = c_lr - c_ll;
    } else if (c_lr > c_rr && c_ll < c_rl && c_lc <= c_rc) {
        k = (c_lc - c_ll) + std::min(c_rc, c_lr) - std::min(c_lc, c_rr);
    } else if (c_lr > c_rr && c_ll < c_rl && c_lc > c_rc) {
        k = (c_rc - c_rr) + std::min(c_lc, c_rl) - std::min(c_rc, c_ll);
    } else {
        k = c_rl - c_rr;
    }
    return std::max<std::int64_t>(k, 1);
}

struct CoarsePlan {
    std::size_t u = 0;         // equispaced probes in step 2
    double probe_budget = 0;   // f(u) = 2((3 + u) + K * delta / (u/2 + 1))
};

// u = round(sqrt(2 K delta) - 2), clamped to [0, 2 delta - 1].
inline CoarsePlan coarse_plan(std::int64_t k, std::size_t delta) {
    CoarsePlan p;
    const double kk = static_cast<double>(std::max<std::int64_t>(k, 1));
    const double dd = static_cast<double>(delta);
    const double raw = std::round(std::sqrt(2.0 * kk * dd) - 2.0);
    const double cap = delta == 0 ? 0.0 : 2.0 * dd - 1.0;
    p.u = static_cast<std::size_t>(std::clamp(raw, 0.0, cap));
    const double u = static_cast<double>(p.u);
    p.probe_budget = 2.0 * ((3.0 + u) + kk * dd / (0.5 * u + 1.0));
    return p;
}

// Places one boundary between fixed neighbours: probe the range edges and
// center, then u equispaced points, then bisect every gap across which either
// segment's dimensionality changed down to single positions. Returns the
// probed position with the smallest two-segment average.
inline std::size_t coarse_to_fine_boundary(std::size_t left, const ShiftableRange& range, std::size_t right,
                                           const DimensionOracle& dim, std::size_t* evaluations = nullptr,
                                           CoarseBoundaryStats* stats = nullptr) {
    struct Probe {
        std::size_t c_left, c_right;
    };
    std::map<std::size_t, Probe> probes;
    std::size_t evals = 0;
    auto probe = [&](std::size_t t) -> const Probe& {
        auto it = probes.find(t);
        if (it != probes.end()) return it->second;
        evals += 2;
        return probes.emplace(t, Probe{dim(left, t), dim(t, right)}).first->second;
    };
    auto differs = [&](std::size_t a, std::size_t b) {
        const Probe& pa = probes.at(a);
        const Probe& pb = probes.at(b);
        return pa.c_left != pb.c_left || pa.c_right != pb.c_right;
    };

    const std::size_t lo = range.lo(), c = range.center, hi = range.hi();
    const Probe pl = probe(lo), pc = probe(c), pr = probe(hi);
    const auto as_int = [](std::size_t v) { return static_cast<std::int64_t>(v); };
    const std::int64_t k = estimate_kj(as_int(pl.c_left), as_int(pc.c_left), as_int(pr.c_left), as_int(pl.c_right),
                                       as_int(pc.c_right), as_int(pr.c_right));
    const CoarsePlan plan = coarse_plan(k, range.delta);
    for (std::size_t i = 1; i <= plan.u; ++i) {
        const double offset = std::round(2.0 * static_cast<double>(range.delta) * static_cast<double>(i) /
                                         static_cast<double>(plan.u + 1));
        probe(lo + static_cast<std::size_t>(offset));
    }
    const std::size_t coarse_evals = evals;

    std::vector<std::size_t> grid;
    for (const auto& [t, _] : probes) grid.push_back(t);
    std::function<void(std::size_t, std::size_t)> refine = [&](std::size_t a, std::size_t b) {
        if (b - a <= 1) return;
        const std::size_t mid = a + (b - a) / 2;
        probe(mid);
        if (differs(a, mid)) refine(a, mid);
        if (differs(mid, b)) refine(mid, b);
    };
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (differs(grid[i - 1], grid[i])) refine(grid[i - 1], grid[i]);
    }

    std::uint64_t best_cost = std::numeric_limits<std::uint64_t>::max();
    std::size_t best_t = c;
    for (const auto& [t, p] : probes) {
        const std::uint64_t cost = local_cost(left, t, right, p.c_left, p.c_right);
        if (detail::better_candidate(cost, t, best_cost, best_t, c)) {
            best_cost = cost;
            best_t = t;
        }
    }
    if (evaluations) *evaluations += evals;
    if (stats) {
        stats->delta = range.delta;
        stats->k_estimate = k;
        stats->u = plan.u;
        stats->coarse_probes = coarse_evals;
        stats->refine_probes = evals - coarse_evals;
    }
    return best_t;
}

inline SegmentationResult coarse_to_fine(const SegmentationResult& initial, std::size_t delta,
                                         const DimensionOracle& dim,
                                         std::vector<CoarseBoundaryStats>* stats = nullptr) {
    const auto ranges = shiftable_ranges(initial.boundaries, delta);
    SegmentationResult r;
    r.boundaries = initial.boundaries;
    const std::size_t last = r.boundaries.size() - 1;
    std::size_t evals = 0;
    if (stats) stats->clear();
    for (std::size_t j = 1; j < last; ++j) {
        CoarseBoundaryStats st;
        st.boundary = j;
        r.boundaries[j] =
            coarse_to_fine_boundary(r.boundaries[j - 1], ranges[j], initial.boundaries[j + 1], dim, &evals, &st);
        if (stats) stats->push_back(st);
    }
    r.probes = evals;
    evaluate_segmentation(r, dim);
    return r;
}

inline constexpr double kDpProbeLimit = 1e7;

// Exact minimiser of the length-weighted average dimensionality with every
// interior boundary confined to its shiftable range. Costs
// sum_j |S_{j-1}| * |S_j| dimension evaluations, so only small instances are
// accepted.
inline SegmentationResult dp_segment(const SegmentationResult& initial, std::size_t delta,
                                     const DimensionOracle& dim) {
    const std::size_t m = initial.segments();
    const double span = 2.0 * static_cast<double>(delta) + 1.0;
    if (static_cast<double>(m) * span * span > kDpProbeLimit) {
        throw InstanceTooLargeError("dynamic programming instance too large: M*(2*delta+1)^2 exceeds 1e7");
    }
    const auto ranges = shiftable_ranges(initial.boundaries, delta);
    detail::CountingOracle probe(dim);
    constexpr std::uint64_t inf = std::numeric_limits<std::uint64_t>::max();

    // cost[j][i]: best weighted sum with boundary j at ranges[j].lo() + i.
    std::vector<std::vector<std::uint64_t>> cost(m + 1);
    std::vector<std::vector<std::size_t>> back(m + 1);
    cost[0] = {0};
    back[0] = {0};
    for (std::size_t j = 1; j <= m; ++j) {
        const ShiftableRange& cur = ranges[j];
        const ShiftableRange& prev = ranges[j - 1];
        const std::size_t width = 2 * cur.delta + 1;
        cost[j].assign(width, inf);
        back[j].assign(width, 0);
        for (std::size_t i = 0; i < width; ++i) {
            const std::size_t t = cur.lo() + i;
            for (std::size_t p = 0; p < cost[j - 1].size(); ++p) {
                if (cost[j - 1][p] == inf) continue;
                const std::size_t tp = prev.lo() + p;
                const std::uint64_t c = cost[j - 1][p] + static_cast<std::uint64_t>(t - tp) * probe(tp, t);
                if (c < cost[j][i]) {
                    cost[j][i] = c;
                    back[j][i] = p;
                }
            }
        }
    }
    SegmentationResult r;
    r.boundaries.resize(m + 1);
    std::size_t idx = 0;
    for (std::size_t j = m; j > 0; --j) {
        r.boundaries[j] = ranges[j].lo() + idx;
        idx = back[j][idx];
    }
    r.boundaries[0] = 0;
    r.probes = probe.count();
    evaluate_segmentation(r, dim);
    return r;
}

inline SegmentationResult run_segmentation(SegmentationMethod method, const SegmentationResult& initial,
                                           std::size_t delta, const DimensionOracle& dim) {
    switch (method) {
    case SegmentationMethod::none: {
        SegmentationResult r = initial;
        r.probes = 0;
        evaluate_segmentation(r, dim);
        return r;
    }
    case SegmentationMethod::local: return local_optimize(initial, delta, dim);
    case SegmentationMethod::coarse: return coarse_to_fine(initial, delta, dim);
    case SegmentationMethod::dp: return dp_segment(initial, delta, dim);
    }
    throw ConfigError("unknown segmentation method");
}

} // namespace plsearch
