#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "plsearch/dynseg.hpp"
#include "plsearch/synthetic.hpp"

using namespace plsearch;

namespace {

CodewordSeq regime_stream(std::size_t length, std::size_t alphabet, std::size_t dwell_lo, std::size_t dwell_hi,
                          std::uint64_t seed) {
    StreamSpec spec;
    spec.length = length;
    spec.alphabet = alphabet;
    spec.min_support = 2;
    spec.max_support = std::min<std::size_t>(6, alphabet);
    spec.min_dwell = dwell_lo;
    spec.max_dwell = dwell_hi;
    return synth_codeword_stream(spec, seed);
}

void expect_valid(const SegmentationResult& r, const std::vector<ShiftableRange>& ranges, const DimensionOracle& dim) {
    ASSERT_EQ(r.boundaries.size(), ranges.size());
    for (std::size_t j = 0; j < ranges.size(); ++j) {
        EXPECT_GE(r.boundaries[j], ranges[j].lo());
        EXPECT_LE(r.boundaries[j], ranges[j].hi());
        if (j > 0) EXPECT_LT(r.boundaries[j - 1], r.boundaries[j]);
    }
    SegmentationResult again = r;
    evaluate_segmentation(again, dim);
    EXPECT_EQ(again.weighted_dims, r.weighted_dims);
    EXPECT_DOUBLE_EQ(again.objective, r.objective);
}

} // namespace

TEST(EquiPartition, Examples) {
    EXPECT_EQ(equi_partition(100, 4).boundaries, (std::vector<std::size_t>{0, 25, 50, 75, 100}));
    EXPECT_EQ(equi_partition(37, 1).boundaries, (std::vector<std::size_t>{0, 37}));
    const auto unit = equi_partition(9, 9).boundaries;
    for (std::size_t j = 0; j <= 9; ++j) EXPECT_EQ(unit[j], j);
    EXPECT_EQ(equi_partition(10, 3).boundaries, (std::vector<std::size_t>{0, 3, 7, 10}));
    EXPECT_THROW(equi_partition(5, 6), RangeError);
    EXPECT_THROW(equi_partition(5, 0), ConfigError);
}

TEST(ShiftableRanges, ClippedSoNeighboursNeverTouch) {
    const auto r = shiftable_ranges({0, 10, 14, 30, 31, 50}, 100);
    EXPECT_EQ(r[0].delta, 0u);
    EXPECT_EQ(r[1].delta, 1u);  // (14 - 10 - 1) / 2
    EXPECT_EQ(r[2].delta, 1u);
    EXPECT_EQ(r[3].delta, 0u);
    EXPECT_EQ(r[4].delta, 0u);
    EXPECT_EQ(r[5].delta, 0u);
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t len = 20 + rng.below(500), m = 1 + rng.below(std::min<std::size_t>(len, 30));
        const auto b = equi_partition(len, m).boundaries;
        const auto rs = shiftable_ranges(b, rng.below(40));
        for (std::size_t j = 1; j < rs.size(); ++j) ASSERT_LT(rs[j - 1].hi(), rs[j].lo());
    }
}

TEST(EstimateK, FourCases) {
    EXPECT_EQ(estimate_kj(3, 0, 5, 4, 0, 5), 2);
    EXPECT_EQ(estimate_kj(3, 4, 6, 4, 5, 5), 2);
    // third case: c_LR > c_RR, c_LL < c_RL, c_LC > c_RC
    EXPECT_EQ(estimate_kj(2, 6, 7, 5, 3, 1), (3 - 1) + std::min<std::int64_t>(6, 5) - std::min<std::int64_t>(3, 2));
    EXPECT_EQ(estimate_kj(9, 9, 9, 5, 5, 2), 5 - 2);
    EXPECT_EQ(estimate_kj(5, 5, 5, 3, 3, 3), 1);  // clamped
}

TEST(CoarsePlan, ProbeCountArithmetic) {
    const auto p = coarse_plan(4, 50);
    EXPECT_EQ(p.u, 18u);
    EXPECT_DOUBLE_EQ(p.probe_budget, 4.0 * std::sqrt(2.0 * 4 * 50) + 2.0);
    EXPECT_EQ(coarse_plan(1, 1).u, 0u);
    EXPECT_EQ(coarse_plan(1000, 3).u, 5u);  // clamped to 2 delta - 1
}

TEST(LocalOptimize, FindsAnAbruptChange) {
    for (std::size_t change : {180u, 200u, 223u}) {
        const auto s = oracle::two_regime_stream(400, change, 8, change);
        const MomentTable table(s, 1);
        const auto dim = pca_dimension_oracle(table, 1.0);
        const auto init = equi_partition(table.positions(), 2);
        const auto r = local_optimize(init, 40, dim);
        EXPECT_EQ(r.boundaries[1], change);
        const auto c = coarse_to_fine(init, 40, dim);
        EXPECT_EQ(c.boundaries[1], change);
        EXPECT_LT(c.probes, r.probes);
        EXPECT_EQ(r.probes, 2u * 81u);
    }
}

TEST(LocalOptimize, ZeroDeltaIsIdentity) {
    const auto s = regime_stream(600, 6, 20, 100, 5);
    const MomentTable table(s, 10);
    const auto dim = pca_dimension_oracle(table, 0.9);
    const auto init = equi_partition(table.positions(), 7);
    EXPECT_EQ(local_optimize(init, 0, dim).boundaries, init.boundaries);
    EXPECT_EQ(coarse_to_fine(init, 0, dim).boundaries, init.boundaries);
    auto dp = dp_segment(init, 0, dim);
    EXPECT_EQ(dp.boundaries, init.boundaries);
    SegmentationResult e = init;
    evaluate_segmentation(e, dim);
    EXPECT_EQ(dp.objective, e.objective);
}

TEST(Dynseg, ArgminInclusionAndValidityForEveryMethod) {
    Rng rng(7);
    for (int trial = 0; trial < 12; ++trial) {
        const auto s = regime_stream(800 + rng.below(800), 6, 20, 150, rng.next());
        const MomentTable table(s, 1 + rng.below(12));
        const auto dim = pca_dimension_oracle(table, rng.uniform(0.7, 0.99));
        const std::size_t m = 2 + rng.below(6), delta = rng.below(25);
        SegmentationResult init = equi_partition(table.positions(), m);
        evaluate_segmentation(init, dim);
        const auto ranges = shiftable_ranges(init.boundaries, delta);
        for (auto method : {SegmentationMethod::local, SegmentationMethod::coarse, SegmentationMethod::dp}) {
            const auto r = run_segmentation(method, init, delta, dim);
            expect_valid(r, ranges, dim);
            // Each boundary improves its local objective given the final left
            // neighbour and the initial right neighbour (forward methods).
            if (method != SegmentationMethod::dp) {
                for (std::size_t j = 1; j + 1 < r.boundaries.size(); ++j) {
                    const std::size_t left = r.boundaries[j - 1], right = init.boundaries[j + 1];
                    EXPECT_LE(local_objective(left, r.boundaries[j], right, dim),
                              local_objective(left, init.boundaries[j], right, dim));
                }
            }
            EXPECT_LE(r.weighted_dims, init.weighted_dims) << to_string(method);
        }
        const auto dp = dp_segment(init, delta, dim);
        EXPECT_LE(dp.weighted_dims, local_optimize(init, delta, dim).weighted_dims);
        EXPECT_LE(dp.weighted_dims, coarse_to_fine(init, delta, dim).weighted_dims);
    }
}

TEST(DpSegment, MatchesExhaustiveEnumeration) {
    Rng rng(9);
    for (int trial = 0; trial < 25; ++trial) {
        const auto s = regime_stream(120 + rng.below(200), 5, 5, 40, rng.next());
        const MomentTable table(s, 1 + rng.below(6));
        const auto dim = pca_dimension_oracle(table, rng.uniform(0.6, 0.95));
        const std::size_t m = 2 + rng.below(4), delta = rng.below(5);
        const auto init = equi_partition(table.positions(), m);
        const auto ranges = shiftable_ranges(init.boundaries, delta);
        std::vector<std::size_t> radii;
        for (const auto& r : ranges) radii.push_back(r.delta);
        const auto best = oracle::best_segmentation(init.boundaries, radii, dim);
        const auto dp = dp_segment(init, delta, dim);
        EXPECT_EQ(dp.weighted_dims, best);
    }
}

TEST(DpSegment, TwoSegmentsFivePlacements) {
    const auto s = regime_stream(60, 4, 3, 12, 77);
    const MomentTable table(s, 3);
    const auto dim = pca_dimension_oracle(table, 0.8);
    const auto init = equi_partition(table.positions(), 2);
    std::uint64_t best = UINT64_MAX;
    for (std::size_t t = init.boundaries[1] - 2; t <= init.boundaries[1] + 2; ++t) {
        best = std::min<std::uint64_t>(best, t * dim(0, t) + (table.positions() - t) * dim(t, table.positions()));
    }
    const auto dp = dp_segment(init, 2, dim);
    EXPECT_EQ(dp.weighted_dims, best);
    EXPECT_EQ(dp.probes, 10u);  // five candidates from the start, five into the end point
}

TEST(DpSegment, RejectsLargeInstances) {
    const auto init = equi_partition(1000000, 1000);
    const DimensionOracle dim = [](std::size_t, std::size_t) { return std::size_t{1}; };
    EXPECT_THROW(dp_segment(init, 100, dim), InstanceTooLargeError);
}

TEST(ProbeAudit, CountsMatchTheAccounting) {
    const auto s = regime_stream(20000, 8, 100, 600, 13);
    const MomentTable table(s, 20);
    const auto dim = pca_dimension_oracle(table, 0.9);
    const std::size_t m = 20, delta = 100;
    const auto init = equi_partition(table.positions(), m);
    const auto ranges = shiftable_ranges(init.boundaries, delta);
    const auto local = local_optimize(init, delta, dim);
    std::size_t exhaustive = 0;
    for (std::size_t j = 1; j < m; ++j) exhaustive += 2 * (2 * ranges[j].delta + 1);
    EXPECT_EQ(local.probes, exhaustive);
    EXPECT_LE(local.probes, 2 * m * (2 * delta + 1));

    std::vector<CoarseBoundaryStats> stats;
    const auto coarse = coarse_to_fine(init, delta, dim, &stats);
    std::size_t total = 0;
    for (const auto& st : stats) {
        EXPECT_LE(st.coarse_probes, 2 * (3 + st.u));
        // Count the positions where either side's dimension actually changes;
        // bisection spends at most ceil(log2(2 delta)) probes on each.
        const std::size_t left = coarse.boundaries[st.boundary - 1], right = init.boundaries[st.boundary + 1];
        const auto& r = ranges[st.boundary];
        std::size_t changes = 0;
        for (std::size_t t = r.lo() + 1; t <= r.hi(); ++t) {
            if (dim(left, t) != dim(left, t - 1) || dim(t, right) != dim(t - 1, right)) ++changes;
        }
        const auto depth = static_cast<std::size_t>(std::ceil(std::log2(2.0 * static_cast<double>(r.delta))));
        EXPECT_LE(st.refine_probes, 2 * changes * depth);
        total += st.coarse_probes + st.refine_probes;
    }
    EXPECT_EQ(total, coarse.probes);
    EXPECT_LT(coarse.probes, local.probes);

    const auto small = equi_partition(table.positions(), 4);
    const auto dp = dp_segment(small, 10, dim);
    const auto sr = shiftable_ranges(small.boundaries, 10);
    std::size_t expect = 0;
    for (std::size_t j = 1; j < sr.size(); ++j) expect += (2 * sr[j - 1].delta + 1) * (2 * sr[j].delta + 1);
    EXPECT_EQ(dp.probes, expect);
}
