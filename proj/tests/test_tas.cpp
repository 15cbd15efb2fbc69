#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "plsearch/synthetic.hpp"
#include "plsearch/tas.hpp"

using namespace plsearch;

TEST(SkipWidth, Examples) {
    EXPECT_EQ(skip_width(85.0, 85.0), 1u);
    EXPECT_EQ(skip_width(85.0 + std::sqrt(2.0), 85.0), 2u);
    EXPECT_EQ(skip_width(87.83, 85.0), 3u);
    EXPECT_EQ(skip_width(0.0, 85.0), 1u);
    EXPECT_EQ(skip_width(10.0, 0.0), 8u);
}

TEST(SkipWidth, NeverSkipsPastAPositionThatCouldMatch) {
    // A skip of w frames is safe iff d - sqrt(2) * (w - 1) > theta.
    Rng rng(2);
    for (int i = 0; i < 100000; ++i) {
        const double theta = rng.uniform(0, 200), d = rng.uniform(0, 400);
        const std::size_t w = skip_width(d, theta);
        ASSERT_GE(w, 1u);
        if (w > 1) ASSERT_GT(d - std::sqrt(2.0) * static_cast<double>(w - 1), theta - 1e-9);
        // and maximal: one more frame would be unsafe
        if (d > theta) ASSERT_LE(d - std::sqrt(2.0) * static_cast<double>(w), theta + 1e-9);
    }
}

TEST(Tas, SelfMatchAtThetaZero) {
    Rng rng(6);
    const auto s = oracle::random_stream(300, 16, rng);
    const auto m = tas_search(s, s, {0.0, 300});
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].position, 0u);
    EXPECT_EQ(m[0].distance, 0.0);
}

TEST(Tas, ThresholdAtMaximumDistanceReturnsEveryPosition) {
    Rng rng(7);
    const auto s = oracle::random_stream(2000, 8, rng);
    const auto q = oracle::random_stream(100, 8, rng);
    std::vector<double> trace;
    brute_force_search(s, q, {0.0, 100}, &trace);
    const double maxd = *std::max_element(trace.begin(), trace.end());
    EXPECT_EQ(tas_search(s, q, {maxd, 100}).size(), s.size() - 100 + 1);
}

TEST(BruteForce, SinglePositionStream) {
    Rng rng(8);
    const auto s = oracle::random_stream(50, 4, rng);
    const auto m = brute_force_search(s, s, {0.0, 50});
    ASSERT_EQ(m.size(), 1u);
}

TEST(BruteForce, DisjointSupportsGiveConstantTrace) {
    CodewordSeq s{std::vector<std::uint16_t>(500, 2), 6};
    CodewordSeq q{std::vector<std::uint16_t>(40, 4), 6};
    std::vector<double> trace;
    brute_force_search(s, q, {1.0, 40}, &trace);
    for (double d : trace) EXPECT_DOUBLE_EQ(d, std::sqrt(2.0) * 40.0);
}

TEST(BruteForce, TraceMatchesIndependentOracle) {
    Rng rng(9);
    const auto s = oracle::random_stream(1500, 10, rng);
    const auto q = oracle::random_stream(120, 10, rng);
    std::vector<double> trace;
    brute_force_search(s, q, {0.0, 120}, &trace);
    const auto ref = oracle::distance_trace(s, q, 120);
    ASSERT_EQ(trace.size(), ref.size());
    for (std::size_t t = 0; t < ref.size(); ++t) ASSERT_NEAR(trace[t], ref[t], 1e-9);
}

TEST(Tas, ErrorContracts) {
    Rng rng(10);
    const auto s = oracle::random_stream(50, 4, rng);
    const auto q = oracle::random_stream(80, 4, rng);
    EXPECT_THROW(tas_search(s, q, {1.0, 60}), RangeError);
    EXPECT_THROW(tas_search(q, s, {1.0, 60}), ConfigError);
    EXPECT_THROW(tas_search(q, s, {-1.0, 10}), ConfigError);
    CodewordSeq other = q;
    other.alphabet_size = 5;
    EXPECT_THROW(tas_search(q, other, {1.0, 10}), ShapeError);
}

TEST(Tas, EqualsBruteForceAndSkipsOnlyNonMatches) {
    Rng rng(11);
    std::size_t audited = 0;
    for (int trial = 0; trial < 30; ++trial) {
        StreamSpec spec;
        spec.length = 4000 + rng.below(6000);
        spec.alphabet = 32;
        spec.min_support = 4;
        spec.max_support = 12;
        spec.min_dwell = 50;
        spec.max_dwell = 800;
        auto s = synth_codeword_stream(spec, rng.next());
        const std::size_t w = 100 + rng.below(200);
        CodewordSeq q{std::vector<std::uint16_t>(s.codes.begin() + 1000, s.codes.begin() + 1000 + static_cast<std::ptrdiff_t>(w)), 32};
        std::vector<double> trace;
        brute_force_search(s, q, {0.0, w}, &trace);
        std::vector<double> sorted = trace;
        std::sort(sorted.begin(), sorted.end());
        const double theta = sorted[rng.below(sorted.size() / 20 + 1)];
        const auto bf = brute_force_search(s, q, {theta, w});
        std::vector<ScanMark> audit;
        const auto tas = tas_scan(s, q, {theta, w}, &audit);
        ASSERT_EQ(tas.matches, bf);
        for (std::size_t t = 0; t < audit.size(); ++t) {
            if (audit[t] == ScanMark::skipped) ASSERT_GT(trace[t], theta) << "position " << t;
            ASSERT_NE(audit[t], ScanMark::untouched);
        }
        EXPECT_LE(tas.counters.full_evaluations, trace.size());
        audited += audit.size();
    }
    EXPECT_GT(audited, 100000u);
}

TEST(Tas, LowerBoundOnDistanceAfterASkip) {
    Rng rng(12);
    const auto s = oracle::random_stream(3000, 6, rng);
    const auto q = oracle::random_stream(200, 6, rng);
    std::vector<double> d;
    brute_force_search(s, q, {0.0, 200}, &d);
    for (int i = 0; i < 20000; ++i) {
        const std::size_t t = rng.below(d.size()), w = rng.below(d.size() - t);
        ASSERT_GE(d[t + w], d[t] - std::sqrt(2.0) * static_cast<double>(w) - 1e-9);
    }
}

TEST(Tas, DeterministicAndCursorAgreesWithBatch) {
    Rng rng(13);
    const auto s = oracle::random_stream(5000, 20, rng);
    const auto q = oracle::random_stream(300, 20, rng);
    EXPECT_EQ(tas_scan(s, q, {60.0, 300}).matches, tas_scan(s, q, {60.0, 300}).matches);

    std::vector<Histogram> anchors;
    for (std::size_t t = 0; t + 300 <= s.size(); t += 512) anchors.push_back(histogram_at(s, t, 300));
    HistogramCursor cursor(s, 300, &anchors, 512);
    for (int i = 0; i < 500; ++i) {
        const std::size_t t = rng.below(s.size() - 300 + 1);
        ASSERT_EQ(cursor.seek(t), histogram_at(s, t, 300));
    }
}
