// Window statistics against hand-computed values and independent brute-force
// references on randomized inputs.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "skewscope/stats.hpp"

using namespace skewscope;

namespace {

constexpr int kTrials = 1000;

/// Largest difference between two stamps with no stamp strictly between them.
DurationNs brute_max_gap(const std::vector<TimestampNs>& v) {
    DurationNs best = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) continue;
            bool adjacent = true;
            for (std::size_t k = 0; k < v.size() && adjacent; ++k) adjacent = !(v[k] > v[i] && v[k] < v[j]);
            if (adjacent) best = std::max(best, v[j] - v[i]);
        }
    }
    return best;
}

/// Coefficient of variation from the raw-moment identity, in long double.
long double brute_cv(const std::vector<double>& g) {
    long double s = 0, s2 = 0;
    for (double x : g) s += x, s2 += static_cast<long double>(x) * x;
    const long double n = static_cast<long double>(g.size());
    const long double mean = s / n;
    const long double var = std::max<long double>(0, s2 / n - mean * mean);
    return std::sqrt(var) / mean;
}

bool close(double got, long double want, double rel = 1e-9) {
    if (want == 0) return std::abs(got) <= rel;
    return std::abs(static_cast<long double>(got) - want) <= rel * std::abs(want);
}

}  // namespace

TEST(MaxGap, HandExamples) {
    const std::vector<TimestampNs> a{0, 10, 12, 50};
    EXPECT_EQ(stats::max_gap(a), 38u);
    const std::vector<TimestampNs> b{7};
    EXPECT_EQ(stats::max_gap(b), 0u);
    EXPECT_EQ(stats::max_gap({}), 0u);
}

TEST(MaxGap, MatchesBruteForceOnRandomInputs) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < kTrials; ++t) {
        std::vector<TimestampNs> v(std::uniform_int_distribution<std::size_t>(0, 40)(rng));
        for (auto& x : v) x = std::uniform_int_distribution<TimestampNs>(0, 1'000'000)(rng);
        std::sort(v.begin(), v.end());
        ASSERT_EQ(stats::max_gap(v), brute_max_gap(v)) << "trial " << t;
    }
}

TEST(MaxGap, ThousandStampsMatchPairwiseScan) {
    std::mt19937_64 rng(12);
    std::vector<TimestampNs> v(1000);
    for (auto& x : v) x = rng() >> 20;
    std::sort(v.begin(), v.end());
    DurationNs want = 0;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) want = std::max(want, v[i + 1] - v[i]);
    EXPECT_EQ(stats::max_gap(v), want);
}

TEST(ArrivalSpread, HandExamples) {
    EXPECT_EQ(stats::arrival_spread(std::map<int, TimestampNs>{{0, 100}, {1, 101}, {2, 102}, {3, 150}}), 50u);
    EXPECT_EQ(stats::arrival_spread(std::map<int, TimestampNs>{{0, 42}}), 0u);
    EXPECT_THROW(stats::arrival_spread(std::map<int, TimestampNs>{}), ArgumentError);
}

TEST(ArrivalSpread, MatchesSortedExtremesOnRandomInputs) {
    std::mt19937_64 rng(13);
    for (int t = 0; t < kTrials; ++t) {
        std::map<std::uint32_t, TimestampNs> m;
        const auto members = std::uniform_int_distribution<std::uint32_t>(1, 64)(rng);
        for (std::uint32_t r = 0; r < members; ++r) m[r] = rng() >> 16;
        std::vector<TimestampNs> v;
        for (const auto& [r, ts] : m) v.push_back(ts);
        std::sort(v.begin(), v.end());
        ASSERT_EQ(stats::arrival_spread(m), v.back() - v.front()) << "trial " << t;
    }
}

TEST(JitterCv, HandExamples) {
    const std::vector<double> equal{10, 10, 10};
    EXPECT_DOUBLE_EQ(*stats::jitter_cv(equal), 0.0);
    const std::vector<double> two{10, 30};
    EXPECT_NEAR(*stats::jitter_cv(two), 0.5, 1e-12);  // mean 20, population stddev 10
    const std::vector<double> one{10};
    EXPECT_FALSE(stats::jitter_cv(one).has_value());
    const std::vector<double> zeros{0, 0, 0};
    EXPECT_FALSE(stats::jitter_cv(zeros).has_value());
}

TEST(JitterCv, MatchesMomentIdentityAndIsScaleInvariant) {
    std::mt19937_64 rng(14);
    for (int t = 0; t < kTrials; ++t) {
        std::vector<double> g(std::uniform_int_distribution<std::size_t>(2, 60)(rng));
        for (auto& x : g) x = std::uniform_real_distribution<double>(1.0, 1e6)(rng);
        const auto cv = stats::jitter_cv(g);
        ASSERT_TRUE(cv.has_value());
        ASSERT_TRUE(close(*cv, brute_cv(g))) << "trial " << t << ": " << *cv << " vs " << static_cast<double>(brute_cv(g));
        const double k = std::uniform_real_distribution<double>(0.01, 100.0)(rng);
        std::vector<double> scaled = g;
        for (auto& x : scaled) x *= k;
        ASSERT_TRUE(close(*stats::jitter_cv(scaled), *cv)) << "trial " << t;
    }
}

TEST(Utilization, HandExamples) {
    EXPECT_DOUBLE_EQ(stats::utilization(0, kNsPerSecond, 1e9), 0.0);
    EXPECT_NEAR(stats::utilization(9.5e8, kNsPerSecond, 1e9), 0.95, 1e-12);
    EXPECT_THROW(stats::utilization(1, 0, 1e9), ArgumentError);
    EXPECT_THROW(stats::utilization(1, 1, 0), ArgumentError);
}

TEST(Utilization, MatchesOracleArithmetic) {
    std::mt19937_64 rng(15);
    for (int t = 0; t < kTrials; ++t) {
        const double bytes = std::uniform_real_distribution<double>(0, 1e12)(rng);
        const auto len = std::uniform_int_distribution<DurationNs>(1, 100 * kNsPerSecond)(rng);
        const double cap = std::uniform_real_distribution<double>(1e6, 1e11)(rng);
        const long double want = static_cast<long double>(bytes) * 1e9L / (static_cast<long double>(len) * cap);
        ASSERT_TRUE(close(stats::utilization(bytes, len, cap), want, 1e-12)) << "trial " << t;
    }
}

TEST(GroupSkew, HandExamples) {
    EXPECT_DOUBLE_EQ(stats::group_skew({{0, 10}, {1, 10}})->ratio, 1.0);
    const auto s = stats::group_skew({{0, 30}, {1, 10}, {2, 20}});
    ASSERT_TRUE(s);
    EXPECT_NEAR(s->ratio, 1.5, 1e-12);
    EXPECT_EQ(s->group, 0u);
    EXPECT_FALSE(stats::group_skew({{0, 5}}).has_value());
}

TEST(GroupSkew, MatchesBruteForceAndIgnoresLabels) {
    std::mt19937_64 rng(16);
    for (int t = 0; t < kTrials; ++t) {
        const auto n = std::uniform_int_distribution<std::size_t>(2, 32)(rng);
        std::vector<double> v(n);
        for (auto& x : v) x = std::uniform_real_distribution<double>(0.5, 1e9)(rng);
        std::map<std::uint64_t, double> m, shuffled;
        for (std::size_t i = 0; i < n; ++i) m[i] = v[i];
        std::vector<std::uint64_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = 1000 + i * 7;
        std::shuffle(labels.begin(), labels.end(), rng);
        for (std::size_t i = 0; i < n; ++i) shuffled[labels[i]] = v[i];

        long double sum = 0;
        double mx = 0;
        std::uint64_t arg = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sum += v[i];
            if (v[i] > mx) mx = v[i], arg = i;
        }
        const long double want = mx / (sum / static_cast<long double>(n));
        const auto got = stats::group_skew(m);
        ASSERT_TRUE(got && close(got->ratio, want)) << "trial " << t;
        ASSERT_EQ(got->group, arg);
        ASSERT_TRUE(close(stats::group_skew(shuffled)->ratio, want)) << "trial " << t;
    }
}

TEST(ThinSkew, FlagsTheStarvedGroup) {
    // {100, 100, 100, 10}: mean 77.5, max/mean ~1.29 but mean/min 7.75.
    const std::map<std::uint64_t, double> v{{0, 100}, {1, 100}, {2, 100}, {3, 10}};
    EXPECT_NEAR(stats::group_skew(v)->ratio, 100.0 / 77.5, 1e-12);
    const auto thin = stats::thin_skew(v);
    ASSERT_TRUE(thin);
    EXPECT_NEAR(thin->ratio, 7.75, 1e-12);
    EXPECT_EQ(thin->group, 3u);
    EXPECT_TRUE(std::isinf(stats::thin_skew({{0, 5}, {1, 0}})->ratio));
}

TEST(Ewma, Examples) {
    EXPECT_DOUBLE_EQ(stats::ewma_update(3.0, 7.0, 1.0), 7.0);
    EXPECT_DOUBLE_EQ(stats::ewma_update(10.0, 20.0, 0.5), 15.0);
    EXPECT_DOUBLE_EQ(stats::ewma_update(std::nullopt, 4.0, 0.3), 4.0);
    double v = 100.0;
    for (int i = 0; i < 200; ++i) v = stats::ewma_update(v, 5.0, 0.3);
    EXPECT_NEAR(v, 5.0, 1e-9);
    EXPECT_THROW(stats::ewma_update(1.0, 1.0, 0.0), ArgumentError);
    EXPECT_THROW(stats::ewma_update(1.0, 1.0, 1.5), ArgumentError);
}

TEST(Median, OddEvenAndEmpty) {
    EXPECT_DOUBLE_EQ(stats::median(std::vector<double>{3, 1, 2}), 2.0);
    EXPECT_DOUBLE_EQ(stats::median(std::vector<double>{4, 1, 3, 2}), 2.5);
    EXPECT_DOUBLE_EQ(stats::median(std::vector<double>{}), 0.0);
}

TEST(Median, MatchesFullSortOnRandomInputs) {
    std::mt19937_64 rng(17);
    for (int t = 0; t < kTrials; ++t) {
        std::vector<std::uint64_t> v(std::uniform_int_distribution<std::size_t>(1, 50)(rng));
        for (auto& x : v) x = rng() % 1000;
        auto s = v;
        std::sort(s.begin(), s.end());
        const auto n = s.size();
        const double want = n % 2 ? double(s[n / 2]) : (double(s[n / 2 - 1]) + double(s[n / 2])) / 2.0;
        ASSERT_DOUBLE_EQ(stats::median(v), want);
    }
}

TEST(TrendSlope, LinearSeriesRecoversSlope) {
    const std::vector<double> y{10, 20, 30, 40};
    EXPECT_NEAR(stats::trend_slope(y), 10.0, 1e-12);
    const std::vector<double> flat{5, 5, 5};
    EXPECT_DOUBLE_EQ(stats::trend_slope(flat), 0.0);
    EXPECT_DOUBLE_EQ(stats::trend_slope(std::vector<double>{1}), 0.0);
}

TEST(Severity, ClampedLinearRamp) {
    EXPECT_DOUBLE_EQ(stats::severity(4.0, 4.0), 0.0);
    EXPECT_DOUBLE_EQ(stats::severity(8.0, 4.0), 0.5);
    EXPECT_DOUBLE_EQ(stats::severity(12.0, 4.0), 1.0);
    EXPECT_DOUBLE_EQ(stats::severity(100.0, 4.0), 1.0);
    EXPECT_DOUBLE_EQ(stats::severity(1.0, 4.0), 0.0);
    std::mt19937_64 rng(18);
    for (int t = 0; t < kTrials; ++t) {
        const double thr = std::uniform_real_distribution<double>(0.01, 100)(rng);
        const double a = std::uniform_real_distribution<double>(0, 500)(rng);
        const double b = a + std::uniform_real_distribution<double>(0, 500)(rng);
        ASSERT_LE(stats::severity(a, thr), stats::severity(b, thr));
    }
}
