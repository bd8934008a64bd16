// Detector predicate families on hand-built windows.

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "skewscope/families.hpp"

using namespace skewscope;
namespace fam = skewscope::family;

namespace {
constexpr double kMs = 1e6;
}

TEST(RateSpike, BothConjunctsRequired) {
    // 10 s window, baseline 100 packets/s.
    EXPECT_FALSE(fam::rate_spike(1000, 10 * kNsPerSecond, 100, 8, 8, 2));
    const auto t = fam::rate_spike(4000, 10 * kNsPerSecond, 100, 32, 8, 2);
    ASSERT_TRUE(t);
    EXPECT_DOUBLE_EQ(t->observed, 4.0);
    EXPECT_DOUBLE_EQ(t->threshold, 2.0);
    EXPECT_DOUBLE_EQ(t->severity(), 0.5);  // (4/2 - 1) / 2
    EXPECT_FALSE(fam::rate_spike(4000, 10 * kNsPerSecond, 100, 8, 8, 2)) << "flat rx depth must not trip";
}

TEST(GapStarvation, OneLongGap) {
    std::vector<TimestampNs> ts;
    for (int i = 0; i <= 20; ++i) ts.push_back(static_cast<TimestampNs>(i) * kNsPerMs);
    EXPECT_FALSE(fam::gap_starvation(ts, kMs, 5)) << "uniform gaps";
    ts.push_back(ts.back() + 10 * kNsPerMs);
    const auto t = fam::gap_starvation(ts, kMs, 5);
    ASSERT_TRUE(t);
    EXPECT_DOUBLE_EQ(t->evidence.at("observed_gap_ns"), 10 * kMs);
    EXPECT_DOUBLE_EQ(t->evidence.at("baseline_gap_ns"), kMs);
    const std::vector<TimestampNs> single{5};
    EXPECT_FALSE(fam::gap_starvation(single, kMs, 5)) << "one event is insufficient data";
}

TEST(GroupSkew, ThinGpuTripsOnTheStarvedSide) {
    const std::map<std::uint64_t, double> gpus{{0, 100e6}, {1, 100e6}, {2, 100e6}, {3, 10e6}};
    EXPECT_FALSE(fam::group_skew(gpus, 1.3, false)) << "max/mean is only ~1.29";
    const auto t = fam::group_skew(gpus, 1.3, true);
    ASSERT_TRUE(t);
    EXPECT_EQ(t->member, 3u);
    EXPECT_NEAR(t->observed, 7.75, 1e-12);
    EXPECT_FALSE(fam::group_skew({{0, 1}, {1, 1}}, 1.3, true)) << "equal volumes";
    EXPECT_FALSE(fam::group_skew({{0, 1}}, 1.3, true)) << "one group";
}

TEST(Retransmit, FractionThreshold) {
    EXPECT_FALSE(fam::retransmit(0, 100, 0.05, 8));
    EXPECT_FALSE(fam::retransmit(1, 100, 0.05, 8));
    const auto t = fam::retransmit(10, 100, 0.05, 8);
    ASSERT_TRUE(t);
    EXPECT_DOUBLE_EQ(t->evidence.at("frac"), 0.10);
    EXPECT_FALSE(fam::retransmit(5, 5, 0.05, 8)) << "below min_events";
}

TEST(QueueBacklog, GrowingDeepQueue) {
    const std::vector<double> flat{2, 2, 2, 2};
    EXPECT_FALSE(fam::queue_backlog(flat, 5, 2));
    const std::vector<double> growing{10, 20, 30, 40};
    const auto t = fam::queue_backlog(growing, 5, 2);
    ASSERT_TRUE(t);
    EXPECT_DOUBLE_EQ(t->observed, 25.0);
    EXPECT_DOUBLE_EQ(t->threshold, 10.0);
    const std::vector<double> draining{40, 30, 20, 10};
    EXPECT_FALSE(fam::queue_backlog(draining, 5, 2)) << "deep but draining";
}

TEST(SlowCompletion, MedianAgainstBaseline) {
    const std::vector<double> at_base{100, 100, 100};
    EXPECT_FALSE(fam::slow_completion(at_base, 100, 2));
    const std::vector<double> slow{500, 450, 100};
    ASSERT_TRUE(fam::slow_completion(slow, 100, 2));
}

TEST(CadenceJitter, UnevenGaps) {
    const std::vector<double> uniform{10, 10, 10, 10};
    EXPECT_FALSE(fam::cadence_jitter(uniform, 0.5));
    const std::vector<double> uneven{10, 10, 10, 70};
    const auto t = fam::cadence_jitter(uneven, 0.5);
    ASSERT_TRUE(t);
    // mean 25, population variance (3*225 + 2025)/4 = 675.
    EXPECT_NEAR(t->observed, std::sqrt(675.0) / 25.0, 1e-12);
}

TEST(LinkCongestion, NeedsQuorum) {
    std::vector<fam::LinkWindow> links(8, {10, 10, 1, 1});
    links[0] = {100, 10, 10, 1};
    EXPECT_FALSE(fam::link_congestion(links, 4)) << "1 of 8 links";
    for (int i = 0; i < 4; ++i) links[static_cast<std::size_t>(i)] = {100, 10, 10, 1};
    const auto t = fam::link_congestion(links, 4);
    ASSERT_TRUE(t);
    EXPECT_DOUBLE_EQ(t->evidence.at("congested_links"), 4.0);
}

TEST(Saturation, Threshold) {
    EXPECT_FALSE(fam::saturation(0.5, 0.9));
    ASSERT_TRUE(fam::saturation(0.95, 0.9));
}

TEST(EarlyStop, SilentNodeWhilePeersSend) {
    const TimestampNs step = 20 * kNsPerMs, end = 10 * kNsPerSecond;
    std::map<std::uint64_t, fam::Activity> nodes;
    for (std::uint64_t n = 0; n < 4; ++n) {
        auto& a = nodes[n];
        a.prior_last = 0;
        for (TimestampNs t = step; t < end; t += step) {
            if (n == 2 && t > end - 20 * step - step) break;
            a.in_window.push_back(t);
        }
    }
    const auto trips = fam::early_stop(nodes, end, static_cast<double>(step), 4);
    ASSERT_EQ(trips.size(), 1u);
    EXPECT_EQ(trips[0].member, 2u);

    std::map<std::uint64_t, fam::Activity> all_active;
    for (std::uint64_t n = 0; n < 4; ++n) all_active[n] = nodes[0];
    EXPECT_TRUE(fam::early_stop(all_active, end, static_cast<double>(step), 4).empty());

    std::map<std::uint64_t, fam::Activity> all_silent;
    for (std::uint64_t n = 0; n < 4; ++n) all_silent[n].prior_last = 0;
    EXPECT_TRUE(fam::early_stop(all_silent, end, static_cast<double>(step), 4).empty()) << "no active peer";
}

TEST(ArrivalSpread, LateRankIsNamed) {
    std::vector<fam::CollectiveArrivals> cs;
    for (TimestampNs k = 0; k < 10; ++k) {
        const TimestampNs base = k * 100 * kNsPerMs;
        cs.push_back({{0, base}, {1, base + kNsPerMs}, {2, base + 2 * kNsPerMs}, {3, base + 50 * kNsPerMs}});
    }
    const auto t = fam::arrival_spread(cs, 4, 2 * kMs, 3);
    ASSERT_TRUE(t);
    EXPECT_EQ(t->member, 3u);
    EXPECT_DOUBLE_EQ(t->observed, 50 * kMs);

    std::vector<fam::CollectiveArrivals> same;
    for (TimestampNs k = 0; k < 10; ++k) same.push_back({{0, k}, {1, k}, {2, k}, {3, k}});
    EXPECT_FALSE(fam::arrival_spread(same, 4, 2 * kMs, 3));

    std::vector<fam::CollectiveArrivals> partial;
    for (auto c : cs) {
        c.erase(3);
        partial.push_back(c);
    }
    EXPECT_FALSE(fam::arrival_spread(partial, 4, 2 * kMs, 3)) << "incomplete collectives are not judged";
}

TEST(StageBubble, LargeOrGrowingGaps) {
    const std::vector<double> steady{10, 10, 10, 10};
    EXPECT_FALSE(fam::stage_bubble(steady, 10, 4));
    const std::vector<double> one_big{10, 10, 60};
    ASSERT_TRUE(fam::stage_bubble(one_big, 10, 4));
    const std::vector<double> growing{10, 12, 14, 17, 21};
    const auto t = fam::stage_bubble(growing, 10, 4);
    ASSERT_TRUE(t) << "growing clause";
    EXPECT_DOUBLE_EQ(t->evidence.at("growing_run"), 4.0);
}

TEST(StageBubble, GrowingRunMatchesBruteForce) {
    // Oracle: longest i..j with every element above the floor and strictly increasing.
    const std::vector<std::vector<double>> cases{
        {1, 2, 3}, {12, 13, 12, 13, 14, 15}, {20, 19, 18}, {11.5, 12, 30, 31, 5, 40, 41, 42, 43, 44}, {}};
    for (const auto& g : cases) {
        std::size_t want = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            for (std::size_t j = i; j < g.size(); ++j) {
                bool ok = true;
                for (std::size_t k = i; k <= j && ok; ++k) ok = g[k] > 11 && (k == i || g[k] > g[k - 1]);
                if (ok) want = std::max(want, j - i + 1);
            }
        }
        EXPECT_EQ(fam::longest_growing_run(g, 11), want);
    }
}

TEST(HeadOfLine, NeedsAHealthySibling) {
    EXPECT_TRUE(fam::head_of_line({{7, {100, 10}}}, 4).empty()) << "single stream";
    const auto trips = fam::head_of_line({{7, {100, 10}}, {8, {10, 10}}}, 4);
    ASSERT_EQ(trips.size(), 1u);
    EXPECT_EQ(trips[0].member, 7u);
    EXPECT_TRUE(fam::head_of_line({{7, {100, 10}}, {8, {100, 10}}}, 4).empty()) << "everything stalled";
}

TEST(Fragmentation, SmallAndMoreNumerous) {
    std::vector<std::uint64_t> sizes(30, 4096);
    for (int i = 0; i < 3; ++i) sizes[static_cast<std::size_t>(i)] = 1 << 20;  // 90% small
    ASSERT_TRUE(fam::fragmentation(sizes, 10, 0.5, 2, 8));
    EXPECT_FALSE(fam::fragmentation(sizes, 30, 0.5, 2, 8)) << "count at baseline";
    std::vector<std::uint64_t> large(30, 1 << 20);
    EXPECT_FALSE(fam::fragmentation(large, 10, 0.5, 2, 8));
}

TEST(HostBottleneck, ThreeWayConjunction) {
    ASSERT_TRUE(fam::host_bottleneck(0.05, 0.9, 8, 4, true));
    EXPECT_FALSE(fam::host_bottleneck(0.05, 0.9, 8, 4, false)) << "idle, not bottlenecked";
    EXPECT_FALSE(fam::host_bottleneck(0.95, 0.9, 8, 4, true)) << "saturation regime";
}

TEST(RegistrationChurn, PerDmaRatio) {
    const auto t = fam::registration_churn(200, 100, 0.5, 8);
    ASSERT_TRUE(t);
    EXPECT_DOUBLE_EQ(t->observed, 2.0);
    EXPECT_FALSE(fam::registration_churn(0, 100, 0.5, 8));
    EXPECT_FALSE(fam::registration_churn(1, 100, 0.5, 8));
}

TEST(P2pThrottle, SlowOrErratic) {
    const std::vector<double> steady{5, 5, 5};
    EXPECT_FALSE(fam::p2p_throttle(steady, 5, 2, 0.5));
    const std::vector<double> slow{1, 1, 1};
    const auto s = fam::p2p_throttle(slow, 5, 2, 0.5);
    ASSERT_TRUE(s);
    EXPECT_DOUBLE_EQ(s->observed, 5.0);
    const std::vector<double> erratic{9, 1};  // median 5 = baseline, cv 0.8
    const auto e = fam::p2p_throttle(erratic, 5, 2, 0.5);
    ASSERT_TRUE(e);
    EXPECT_NEAR(e->observed, 0.8, 1e-12);
}

TEST(KvBurstImbalance, RepeatedHeavyToken) {
    std::map<std::uint64_t, fam::TagVolume> tags{{0, {150e6, 3}}, {1, {1e6, 1}}, {2, {1e6, 1}}, {3, {1e6, 1}}};
    const auto t = fam::kv_burst_imbalance(tags, 2);
    ASSERT_TRUE(t);
    EXPECT_EQ(t->member, 0u);
    tags[0].bursts = 1;
    EXPECT_FALSE(fam::kv_burst_imbalance(tags, 2)) << "one burst is not repetition";
    std::map<std::uint64_t, fam::TagVolume> uniform{{0, {1e6, 3}}, {1, {1e6, 3}}};
    EXPECT_FALSE(fam::kv_burst_imbalance(uniform, 2));
}
