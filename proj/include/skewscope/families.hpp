#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skewscope/detect_core.hpp"
#include "skewscope/stats.hpp"

// Detector families: pure predicates over already-extracted window data. The
// runbook catalog feeds them; tests can call them with hand-built inputs.
// Each returns a Trip when the red flag fires. `observed` and `threshold` are
// the primary statistic the severity is computed from.

namespace skewscope::family {

struct Trip {
    Trip(double observed_, double threshold_, Evidence evidence_, std::optional<std::uint64_t> member_ = std::nullopt)
        : observed(observed_), threshold(threshold_), evidence(std::move(evidence_)), member(member_) {}

    double observed;
    double threshold;
    Evidence evidence;
    /// Entity the statistic singled out (flow, gpu, rank, member...), when any.
    std::optional<std::uint64_t> member;

    [[nodiscard]] double severity() const { return stats::severity(observed, threshold); }
};

/// Ingress rate spike with queue buildup; both conjuncts required.
inline std::optional<Trip> rate_spike(std::size_t packets, DurationNs window_len, double baseline_rate_per_s,
                                      double max_rx_depth, double baseline_rx_depth, double gap_factor) {
    if (window_len == 0 || !(baseline_rate_per_s > 0)) return std::nullopt;
    const double rate = static_cast<double>(packets) / (static_cast<double>(window_len) / 1e9);
    const double rate_ratio = rate / baseline_rate_per_s;
    if (!(rate_ratio > gap_factor) || !(max_rx_depth > baseline_rx_depth * gap_factor)) return std::nullopt;
    return Trip{rate_ratio, gap_factor,
                {{"rate_per_s", rate}, {"baseline_rate_per_s", baseline_rate_per_s},
                 {"max_rx_depth", max_rx_depth}, {"baseline_rx_depth", baseline_rx_depth}}};
}

/// A single observed gap against gap_factor x its baseline.
inline std::optional<Trip> gap_exceeds(double gap, double baseline_gap, double gap_factor) {
    if (!(baseline_gap > 0)) return std::nullopt;
    const double threshold = gap_factor * baseline_gap;
    if (!(gap > threshold)) return std::nullopt;
    return Trip{gap, threshold, {{"observed_gap_ns", gap}, {"baseline_gap_ns", baseline_gap}}};
}

/// One entity's longest silence against its baseline median gap.
inline std::optional<Trip> gap_starvation(std::span<const TimestampNs> sorted, double baseline_gap, double gap_factor) {
    if (sorted.size() < 2) return std::nullopt;
    return gap_exceeds(static_cast<double>(stats::max_gap(sorted)), baseline_gap, gap_factor);
}

/// Volume imbalance across groups. `thin` selects mean/min (flags the starved
/// group); otherwise max/mean (flags the heavy group).
inline std::optional<Trip> group_skew(const std::map<std::uint64_t, double>& volumes, double skew_ratio, bool thin) {
    const auto skew = thin ? stats::thin_skew(volumes) : stats::group_skew(volumes);
    if (!skew || !(skew->ratio > skew_ratio)) return std::nullopt;
    Trip t{skew->ratio, skew_ratio, {{"skew_ratio", skew->ratio}}, skew->group};
    for (const auto& [g, v] : volumes) t.evidence["volume." + std::to_string(g)] = v;
    return t;
}

/// Share of flagged (retransmitted or duplicated) packets.
inline std::optional<Trip> retransmit(std::size_t flagged, std::size_t total, double frac_threshold,
                                      std::size_t min_events) {
    if (total == 0 || total < min_events) return std::nullopt;
    const double frac = static_cast<double>(flagged) / static_cast<double>(total);
    if (!(frac > frac_threshold)) return std::nullopt;
    return Trip{frac, frac_threshold, {{"frac", frac}, {"flagged", double(flagged)}, {"total", double(total)}}};
}

/// Transmit queue that keeps growing and sits well above its baseline.
inline std::optional<Trip> queue_backlog(std::span<const double> tx_depths, double baseline_depth, double gap_factor) {
    if (tx_depths.size() < 2) return std::nullopt;
    double sum = 0;
    for (double d : tx_depths) sum += d;
    const double mean = sum / static_cast<double>(tx_depths.size());
    const double slope = stats::trend_slope(tx_depths);
    const double threshold = gap_factor * baseline_depth;
    if (!(slope > 0) || !(mean > threshold)) return std::nullopt;
    return Trip{mean, threshold, {{"mean_tx_depth", mean}, {"baseline_tx_depth", baseline_depth}, {"slope", slope}}};
}

/// Median completion latency against its baseline median.
inline std::optional<Trip> slow_completion(std::span<const double> latencies, double baseline_median, double gap_factor) {
    if (latencies.empty() || !(baseline_median > 0)) return std::nullopt;
    const double med = stats::median(latencies);
    const double threshold = gap_factor * baseline_median;
    if (!(med > threshold)) return std::nullopt;
    return Trip{med, threshold, {{"median_latency_ns", med}, {"baseline_latency_ns", baseline_median}}};
}

/// Coefficient of variation of inter-arrival gaps.
inline std::optional<Trip> cadence_jitter(std::span<const double> gaps, double cv_threshold) {
    const auto cv = stats::jitter_cv(gaps);
    if (!cv || !(*cv > cv_threshold)) return std::nullopt;
    return Trip{*cv, cv_threshold, {{"cv", *cv}, {"gaps", double(gaps.size())}}};
}

struct LinkWindow {
    double max_latency_ns = 0;
    double baseline_latency_ns = 0;
    double max_jitter_ns = 0;
    double baseline_jitter_ns = 0;
};

/// Latency and jitter spikes on at least half of the sampled links.
inline std::optional<Trip> link_congestion(std::span<const LinkWindow> links, double gap_factor) {
    if (links.empty()) return std::nullopt;
    std::size_t hot = 0;
    double worst = 0;
    for (const auto& l : links) {
        if (!(l.baseline_latency_ns > 0) || !(l.baseline_jitter_ns > 0)) continue;
        const double lat = l.max_latency_ns / l.baseline_latency_ns;
        if (lat > gap_factor && l.max_jitter_ns > gap_factor * l.baseline_jitter_ns) {
            ++hot;
            worst = std::max(worst, lat);
        }
    }
    if (hot == 0 || 2 * hot < links.size()) return std::nullopt;
    return Trip{worst, gap_factor,
                {{"congested_links", double(hot)}, {"links", double(links.size())}, {"worst_latency_ratio", worst}}};
}

/// Byte rate against capacity.
inline std::optional<Trip> saturation(double utilization, double utilization_frac) {
    if (!(utilization > utilization_frac)) return std::nullopt;
    return Trip{utilization, utilization_frac, {{"utilization", utilization}}};
}

/// Activity of one member relative to a window.
struct Activity {
    /// Last timestamp strictly before the window, if the member was seen earlier.
    std::optional<TimestampNs> prior_last;
    /// Ascending timestamps inside the window.
    std::vector<TimestampNs> in_window;
};

/// Longest silence of a member inside the window, counting from its last
/// earlier activity and up to the window end.
inline DurationNs member_silence(const Activity& a, TimestampNs window_end) {
    std::vector<TimestampNs> seq;
    seq.reserve(a.in_window.size() + 2);
    if (a.prior_last) seq.push_back(*a.prior_last);
    seq.insert(seq.end(), a.in_window.begin(), a.in_window.end());
    seq.push_back(window_end);
    return stats::max_gap(seq);
}

/// Members that fall silent while at least one peer keeps working. Members
/// never seen before the window are ignored.
inline std::vector<Trip> early_stop(const std::map<std::uint64_t, Activity>& members, TimestampNs window_end,
                                    double baseline_step, double gap_factor) {
    std::vector<Trip> out;
    if (members.size() < 2 || !(baseline_step > 0)) return out;
    const double threshold = gap_factor * baseline_step;
    bool active_peer = false;
    std::vector<std::pair<std::uint64_t, double>> silent;
    for (const auto& [m, a] : members) {
        if (!a.prior_last) continue;
        const auto silence = static_cast<double>(member_silence(a, window_end));
        if (silence > threshold) silent.emplace_back(m, silence);
        else if (!a.in_window.empty()) active_peer = true;
    }
    if (!active_peer) return out;
    for (const auto& [m, silence] : silent)
        out.push_back(Trip{silence, threshold, {{"silence_ns", silence}, {"baseline_step_ns", baseline_step}}, m});
    return out;
}

/// One collective's bursts: rank -> first arrival.
using CollectiveArrivals = std::map<std::uint32_t, TimestampNs>;

/// Median arrival spread over complete collectives; flags the rank that is
/// latest on median.
inline std::optional<Trip> arrival_spread(std::span<const CollectiveArrivals> collectives, std::uint32_t group_size,
                                          double baseline_spread, double spread_factor) {
    std::vector<double> spreads;
    std::map<std::uint32_t, std::vector<double>> offsets;
    std::size_t incomplete = 0;
    for (const auto& c : collectives) {
        if (c.size() < group_size || c.empty()) {
            ++incomplete;
            continue;
        }
        const auto spread = stats::arrival_spread(c);
        spreads.push_back(static_cast<double>(spread));
        TimestampNs first = c.begin()->second;
        for (const auto& [r, ts] : c) first = std::min(first, ts);
        for (const auto& [r, ts] : c) offsets[r].push_back(static_cast<double>(ts - first));
    }
    if (spreads.empty()) return std::nullopt;
    const double med = stats::median(spreads);
    const double threshold = spread_factor * baseline_spread;
    if (!(med > threshold)) return std::nullopt;
    std::uint32_t latest = offsets.begin()->first;
    double latest_offset = -1;
    for (const auto& [r, o] : offsets) {
        const double m = stats::median(o);
        if (m > latest_offset) latest_offset = m, latest = r;
    }
    return Trip{med, threshold,
                {{"median_spread_ns", med}, {"baseline_spread_ns", baseline_spread},
                 {"complete", double(spreads.size())}, {"incomplete", double(incomplete)},
                 {"latest_rank_offset_ns", latest_offset}},
                latest};
}

/// Margin a gap must exceed the baseline by to count toward a growing run.
inline constexpr double kGrowingGapMargin = 1.1;
inline constexpr std::size_t kGrowingRunLength = 4;

/// Length of the longest run of strictly increasing gaps, each above `floor`.
inline std::size_t longest_growing_run(std::span<const double> gaps, double floor) {
    std::size_t best = 0, run = 0;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        if (!(gaps[i] > floor)) {
            run = 0;
        } else if (run > 0 && gaps[i] > gaps[i - 1]) {
            ++run;
        } else {
            run = 1;
        }
        best = std::max(best, run);
    }
    return best;
}

/// Stage handoff bubbles: one large gap, or gaps that keep growing.
inline std::optional<Trip> stage_bubble(std::span<const double> gaps, double baseline_gap, double gap_factor) {
    if (gaps.empty() || !(baseline_gap > 0)) return std::nullopt;
    const double largest = *std::max_element(gaps.begin(), gaps.end());
    const double threshold = gap_factor * baseline_gap;
    const auto run = longest_growing_run(gaps, kGrowingGapMargin * baseline_gap);
    if (!(largest > threshold) && run < kGrowingRunLength) return std::nullopt;
    return Trip{largest, threshold,
                {{"max_gap_ns", largest}, {"baseline_gap_ns", baseline_gap}, {"growing_run", double(run)}}};
}

struct StreamGap {
    double max_gap_ns = 0;
    double baseline_gap_ns = 0;
};

/// Streams that stall while a sibling on the same node keeps its cadence.
inline std::vector<Trip> head_of_line(const std::map<std::uint64_t, StreamGap>& streams, double gap_factor) {
    std::vector<Trip> out;
    if (streams.size() < 2) return out;
    std::vector<std::uint64_t> stalled;
    bool healthy_sibling = false;
    for (const auto& [id, s] : streams) {
        if (!(s.baseline_gap_ns > 0)) continue;
        if (s.max_gap_ns > gap_factor * s.baseline_gap_ns) stalled.push_back(id);
        else healthy_sibling = true;
    }
    if (!healthy_sibling) return out;
    for (auto id : stalled) {
        const auto& s = streams.at(id);
        out.push_back(Trip{s.max_gap_ns, gap_factor * s.baseline_gap_ns,
                           {{"observed_gap_ns", s.max_gap_ns}, {"baseline_gap_ns", s.baseline_gap_ns}}, id});
    }
    return out;
}

/// DMAs below this size count as fragmented.
inline constexpr std::uint64_t kSmallDmaBytes = 64 * 1024;

/// Many small transfers and more of them than usual.
inline std::optional<Trip> fragmentation(std::span<const std::uint64_t> sizes, double expected_count,
                                         double small_dma_frac, double gap_factor, std::size_t min_events) {
    if (sizes.empty() || sizes.size() < min_events) return std::nullopt;
    const auto small = std::count_if(sizes.begin(), sizes.end(), [](auto b) { return b < kSmallDmaBytes; });
    const double frac = static_cast<double>(small) / static_cast<double>(sizes.size());
    const double count = static_cast<double>(sizes.size());
    if (!(frac > small_dma_frac) || !(count > gap_factor * std::max(expected_count, 1.0))) return std::nullopt;
    return Trip{frac, small_dma_frac, {{"small_frac", frac}, {"count", count}, {"baseline_count", expected_count}}};
}

/// Idle PCIe with late doorbells while requests are waiting at the NIC.
inline std::optional<Trip> host_bottleneck(double utilization, double utilization_frac, double doorbell_gap_ratio,
                                           double gap_factor, bool ingress_pending) {
    if (!ingress_pending || !(utilization < 1.0 - utilization_frac) || !(doorbell_gap_ratio > gap_factor))
        return std::nullopt;
    return Trip{doorbell_gap_ratio, gap_factor, {{"utilization", utilization}, {"doorbell_gap_ratio", doorbell_gap_ratio}}};
}

/// Map/unmap operations per DMA.
inline std::optional<Trip> registration_churn(std::size_t registrations, std::size_t dmas, double churn_rate,
                                              std::size_t min_events) {
    if (dmas == 0 || dmas < min_events) return std::nullopt;
    const double ratio = static_cast<double>(registrations) / static_cast<double>(dmas);
    if (!(ratio > churn_rate)) return std::nullopt;
    return Trip{ratio, churn_rate, {{"churn_ratio", ratio}, {"registrations", double(registrations)}, {"dmas", double(dmas)}}};
}

/// Slow or erratic peer-to-peer copies.
inline std::optional<Trip> p2p_throttle(std::span<const double> throughputs, double baseline_throughput,
                                        double gap_factor, double cv_threshold) {
    if (throughputs.size() < 2 || !(baseline_throughput > 0)) return std::nullopt;
    const double med = stats::median(throughputs);
    const auto cv = stats::jitter_cv(throughputs);
    const double slowdown = med > 0 ? baseline_throughput / med : std::numeric_limits<double>::infinity();
    const bool slow = slowdown > gap_factor;
    const bool erratic = cv && *cv > cv_threshold;
    if (!slow && !erratic) return std::nullopt;
    Evidence ev{{"median_bytes_per_s", med}, {"baseline_bytes_per_s", baseline_throughput}, {"cv", cv.value_or(0.0)}};
    // Report whichever clause is further past its threshold.
    if (slow && (!erratic || slowdown / gap_factor >= *cv / cv_threshold)) return Trip{slowdown, gap_factor, ev};
    return Trip{*cv, cv_threshold, ev};
}

struct TagVolume {
    double bytes = 0;
    std::size_t bursts = 0;
};

/// Some token tags carry repeated heavy handoffs while others go quiet.
inline std::optional<Trip> kv_burst_imbalance(const std::map<std::uint64_t, TagVolume>& tags, double skew_ratio) {
    std::map<std::uint64_t, double> volumes;
    for (const auto& [t, v] : tags) volumes[t] = v.bytes;
    auto trip = group_skew(volumes, skew_ratio, false);
    if (!trip || tags.at(*trip->member).bursts < 3) return std::nullopt;
    trip->evidence["heavy_bursts"] = static_cast<double>(tags.at(*trip->member).bursts);
    return trip;
}

}  // namespace skewscope::family
