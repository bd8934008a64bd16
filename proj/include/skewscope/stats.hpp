#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "skewscope/telemetry.hpp"

// Streaming-window statistics shared by every runbook detector. All functions
// are pure.

namespace skewscope::stats {

/// Largest consecutive difference of an ascending sequence; 0 below two samples.
inline DurationNs max_gap(std::span<const TimestampNs> sorted) {
    DurationNs best = 0;
    for (std::size_t i = 1; i < sorted.size(); ++i) best = std::max(best, sorted[i] - sorted[i - 1]);
    return best;
}

/// max - min of first-arrival times across members of a group.
template <class Key>
DurationNs arrival_spread(const std::map<Key, TimestampNs>& arrivals) {
    if (arrivals.empty()) throw ArgumentError("arrival_spread: no members");
    auto [lo, hi] = std::minmax_element(arrivals.begin(), arrivals.end(),
                                        [](const auto& a, const auto& b) { return a.second < b.second; });
    return hi->second - lo->second;
}

/// Population coefficient of variation. Empty when fewer than two gaps or the mean is zero.
inline std::optional<double> jitter_cv(std::span<const double> gaps) {
    if (gaps.size() < 2) return std::nullopt;
    double sum = 0.0;
    for (double g : gaps) sum += g;
    const double mean = sum / static_cast<double>(gaps.size());
    if (!(mean > 0.0)) return std::nullopt;
    double sq = 0.0;
    for (double g : gaps) sq += (g - mean) * (g - mean);
    return std::sqrt(sq / static_cast<double>(gaps.size())) / mean;
}

/// Observed byte rate over the window as a fraction of capacity.
inline double utilization(double bytes_in_window, DurationNs window_len_ns, double capacity_bytes_per_s) {
    if (window_len_ns == 0) throw ArgumentError("utilization: zero-length window");
    if (!(capacity_bytes_per_s > 0)) throw ArgumentError("utilization: capacity must be > 0");
    const double seconds = static_cast<double>(window_len_ns) / 1e9;
    return bytes_in_window / seconds / capacity_bytes_per_s;
}

struct GroupSkew {
    double ratio = 1.0;
    std::uint64_t group = 0;
};

/// max/mean of group volumes with the heaviest group (lowest id on ties).
inline std::optional<GroupSkew> group_skew(const std::map<std::uint64_t, double>& volume_by_group) {
    if (volume_by_group.size() < 2) return std::nullopt;
    double total = 0.0;
    GroupSkew best{0.0, volume_by_group.begin()->first};
    double best_volume = -1.0;
    for (const auto& [g, v] : volume_by_group) {
        total += v;
        if (v > best_volume) best_volume = v, best.group = g;
    }
    if (!(total > 0.0)) return std::nullopt;
    best.ratio = best_volume / (total / static_cast<double>(volume_by_group.size()));
    return best;
}

/// mean/min of group volumes with the thinnest group (lowest id on ties).
/// A zero-volume group yields +inf.
inline std::optional<GroupSkew> thin_skew(const std::map<std::uint64_t, double>& volume_by_group) {
    if (volume_by_group.size() < 2) return std::nullopt;
    double total = 0.0;
    GroupSkew best{0.0, volume_by_group.begin()->first};
    double min_volume = std::numeric_limits<double>::infinity();
    for (const auto& [g, v] : volume_by_group) {
        total += v;
        if (v < min_volume) min_volume = v, best.group = g;
    }
    if (!(total > 0.0)) return std::nullopt;
    const double mean = total / static_cast<double>(volume_by_group.size());
    best.ratio = min_volume > 0.0 ? mean / min_volume : std::numeric_limits<double>::infinity();
    return best;
}

/// EWMA step; an absent previous value is initialised directly from the sample.
inline double ewma_update(std::optional<double> prev, double sample, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("ewma_update: alpha must lie in (0, 1]");
    if (!prev) return sample;
    return alpha * sample + (1.0 - alpha) * *prev;
}

/// Median by copy; averages the middle pair for even sizes. Empty input gives 0.
template <class T>
double median(std::span<const T> values) {
    if (values.empty()) return 0.0;
    std::vector<T> v(values.begin(), values.end());
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = static_cast<double>(v[mid]);
    if (v.size() % 2 == 1) return upper;
    const double lower = static_cast<double>(*std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    return (lower + upper) / 2.0;
}

template <class T>
double median(const std::vector<T>& values) {
    return median(std::span<const T>(values));
}

/// Consecutive differences of an ascending sequence.
inline std::vector<double> gaps_of(std::span<const TimestampNs> sorted) {
    std::vector<double> out;
    if (sorted.size() < 2) return out;
    out.reserve(sorted.size() - 1);
    for (std::size_t i = 1; i < sorted.size(); ++i) out.push_back(static_cast<double>(sorted[i] - sorted[i - 1]));
    return out;
}

/// Least-squares slope of y against sample index.
inline double trend_slope(std::span<const double> y) {
    const auto n = static_cast<double>(y.size());
    if (y.size() < 2) return 0.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double x = static_cast<double>(i);
        sx += x, sy += y[i], sxx += x * x, sxy += x * y[i];
    }
    const double denom = n * sxx - sx * sx;
    return denom == 0 ? 0.0 : (n * sxy - sx * sy) / denom;
}

/// Maps observed/threshold onto [0, 1]; reaches 1 at `ceiling_factor` x threshold.
inline double severity(double observed, double threshold, double ceiling_factor = 3.0) {
    if (!(threshold > 0)) return 1.0;
    const double s = (observed / threshold - 1.0) / (ceiling_factor - 1.0);
    if (std::isnan(s)) return 1.0;
    return std::clamp(s, 0.0, 1.0);
}

}  // namespace skewscope::stats
