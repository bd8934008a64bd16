#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "skewscope/detect_core.hpp"
#include "skewscope/families.hpp"
#include "skewscope/stats.hpp"
#include "skewscope/telemetry.hpp"
#include "skewscope/trace_ops.hpp"

// The detector catalog: one entry per pathology. Each entry declares which
// payload kinds it reads, which statistic and threshold key it uses and how it
// fills the finding location. Detectors see the trace only through a view
// restricted to their declared selectors.

namespace skewscope {

/// Events bucketed by payload kind, each bucket in trace order.
class EventIndex {
public:
    explicit EventIndex(std::span<const TelemetryEvent> events) {
        for (const auto& e : events) by_kind_[e.payload.index()].push_back(&e);
    }

    [[nodiscard]] std::span<const TelemetryEvent* const> all(PayloadKind k) const {
        return by_kind_[static_cast<std::size_t>(k)];
    }

private:
    std::array<std::vector<const TelemetryEvent*>, kPayloadKindCount> by_kind_;
};

/// Access to the index limited to a detector's declared selectors.
class SelectorView {
public:
    SelectorView(const EventIndex& index, std::span<const PayloadKind> allowed) : index_(index), allowed_(allowed) {}

    [[nodiscard]] std::span<const TelemetryEvent* const> all(PayloadKind k) const {
        if (std::find(allowed_.begin(), allowed_.end(), k) == allowed_.end())
            throw std::logic_error("detector read undeclared payload kind " + std::string(to_string(k)));
        return index_.all(k);
    }

    /// Events of kind k with start <= ts < end.
    [[nodiscard]] std::span<const TelemetryEvent* const> range(PayloadKind k, TimestampNs start, TimestampNs end) const {
        const auto evs = all(k);
        auto lo = std::partition_point(evs.begin(), evs.end(), [&](const auto* e) { return e->ts < start; });
        auto hi = std::partition_point(lo, evs.end(), [&](const auto* e) { return e->ts < end; });
        return {lo, hi};
    }

    [[nodiscard]] std::span<const TelemetryEvent* const> range(PayloadKind k, Window w) const {
        return range(k, w.start, w.end);
    }

private:
    const EventIndex& index_;
    std::span<const PayloadKind> allowed_;
};

/// Per-trace inputs shared by every detector.
struct DetectEnv {
    ClusterTopology topology;
    DetectorConfig config;
    TimestampNs horizon = 0;
    /// End of the leading fault-free segment baselines are learned from.
    TimestampNs baseline_end = 0;

    [[nodiscard]] Window baseline() const { return {0, baseline_end}; }
};

using WindowDetector = std::function<std::vector<Finding>(Window)>;

struct DetectorCatalogEntry {
    PathologyKind kind;
    VantagePoint vantage;
    std::vector<PayloadKind> selectors;
    std::string_view statistic;
    std::string_view threshold_key;
    std::string_view location_rule;
    /// Learns baselines from the view and returns the per-window predicate.
    std::function<WindowDetector(const SelectorView&, const DetectEnv&)> prepare;
};

namespace detail::rb {

using PK = PayloadKind;
using K = PathologyKind;
using Span = std::span<const TelemetryEvent* const>;

inline std::uint64_t pair_key(std::uint64_t hi, std::uint64_t lo) { return (hi << 32) | lo; }
inline std::uint32_t key_hi(std::uint64_t k) { return static_cast<std::uint32_t>(k >> 32); }
inline std::uint32_t key_lo(std::uint64_t k) { return static_cast<std::uint32_t>(k & 0xFFFFFFFFULL); }

inline Location at_node(std::uint32_t node) {
    Location l;
    l.node_id = node;
    return l;
}

inline Location at_gpu(std::uint64_t node_gpu) {
    auto l = at_node(key_hi(node_gpu));
    l.gpu_id = key_lo(node_gpu);
    return l;
}

inline Finding make_finding(K kind, Window w, Location loc, const family::Trip& t) {
    Finding f{kind, w, std::move(loc), t.severity(), t.evidence};
    f.evidence["observed"] = t.observed;
    f.evidence["threshold"] = t.threshold;
    return f;
}

/// Calls f(event, payload) for every event in the span carrying payload P.
template <class P, class F>
void each(Span events, F&& f) {
    for (const auto* e : events) {
        if (const auto* p = e->as<P>()) f(*e, *p);
    }
}

/// Groups timestamps of payload P by key(event, payload).
template <class P, class KeyFn>
std::map<std::uint64_t, std::vector<TimestampNs>> stamps_by(Span events, KeyFn key) {
    std::map<std::uint64_t, std::vector<TimestampNs>> out;
    each<P>(events, [&](const TelemetryEvent& e, const P& p) { out[key(e, p)].push_back(e.ts); });
    return out;
}

/// Median inter-event gap per key.
inline std::map<std::uint64_t, double> median_gaps(const std::map<std::uint64_t, std::vector<TimestampNs>>& stamps) {
    std::map<std::uint64_t, double> out;
    for (const auto& [k, ts] : stamps) {
        if (ts.size() >= 2) out[k] = stats::median(stats::gaps_of(ts));
    }
    return out;
}

inline double value_or(const std::map<std::uint64_t, double>& m, std::uint64_t k, double fallback = 0.0) {
    auto it = m.find(k);
    return it == m.end() ? fallback : it->second;
}

/// EWMA over a sequence, seeded by its first element.
inline std::optional<double> ewma(std::span<const double> xs, double alpha) {
    std::optional<double> acc;
    for (double x : xs) acc = stats::ewma_update(acc, x, alpha);
    return acc;
}

/// Per-key early-stop activity for a window.
template <class P, class KeyFn>
std::map<std::uint64_t, family::Activity> activity(const SelectorView& v, PK kind, Window w, KeyFn key) {
    std::map<std::uint64_t, family::Activity> out;
    each<P>(v.range(kind, 0, w.start), [&](const TelemetryEvent& e, const P& p) { out[key(e, p)].prior_last = e.ts; });
    each<P>(v.range(kind, w), [&](const TelemetryEvent& e, const P& p) { out[key(e, p)].in_window.push_back(e.ts); });
    return out;
}

/// Typical step of a member group: median over members of each member's
/// longest baseline gap.
template <class P, class KeyFn>
double baseline_step(const SelectorView& v, PK kind, const DetectEnv& env, KeyFn key) {
    std::vector<double> per_member;
    for (const auto& [k, ts] : stamps_by<P>(v.range(kind, env.baseline()), key)) {
        if (ts.size() >= 2) per_member.push_back(static_cast<double>(stats::max_gap(ts)));
    }
    return stats::median(per_member);
}

// ---- north-south --------------------------------------------------------------

inline WindowDetector burst_admission(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    const Window base = env.baseline();
    const DurationNs bin = std::max<DurationNs>(1, std::min<DurationNs>(kNsPerSecond, base.length()));
    const std::size_t bins = base.length() == 0 ? 0 : (base.length() + bin - 1) / bin;
    std::map<std::uint64_t, std::vector<double>> counts;
    each<IngressPacket>(v.range(PK::IngressPacket, base), [&](const TelemetryEvent& e, const IngressPacket&) {
        auto& c = counts[e.node_id];
        c.resize(bins, 0.0);
        c[(e.ts - base.start) / bin] += 1.0;
    });
    std::map<std::uint64_t, double> rate, depth;
    for (auto& [n, c] : counts) {
        for (auto& x : c) x *= 1e9 / static_cast<double>(bin);
        rate[n] = ewma(c, cfg.ewma_alpha).value_or(0.0);
    }
    std::map<std::uint64_t, std::vector<double>> depths;
    each<NicQueueSample>(v.range(PK::NicQueueSample, base), [&](const TelemetryEvent& e, const NicQueueSample& q) {
        depths[e.node_id].push_back(q.rx_depth_pkts);
    });
    for (const auto& [n, d] : depths) depth[n] = ewma(d, cfg.ewma_alpha).value_or(0.0);

    return [=, &v](Window w) {
        std::vector<Finding> out;
        std::map<std::uint64_t, std::size_t> packets;
        each<IngressPacket>(v.range(PK::IngressPacket, w), [&](const TelemetryEvent& e, const IngressPacket&) { ++packets[e.node_id]; });
        std::map<std::uint64_t, double> max_rx;
        each<NicQueueSample>(v.range(PK::NicQueueSample, w), [&](const TelemetryEvent& e, const NicQueueSample& q) {
            auto& m = max_rx[e.node_id];
            m = std::max(m, double(q.rx_depth_pkts));
        });
        for (const auto& [n, count] : packets) {
            if (count < cfg.min_count() || !max_rx.contains(n)) continue;
            if (auto t = family::rate_spike(count, w.length(), value_or(rate, n), max_rx[n], value_or(depth, n), cfg.gap_factor))
                out.push_back(make_finding(K::BurstAdmissionBacklog, w, at_node(key_lo(n)), *t));
        }
        return out;
    };
}

inline WindowDetector ingress_starvation(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    // Baseline: median intra-flow packet gap per node.
    std::map<std::uint64_t, std::map<std::uint64_t, std::vector<TimestampNs>>> by_node;
    each<IngressPacket>(v.range(PK::IngressPacket, env.baseline()), [&](const TelemetryEvent& e, const IngressPacket& p) {
        by_node[e.node_id][p.flow_id].push_back(e.ts);
    });
    std::map<std::uint64_t, double> baseline;
    for (const auto& [n, fl] : by_node) {
        std::vector<double> all;
        for (const auto& [f, ts] : fl) {
            auto g = stats::gaps_of(ts);
            all.insert(all.end(), g.begin(), g.end());
        }
        if (!all.empty()) baseline[n] = stats::median(all);
    }

    return [=, &v](Window w) {
        std::vector<Finding> out;
        std::map<std::uint64_t, std::map<std::uint64_t, std::vector<TimestampNs>>> win;
        std::map<std::uint64_t, std::size_t> count;
        each<IngressPacket>(v.range(PK::IngressPacket, w), [&](const TelemetryEvent& e, const IngressPacket& p) {
            win[e.node_id][p.flow_id].push_back(e.ts);
            ++count[e.node_id];
        });
        for (const auto& [n, fl] : win) {
            if (count[n] < cfg.min_count()) continue;
            std::optional<family::Trip> worst;
            std::uint64_t worst_flow = 0;
            for (const auto& [f, ts] : fl) {
                auto t = family::gap_starvation(ts, value_or(baseline, n), cfg.gap_factor);
                if (t && (!worst || t->observed > worst->observed)) worst = t, worst_flow = f;
            }
            if (!worst) continue;
            worst->evidence["flow_id"] = static_cast<double>(worst_flow);
            auto loc = at_node(key_lo(n));
            loc.flow_id = worst_flow;
            out.push_back(make_finding(K::IngressStarvation, w, loc, *worst));
        }
        return out;
    };
}

inline WindowDetector flow_skew(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    return [=, &v](Window w) {
        std::vector<Finding> out;
        std::map<std::uint64_t, std::map<std::uint64_t, double>> bytes;
        std::map<std::uint64_t, std::size_t> count;
        each<IngressPacket>(v.range(PK::IngressPacket, w), [&](const TelemetryEvent& e, const IngressPacket& p) {
            bytes[e.node_id][p.flow_id] += static_cast<double>(p.bytes);
            ++count[e.node_id];
        });
        for (const auto& [n, vol] : bytes) {
            if (count[n] < cfg.min_count()) continue;
            auto t = family::group_skew(vol, cfg.skew_ratio, false);
            if (!t) continue;
            // Per-flow volumes are too many to list; keep the summary only.
            std::erase_if(t->evidence, [](const auto& kv) { return kv.first.starts_with("volume."); });
            t->evidence["flows"] = static_cast<double>(vol.size());
            t->evidence["heavy_flow_bytes"] = vol.at(*t->member);
            auto loc = at_node(key_lo(n));
            loc.flow_id = *t->member;
            out.push_back(make_finding(K::FlowSkew, w, loc, *t));
        }
        return out;
    };
}

/// Share of flagged packets per node for one packet kind.
template <class P, class Flagged>
WindowDetector retransmit_detector(const SelectorView& v, const DetectEnv& env, PK kind, K pathology, Flagged flagged) {
    const auto& cfg = env.config;
    return [=, &v](Window w) {
        std::vector<Finding> out;
        std::map<std::uint64_t, std::pair<std::size_t, std::size_t>> tally;
        each<P>(v.range(kind, w), [&](const TelemetryEvent& e, const P& p) {
            auto& [f, t] = tally[e.node_id];
            f += flagged(p) ? 1 : 0;
            ++t;
        });
        for (const auto& [n, ft] : tally) {
            if (auto t = family::retransmit(ft.first, ft.second, cfg.retransmit_frac, cfg.min_count()))
                out.push_back(make_finding(pathology, w, at_node(key_lo(n)), *t));
        }
        return out;
    };
}

inline WindowDetector egress_backlog(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    std::map<std::uint64_t, std::vector<double>> depths;
    each<NicQueueSample>(v.range(PK::NicQueueSample, env.baseline()), [&](const TelemetryEvent& e, const NicQueueSample& q) {
        depths[e.node_id].push_back(q.tx_depth_pkts);
    });
    std::map<std::uint64_t, double> baseline;
    for (const auto& [n, d] : depths) baseline[n] = ewma(d, cfg.ewma_alpha).value_or(0.0);

    return [=, &v](Window w) {
        std::vector<Finding> out;
        std::map<std::uint64_t, std::vector<double>> win;
        each<NicQueueSample>(v.range(PK::NicQueueSample, w), [&](const TelemetryEvent& e, const NicQueueSample& q) {
            win[e.node_id].push_back(q.tx_depth_pkts);
        });
        std::map<std::uint64_t, double> sent;
        each<EgressPacket>(v.range(PK::EgressPacket, w), [&](const TelemetryEvent& e, const EgressPacket&) { sent[e.node_id] += 1; });
        for (const auto& [n, d] : win) {
            if (d.size() < cfg.min_count() || !baseline.contains(n)) continue;
            if (auto t = family::queue_backlog(d, baseline.at(n), cfg.gap_factor)) {
                t->evidence["egress_packets"] = value_or(sent, n);
                out.push_back(make_finding(K::EgressBacklog, w, at_node(key_lo(n)), *t));
            }
        }
        return out;
    };
}

inline WindowDetector egress_jitter(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    return [=, &v](Window w) {
        std::vector<Finding> out;
        // Per response stream (flow), first transmissions only.
        std::map<std::uint64_t, std::map<std::uint64_t, std::vector<TimestampNs>>> streams;
        each<EgressPacket>(v.range(PK::EgressPacket, w), [&](const TelemetryEvent& e, const EgressPacket& p) {
            if (!p.is_retransmit) streams[e.node_id][p.flow_id].push_back(e.ts);
        });
        for (const auto& [n, fl] : streams) {
            std::optional<family::Trip> worst;
            std::uint64_t worst_flow = 0;
            for (const auto& [f, ts] : fl) {
                if (ts.size() < cfg.min_count()) continue;
                const auto gaps = stats::gaps_of(ts);
                auto t = family::cadence_jitter(gaps, cfg.jitter_cv);
                if (t && (!worst || t->observed > worst->observed)) worst = t, worst_flow = f;
            }
            if (!worst) continue;
            worst->evidence["flow_id"] = static_cast<double>(worst_flow);
            out.push_back(make_finding(K::EgressJitter, w, at_node(key_lo(n)), *worst));
        }
        return out;
    };
}

/// Early-stop detector over members keyed by key(event, payload); `loc` maps a
/// member key to the finding location.
template <class P, class KeyFn, class LocFn>
WindowDetector early_stop_detector(const SelectorView& v, const DetectEnv& env, PK kind, K pathology, KeyFn key, LocFn loc) {
    const auto& cfg = env.config;
    const double step = baseline_step<P>(v, kind, env, key);
    return [=, &v](Window w) {
        std::vector<Finding> out;
        const auto members = activity<P>(v, kind, w, key);
        std::size_t in_window = 0;
        for (const auto& [m, a] : members) in_window += a.in_window.size();
        if (in_window < cfg.min_count()) return out;
        for (const auto& t : family::early_stop(members, w.end, step, cfg.gap_factor)) {
            auto f = make_finding(pathology, w, loc(*t.member), t);
            f.evidence["member"] = static_cast<double>(*t.member);
            out.push_back(std::move(f));
        }
        return out;
    };
}

inline WindowDetector bandwidth_saturation(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    const double cap = env.topology.nic_capacity_bytes_per_s;
    std::map<std::uint64_t, std::vector<double>> depths;
    each<NicQueueSample>(v.range(PK::NicQueueSample, env.baseline()), [&](const TelemetryEvent& e, const NicQueueSample& q) {
        depths[e.node_id].push_back(std::max(q.rx_depth_pkts, q.tx_depth_pkts));
    });
    std::map<std::uint64_t, double> baseline;
    for (const auto& [n, d] : depths) baseline[n] = ewma(d, cfg.ewma_alpha).value_or(0.0);

    return [=, &v](Window w) {
        std::vector<Finding> out;
        struct Acc {
            double rx = 0, tx = 0, depth = 0;
            std::size_t n = 0;
        };
        std::map<std::uint64_t, Acc> acc;
        each<NicQueueSample>(v.range(PK::NicQueueSample, w), [&](const TelemetryEvent& e, const NicQueueSample& q) {
            auto& a = acc[e.node_id];
            a.rx += static_cast<double>(q.rx_bytes_per_s);
            a.tx += static_cast<double>(q.tx_bytes_per_s);
            a.depth += std::max(q.rx_depth_pkts, q.tx_depth_pkts);
            ++a.n;
        });
        for (const auto& [n, a] : acc) {
            if (a.n < cfg.min_count() || !baseline.contains(n)) continue;
            const double count = static_cast<double>(a.n);
            const double util = std::max(a.rx, a.tx) / count / cap;
            const double depth = a.depth / count;
            if (!(depth > cfg.gap_factor * baseline.at(n))) continue;
            if (auto t = family::saturation(util, cfg.utilization_frac)) {
                t->evidence["mean_queue_depth"] = depth;
                t->evidence["baseline_queue_depth"] = baseline.at(n);
                out.push_back(make_finding(K::BandwidthSaturation, w, at_node(key_lo(n)), *t));
            }
        }
        return out;
    };
}

// ---- PCIe -------------------------------------------------------------------------

/// node/gpu key for DMA-side payloads.
struct GpuKey {
    std::uint64_t operator()(const TelemetryEvent& e, const DmaH2D& p) const { return pair_key(e.node_id, p.gpu_id); }
    std::uint64_t operator()(const TelemetryEvent& e, const DmaD2H& p) const { return pair_key(e.node_id, p.gpu_id); }
    std::uint64_t operator()(const TelemetryEvent& e, const DoorbellWrite& p) const { return pair_key(e.node_id, p.gpu_id); }
};

/// Bytes moved over a node's PCIe link by DMA payloads in the span set.
inline std::map<std::uint64_t, double> dma_bytes(const SelectorView& v, Window w) {
    std::map<std::uint64_t, double> out;
    each<DmaH2D>(v.range(PK::DmaH2D, w), [&](const TelemetryEvent& e, const DmaH2D& p) { out[e.node_id] += double(p.bytes); });
    each<DmaD2H>(v.range(PK::DmaD2H, w), [&](const TelemetryEvent& e, const DmaD2H& p) { out[e.node_id] += double(p.bytes); });
    each<DmaP2P>(v.range(PK::DmaP2P, w), [&](const TelemetryEvent& e, const DmaP2P& p) { out[e.node_id] += double(p.bytes); });
    return out;
}

/// Per node: worst ratio of a GPU's doorbell max gap to its baseline median gap.
class DoorbellStall {
public:
    DoorbellStall(const SelectorView& v, const DetectEnv& env)
        : baseline_(median_gaps(stamps_by<DoorbellWrite>(v.range(PK::DoorbellWrite, env.baseline()), GpuKey{}))) {}

    [[nodiscard]] std::map<std::uint64_t, double> ratios(const SelectorView& v, Window w) const {
        std::map<std::uint64_t, double> out;
        for (const auto& [k, ts] : stamps_by<DoorbellWrite>(v.range(PK::DoorbellWrite, w), GpuKey{})) {
            const double base = value_or(baseline_, k);
            if (ts.size() < 2 || !(base > 0)) continue;
            auto& r = out[key_hi(k)];
            r = std::max(r, static_cast<double>(stats::max_gap(ts)) / base);
        }
        return out;
    }

private:
    std::map<std::uint64_t, double> baseline_;
};

inline WindowDetector h2d_starvation(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    struct Mark {
        TimestampNs ts;
        bool h2d;
    };
    auto merged = [&v](Window w) {
        std::map<std::uint64_t, std::vector<Mark>> out;
        each<DmaH2D>(v.range(PK::DmaH2D, w), [&](const TelemetryEvent& e, const DmaH2D& p) { out[pair_key(e.node_id, p.gpu_id)].push_back({e.ts, true}); });
        each<DoorbellWrite>(v.range(PK::DoorbellWrite, w), [&](const TelemetryEvent& e, const DoorbellWrite& p) { out[pair_key(e.node_id, p.gpu_id)].push_back({e.ts, false}); });
        for (auto& [k, m] : out) std::stable_sort(m.begin(), m.end(), [](const Mark& a, const Mark& b) { return a.ts < b.ts; });
        return out;
    };
    std::map<std::uint64_t, double> baseline;
    for (const auto& [k, m] : merged(env.baseline())) {
        std::vector<double> gaps;
        for (std::size_t i = 1; i < m.size(); ++i) gaps.push_back(double(m[i].ts - m[i - 1].ts));
        if (!gaps.empty()) baseline[k] = stats::median(gaps);
    }
    return [=](Window w) {
        std::vector<Finding> out;
        for (const auto& [k, m] : merged(w)) {
            if (m.size() < cfg.min_count() || !baseline.contains(k)) continue;
            // Longest wait that starts at an H2D transfer.
            DurationNs worst = 0;
            for (std::size_t i = 0; i + 1 < m.size(); ++i) {
                if (m[i].h2d) worst = std::max(worst, m[i + 1].ts - m[i].ts);
            }
            if (auto t = family::gap_exceeds(double(worst), baseline.at(k), cfg.gap_factor))
                out.push_back(make_finding(K::H2dStarvation, w, at_gpu(k), *t));
        }
        return out;
    };
}

inline WindowDetector d2h_bottleneck(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    auto latencies = [&v](Window w) {
        std::map<std::uint64_t, std::vector<double>> out;
        each<DmaD2H>(v.range(PK::DmaD2H, w), [&](const TelemetryEvent& e, const DmaD2H& p) {
            out[pair_key(e.node_id, p.gpu_id)].push_back(double(p.completion_latency_ns));
        });
        return out;
    };
    std::map<std::uint64_t, double> baseline;
    for (const auto& [k, l] : latencies(env.baseline())) baseline[k] = stats::median(l);
    return [=](Window w) {
        std::vector<Finding> out;
        for (const auto& [k, l] : latencies(w)) {
            if (l.size() < cfg.min_count()) continue;
            if (auto t = family::slow_completion(l, value_or(baseline, k), cfg.gap_factor))
                out.push_back(make_finding(K::D2hBottleneck, w, at_gpu(k), *t));
        }
        return out;
    };
}

/// Entity gap detector: max gap per key against the key's baseline median gap.
template <class P, class KeyFn, class LocFn>
WindowDetector gap_detector(const SelectorView& v, const DetectEnv& env, PK kind, K pathology, KeyFn key, LocFn loc) {
    const auto& cfg = env.config;
    const auto baseline = median_gaps(stamps_by<P>(v.range(kind, env.baseline()), key));
    return [=, &v](Window w) {
        std::vector<Finding> out;
        for (const auto& [k, ts] : stamps_by<P>(v.range(kind, w), key)) {
            if (ts.size() < cfg.min_count()) continue;
            if (auto t = family::gap_starvation(ts, value_or(baseline, k), cfg.gap_factor))
                out.push_back(make_finding(pathology, w, loc(k), *t));
        }
        return out;
    };
}

inline WindowDetector intra_node_gpu_skew(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    auto volumes = [&v](Window w, std::map<std::uint64_t, std::map<std::uint64_t, double>>& out, std::size_t& n) {
        each<DmaH2D>(v.range(PK::DmaH2D, w), [&](const TelemetryEvent& e, const DmaH2D& p) { out[e.node_id][p.gpu_id] += double(p.bytes); ++n; });
        each<DmaD2H>(v.range(PK::DmaD2H, w), [&](const TelemetryEvent& e, const DmaD2H& p) { out[e.node_id][p.gpu_id] += double(p.bytes); ++n; });
    };
    // GPUs seen moving data in the baseline stay in the comparison even when silent.
    std::map<std::uint64_t, std::map<std::uint64_t, double>> known;
    std::size_t ignored = 0;
    volumes(env.baseline(), known, ignored);
    for (auto& [n, g] : known)
        for (auto& [id, b] : g) b = 0.0;
    return [=](Window w) {
        std::vector<Finding> out;
        auto vol = known;
        std::size_t count = 0;
        volumes(w, vol, count);
        if (count < cfg.min_count()) return out;
        for (const auto& [n, g] : vol) {
            if (auto t = family::group_skew(g, cfg.skew_ratio, true)) {
                auto loc = at_node(key_lo(n));
                loc.gpu_id = static_cast<std::uint32_t>(*t->member);
                out.push_back(make_finding(K::IntraNodeGpuSkew, w, loc, *t));
            }
        }
        return out;
    };
}

inline WindowDetector pcie_saturation(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    const double cap = env.topology.pcie_capacity_bytes_per_s;
    const DoorbellStall stall(v, env);
    return [=, &v](Window w) {
        std::vector<Finding> out;
        const auto ratios = stall.ratios(v, w);
        for (const auto& [n, bytes] : dma_bytes(v, w)) {
            const double util = stats::utilization(bytes, w.length(), cap);
            const double gap_ratio = value_or(ratios, n);
            if (!(gap_ratio > cfg.gap_factor)) continue;
            if (auto t = family::saturation(util, cfg.utilization_frac)) {
                t->evidence["doorbell_gap_ratio"] = gap_ratio;
                out.push_back(make_finding(K::PcieLinkSaturation, w, at_node(key_lo(n)), *t));
            }
        }
        return out;
    };
}

inline WindowDetector p2p_throttling(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    // Key: node, src gpu, dst gpu.
    auto series = [&v](Window w) {
        std::map<std::uint64_t, std::vector<double>> out;
        each<DmaP2P>(v.range(PK::DmaP2P, w), [&](const TelemetryEvent& e, const DmaP2P& p) {
            if (p.duration_ns == 0) return;
            out[pair_key(e.node_id, (std::uint64_t{p.src_gpu} << 16) | p.dst_gpu)].push_back(double(p.bytes) * 1e9 / double(p.duration_ns));
        });
        return out;
    };
    std::map<std::uint64_t, double> baseline;
    for (const auto& [k, s] : series(env.baseline())) baseline[k] = stats::median(s);
    return [=](Window w) {
        std::vector<Finding> out;
        for (const auto& [k, s] : series(w)) {
            if (s.size() < cfg.min_count()) continue;
            if (auto t = family::p2p_throttle(s, value_or(baseline, k), cfg.gap_factor, cfg.jitter_cv)) {
                auto loc = at_node(key_hi(k));
                loc.gpu_id = key_lo(k) >> 16;
                t->evidence["dst_gpu"] = static_cast<double>(key_lo(k) & 0xFFFF);
                out.push_back(make_finding(K::P2pThrottling, w, loc, *t));
            }
        }
        return out;
    };
}

inline WindowDetector fragmentation(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    std::map<std::uint64_t, double> base_count;
    each<DmaH2D>(v.range(PK::DmaH2D, env.baseline()), [&](const TelemetryEvent& e, const DmaH2D&) { base_count[e.node_id] += 1; });
    const double base_len = static_cast<double>(env.baseline().length());
    return [=, &v](Window w) {
        std::vector<Finding> out;
        std::map<std::uint64_t, std::vector<std::uint64_t>> sizes;
        each<DmaH2D>(v.range(PK::DmaH2D, w), [&](const TelemetryEvent& e, const DmaH2D& p) { sizes[e.node_id].push_back(p.bytes); });
        for (const auto& [n, s] : sizes) {
            const double expected = base_len > 0 ? value_or(base_count, n) * double(w.length()) / base_len : 0.0;
            if (auto t = family::fragmentation(s, expected, cfg.small_dma_frac, cfg.gap_factor, cfg.min_count()))
                out.push_back(make_finding(K::PinnedMemoryFragmentation, w, at_node(key_lo(n)), *t));
        }
        return out;
    };
}

inline WindowDetector host_cpu_bottleneck(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    const double cap = env.topology.pcie_capacity_bytes_per_s;
    const DoorbellStall stall(v, env);
    return [=, &v](Window w) {
        std::vector<Finding> out;
        std::map<std::uint64_t, std::size_t> ingress;
        each<IngressPacket>(v.range(PK::IngressPacket, w), [&](const TelemetryEvent& e, const IngressPacket&) { ++ingress[e.node_id]; });
        const auto bytes = dma_bytes(v, w);
        for (const auto& [n, ratio] : stall.ratios(v, w)) {
            const double util = stats::utilization(value_or(bytes, n), w.length(), cap);
            if (auto t = family::host_bottleneck(util, cfg.utilization_frac, ratio, cfg.gap_factor, ingress[n] > 0)) {
                t->evidence["ingress_packets"] = static_cast<double>(ingress[n]);
                out.push_back(make_finding(K::HostCpuBottleneck, w, at_node(key_lo(n)), *t));
            }
        }
        return out;
    };
}

inline WindowDetector registration_churn(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    return [=, &v](Window w) {
        std::vector<Finding> out;
        std::map<std::uint64_t, std::pair<std::size_t, std::size_t>> tally;  // registrations, dmas
        for (auto k : {PK::MemRegister, PK::MemUnregister})
            for (const auto* e : v.range(k, w)) ++tally[e->node_id].first;
        for (auto k : {PK::DmaH2D, PK::DmaD2H})
            for (const auto* e : v.range(k, w)) ++tally[e->node_id].second;
        for (const auto& [n, rd] : tally) {
            if (auto t = family::registration_churn(rd.first, rd.second, cfg.churn_rate, cfg.min_count()))
                out.push_back(make_finding(K::RegistrationChurn, w, at_node(key_lo(n)), *t));
        }
        return out;
    };
}

// ---- east-west ----------------------------------------------------------------------

inline WindowDetector tp_straggler(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    const std::uint32_t tp = env.topology.tp_degree;
    struct Burst {
        std::uint32_t rank;
        std::uint32_t node;
        TimestampNs ts;
    };
    // Per node: the collectives it took part in.
    auto per_node = [&v](Window w) {
        std::map<std::uint64_t, std::vector<Burst>> by_id;
        each<CollectiveBurst>(v.range(PK::CollectiveBurst, w), [&](const TelemetryEvent& e, const CollectiveBurst& p) {
            by_id[p.collective_id].push_back({p.rank, e.node_id, e.ts});
        });
        std::map<std::uint64_t, std::vector<family::CollectiveArrivals>> out;
        std::map<std::uint64_t, std::map<std::uint32_t, std::uint32_t>> rank_node;
        for (const auto& [id, bursts] : by_id) {
            family::CollectiveArrivals arr;
            std::set<std::uint32_t> nodes;
            for (const auto& b : bursts) {
                auto [it, fresh] = arr.emplace(b.rank, b.ts);
                if (!fresh) it->second = std::min(it->second, b.ts);
                nodes.insert(b.node);
            }
            for (auto n : nodes) out[n].push_back(arr);
            for (const auto& b : bursts) rank_node[b.node][b.rank] = b.node;
        }
        return std::pair{out, rank_node};
    };
    std::map<std::uint64_t, double> baseline;
    for (const auto& [n, cs] : per_node(env.baseline()).first) {
        std::vector<double> spreads;
        for (const auto& c : cs)
            if (c.size() >= tp) spreads.push_back(double(stats::arrival_spread(c)));
        if (!spreads.empty()) baseline[n] = stats::median(spreads);
    }
    return [=](Window w) {
        std::vector<Finding> out;
        const auto [cs_by_node, rank_node] = per_node(w);
        for (const auto& [n, cs] : cs_by_node) {
            if (cs.size() < 1 || !baseline.contains(n)) continue;
            auto t = family::arrival_spread(cs, tp, baseline.at(n), cfg.spread_factor);
            if (!t) continue;
            const auto rank = static_cast<std::uint32_t>(*t->member);
            // Only the node hosting the late rank reports it.
            auto rn = rank_node.find(n);
            if (rn == rank_node.end() || !rn->second.contains(rank)) continue;
            auto loc = at_node(key_lo(n));
            loc.rank = rank;
            out.push_back(make_finding(K::TpStraggler, w, loc, *t));
        }
        return out;
    };
}

inline WindowDetector pp_bubble(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    auto key = [](const TelemetryEvent& e, const StageHandoff& p) { return pair_key(e.node_id, p.from_stage); };
    const auto baseline = median_gaps(stamps_by<StageHandoff>(v.range(PK::StageHandoff, env.baseline()), key));
    return [=, &v](Window w) {
        std::vector<Finding> out;
        for (const auto& [k, ts] : stamps_by<StageHandoff>(v.range(PK::StageHandoff, w), key)) {
            if (ts.size() < cfg.min_count()) continue;
            const auto gaps = stats::gaps_of(ts);
            if (auto t = family::stage_bubble(gaps, value_or(baseline, k), cfg.gap_factor)) {
                auto loc = at_node(key_hi(k));
                loc.stage = key_lo(k);
                out.push_back(make_finding(K::PpBubble, w, loc, *t));
            }
        }
        return out;
    };
}

inline WindowDetector cross_node_skew(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    std::map<std::uint64_t, double> known;
    for (const auto* e : v.range(PK::CollectiveBurst, env.baseline())) known[e->node_id] = 0.0;
    return [=, &v](Window w) {
        std::vector<Finding> out;
        auto vol = known;
        const auto evs = v.range(PK::CollectiveBurst, w);
        if (evs.size() < cfg.min_count()) return out;
        each<CollectiveBurst>(evs, [&](const TelemetryEvent& e, const CollectiveBurst& p) { vol[e.node_id] += double(p.bytes); });
        if (auto t = family::group_skew(vol, cfg.skew_ratio, false))
            out.push_back(make_finding(K::CrossNodeLoadSkew, w, at_node(key_lo(*t->member)), *t));
        return out;
    };
}

inline WindowDetector network_congestion(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    auto key = [](const TelemetryEvent& e, const LinkSample& p) { return pair_key(e.node_id, p.peer_node); };
    std::map<std::uint64_t, std::pair<std::vector<double>, std::vector<double>>> base;
    each<LinkSample>(v.range(PK::LinkSample, env.baseline()), [&](const TelemetryEvent& e, const LinkSample& p) {
        auto& [lat, jit] = base[key(e, p)];
        lat.push_back(double(p.latency_ns));
        jit.push_back(double(p.jitter_ns));
    });
    std::map<std::uint64_t, std::pair<double, double>> baseline;
    for (const auto& [k, lj] : base) baseline[k] = {stats::median(lj.first), stats::median(lj.second)};
    return [=, &v](Window w) {
        std::vector<Finding> out;
        const auto evs = v.range(PK::LinkSample, w);
        if (evs.size() < cfg.min_count()) return out;
        std::map<std::uint64_t, family::LinkWindow> links;
        each<LinkSample>(evs, [&](const TelemetryEvent& e, const LinkSample& p) {
            const auto k = key(e, p);
            auto it = baseline.find(k);
            if (it == baseline.end()) return;
            auto& l = links[k];
            l.baseline_latency_ns = it->second.first;
            l.baseline_jitter_ns = it->second.second;
            l.max_latency_ns = std::max(l.max_latency_ns, double(p.latency_ns));
            l.max_jitter_ns = std::max(l.max_jitter_ns, double(p.jitter_ns));
        });
        std::vector<family::LinkWindow> list;
        for (const auto& [k, l] : links) list.push_back(l);
        if (auto t = family::link_congestion(list, cfg.gap_factor)) out.push_back(make_finding(K::NetworkCongestion, w, {}, *t));
        return out;
    };
}

inline WindowDetector head_of_line(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    auto key = [](const TelemetryEvent& e, const FabricPacket& p) { return pair_key(e.node_id, p.flow_id); };
    const auto baseline = median_gaps(stamps_by<FabricPacket>(v.range(PK::FabricPacket, env.baseline()), key));
    return [=, &v](Window w) {
        std::vector<Finding> out;
        std::map<std::uint64_t, std::map<std::uint64_t, family::StreamGap>> nodes;
        for (const auto& [k, ts] : stamps_by<FabricPacket>(v.range(PK::FabricPacket, w), key)) {
            if (ts.size() < cfg.min_count() || !baseline.contains(k)) continue;
            nodes[key_hi(k)][key_lo(k)] = {double(stats::max_gap(ts)), baseline.at(k)};
        }
        for (const auto& [n, streams] : nodes) {
            for (const auto& t : family::head_of_line(streams, cfg.gap_factor)) {
                auto loc = at_node(key_lo(n));
                loc.flow_id = *t.member;
                out.push_back(make_finding(K::HeadOfLineBlocking, w, loc, t));
            }
        }
        return out;
    };
}

inline WindowDetector kv_transfer(const SelectorView& v, const DetectEnv& env) {
    const auto& cfg = env.config;
    std::map<std::uint64_t, std::map<std::uint64_t, family::TagVolume>> known;
    each<StageHandoff>(v.range(PK::StageHandoff, env.baseline()), [&](const TelemetryEvent& e, const StageHandoff& p) {
        known[e.node_id][p.token_tag] = {};
    });
    return [=, &v](Window w) {
        std::vector<Finding> out;
        auto tags = known;
        std::map<std::uint64_t, std::size_t> count;
        each<StageHandoff>(v.range(PK::StageHandoff, w), [&](const TelemetryEvent& e, const StageHandoff& p) {
            auto& t = tags[e.node_id][p.token_tag];
            t.bytes += double(p.bytes);
            ++t.bursts;
            ++count[e.node_id];
        });
        for (const auto& [n, t] : tags) {
            if (count[n] < cfg.min_count()) continue;
            if (auto trip = family::kv_burst_imbalance(t, cfg.skew_ratio)) {
                trip->evidence["token_tag"] = static_cast<double>(*trip->member);
                out.push_back(make_finding(K::KvCacheTransferBottleneck, w, at_node(key_lo(n)), *trip));
            }
        }
        return out;
    };
}

inline std::vector<DetectorCatalogEntry> build_catalog() {
    using V = VantagePoint;
    std::vector<DetectorCatalogEntry> c;
    auto node_loc = [](std::uint64_t k) { return at_node(key_lo(k)); };
    auto gpu_loc = [](std::uint64_t k) { return at_gpu(k); };

    c.push_back({K::BurstAdmissionBacklog, V::NorthSouthNic, {PK::IngressPacket, PK::NicQueueSample},
                 "ingress rate / EWMA rate and max rx depth / EWMA depth", "gap_factor", "node", burst_admission});
    c.push_back({K::IngressStarvation, V::NorthSouthNic, {PK::IngressPacket}, "max intra-flow gap / median gap",
                 "gap_factor", "node, worst flow", ingress_starvation});
    c.push_back({K::FlowSkew, V::NorthSouthNic, {PK::IngressPacket}, "max/mean flow bytes", "skew_ratio",
                 "node, heaviest flow", flow_skew});
    c.push_back({K::IngressDropRetransmit, V::NorthSouthNic, {PK::IngressPacket}, "retransmitted ingress fraction",
                 "retransmit_frac", "node", [](const SelectorView& v, const DetectEnv& env) {
                     return retransmit_detector<IngressPacket>(v, env, PK::IngressPacket, K::IngressDropRetransmit,
                                                               [](const IngressPacket& p) { return p.is_retransmit; });
                 }});
    c.push_back({K::EgressBacklog, V::NorthSouthNic, {PK::NicQueueSample, PK::EgressPacket},
                 "tx depth trend and mean / EWMA depth", "gap_factor", "node", egress_backlog});
    c.push_back({K::EgressJitter, V::NorthSouthNic, {PK::EgressPacket}, "max per-stream gap cv", "jitter_cv", "node",
                 egress_jitter});
    c.push_back({K::EgressDropRetransmit, V::NorthSouthNic, {PK::EgressPacket}, "retransmitted egress fraction",
                 "retransmit_frac", "node", [](const SelectorView& v, const DetectEnv& env) {
                     return retransmit_detector<EgressPacket>(v, env, PK::EgressPacket, K::EgressDropRetransmit,
                                                              [](const EgressPacket& p) { return p.is_retransmit; });
                 }});
    c.push_back({K::EarlyCompletionSkew, V::NorthSouthNic, {PK::EgressPacket}, "egress stream silence / step",
                 "gap_factor", "node of the silent stream", [node_loc](const SelectorView& v, const DetectEnv& env) {
                     return early_stop_detector<EgressPacket>(
                         v, env, PK::EgressPacket, K::EarlyCompletionSkew,
                         [](const TelemetryEvent& e, const EgressPacket& p) { return pair_key(e.node_id, p.stream_id); },
                         [](std::uint64_t k) { return at_node(key_hi(k)); });
                 }});
    c.push_back({K::BandwidthSaturation, V::NorthSouthNic, {PK::NicQueueSample},
                 "NIC rx/tx rate / capacity with queue buildup", "utilization_frac", "node", bandwidth_saturation});

    c.push_back({K::H2dStarvation, V::PcieObserver, {PK::DmaH2D, PK::DoorbellWrite},
                 "longest H2D-to-next-event gap / median gap", "gap_factor", "node, gpu", h2d_starvation});
    c.push_back({K::D2hBottleneck, V::PcieObserver, {PK::DmaD2H}, "median D2H latency / baseline", "gap_factor",
                 "node, gpu", d2h_bottleneck});
    c.push_back({K::KernelLaunchLatency, V::PcieObserver, {PK::DoorbellWrite}, "max doorbell gap / median gap",
                 "gap_factor", "node, gpu", [gpu_loc](const SelectorView& v, const DetectEnv& env) {
                     return gap_detector<DoorbellWrite>(v, env, PK::DoorbellWrite, K::KernelLaunchLatency, GpuKey{}, gpu_loc);
                 }});
    c.push_back({K::IntraNodeGpuSkew, V::PcieObserver, {PK::DmaH2D, PK::DmaD2H}, "mean/min per-GPU DMA bytes",
                 "skew_ratio", "node, thinnest gpu", intra_node_gpu_skew});
    c.push_back({K::PcieLinkSaturation, V::PcieObserver,
                 {PK::DmaH2D, PK::DmaD2H, PK::DmaP2P, PK::DoorbellWrite}, "PCIe bytes / capacity with doorbell stall",
                 "utilization_frac", "node", pcie_saturation});
    c.push_back({K::P2pThrottling, V::PcieObserver, {PK::DmaP2P}, "baseline/median P2P throughput or throughput cv",
                 "gap_factor", "node, source gpu", p2p_throttling});
    c.push_back({K::PinnedMemoryFragmentation, V::PcieObserver, {PK::DmaH2D}, "small H2D fraction with count rise",
                 "small_dma_frac", "node", fragmentation});
    c.push_back({K::HostCpuBottleneck, V::PcieObserver,
                 {PK::DmaH2D, PK::DmaD2H, PK::DmaP2P, PK::DoorbellWrite, PK::IngressPacket},
                 "doorbell gap / median gap at low PCIe utilization with ingress pending", "gap_factor", "node",
                 host_cpu_bottleneck});
    c.push_back({K::RegistrationChurn, V::PcieObserver, {PK::MemRegister, PK::MemUnregister, PK::DmaH2D, PK::DmaD2H},
                 "(register + unregister) / DMAs", "churn_rate", "node", registration_churn});
    c.push_back({K::DecodeEarlyStopSkew, V::PcieObserver, {PK::DmaD2H}, "per-GPU D2H silence / step", "gap_factor",
                 "node, silent gpu", [gpu_loc](const SelectorView& v, const DetectEnv& env) {
                     return early_stop_detector<DmaD2H>(v, env, PK::DmaD2H, K::DecodeEarlyStopSkew, GpuKey{}, gpu_loc);
                 }});

    c.push_back({K::TpStraggler, V::EastWestFabric, {PK::CollectiveBurst}, "median collective arrival spread / baseline",
                 "spread_factor", "node, latest rank", tp_straggler});
    c.push_back({K::PpBubble, V::EastWestFabric, {PK::StageHandoff}, "max or growing handoff gap / median gap",
                 "gap_factor", "node, stage", pp_bubble});
    c.push_back({K::CrossNodeLoadSkew, V::EastWestFabric, {PK::CollectiveBurst}, "max/mean per-node collective bytes",
                 "skew_ratio", "heaviest node", cross_node_skew});
    c.push_back({K::NetworkCongestion, V::EastWestFabric, {PK::LinkSample},
                 "links with latency and jitter spikes / links", "gap_factor", "cluster-wide", network_congestion});
    c.push_back({K::HeadOfLineBlocking, V::EastWestFabric, {PK::FabricPacket},
                 "stalled stream gap / median gap with a steady sibling", "gap_factor", "node, stalled flow", head_of_line});
    c.push_back({K::RetransmissionStorm, V::EastWestFabric, {PK::FabricPacket}, "retransmitted or duplicate fraction",
                 "retransmit_frac", "node", [](const SelectorView& v, const DetectEnv& env) {
                     return retransmit_detector<FabricPacket>(v, env, PK::FabricPacket, K::RetransmissionStorm,
                                                              [](const FabricPacket& p) { return p.is_retransmit || p.is_duplicate; });
                 }});
    c.push_back({K::CreditStarvation, V::EastWestFabric, {PK::RdmaCreditUpdate}, "max credit-update gap / median gap",
                 "gap_factor", "node, queue pair (flow field)", [](const SelectorView& v, const DetectEnv& env) {
                     return gap_detector<RdmaCreditUpdate>(
                         v, env, PK::RdmaCreditUpdate, K::CreditStarvation,
                         [](const TelemetryEvent& e, const RdmaCreditUpdate& p) { return pair_key(e.node_id, p.queue_pair_id); },
                         [](std::uint64_t k) {
                             auto l = at_node(key_hi(k));
                             l.flow_id = key_lo(k);
                             return l;
                         });
                 }});
    c.push_back({K::KvCacheTransferBottleneck, V::EastWestFabric, {PK::StageHandoff},
                 "max/mean per-token handoff bytes with repeated bursts", "skew_ratio", "node", kv_transfer});
    c.push_back({K::EarlyStopSkewAcrossNodes, V::EastWestFabric, {PK::CollectiveBurst}, "per-node send silence / step",
                 "gap_factor", "silent node", [node_loc](const SelectorView& v, const DetectEnv& env) {
                     return early_stop_detector<CollectiveBurst>(
                         v, env, PK::CollectiveBurst, K::EarlyStopSkewAcrossNodes,
                         [](const TelemetryEvent& e, const CollectiveBurst&) { return std::uint64_t{e.node_id}; }, node_loc);
                 }});
    return c;
}

}  // namespace detail::rb

/// The 28-entry catalog, in pathology order.
inline const std::vector<DetectorCatalogEntry>& detector_catalog() {
    static const auto catalog = [] {
        auto c = detail::rb::build_catalog();
        if (c.size() != kPathologyCount) throw std::logic_error("detector catalog is incomplete");
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (c[i].kind != static_cast<PathologyKind>(i)) throw std::logic_error("detector catalog out of order");
            if (!DetectorConfig::has_key(c[i].threshold_key)) throw std::logic_error("catalog threshold key unknown");
        }
        return c;
    }();
    return catalog;
}

inline const DetectorCatalogEntry& catalog_entry(PathologyKind k) {
    return detector_catalog()[static_cast<std::size_t>(k)];
}

/// Keeps the most severe finding per (kind, window, location).
inline void collapse_duplicates(std::vector<Finding>& findings) {
    sort_findings(findings);
    std::vector<Finding> out;
    for (auto& f : findings) {
        if (!out.empty() && out.back().kind == f.kind && out.back().window == f.window && out.back().location == f.location) {
            if (f.severity > out.back().severity) out.back() = std::move(f);
            continue;
        }
        out.push_back(std::move(f));
    }
    findings = std::move(out);
}

/// Runs the enabled detectors over every window of the plan.
inline std::vector<Finding> run_detectors(const Trace& trace, const WindowPlan& plan, const DetectorConfig& config,
                                          const std::set<PathologyKind>& enabled) {
    config.check();
    plan.check();
    trace.topology.check();
    if (const auto violations = validate_trace(trace); !violations.empty())
        throw FormatError("invalid trace: " + violations.front().message);

    std::vector<Finding> findings;
    if (trace.events.empty()) return findings;
    const EventIndex index(trace.events);
    const TimestampNs horizon = trace.horizon();
    const DetectEnv env{trace.topology, config, horizon, horizon / 10};
    const auto windows = plan.windows(horizon);
    for (const auto& entry : detector_catalog()) {
        if (!enabled.contains(entry.kind)) continue;
        const SelectorView view(index, entry.selectors);
        const auto detect = entry.prepare(view, env);
        for (const auto& w : windows) {
            auto found = detect(w);
            findings.insert(findings.end(), std::make_move_iterator(found.begin()), std::make_move_iterator(found.end()));
        }
    }
    collapse_duplicates(findings);
    return findings;
}

inline std::set<PathologyKind> all_kinds() {
    const auto a = all_pathologies();
    return {a.begin(), a.end()};
}

inline std::vector<Finding> run_detectors(const Trace& trace, const WindowPlan& plan = {},
                                          const DetectorConfig& config = {}) {
    return run_detectors(trace, plan, config, all_kinds());
}

}  // namespace skewscope
