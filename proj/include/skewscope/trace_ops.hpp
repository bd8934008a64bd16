#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "skewscope/telemetry.hpp"

namespace skewscope {

struct Violation {
    std::size_t index = 0;
    std::string message;
    bool operator==(const Violation&) const = default;
};

using ValidationReport = std::vector<Violation>;

namespace detail {

inline bool is_transfer(PayloadKind k) {
    switch (k) {
        case PayloadKind::NicQueueSample:
        case PayloadKind::DoorbellWrite:
        case PayloadKind::RdmaCreditUpdate:
        case PayloadKind::LinkSample: return false;
        default: return true;
    }
}

inline std::uint64_t payload_bytes(const Payload& p) {
    return std::visit(
        [](const auto& v) -> std::uint64_t {
            if constexpr (requires { v.bytes; }) {
                return v.bytes;
            } else {
                return 0;
            }
        },
        p);
}

inline void check_ids(const TelemetryEvent& e, const ClusterTopology& topo, std::size_t i, ValidationReport& out) {
    auto bad = [&](const char* field) {
        out.push_back({i, std::string("id out of topology bounds at index ") + std::to_string(i) + ": " + field});
    };
    const auto gpus = topo.gpus_per_node;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, DmaH2D> || std::is_same_v<T, DmaD2H> || std::is_same_v<T, DoorbellWrite>) {
                if (p.gpu_id >= gpus) bad("gpu_id");
            } else if constexpr (std::is_same_v<T, DmaP2P>) {
                if (p.src_gpu >= gpus) bad("src_gpu");
                if (p.dst_gpu >= gpus) bad("dst_gpu");
            } else if constexpr (std::is_same_v<T, CollectiveBurst>) {
                if (p.rank >= topo.tp_degree) bad("rank");
            } else if constexpr (std::is_same_v<T, StageHandoff>) {
                if (p.from_stage >= topo.pp_stages) bad("from_stage");
                if (p.to_stage >= topo.pp_stages) bad("to_stage");
            } else if constexpr (std::is_same_v<T, LinkSample>) {
                if (p.peer_node >= topo.num_nodes) bad("peer_node");
            }
        },
        e.payload);
}

}  // namespace detail

/// Lists every invariant violation in `trace`; an empty report means valid.
inline ValidationReport validate_trace(const Trace& trace) {
    ValidationReport out;
    const auto& topo = trace.topology;
    std::array<std::optional<TimestampNs>, 3> last_by_vantage{};
    std::optional<TimestampNs> last_any;

    for (std::size_t i = 0; i < trace.events.size(); ++i) {
        const auto& e = trace.events[i];
        const auto idx = std::to_string(i);
        const auto kind = e.kind();

        if (required_vantage(kind) != e.vantage) out.push_back({i, "payload/vantage mismatch at index " + idx});
        if (e.node_id >= topo.num_nodes) out.push_back({i, "node id out of topology bounds at index " + idx});
        if (detail::is_transfer(kind) && detail::payload_bytes(e.payload) == 0)
            out.push_back({i, "zero-byte transfer at index " + idx});
        detail::check_ids(e, topo, i, out);

        auto& last = last_by_vantage[static_cast<std::size_t>(e.vantage)];
        if (last && e.ts < *last) {
            out.push_back({i, "non-monotonic timestamp at index " + idx});
        } else if (last_any && e.ts < *last_any) {
            out.push_back({i, "events out of global time order at index " + idx});
        }
        last = last ? std::max(*last, e.ts) : e.ts;
        last_any = last_any ? std::max(*last_any, e.ts) : e.ts;
    }

    for (std::size_t j = 0; j < trace.injections.size(); ++j) {
        const auto& inj = trace.injections[j];
        if (!(inj.start < inj.end))
            out.push_back({j, "injection " + std::to_string(j) + " has start >= end"});
        if (!(inj.magnitude >= 1.0))
            out.push_back({j, "injection " + std::to_string(j) + " has magnitude < 1.0"});
    }
    return out;
}

/// Orders events by time; ties go to NS, then PCIe, then EW, then the original position.
inline void sort_events(std::vector<TelemetryEvent>& events) {
    std::stable_sort(events.begin(), events.end(), [](const TelemetryEvent& a, const TelemetryEvent& b) {
        if (a.ts != b.ts) return a.ts < b.ts;
        return a.vantage < b.vantage;
    });
}

namespace detail {

inline std::string topology_difference(const ClusterTopology& a, const ClusterTopology& b) {
    if (a.num_nodes != b.num_nodes) return "num_nodes";
    if (a.gpus_per_node != b.gpus_per_node) return "gpus_per_node";
    if (a.tp_degree != b.tp_degree) return "tp_degree";
    if (a.pp_stages != b.pp_stages) return "pp_stages";
    if (a.nic_capacity_bytes_per_s != b.nic_capacity_bytes_per_s) return "nic_capacity_bytes_per_s";
    if (a.pcie_capacity_bytes_per_s != b.pcie_capacity_bytes_per_s) return "pcie_capacity_bytes_per_s";
    if (a.fabric_base_latency_ns != b.fabric_base_latency_ns) return "fabric_base_latency_ns";
    if (a.fabric_jitter_ns != b.fabric_jitter_ns) return "fabric_jitter_ns";
    return {};
}

}  // namespace detail

/// Fuses per-vantage or per-node traces that share one topology.
inline Trace merge_traces(std::span<const Trace> parts) {
    Trace out;
    if (parts.empty()) return out;
    out.topology = parts.front().topology;
    out.epoch = parts.front().epoch;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (auto diff = detail::topology_difference(out.topology, p.topology); !diff.empty())
            throw ArgumentError("topology mismatch in merge: " + diff);
        total += p.events.size();
        out.horizon_ns = std::max(out.horizon_ns, p.horizon_ns);
    }
    out.events.reserve(total);
    for (const auto& p : parts) {
        out.events.insert(out.events.end(), p.events.begin(), p.events.end());
        out.injections.insert(out.injections.end(), p.injections.begin(), p.injections.end());
    }
    sort_events(out.events);
    return out;
}

/// Events with start <= ts < end, as a view into the trace.
inline std::span<const TelemetryEvent> window_slice(const Trace& trace, TimestampNs start, TimestampNs end) {
    if (start > end) throw ArgumentError("window_slice: start > end");
    const auto& ev = trace.events;
    auto lo = std::partition_point(ev.begin(), ev.end(), [&](const TelemetryEvent& e) { return e.ts < start; });
    auto hi = std::partition_point(lo, ev.end(), [&](const TelemetryEvent& e) { return e.ts < end; });
    return {std::to_address(lo), static_cast<std::size_t>(hi - lo)};
}

}  // namespace skewscope
