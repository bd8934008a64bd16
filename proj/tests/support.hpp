#pragma once

// Shared fixtures: golden fault builders and a memoised simulate+detect so
// several tests can inspect the same run without repeating it.

#include <map>
#include <mutex>
#include <random>
#include <utility>
#include <vector>

#include "skewscope/inject.hpp"
#include "skewscope/runbook.hpp"
#include "skewscope/telemetry.hpp"
#include "skewscope/trace_ops.hpp"

namespace skewscope::testing {

inline constexpr TimestampNs kFaultStart = 20 * kNsPerSecond;
inline constexpr TimestampNs kFaultEnd = 30 * kNsPerSecond;

/// The golden fault for `kind`: node 0, gpu 1, rank 3, stage 0 or flow 0 as the
/// kind requires, active over [20 s, 30 s).
inline FaultSpec golden_fault(PathologyKind kind, double magnitude = 3.0) {
    FaultSpec f;
    f.kind = kind;
    f.start = kFaultStart;
    f.end = kFaultEnd;
    f.magnitude = magnitude;
    const auto shape = location_shape(kind);
    if (shape.node) f.location.node_id = 0;
    if (shape.gpu) f.location.gpu_id = 1;
    if (shape.rank) f.location.rank = 3;
    if (shape.stage) f.location.stage = 0;
    if (shape.flow) f.location.flow_id = 0;
    return f;
}

struct Run {
    Trace trace;
    std::vector<Finding> findings;
};

/// Simulates the default cluster with `faults` and runs all detectors; results
/// are cached per fault list.
inline const Run& golden_run(const std::vector<FaultSpec>& faults) {
    static std::mutex mu;
    static std::map<std::vector<std::pair<int, double>>, Run> cache;
    std::vector<std::pair<int, double>> key;
    for (const auto& f : faults) key.emplace_back(static_cast<int>(f.kind), f.magnitude);
    std::lock_guard lock(mu);
    auto it = cache.find(key);
    if (it == cache.end()) {
        Run r;
        r.trace = simulate(ClusterTopology{}, WorkloadSpec{}, faults, SimConfig{});
        r.findings = run_detectors(r.trace);
        it = cache.emplace(key, std::move(r)).first;
    }
    return it->second;
}

inline const Run& healthy_run() { return golden_run({}); }

inline const Run& single_fault_run(PathologyKind kind, double magnitude = 3.0) {
    return golden_run({golden_fault(kind, magnitude)});
}

/// Highest severity among findings that detect the injection (0 when none does).
inline double matching_severity(const std::vector<Finding>& findings, const FaultSpec& f) {
    double best = 0.0;
    for (const auto& x : findings) {
        if (x.kind == f.kind && window_iou(x.window, {f.start, f.end}) >= 0.5 && x.location.covers(f.location))
            best = std::max(best, x.severity);
    }
    return best;
}

/// A payload of random kind with fields inside `topo`'s bounds.
inline Payload random_payload(std::mt19937_64& rng, const ClusterTopology& topo) {
    auto u32 = [&](std::uint32_t n) { return static_cast<std::uint32_t>(rng() % n); };
    auto bytes = [&] { return 1 + rng() % (1ULL << 30); };
    auto flag = [&] { return (rng() & 1) != 0; };
    switch (rng() % kPayloadKindCount) {
        case 0: return IngressPacket{rng() % 1000, bytes(), flag(), flag()};
        case 1: return EgressPacket{rng() % 1000, bytes(), flag(), u32(64)};
        case 2: return NicQueueSample{u32(5000), u32(5000), rng() % 20'000'000'000ULL, rng() % 20'000'000'000ULL};
        case 3: return DmaH2D{u32(topo.gpus_per_node), bytes()};
        case 4: return DmaD2H{u32(topo.gpus_per_node), bytes(), rng() % 1'000'000};
        case 5: return DmaP2P{u32(topo.gpus_per_node), u32(topo.gpus_per_node), bytes(), 1 + rng() % 1'000'000};
        case 6: return DoorbellWrite{u32(topo.gpus_per_node), u32(16)};
        case 7: return MemRegister{bytes()};
        case 8: return MemUnregister{bytes()};
        case 9: return CollectiveBurst{rng() % 100000, u32(topo.tp_degree), bytes()};
        case 10: return StageHandoff{u32(topo.pp_stages), u32(topo.pp_stages), rng() % 1000, bytes(), u32(4096)};
        case 11: return RdmaCreditUpdate{u32(64), u32(1024)};
        case 12: return FabricPacket{rng() % 1000, bytes(), flag(), flag()};
        default: return LinkSample{u32(topo.num_nodes), rng() % 100000, rng() % 10000};
    }
}

/// A valid trace with `n` events sorted by (ts, vantage).
inline Trace random_trace(std::mt19937_64& rng, std::size_t n, TimestampNs span = 1'000'000) {
    Trace t;
    t.topology.num_nodes = 1 + static_cast<std::uint32_t>(rng() % 4);
    t.topology.gpus_per_node = 4;
    t.topology.tp_degree = 2;
    t.topology.pp_stages = 2;
    for (std::size_t i = 0; i < n; ++i) {
        TelemetryEvent e{rng() % span, VantagePoint::NorthSouthNic, static_cast<std::uint32_t>(rng() % t.topology.num_nodes),
                         random_payload(rng, t.topology)};
        e.vantage = required_vantage(e.kind());
        t.events.push_back(e);
    }
    sort_events(t.events);
    t.horizon_ns = span;
    return t;
}

}  // namespace skewscope::testing
