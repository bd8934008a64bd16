#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace skewscope {

/// Nanoseconds since the trace epoch.
using TimestampNs = std::uint64_t;
using DurationNs = std::uint64_t;

inline constexpr TimestampNs kNsPerSecond = 1'000'000'000ULL;
inline constexpr TimestampNs kNsPerMs = 1'000'000ULL;
inline constexpr TimestampNs kNsPerUs = 1'000ULL;

/// Raised when a file or record cannot be parsed at all.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised on semantically invalid configuration (topology, workload, thresholds).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised on invalid arguments to pure operations (e.g. inverted windows).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class VantagePoint : std::uint8_t { NorthSouthNic = 0, PcieObserver = 1, EastWestFabric = 2 };

inline constexpr std::array<VantagePoint, 3> kAllVantages{VantagePoint::NorthSouthNic, VantagePoint::PcieObserver,
                                                          VantagePoint::EastWestFabric};

inline constexpr std::string_view to_string(VantagePoint v) {
    switch (v) {
        case VantagePoint::NorthSouthNic: return "NorthSouthNic";
        case VantagePoint::PcieObserver: return "PcieObserver";
        case VantagePoint::EastWestFabric: return "EastWestFabric";
    }
    return "?";
}

inline std::optional<VantagePoint> parse_vantage(std::string_view s) {
    for (auto v : kAllVantages) {
        if (to_string(v) == s) return v;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Event payloads. Field names match the trace file keys.

struct IngressPacket {
    std::uint64_t flow_id = 0;
    std::uint64_t bytes = 0;
    bool is_retransmit = false;
    bool is_handshake = false;
    bool operator==(const IngressPacket&) const = default;
};

struct EgressPacket {
    std::uint64_t flow_id = 0;
    std::uint64_t bytes = 0;
    bool is_retransmit = false;
    std::uint32_t stream_id = 0;
    bool operator==(const EgressPacket&) const = default;
};

struct NicQueueSample {
    std::uint32_t rx_depth_pkts = 0;
    std::uint32_t tx_depth_pkts = 0;
    std::uint64_t rx_bytes_per_s = 0;
    std::uint64_t tx_bytes_per_s = 0;
    bool operator==(const NicQueueSample&) const = default;
};

struct DmaH2D {
    std::uint32_t gpu_id = 0;
    std::uint64_t bytes = 0;
    bool operator==(const DmaH2D&) const = default;
};

struct DmaD2H {
    std::uint32_t gpu_id = 0;
    std::uint64_t bytes = 0;
    DurationNs completion_latency_ns = 0;
    bool operator==(const DmaD2H&) const = default;
};

struct DmaP2P {
    std::uint32_t src_gpu = 0;
    std::uint32_t dst_gpu = 0;
    std::uint64_t bytes = 0;
    DurationNs duration_ns = 0;
    bool operator==(const DmaP2P&) const = default;
};

struct DoorbellWrite {
    std::uint32_t gpu_id = 0;
    std::uint32_t stream_tag = 0;
    bool operator==(const DoorbellWrite&) const = default;
};

struct MemRegister {
    std::uint64_t bytes = 0;
    bool operator==(const MemRegister&) const = default;
};

struct MemUnregister {
    std::uint64_t bytes = 0;
    bool operator==(const MemUnregister&) const = default;
};

struct CollectiveBurst {
    std::uint64_t collective_id = 0;
    std::uint32_t rank = 0;
    std::uint64_t bytes = 0;
    bool operator==(const CollectiveBurst&) const = default;
};

struct StageHandoff {
    std::uint32_t from_stage = 0;
    std::uint32_t to_stage = 0;
    std::uint64_t microbatch_id = 0;
    std::uint64_t bytes = 0;
    std::uint32_t token_tag = 0;
    bool operator==(const StageHandoff&) const = default;
};

struct RdmaCreditUpdate {
    std::uint32_t queue_pair_id = 0;
    std::uint32_t credits = 0;
    bool operator==(const RdmaCreditUpdate&) const = default;
};

struct FabricPacket {
    std::uint64_t flow_id = 0;
    std::uint64_t bytes = 0;
    bool is_retransmit = false;
    bool is_duplicate = false;
    bool operator==(const FabricPacket&) const = default;
};

struct LinkSample {
    std::uint32_t peer_node = 0;
    DurationNs latency_ns = 0;
    DurationNs jitter_ns = 0;
    bool operator==(const LinkSample&) const = default;
};

using Payload = std::variant<IngressPacket, EgressPacket, NicQueueSample, DmaH2D, DmaD2H, DmaP2P, DoorbellWrite,
                             MemRegister, MemUnregister, CollectiveBurst, StageHandoff, RdmaCreditUpdate, FabricPacket,
                             LinkSample>;

/// Index into Payload; stable across releases because it names trace records.
enum class PayloadKind : std::uint8_t {
    IngressPacket = 0,
    EgressPacket,
    NicQueueSample,
    DmaH2D,
    DmaD2H,
    DmaP2P,
    DoorbellWrite,
    MemRegister,
    MemUnregister,
    CollectiveBurst,
    StageHandoff,
    RdmaCreditUpdate,
    FabricPacket,
    LinkSample,
};

inline constexpr std::size_t kPayloadKindCount = std::variant_size_v<Payload>;

inline constexpr std::array<std::string_view, kPayloadKindCount> kPayloadNames{
    "IngressPacket", "EgressPacket", "NicQueueSample", "DmaH2D",           "DmaD2H",       "DmaP2P",      "DoorbellWrite",
    "MemRegister",   "MemUnregister", "CollectiveBurst", "StageHandoff", "RdmaCreditUpdate", "FabricPacket", "LinkSample"};

inline constexpr std::string_view to_string(PayloadKind k) { return kPayloadNames[static_cast<std::size_t>(k)]; }

inline std::optional<PayloadKind> parse_payload_kind(std::string_view s) {
    for (std::size_t i = 0; i < kPayloadNames.size(); ++i) {
        if (kPayloadNames[i] == s) return static_cast<PayloadKind>(i);
    }
    return std::nullopt;
}

/// The only vantage point allowed to report each payload kind.
inline constexpr VantagePoint required_vantage(PayloadKind k) {
    switch (k) {
        case PayloadKind::IngressPacket:
        case PayloadKind::EgressPacket:
        case PayloadKind::NicQueueSample: return VantagePoint::NorthSouthNic;
        case PayloadKind::DmaH2D:
        case PayloadKind::DmaD2H:
        case PayloadKind::DmaP2P:
        case PayloadKind::DoorbellWrite:
        case PayloadKind::MemRegister:
        case PayloadKind::MemUnregister: return VantagePoint::PcieObserver;
        default: return VantagePoint::EastWestFabric;
    }
}

struct TelemetryEvent {
    TimestampNs ts = 0;
    VantagePoint vantage = VantagePoint::NorthSouthNic;
    std::uint32_t node_id = 0;
    Payload payload;

    [[nodiscard]] PayloadKind kind() const { return static_cast<PayloadKind>(payload.index()); }

    template <class T>
    [[nodiscard]] const T* as() const {
        return std::get_if<T>(&payload);
    }

    bool operator==(const TelemetryEvent&) const = default;
};

/// Builds an event whose vantage is implied by its payload.
template <class P>
TelemetryEvent make_event(TimestampNs ts, std::uint32_t node, P payload) {
    TelemetryEvent e{ts, VantagePoint::NorthSouthNic, node, Payload{std::move(payload)}};
    e.vantage = required_vantage(e.kind());
    return e;
}

// ---------------------------------------------------------------------------
// Pathologies: one per runbook row.

enum class PathologyKind : std::uint8_t {
    // North-south NIC
    BurstAdmissionBacklog = 0,
    IngressStarvation,
    FlowSkew,
    IngressDropRetransmit,
    EgressBacklog,
    EgressJitter,
    EgressDropRetransmit,
    EarlyCompletionSkew,
    BandwidthSaturation,
    // PCIe observer
    H2dStarvation,
    D2hBottleneck,
    KernelLaunchLatency,
    IntraNodeGpuSkew,
    PcieLinkSaturation,
    P2pThrottling,
    PinnedMemoryFragmentation,
    HostCpuBottleneck,
    RegistrationChurn,
    DecodeEarlyStopSkew,
    // East-west fabric
    TpStraggler,
    PpBubble,
    CrossNodeLoadSkew,
    NetworkCongestion,
    HeadOfLineBlocking,
    RetransmissionStorm,
    CreditStarvation,
    KvCacheTransferBottleneck,
    EarlyStopSkewAcrossNodes,
};

inline constexpr std::size_t kPathologyCount = 28;

inline constexpr std::array<std::string_view, kPathologyCount> kPathologyNames{
    "BurstAdmissionBacklog", "IngressStarvation",    "FlowSkew",           "IngressDropRetransmit",
    "EgressBacklog",         "EgressJitter",         "EgressDropRetransmit", "EarlyCompletionSkew",
    "BandwidthSaturation",   "H2dStarvation",        "D2hBottleneck",      "KernelLaunchLatency",
    "IntraNodeGpuSkew",      "PcieLinkSaturation",   "P2pThrottling",      "PinnedMemoryFragmentation",
    "HostCpuBottleneck",     "RegistrationChurn",    "DecodeEarlyStopSkew", "TpStraggler",
    "PpBubble",              "CrossNodeLoadSkew",    "NetworkCongestion",  "HeadOfLineBlocking",
    "RetransmissionStorm",   "CreditStarvation",     "KvCacheTransferBottleneck", "EarlyStopSkewAcrossNodes"};

inline constexpr std::array<PathologyKind, kPathologyCount> all_pathologies() {
    std::array<PathologyKind, kPathologyCount> out{};
    for (std::size_t i = 0; i < kPathologyCount; ++i) out[i] = static_cast<PathologyKind>(i);
    return out;
}

inline constexpr std::string_view to_string(PathologyKind k) { return kPathologyNames[static_cast<std::size_t>(k)]; }

inline std::optional<PathologyKind> parse_pathology(std::string_view s) {
    for (std::size_t i = 0; i < kPathologyCount; ++i) {
        if (kPathologyNames[i] == s) return static_cast<PathologyKind>(i);
    }
    return std::nullopt;
}

/// Runbook a pathology belongs to; also the vantage its detector reads.
inline constexpr VantagePoint home_vantage(PathologyKind k) {
    const auto i = static_cast<std::size_t>(k);
    if (i < 9) return VantagePoint::NorthSouthNic;
    if (i < 19) return VantagePoint::PcieObserver;
    return VantagePoint::EastWestFabric;
}

/// Where a fault or finding sits. Absent fields are "not applicable".
struct Location {
    std::optional<std::uint32_t> node_id;
    std::optional<std::uint32_t> gpu_id;
    std::optional<std::uint32_t> rank;
    std::optional<std::uint32_t> stage;
    std::optional<std::uint64_t> flow_id;

    bool operator==(const Location&) const = default;
    auto operator<=>(const Location&) const = default;

    /// True when every field set in `expected` has the same value here.
    [[nodiscard]] bool covers(const Location& expected) const {
        auto ok = [](const auto& mine, const auto& theirs) { return !theirs || mine == theirs; };
        return ok(node_id, expected.node_id) && ok(gpu_id, expected.gpu_id) && ok(rank, expected.rank) &&
               ok(stage, expected.stage) && ok(flow_id, expected.flow_id);
    }
};

struct InjectionRecord {
    PathologyKind kind = PathologyKind::BurstAdmissionBacklog;
    TimestampNs start = 0;
    TimestampNs end = 0;
    Location location;
    double magnitude = 1.0;
    bool operator==(const InjectionRecord&) const = default;
};

struct ClusterTopology {
    std::uint32_t num_nodes = 4;
    std::uint32_t gpus_per_node = 4;
    std::uint32_t tp_degree = 4;
    std::uint32_t pp_stages = 2;
    double nic_capacity_bytes_per_s = 12.5e9;
    double pcie_capacity_bytes_per_s = 32e9;
    DurationNs fabric_base_latency_ns = 5'000;
    DurationNs fabric_jitter_ns = 500;

    bool operator==(const ClusterTopology&) const = default;

    [[nodiscard]] std::uint32_t total_gpus() const { return num_nodes * gpus_per_node; }

    /// Throws ConfigError naming the first offending field.
    void check() const {
        if (num_nodes == 0) throw ConfigError("num_nodes must be > 0");
        if (gpus_per_node == 0) throw ConfigError("gpus_per_node must be > 0");
        if (tp_degree == 0) throw ConfigError("tp_degree must be > 0");
        if (pp_stages == 0) throw ConfigError("pp_stages must be > 0");
        if (static_cast<std::uint64_t>(tp_degree) * pp_stages > static_cast<std::uint64_t>(total_gpus()))
            throw ConfigError("tp_degree x pp_stages exceeds num_nodes x gpus_per_node");
        if (!(nic_capacity_bytes_per_s > 0)) throw ConfigError("nic_capacity_bytes_per_s must be > 0");
        if (!(pcie_capacity_bytes_per_s > 0)) throw ConfigError("pcie_capacity_bytes_per_s must be > 0");
    }
};

struct Trace {
    ClusterTopology topology;
    std::string epoch = "1970-01-01T00:00:00Z";
    /// Declared observation horizon; 0 means "derive from the last event".
    TimestampNs horizon_ns = 0;
    std::vector<TelemetryEvent> events;
    std::vector<InjectionRecord> injections;

    bool operator==(const Trace&) const = default;

    [[nodiscard]] TimestampNs horizon() const {
        const TimestampNs derived = events.empty() ? 0 : events.back().ts + 1;
        return horizon_ns > derived ? horizon_ns : derived;
    }
};

}  // namespace skewscope
