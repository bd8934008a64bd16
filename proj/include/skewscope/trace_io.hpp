#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "skewscope/records.hpp"
#include "skewscope/telemetry.hpp"

namespace skewscope {

inline constexpr std::string_view kTraceMagic = "#skewscope-trace";
inline constexpr std::string_view kTraceVersion = "v1";

namespace detail {

/// Applies `f(name, member)` to each serialized field of a payload.
template <class P, class F>
void for_each_field(P& p, F&& f) {
    using T = std::remove_const_t<P>;
    if constexpr (std::is_same_v<T, IngressPacket>) {
        f("flow_id", p.flow_id), f("bytes", p.bytes), f("is_retransmit", p.is_retransmit),
            f("is_handshake", p.is_handshake);
    } else if constexpr (std::is_same_v<T, EgressPacket>) {
        f("flow_id", p.flow_id), f("bytes", p.bytes), f("is_retransmit", p.is_retransmit),
            f("stream_id", p.stream_id);
    } else if constexpr (std::is_same_v<T, NicQueueSample>) {
        f("rx_depth_pkts", p.rx_depth_pkts), f("tx_depth_pkts", p.tx_depth_pkts),
            f("rx_bytes_per_s", p.rx_bytes_per_s), f("tx_bytes_per_s", p.tx_bytes_per_s);
    } else if constexpr (std::is_same_v<T, DmaH2D>) {
        f("gpu_id", p.gpu_id), f("bytes", p.bytes);
    } else if constexpr (std::is_same_v<T, DmaD2H>) {
        f("gpu_id", p.gpu_id), f("bytes", p.bytes), f("completion_latency_ns", p.completion_latency_ns);
    } else if constexpr (std::is_same_v<T, DmaP2P>) {
        f("src_gpu", p.src_gpu), f("dst_gpu", p.dst_gpu), f("bytes", p.bytes), f("duration_ns", p.duration_ns);
    } else if constexpr (std::is_same_v<T, DoorbellWrite>) {
        f("gpu_id", p.gpu_id), f("stream_tag", p.stream_tag);
    } else if constexpr (std::is_same_v<T, MemRegister> || std::is_same_v<T, MemUnregister>) {
        f("bytes", p.bytes);
    } else if constexpr (std::is_same_v<T, CollectiveBurst>) {
        f("collective_id", p.collective_id), f("rank", p.rank), f("bytes", p.bytes);
    } else if constexpr (std::is_same_v<T, StageHandoff>) {
        f("from_stage", p.from_stage), f("to_stage", p.to_stage), f("microbatch_id", p.microbatch_id),
            f("bytes", p.bytes), f("token_tag", p.token_tag);
    } else if constexpr (std::is_same_v<T, RdmaCreditUpdate>) {
        f("queue_pair_id", p.queue_pair_id), f("credits", p.credits);
    } else if constexpr (std::is_same_v<T, FabricPacket>) {
        f("flow_id", p.flow_id), f("bytes", p.bytes), f("is_retransmit", p.is_retransmit),
            f("is_duplicate", p.is_duplicate);
    } else if constexpr (std::is_same_v<T, LinkSample>) {
        f("peer_node", p.peer_node), f("latency_ns", p.latency_ns), f("jitter_ns", p.jitter_ns);
    } else {
        static_assert(sizeof(T) == 0, "payload without field table");
    }
}

template <std::size_t I = 0>
Payload default_payload(std::size_t index) {
    if constexpr (I < kPayloadKindCount) {
        if (index == I) return Payload{std::in_place_index<I>};
        return default_payload<I + 1>(index);
    } else {
        throw FormatError("payload index out of range");
    }
}

inline void write_location(records::Writer& w, const Location& loc) {
    if (loc.node_id) w.add("node", *loc.node_id);
    if (loc.gpu_id) w.add("gpu", *loc.gpu_id);
    if (loc.rank) w.add("rank", *loc.rank);
    if (loc.stage) w.add("stage", *loc.stage);
    if (loc.flow_id) w.add("flow", *loc.flow_id);
}

inline Location read_location(records::Reader& r) {
    Location loc;
    loc.node_id = r.get_optional<std::uint32_t>("node");
    loc.gpu_id = r.get_optional<std::uint32_t>("gpu");
    loc.rank = r.get_optional<std::uint32_t>("rank");
    loc.stage = r.get_optional<std::uint32_t>("stage");
    loc.flow_id = r.get_optional<std::uint64_t>("flow");
    return loc;
}

inline void reject_or_warn(const records::Reader& r, bool strict, std::size_t line_no,
                           std::vector<std::string>* warnings) {
    const auto extra = r.unused();
    if (extra.empty()) return;
    const std::string msg = "line " + std::to_string(line_no) + ": unknown field '" + extra.front() + "'";
    if (strict) throw FormatError(msg);
    if (warnings) warnings->push_back(msg);
}

}  // namespace detail

/// Options controlling how unknown fields are handled when reading.
struct ReadOptions {
    bool strict = true;
    std::vector<std::string>* warnings = nullptr;
};

inline std::string format_event(const TelemetryEvent& e) {
    records::Writer w;
    w.add("ts", e.ts).add("vantage", to_string(e.vantage)).add("node", e.node_id).add("kind", to_string(e.kind()));
    std::visit([&](const auto& p) { detail::for_each_field(p, [&](std::string_view k, const auto& v) { w.add(k, v); }); },
               e.payload);
    return w.str();
}

inline TelemetryEvent parse_event(std::string_view line, const ReadOptions& opt = {}, std::size_t line_no = 0) {
    records::Reader r(records::split(line));
    TelemetryEvent e;
    e.ts = r.get<std::uint64_t>("ts");
    const auto vantage_text = r.get<std::string>("vantage");
    const auto vantage = parse_vantage(vantage_text);
    if (!vantage) throw FormatError("line " + std::to_string(line_no) + ": unknown vantage '" + vantage_text + "'");
    e.vantage = *vantage;
    e.node_id = r.get<std::uint32_t>("node");
    const auto kind_text = r.get<std::string>("kind");
    const auto kind = parse_payload_kind(kind_text);
    if (!kind) throw FormatError("line " + std::to_string(line_no) + ": unknown event kind '" + kind_text + "'");
    e.payload = detail::default_payload(static_cast<std::size_t>(*kind));
    std::visit(
        [&](auto& p) {
            detail::for_each_field(p, [&](std::string_view k, auto& v) { v = r.get<std::decay_t<decltype(v)>>(k); });
        },
        e.payload);
    detail::reject_or_warn(r, opt.strict, line_no, opt.warnings);
    return e;
}

inline std::string format_header(const Trace& t) {
    records::Writer w;
    const auto& topo = t.topology;
    w.add("epoch", t.epoch)
        .add("horizon_ns", t.horizon_ns)
        .add("num_nodes", topo.num_nodes)
        .add("gpus_per_node", topo.gpus_per_node)
        .add("tp_degree", topo.tp_degree)
        .add("pp_stages", topo.pp_stages)
        .add("nic_capacity_bytes_per_s", topo.nic_capacity_bytes_per_s)
        .add("pcie_capacity_bytes_per_s", topo.pcie_capacity_bytes_per_s)
        .add("fabric_base_latency_ns", topo.fabric_base_latency_ns)
        .add("fabric_jitter_ns", topo.fabric_jitter_ns);
    return std::string(kTraceMagic) + " " + std::string(kTraceVersion) + " " + w.str();
}

inline void parse_header(std::string_view line, Trace& t, const ReadOptions& opt) {
    const std::string prefix = std::string(kTraceMagic) + " " + std::string(kTraceVersion) + " ";
    if (line.substr(0, prefix.size()) != prefix) throw FormatError("missing or unsupported trace header");
    records::Reader r(records::split(line.substr(prefix.size())));
    t.epoch = r.get<std::string>("epoch");
    t.horizon_ns = r.get_optional<std::uint64_t>("horizon_ns").value_or(0);
    auto& topo = t.topology;
    topo.num_nodes = r.get<std::uint32_t>("num_nodes");
    topo.gpus_per_node = r.get<std::uint32_t>("gpus_per_node");
    topo.tp_degree = r.get<std::uint32_t>("tp_degree");
    topo.pp_stages = r.get<std::uint32_t>("pp_stages");
    topo.nic_capacity_bytes_per_s = r.get<double>("nic_capacity_bytes_per_s");
    topo.pcie_capacity_bytes_per_s = r.get<double>("pcie_capacity_bytes_per_s");
    topo.fabric_base_latency_ns = r.get<std::uint64_t>("fabric_base_latency_ns");
    topo.fabric_jitter_ns = r.get<std::uint64_t>("fabric_jitter_ns");
    detail::reject_or_warn(r, opt.strict, 1, opt.warnings);
}

inline std::string format_injection(const InjectionRecord& inj) {
    records::Writer w;
    w.add("kind", to_string(inj.kind)).add("start", inj.start).add("end", inj.end).add("magnitude", inj.magnitude);
    detail::write_location(w, inj.location);
    return w.str();
}

inline InjectionRecord parse_injection(std::string_view line, const ReadOptions& opt = {}, std::size_t line_no = 0) {
    records::Reader r(records::split(line));
    InjectionRecord inj;
    const auto kind_text = r.get<std::string>("kind");
    const auto kind = parse_pathology(kind_text);
    if (!kind) throw FormatError("unknown pathology '" + kind_text + "'");
    inj.kind = *kind;
    inj.start = r.get<std::uint64_t>("start");
    inj.end = r.get<std::uint64_t>("end");
    inj.magnitude = r.get<double>("magnitude");
    inj.location = detail::read_location(r);
    detail::reject_or_warn(r, opt.strict, line_no, opt.warnings);
    return inj;
}

inline void write_trace(std::ostream& os, const Trace& t) {
    os << format_header(t) << '\n';
    for (const auto& e : t.events) os << format_event(e) << '\n';
}

inline void write_injections(std::ostream& os, const std::vector<InjectionRecord>& injections) {
    for (const auto& inj : injections) os << format_injection(inj) << '\n';
}

inline bool skippable(std::string_view line) {
    return line.empty() || line == "\r" || (line.front() == '#' && line.substr(0, kTraceMagic.size()) != kTraceMagic);
}

/// Reads a trace body (header + events). Injections are read separately.
inline Trace read_trace(std::istream& is, const ReadOptions& opt = {}) {
    Trace t;
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty trace file (no header)");
    parse_header(line, t, opt);
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (skippable(line)) continue;
        try {
            t.events.push_back(parse_event(line, opt, line_no));
        } catch (const FormatError& err) {
            throw FormatError("line " + std::to_string(line_no) + ": " + err.what());
        }
    }
    return t;
}

inline std::vector<InjectionRecord> read_injections(std::istream& is, const ReadOptions& opt = {}) {
    std::vector<InjectionRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (skippable(line)) continue;
        out.push_back(parse_injection(line, opt, line_no));
    }
    return out;
}

/// Sidecar path for a trace file: same stem, `.faults` suffix.
inline std::filesystem::path faults_path_for(const std::filesystem::path& trace_path) {
    auto p = trace_path;
    p.replace_extension(".faults");
    return p;
}

inline void write_trace_file(const std::filesystem::path& path, const Trace& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
    write_trace(os, t);
    std::ofstream fs(faults_path_for(path), std::ios::binary);
    if (!fs) throw FormatError("cannot open faults sidecar for '" + path.string() + "'");
    write_injections(fs, t.injections);
}

/// Reads a trace and, when present, its `.faults` sidecar.
inline Trace read_trace_file(const std::filesystem::path& path, const ReadOptions& opt = {}) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open trace '" + path.string() + "'");
    auto t = read_trace(is, opt);
    if (std::ifstream fs(faults_path_for(path), std::ios::binary); fs) t.injections = read_injections(fs, opt);
    return t;
}

}  // namespace skewscope
