#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "skewscope/telemetry.hpp"

// Operator-facing runbook text: one row per pathology with the red flag, the
// lifecycle stage it affects, its effect on node-to-node traffic, the likely
// root cause and the mitigation directives, kept verbatim.

namespace skewscope {

struct RunbookRow {
    PathologyKind kind;
    std::string_view title;
    std::string_view red_flag;
    std::string_view stages;
    std::string_view effect;
    std::string_view root_cause;
    /// Mitigation directives exactly as written in the runbook row.
    std::string_view directives;
};

inline constexpr std::array<RunbookRow, kPathologyCount> kRunbook{{
    // North-south NIC
    {PathologyKind::BurstAdmissionBacklog, "Burst admission backlog",
     "Sudden spikes of ingress requests followed by queueing delay", "Ingress (prefill/start)",
     "Downstream GPU sees uneven load; internode bursts clump",
     "Load spike from clients, front-end batching, NIC queue limits",
     "Smooth input batching, rate-limit clients, increase NIC queue depth"},
    {PathologyKind::IngressStarvation, "Ingress starvation / thin traffic",
     "Long gaps between ingress packets for some tokens", "Ingress -> PCIe feed",
     "Token stalls; fewer collective ops downstream", "Upstream service jitter, uneven client distribution",
     "Balance load balancer hashing, check NIC RSS/flow steering"},
    {PathologyKind::FlowSkew, "Flow skew across sessions", "Some ingress flows high-volume, others sparse",
     "Ingress (per-request)", "Imbalanced TP/PP participation across tokens",
     "Session affinity mismatch, QUIC stream imbalance", "Verify flow hashing, rebalance RPC streams"},
    {PathologyKind::IngressDropRetransmit, "Ingress drop/retransmit",
     "Missing or retransmitted initial packets (e.g., handshake retries)", "Ingress (request birth)",
     "Token ID not consistently assigned; lifecycle gaps", "Congestion, MTU mismatch, link errors",
     "Enable NIC offloads (TSO/GRO), verify MTU settings, check cabling"},
    {PathologyKind::EgressBacklog, "Egress backlog / queueing", "Responses accumulate in NIC queues before send",
     "Egress (response flush)", "Downstream clients see latency spikes", "CPU copy bottleneck, NIC buffer exhaustion",
     "Offload checksums, use zero-copy send, increase NIC buffer size"},
    {PathologyKind::EgressJitter, "Egress jitter", "Outgoing packets for a token are spread unevenly over time",
     "Egress (decode outputs)", "Clients see irregular token cadence", "Scheduler variance, CPU<->NIC contention",
     "Isolate runtime threads, pin NIC IRQs, increase batching window"},
    {PathologyKind::EgressDropRetransmit, "Egress drop/retransmit", "Retransmissions or gaps in final response streams",
     "Egress", "Client-visible stalls; retries inflate latency",
     "NIC offload misconfig, fabric congestion, buffer underrun",
     "Check offload settings, enable congestion control (ECN/PFC)"},
    {PathologyKind::EarlyCompletionSkew, "Early completion skew", "Some egress flows terminate far earlier than peers",
     "Egress (multi-stream decode)", "Internode peers still busy; imbalance in final stages",
     "Early-stop on short sequences; no remap of freed resources",
     "Enable inflight remapping / load stealing for decode"},
    {PathologyKind::BandwidthSaturation, "Ingress/Egress bandwidth saturation",
     "NIC RX/TX at or near link capacity; queue buildup", "Ingress + Egress",
     "All internode phases elongated; cluster-level slowdown",
     "Shared NIC with storage/other jobs; insufficient link", "Upgrade NIC, QoS partitioning, stagger workloads"},
    // PCIe observer
    {PathologyKind::H2dStarvation, "H2D data starvation",
     "Large/clustered H2D DMAs followed by long gaps before doorbells/kernels",
     "Ingress -> PCIe (prefill & decode input feed)", "Fewer/late internode bursts; downstream TP/PP idles",
     "PCIe BW cap, NUMA miss, pageable (unpinned) host buffers",
     "Pin memory, bind to correct NUMA socket, verify PCIe link width/speed"},
    {PathologyKind::D2hBottleneck, "D2H return-path bottleneck",
     "D2H DMAs linger / complete slowly; backlog after kernels", "Egress (logits/tokens back to host)",
     "Late responses; backpressure into next token step", "PCIe saturation, IOMMU contention, CPU copy hotspots",
     "Enable large pinned buffers, reduce copies, check IOMMU/ATS config"},
    {PathologyKind::KernelLaunchLatency, "Kernel launch/control latency",
     "Doorbells sporadic; long idle gaps between small H2D bursts and next launch",
     "Compute (GPU underutilized across prefill/decode)", "TP collectives delayed, PP handoffs drift",
     "Runtime overhead, CPU scheduler delays, too many tiny kernels",
     "Batch ops, fuse kernels, raise runtime launch queues, isolate CPU cores"},
    {PathologyKind::IntraNodeGpuSkew, "Intra-node GPU skew", "One GPU shows thin/irregular DMA; peers steady",
     "Compute (per-layer) -> propagates to Internode", "TP collectives widen (straggler), PP stage misalignment",
     "Uneven microbatching, memory pressure on a single GPU",
     "Rebalance microbatches, unify stream priorities, check that GPU's memory and clocks"},
    {PathologyKind::PcieLinkSaturation, "PCIe link saturation",
     "Sustained near-peak PCIe throughput; compute stalls periodically", "Ingress -> PCIe, Egress",
     "Burstiness in internode waves; elongates token step",
     "Oversubscribed PCIe switch / x8 link, competing DMAs (storage/NIC)",
     "Verify x16 Gen/lanes, move devices off shared switch, stagger I/O"},
    {PathologyKind::P2pThrottling, "GPU P2P throttling (PCIe)", "P2P DMAs slow/variable; no NVLink path",
     "Compute (intra-box TP/PP)", "Internode timing jitter (collectives wait on slow intra-box move)",
     "Shared uplink on PCIe switch; ACS/ATS settings",
     "Prefer NVLink/NVSwitch; if PCIe, place GPUs under same switch, tune ACS/ATS"},
    {PathologyKind::PinnedMemoryFragmentation, "Pinned-memory shortage / fragmentation",
     "Many small DMAs vs large coalesced; rising DMA count", "Ingress -> PCIe (feed) and Egress (returns)",
     "Micro-jitter; uneven stage timing", "Insufficient pinned pools; fallback to pageable",
     "Pre-allocate larger pinned pools; coalesce transfers"},
    {PathologyKind::HostCpuBottleneck, "Host CPU bottleneck", "Low DMA rate despite available PCIe BW; delayed doorbells",
     "Compute orchestration", "Irregular TP cadence; PP bubbles", "CPU contention, IRQ affinity, polling disabled",
     "Isolate IRQs/threads, enable busy-poll where appropriate, pin runtime threads"},
    {PathologyKind::RegistrationChurn, "Memory registration churn", "Frequent map/unmap patterns around DMAs",
     "Ingress -> PCIe", "Small timing gaps accumulating per token", "Repeated registration due to short-lived buffers",
     "Reuse registered buffers; RDMA/GPUDirect with persistent MR"},
    {PathologyKind::DecodeEarlyStopSkew, "Decode early-stop skew", "D2H drops off early on some streams/GPUs",
     "Compute (decode) -> Egress", "Some peers go silent; collectives wait for remaining peers",
     "Sequence length variance; scheduler not rebalancing",
     "Enable inflight request remapping/packing; speculative decode policies"},
    // East-west fabric
    {PathologyKind::TpStraggler, "TP straggler", "Wide arrival spread of collective bursts (max-min arrival gap up)",
     "Compute (Tensor Parallel collectives)", "Collective ops stall waiting for slowest peer",
     "Skewed GPU load, PCIe starvation, memory imbalance on one node",
     "Rebalance shards, check PCIe feeds per node, adjust affinity"},
    {PathologyKind::PpBubble, "PP bubble / stage stall", "Large or growing gaps between stage handoff bursts",
     "Pipeline Parallel", "Downstream stage idles; upstream builds backlog",
     "Load imbalance across pipeline stages, early token exit variance",
     "Adjust microbatch partitioning, reassign stages, speculative fill"},
    {PathologyKind::CrossNodeLoadSkew, "Cross-node load skew", "Uneven traffic volume per node for same collective",
     "TP/PP compute -> Internode", "Some nodes oversend/under send; throughput uneven",
     "Shard imbalance, misaligned activation partitioning", "Validate shard sizes, rebalance across nodes"},
    {PathologyKind::NetworkCongestion, "Network congestion / oversubscription",
     "Periodic spikes in latency + jitter across many links", "Internode transfers (collectives & stage handoff)",
     "Token step elongates cluster-wide", "Fat-tree oversubscription, ToR link hot spot",
     "Check fabric counters, enable adaptive routing, spread ranks"},
    {PathologyKind::HeadOfLineBlocking, "Head-of-line blocking", "Some streams stall while others flow; out-of-order bursts",
     "Collective streams / P2P flows", "Latency-sensitive ops delayed",
     "Shared queue depth exhaustion, RoCE/NIC queue imbalance",
     "Increase NIC queue depth, enable QoS/ECN, verify fair sharing"},
    {PathologyKind::RetransmissionStorm, "Retransmissions / packet loss",
     "Gaps + duplicate traffic or sudden retransmit storms", "All distributed phases",
     "Bursty latency; collectives jitter", "Fabric errors, congestion collapse, misconfigured PFC",
     "Verify lossless config, tune buffer thresholds, check optics/cabling"},
    {PathologyKind::CreditStarvation, "Credit starvation (RDMA/flow control)",
     "Long silence periods until remote credit update", "Internode (RDMA ops)",
     "Under-utilized links; token latency grows", "Too-small RDMA window, NIC credit depletion",
     "Increase QP window, tune flow control params"},
    {PathologyKind::KvCacheTransferBottleneck, "KV-cache transfer bottleneck",
     "Repeated large bursts for some tokens, others silent", "Decode phase (PP handoff)",
     "Uneven memory pressure per stage; downstream skew", "Sharded KV too large for link budget; non-uniform length",
     "Compress KV, shard differently, apply caching policies"},
    {PathologyKind::EarlyStopSkewAcrossNodes, "Early-stop skew across nodes",
     "Some nodes stop sending mid-iteration while others continue", "Decode (multi-node)",
     "Collectives/pipeline hang waiting for peers", "Sequence length divergence; scheduler not masking early exits",
     "Enable dynamic remapping, mask early-stop ranks"},
}};

inline const RunbookRow& runbook_row(PathologyKind k) { return kRunbook[static_cast<std::size_t>(k)]; }

/// Splits a directive cell into individual directives. Items are separated by
/// "; " or ", "; a directive opening with "if " is conditional and keeps its
/// commas up to the next semicolon or the end of the cell.
inline std::vector<std::string> split_directives(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const bool sep = (text[i] == ',' || text[i] == ';') && i + 1 < text.size() && text[i + 1] == ' ';
        const bool conditional = text[i] == ',' && current.starts_with("if ");
        if (sep && !conditional) {
            out.push_back(current);
            current.clear();
            ++i;
        } else {
            current.push_back(text[i]);
        }
    }
    if (!current.empty()) out.push_back(current);
    return out;
}

/// Ordered mitigation directives for a pathology; total over all kinds.
inline std::vector<std::string> directives_for(PathologyKind k) { return split_directives(runbook_row(k).directives); }

}  // namespace skewscope
