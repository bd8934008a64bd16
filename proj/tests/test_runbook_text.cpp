// Runbook text: directive snapshot for every pathology and the directive
// splitting rules.

#include <gtest/gtest.h>

#include <map>
#include <set>
#include <string>
#include <vector>

#include "skewscope/runbook_text.hpp"

using namespace skewscope;

namespace {

const std::map<PathologyKind, std::vector<std::string>>& snapshot() {
    static const std::map<PathologyKind, std::vector<std::string>> s{
        {PathologyKind::BurstAdmissionBacklog, {"Smooth input batching", "rate-limit clients", "increase NIC queue depth"}},
        {PathologyKind::IngressStarvation, {"Balance load balancer hashing", "check NIC RSS/flow steering"}},
        {PathologyKind::FlowSkew, {"Verify flow hashing", "rebalance RPC streams"}},
        {PathologyKind::IngressDropRetransmit, {"Enable NIC offloads (TSO/GRO)", "verify MTU settings", "check cabling"}},
        {PathologyKind::EgressBacklog, {"Offload checksums", "use zero-copy send", "increase NIC buffer size"}},
        {PathologyKind::EgressJitter, {"Isolate runtime threads", "pin NIC IRQs", "increase batching window"}},
        {PathologyKind::EgressDropRetransmit, {"Check offload settings", "enable congestion control (ECN/PFC)"}},
        {PathologyKind::EarlyCompletionSkew, {"Enable inflight remapping / load stealing for decode"}},
        {PathologyKind::BandwidthSaturation, {"Upgrade NIC", "QoS partitioning", "stagger workloads"}},
        {PathologyKind::H2dStarvation, {"Pin memory", "bind to correct NUMA socket", "verify PCIe link width/speed"}},
        {PathologyKind::D2hBottleneck, {"Enable large pinned buffers", "reduce copies", "check IOMMU/ATS config"}},
        {PathologyKind::KernelLaunchLatency, {"Batch ops", "fuse kernels", "raise runtime launch queues", "isolate CPU cores"}},
        {PathologyKind::IntraNodeGpuSkew, {"Rebalance microbatches", "unify stream priorities", "check that GPU's memory and clocks"}},
        {PathologyKind::PcieLinkSaturation, {"Verify x16 Gen/lanes", "move devices off shared switch", "stagger I/O"}},
        {PathologyKind::P2pThrottling, {"Prefer NVLink/NVSwitch", "if PCIe, place GPUs under same switch, tune ACS/ATS"}},
        {PathologyKind::PinnedMemoryFragmentation, {"Pre-allocate larger pinned pools", "coalesce transfers"}},
        {PathologyKind::HostCpuBottleneck, {"Isolate IRQs/threads", "enable busy-poll where appropriate", "pin runtime threads"}},
        {PathologyKind::RegistrationChurn, {"Reuse registered buffers", "RDMA/GPUDirect with persistent MR"}},
        {PathologyKind::DecodeEarlyStopSkew, {"Enable inflight request remapping/packing", "speculative decode policies"}},
        {PathologyKind::TpStraggler, {"Rebalance shards", "check PCIe feeds per node", "adjust affinity"}},
        {PathologyKind::PpBubble, {"Adjust microbatch partitioning", "reassign stages", "speculative fill"}},
        {PathologyKind::CrossNodeLoadSkew, {"Validate shard sizes", "rebalance across nodes"}},
        {PathologyKind::NetworkCongestion, {"Check fabric counters", "enable adaptive routing", "spread ranks"}},
        {PathologyKind::HeadOfLineBlocking, {"Increase NIC queue depth", "enable QoS/ECN", "verify fair sharing"}},
        {PathologyKind::RetransmissionStorm, {"Verify lossless config", "tune buffer thresholds", "check optics/cabling"}},
        {PathologyKind::CreditStarvation, {"Increase QP window", "tune flow control params"}},
        {PathologyKind::KvCacheTransferBottleneck, {"Compress KV", "shard differently", "apply caching policies"}},
        {PathologyKind::EarlyStopSkewAcrossNodes, {"Enable dynamic remapping", "mask early-stop ranks"}},
    };
    return s;
}

}  // namespace

TEST(Directives, SnapshotCoversEveryKind) {
    ASSERT_EQ(snapshot().size(), kPathologyCount);
    for (auto k : all_pathologies()) {
        ASSERT_TRUE(snapshot().contains(k)) << to_string(k);
        EXPECT_EQ(directives_for(k), snapshot().at(k)) << to_string(k);
    }
}

TEST(Directives, EveryKindHasDistinctNonEmptyDirectives) {
    for (auto k : all_pathologies()) {
        const auto d = directives_for(k);
        ASSERT_FALSE(d.empty()) << to_string(k);
        EXPECT_EQ(std::set<std::string>(d.begin(), d.end()).size(), d.size()) << to_string(k);
        for (const auto& s : d) {
            EXPECT_FALSE(s.empty());
            EXPECT_NE(s.front(), ' ');
            EXPECT_NE(s.back(), ' ');
        }
    }
}

TEST(Directives, RowsAreIndexedByKind) {
    for (auto k : all_pathologies()) {
        EXPECT_EQ(runbook_row(k).kind, k);
        EXPECT_FALSE(runbook_row(k).root_cause.empty());
        EXPECT_FALSE(runbook_row(k).red_flag.empty());
    }
}

TEST(SplitDirectives, SeparatorsAndConditionals) {
    EXPECT_EQ(split_directives("a, b; c"), (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(split_directives("Verify x16 Gen/lanes"), (std::vector<std::string>{"Verify x16 Gen/lanes"}));
    EXPECT_EQ(split_directives("a; if b, c, d; e"), (std::vector<std::string>{"a", "if b, c, d", "e"}));
    EXPECT_EQ(split_directives("x,y"), (std::vector<std::string>{"x,y"}));
    EXPECT_TRUE(split_directives("").empty());
}
