#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "skewscope/rng.hpp"
#include "skewscope/sim.hpp"
#include "skewscope/telemetry.hpp"
#include "skewscope/trace_ops.hpp"

// Fault injection: each pathology perturbs the healthy stream inside the fault
// window at the fault's location. Magnitude 1.0 leaves the stream untouched
// for every kind except TpStraggler, whose delay is magnitude x step period.

namespace skewscope {

struct InjectContext {
    ClusterTopology topology;
    WorkloadSpec workload;
    SimConfig config;
    /// Position of the fault in the scenario; keys its random stream.
    std::uint64_t fault_index = 0;
};

namespace detail {

/// Detectability ramp: 1 at magnitude 1, growing by `slope` per unit.
inline double ramp(double magnitude, double slope) { return 1.0 + slope * (magnitude - 1.0); }

class Injector {
public:
    Injector(const InjectContext& ctx, const FaultSpec& f)
        : ctx_(ctx), f_(f), rng_(CounterRng::mix(ctx.config.seed ^ (0xFA17ULL + ctx.fault_index))) {}

    std::vector<TelemetryEvent> apply(std::vector<TelemetryEvent> events) {
        if (f_.magnitude == 1.0 && f_.kind != PathologyKind::TpStraggler) return events;
        ev_ = std::move(events);
        drop_.assign(ev_.size(), false);
        dispatch();
        std::vector<TelemetryEvent> out;
        out.reserve(ev_.size() + added_.size());
        for (std::size_t i = 0; i < ev_.size(); ++i)
            if (!drop_[i]) out.push_back(std::move(ev_[i]));
        // Synthetic traffic never extends the trace past the simulated horizon.
        for (auto& a : added_)
            if (a.ts < ctx_.config.horizon) out.push_back(std::move(a));
        sort_events(out);
        return out;
    }

private:
    using K = PathologyKind;

    [[nodiscard]] bool in_window(const TelemetryEvent& e) const { return e.ts >= f_.start && e.ts < f_.end; }
    [[nodiscard]] bool at_node(const TelemetryEvent& e) const {
        return !f_.location.node_id || e.node_id == *f_.location.node_id;
    }
    [[nodiscard]] bool here(const TelemetryEvent& e) const { return in_window(e) && at_node(e); }
    [[nodiscard]] std::uint32_t gpu() const { return f_.location.gpu_id.value_or(0); }
    [[nodiscard]] double m() const { return f_.magnitude; }
    [[nodiscard]] DurationNs step() const { return ctx_.workload.step_period_ns; }
    [[nodiscard]] TimestampNs cut_end() const {
        const double len = static_cast<double>(f_.end - f_.start);
        return f_.start + static_cast<TimestampNs>(len * (1.0 - 1.0 / m()));
    }
    [[nodiscard]] double u(std::uint64_t seq) const { return rng_.uniform(entity_key(rngtag::Fault), seq); }
    /// floor(x) plus one more with probability frac(x).
    [[nodiscard]] std::uint64_t fractional_count(double x, std::uint64_t seq) const {
        const double whole = std::floor(x);
        return static_cast<std::uint64_t>(whole) + (u(seq) < x - whole ? 1 : 0);
    }
    static std::uint64_t scale(std::uint64_t v, double factor) {
        return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(static_cast<double>(v) * factor)));
    }

    void dispatch() {
        switch (f_.kind) {
            case K::BurstAdmissionBacklog: burst_admission(); break;
            case K::IngressStarvation: ingress_starvation(); break;
            case K::FlowSkew: flow_skew(); break;
            case K::IngressDropRetransmit: ingress_retransmit(); break;
            case K::EgressBacklog: egress_backlog(); break;
            case K::EgressJitter: egress_jitter(); break;
            case K::EgressDropRetransmit: egress_retransmit(); break;
            case K::EarlyCompletionSkew: early_completion(); break;
            case K::BandwidthSaturation: bandwidth_saturation(); break;
            case K::H2dStarvation: h2d_starvation(); break;
            case K::D2hBottleneck: d2h_bottleneck(); break;
            case K::KernelLaunchLatency: kernel_launch_latency(); break;
            case K::IntraNodeGpuSkew: intra_node_gpu_skew(); break;
            case K::PcieLinkSaturation: pcie_saturation(); break;
            case K::P2pThrottling: p2p_throttling(); break;
            case K::PinnedMemoryFragmentation: fragmentation(); break;
            case K::HostCpuBottleneck: host_cpu_bottleneck(); break;
            case K::RegistrationChurn: registration_churn(); break;
            case K::DecodeEarlyStopSkew: decode_early_stop(); break;
            case K::TpStraggler: tp_straggler(); break;
            case K::PpBubble: pp_bubble(); break;
            case K::CrossNodeLoadSkew: cross_node_skew(); break;
            case K::NetworkCongestion: network_congestion(); break;
            case K::HeadOfLineBlocking: head_of_line(); break;
            case K::RetransmissionStorm: retransmission_storm(); break;
            case K::CreditStarvation: credit_starvation(); break;
            case K::KvCacheTransferBottleneck: kv_transfer(); break;
            case K::EarlyStopSkewAcrossNodes: early_stop_nodes(); break;
        }
    }

    /// Flow ids whose first (handshake) ingress packet lands inside the fault.
    std::map<std::uint64_t, TimestampNs> flows_born_here() const {
        std::map<std::uint64_t, TimestampNs> out;
        for (const auto& e : ev_) {
            const auto* p = e.as<IngressPacket>();
            if (p && p->is_handshake && !p->is_retransmit && here(e)) out.emplace(p->flow_id, e.ts);
        }
        return out;
    }

    // ---- north-south -------------------------------------------------------

    void burst_admission() {
        const double f = ramp(m(), 3.0);
        const auto flows = flows_born_here();
        std::map<std::uint64_t, std::uint64_t> copies;
        for (const auto& [flow, ts] : flows) copies[flow] = fractional_count(f - 1.0, flow);
        for (auto& e : ev_) {
            if (!at_node(e)) continue;
            if (const auto* p = e.as<IngressPacket>()) {
                auto it = copies.find(p->flow_id);
                if (it == copies.end()) continue;
                for (std::uint64_t c = 1; c <= it->second; ++c) {
                    auto clone = *p;
                    clone.flow_id = p->flow_id | (c << 48);
                    added_.push_back(make_event(e.ts + c * 5 * kNsPerMs, e.node_id, clone));
                }
            } else if (auto* q = std::get_if<NicQueueSample>(&e.payload); q && in_window(e)) {
                q->rx_depth_pkts = static_cast<std::uint32_t>(scale(q->rx_depth_pkts, f));
            }
        }
    }

    void ingress_starvation() {
        const double f = ramp(m(), 4.0);
        auto flows = flows_born_here();
        std::erase_if(flows, [](const auto& kv) { return kv.first % 2 != 0; });
        for (auto& e : ev_) {
            const auto* p = e.as<IngressPacket>();
            if (!p || !at_node(e)) continue;
            auto it = flows.find(p->flow_id);
            if (it == flows.end() || e.ts < it->second) continue;
            e.ts = it->second + static_cast<TimestampNs>(static_cast<double>(e.ts - it->second) * f);
        }
    }

    void flow_skew() {
        // Every 16th flow born in the window (by id order) turns heavy; the rest thin out.
        std::map<std::uint64_t, bool> heavy;
        std::size_t i = 0;
        for (const auto& [flow, ts] : flows_born_here()) heavy[flow] = (i++ % 16 == 0);
        for (auto& e : ev_) {
            auto* p = std::get_if<IngressPacket>(&e.payload);
            if (!p || !at_node(e)) continue;
            auto it = heavy.find(p->flow_id);
            if (it != heavy.end()) p->bytes = scale(p->bytes, it->second ? m() : 1.0 / m());
        }
    }

    void ingress_retransmit() {
        for (const auto& e : ev_) {
            const auto* p = e.as<IngressPacket>();
            if (!p || !p->is_handshake || p->is_retransmit || !here(e)) continue;
            const auto n = fractional_count(m() - 1.0, p->flow_id);
            for (std::uint64_t c = 1; c <= n; ++c)
                added_.push_back(make_event(e.ts + c * 20 * kNsPerUs, e.node_id, IngressPacket{p->flow_id, p->bytes, true, true}));
        }
    }

    /// Extra transmit-queue depth at time ts: a ramp whose window mean is (f - 1) x base.
    [[nodiscard]] double backlog_extra(TimestampNs ts, double f) const {
        const double phase = static_cast<double>(ts - f_.start) / static_cast<double>(f_.end - f_.start);
        return model::kBaseQueueDepth * 2.0 * (f - 1.0) * phase;
    }

    void egress_backlog() {
        const double f = ramp(m(), 3.0);
        for (auto& e : ev_) {
            if (!here(e)) continue;
            if (auto* q = std::get_if<NicQueueSample>(&e.payload)) {
                q->tx_depth_pkts += static_cast<std::uint32_t>(std::llround(backlog_extra(e.ts, f)));
            } else if (e.as<EgressPacket>()) {
                e.ts += static_cast<TimestampNs>(backlog_extra(e.ts, f) * 10.0 * kNsPerUs);
            }
        }
    }

    // Order-preserving: each response stream keeps its packets and span, but its
    // inter-packet gaps are reweighted by u^(m-1), whose spread grows with m.
    void egress_jitter() {
        const double k = m() - 1.0;
        std::map<std::uint64_t, std::vector<std::size_t>> flows;
        for (std::size_t i = 0; i < ev_.size(); ++i) {
            if (const auto* p = ev_[i].as<EgressPacket>(); p && here(ev_[i])) flows[p->flow_id].push_back(i);
        }
        for (const auto& [flow, idx] : flows) {
            if (idx.size() < 3) continue;
            std::vector<double> w(idx.size() - 1);
            double span = 0.0, weighted = 0.0;
            for (std::size_t j = 0; j + 1 < idx.size(); ++j) {
                const auto gap = static_cast<double>(ev_[idx[j + 1]].ts - ev_[idx[j]].ts);
                w[j] = gap * std::pow(1.0 - rng_.uniform(entity_key(rngtag::Fault, 1, flow), j), k);
                span += gap;
                weighted += w[j];
            }
            if (!(weighted > 0.0)) continue;
            const auto origin = ev_[idx.front()].ts;
            double acc = 0.0;
            for (std::size_t j = 0; j + 1 < idx.size(); ++j) {
                acc += w[j] * span / weighted;
                ev_[idx[j + 1]].ts = origin + static_cast<TimestampNs>(std::llround(acc));
            }
        }
    }

    void egress_retransmit() {
        const double q = std::min(1.0, 0.1 * (m() - 1.0));
        std::uint64_t seq = 0;
        for (const auto& e : ev_) {
            const auto* p = e.as<EgressPacket>();
            if (!p || p->is_retransmit || !here(e)) continue;
            if (u(seq++) >= q) continue;
            auto copy = *p;
            copy.is_retransmit = true;
            added_.push_back(make_event(e.ts + step() / 2, e.node_id, copy));
        }
    }

    void early_completion() {
        const auto slots = std::max<std::uint32_t>(1, ctx_.workload.decode_slots / 4);
        const auto cut = cut_end();
        for (std::size_t i = 0; i < ev_.size(); ++i) {
            const auto& e = ev_[i];
            const auto* p = e.as<EgressPacket>();
            if (p && at_node(e) && p->stream_id < slots && e.ts >= f_.start && e.ts < cut) drop_[i] = true;
        }
    }

    void bandwidth_saturation() {
        const double cap = ctx_.topology.nic_capacity_bytes_per_s;
        const double shrink = 1.0 / (m() * m() * m());
        const double depth = ramp(m(), 2.0);
        auto lift = [&](std::uint64_t rate) {
            const double r = static_cast<double>(rate);
            return r >= cap ? rate : static_cast<std::uint64_t>(cap - (cap - r) * shrink);
        };
        for (auto& e : ev_) {
            auto* q = std::get_if<NicQueueSample>(&e.payload);
            if (!q || !here(e)) continue;
            q->rx_bytes_per_s = lift(q->rx_bytes_per_s);
            q->tx_bytes_per_s = lift(q->tx_bytes_per_s);
            q->rx_depth_pkts = static_cast<std::uint32_t>(scale(q->rx_depth_pkts, depth));
            q->tx_depth_pkts = static_cast<std::uint32_t>(scale(q->tx_depth_pkts, depth));
        }
    }

    // ---- PCIe ------------------------------------------------------------------

    [[nodiscard]] bool on_gpu(const TelemetryEvent& e) const {
        if (!at_node(e)) return false;
        if (const auto* p = e.as<DmaH2D>()) return p->gpu_id == gpu();
        if (const auto* p = e.as<DmaD2H>()) return p->gpu_id == gpu();
        if (const auto* p = e.as<DoorbellWrite>()) return p->gpu_id == gpu();
        return false;
    }

    void h2d_starvation() {
        const auto hold = static_cast<TimestampNs>(ramp(m(), 2.0) * static_cast<double>(step()));
        TimestampNs hold_until = 0;
        std::uint64_t bunched = 0;
        for (auto& e : ev_) {
            if (!on_gpu(e)) continue;
            if (e.as<DmaH2D>() && in_window(e)) {
                hold_until = e.ts + hold;
            } else if (e.as<DoorbellWrite>() && e.ts >= f_.start && e.ts < hold_until) {
                e.ts = hold_until + (bunched++ % 1000);
            }
        }
    }

    void d2h_bottleneck() {
        const double f = ramp(m(), 3.0);
        for (auto& e : ev_) {
            auto* p = std::get_if<DmaD2H>(&e.payload);
            if (p && on_gpu(e) && in_window(e)) p->completion_latency_ns = scale(p->completion_latency_ns, f);
        }
    }

    void kernel_launch_latency() {
        const auto keep_every = static_cast<std::uint64_t>(std::llround(ramp(m(), 3.0)));
        std::uint64_t i = 0;
        for (std::size_t k = 0; k < ev_.size(); ++k) {
            const auto& e = ev_[k];
            if (e.as<DoorbellWrite>() && on_gpu(e) && in_window(e) && (i++ % keep_every) != 0) drop_[k] = true;
        }
    }

    void intra_node_gpu_skew() {
        const double f = 1.0 / ramp(m(), 2.0);
        for (auto& e : ev_) {
            if (!on_gpu(e) || !in_window(e)) continue;
            if (auto* p = std::get_if<DmaH2D>(&e.payload)) p->bytes = scale(p->bytes, f);
            if (auto* p = std::get_if<DmaD2H>(&e.payload)) p->bytes = scale(p->bytes, f);
        }
    }

    void pcie_saturation() {
        const double cap = ctx_.topology.pcie_capacity_bytes_per_s;
        const DurationNs len = f_.end - f_.start;
        double healthy = 0;
        for (const auto& e : ev_) {
            if (!here(e)) continue;
            if (const auto* p = e.as<DmaH2D>()) healthy += static_cast<double>(p->bytes);
            if (const auto* p = e.as<DmaD2H>()) healthy += static_cast<double>(p->bytes);
            if (const auto* p = e.as<DmaP2P>()) healthy += static_cast<double>(p->bytes);
        }
        const double util_now = healthy / (static_cast<double>(len) / 1e9) / cap;
        const double target = 1.0 - (1.0 - std::min(util_now, 1.0)) / (m() * m() * m());
        const double needed = (target - util_now) * cap * static_cast<double>(len) / 1e9;
        const std::uint64_t count = std::max<std::uint64_t>(1, len / kNsPerMs);
        const auto per = static_cast<std::uint64_t>(needed / static_cast<double>(count));
        const auto node = f_.location.node_id.value_or(0);
        if (per > 0) {
            for (std::uint64_t i = 0; i < count; ++i) {
                const auto g = static_cast<std::uint32_t>(i % ctx_.topology.gpus_per_node);
                added_.push_back(make_event(f_.start + i * kNsPerMs + 500 * kNsPerUs, node, DmaH2D{g, per}));
            }
        }
        // Periodic compute stalls: doorbells vanish for six steps out of every second.
        const DurationNs stall = 6 * step();
        for (std::size_t k = 0; k < ev_.size(); ++k) {
            const auto& e = ev_[k];
            if (e.as<DoorbellWrite>() && here(e) && (e.ts - f_.start) % kNsPerSecond < stall) drop_[k] = true;
        }
    }

    void p2p_throttling() {
        const double f = ramp(m(), 3.0);
        const double spread = 1.0 - 1.0 / m();
        std::uint64_t seq = 0;
        for (auto& e : ev_) {
            auto* p = std::get_if<DmaP2P>(&e.payload);
            if (!p || !here(e) || p->src_gpu != gpu()) continue;
            p->duration_ns = scale(p->duration_ns, f * (1.0 + spread * (u(seq++) - 0.5)));
        }
    }

    void fragmentation() {
        constexpr std::uint64_t kPiece = 32 * 1024;
        const double p_split = 1.0 - 1.0 / m();
        std::uint64_t seq = 0;
        for (std::size_t k = 0; k < ev_.size(); ++k) {
            const auto& e = ev_[k];
            const auto* p = e.as<DmaH2D>();
            if (!p || !here(e) || p->bytes <= kPiece) continue;
            if (u(seq++) >= p_split) continue;
            drop_[k] = true;
            const std::uint64_t pieces = (p->bytes + kPiece - 1) / kPiece;
            for (std::uint64_t i = 0; i < pieces; ++i) {
                const auto bytes = std::min(kPiece, p->bytes - i * kPiece);
                added_.push_back(make_event(e.ts + i * 2 * kNsPerUs, e.node_id, DmaH2D{p->gpu_id, bytes}));
            }
        }
    }

    void host_cpu_bottleneck() {
        const auto grid = static_cast<TimestampNs>(std::llround(ramp(m(), 2.0))) * step();
        for (auto& e : ev_) {
            const auto* p = e.as<DoorbellWrite>();
            if (!p || !here(e)) continue;
            const auto k = (e.ts - f_.start + grid - 1) / grid;
            e.ts = f_.start + k * grid + p->gpu_id * kNsPerUs;
        }
    }

    void registration_churn() {
        const double p_churn = 1.0 - 1.0 / m();
        std::uint64_t seq = 0;
        for (const auto& e : ev_) {
            if (!here(e)) continue;
            std::uint64_t bytes = 0;
            if (const auto* h2d = e.as<DmaH2D>()) bytes = h2d->bytes;
            else if (const auto* d2h = e.as<DmaD2H>()) bytes = d2h->bytes;
            else continue;
            if (u(seq++) >= p_churn) continue;
            added_.push_back(make_event(e.ts >= kNsPerUs ? e.ts - kNsPerUs : 0, e.node_id, MemRegister{bytes}));
            added_.push_back(make_event(e.ts + kNsPerUs, e.node_id, MemUnregister{bytes}));
        }
    }

    void decode_early_stop() {
        const auto cut = cut_end();
        for (std::size_t k = 0; k < ev_.size(); ++k) {
            const auto& e = ev_[k];
            if (e.as<DmaD2H>() && on_gpu(e) && e.ts >= f_.start && e.ts < cut) drop_[k] = true;
        }
    }

    // ---- east-west -------------------------------------------------------------

    void tp_straggler() {
        const auto delay = static_cast<TimestampNs>(std::llround(m() * static_cast<double>(step())));
        const auto rank = f_.location.rank.value_or(0);
        for (auto& e : ev_) {
            const auto* p = e.as<CollectiveBurst>();
            if (p && p->rank == rank && here(e)) e.ts += delay;
        }
    }

    void pp_bubble() {
        const auto group = static_cast<std::size_t>(std::llround(ramp(m(), 4.0)));
        const auto stage = f_.location.stage.value_or(0);
        std::vector<std::size_t> idx;
        for (std::size_t k = 0; k < ev_.size(); ++k) {
            const auto* p = ev_[k].as<StageHandoff>();
            if (p && p->from_stage == stage && here(ev_[k])) idx.push_back(k);
        }
        for (std::size_t g = 0; g < idx.size(); g += group) {
            const auto last = std::min(idx.size(), g + group) - 1;
            const auto release = ev_[idx[last]].ts;
            for (std::size_t i = g; i < last; ++i) ev_[idx[i]].ts = release - (last - i);
        }
    }

    void cross_node_skew() {
        const double f = ramp(m(), 2.5);
        for (auto& e : ev_) {
            auto* p = std::get_if<CollectiveBurst>(&e.payload);
            if (p && here(e)) p->bytes = scale(p->bytes, f);
        }
    }

    void network_congestion() {
        const double f = ramp(m(), 2.0);
        constexpr DurationNs kPeriod = 100 * kNsPerMs, kSpike = 20 * kNsPerMs;
        for (auto& e : ev_) {
            auto* p = std::get_if<LinkSample>(&e.payload);
            if (!p || !in_window(e) || (e.ts - f_.start) % kPeriod >= kSpike) continue;
            p->latency_ns = scale(p->latency_ns, f);
            p->jitter_ns = scale(p->jitter_ns, f);
        }
    }

    void head_of_line() {
        const auto stall = static_cast<DurationNs>(5.0 * (m() - 1.0) * static_cast<double>(step()));
        const auto flow = f_.location.flow_id.value_or(0);
        std::uint64_t i = 0;
        for (auto& e : ev_) {
            const auto* p = e.as<FabricPacket>();
            if (!p || p->flow_id != flow || !here(e)) continue;
            const auto cycle = f_.start + (e.ts - f_.start) / kNsPerSecond * kNsPerSecond;
            if (e.ts < cycle + stall) e.ts = cycle + stall + (i++ % 1000);
        }
    }

    void retransmission_storm() {
        for (const auto& e : ev_) {
            const auto* p = e.as<FabricPacket>();
            if (!p || p->is_retransmit || p->is_duplicate || !here(e)) continue;
            const auto n = fractional_count(m() - 1.0, e.ts);
            for (std::uint64_t c = 1; c <= n; ++c) {
                auto copy = *p;
                copy.is_duplicate = (c % 2 == 1);
                copy.is_retransmit = !copy.is_duplicate;
                added_.push_back(make_event(e.ts + c * 5 * kNsPerUs, e.node_id, copy));
            }
        }
    }

    void credit_starvation() {
        const auto keep_every = static_cast<std::uint64_t>(std::llround(ramp(m(), 3.0)));
        std::map<std::uint32_t, std::uint64_t> seen;
        for (std::size_t k = 0; k < ev_.size(); ++k) {
            const auto* p = ev_[k].as<RdmaCreditUpdate>();
            if (p && here(ev_[k]) && (seen[p->queue_pair_id]++ % keep_every) != 0) drop_[k] = true;
        }
    }

    void kv_transfer() {
        for (auto& e : ev_) {
            auto* p = std::get_if<StageHandoff>(&e.payload);
            if (p && here(e)) p->bytes = scale(p->bytes, p->token_tag == 0 ? m() : 1.0 / m());
        }
    }

    void early_stop_nodes() {
        const auto cut = cut_end();
        for (std::size_t k = 0; k < ev_.size(); ++k) {
            const auto& e = ev_[k];
            const auto kind = e.kind();
            const bool send = kind == PayloadKind::CollectiveBurst || kind == PayloadKind::StageHandoff ||
                              kind == PayloadKind::FabricPacket || kind == PayloadKind::RdmaCreditUpdate;
            if (send && at_node(e) && e.ts >= f_.start && e.ts < cut) drop_[k] = true;
        }
    }

    InjectContext ctx_;
    FaultSpec f_;
    CounterRng rng_;
    std::vector<TelemetryEvent> ev_;
    std::vector<bool> drop_;
    std::vector<TelemetryEvent> added_;
};

}  // namespace detail

/// Applies one fault to a time-ordered event stream.
inline std::vector<TelemetryEvent> inject(std::vector<TelemetryEvent> events, const FaultSpec& fault,
                                          const InjectContext& ctx) {
    return detail::Injector(ctx, fault).apply(std::move(events));
}

inline InjectionRecord to_record(const FaultSpec& f) { return {f.kind, f.start, f.end, f.location, f.magnitude}; }

/// Generates the healthy stream, applies every fault in order and records the injection log.
inline Trace simulate(const ClusterTopology& topo, const WorkloadSpec& workload, std::span<const FaultSpec> faults,
                      const SimConfig& config) {
    topo.check();
    workload.check();
    config.check();
    for (const auto& f : faults) check_fault(f, topo, config.horizon);

    Trace trace;
    trace.topology = topo;
    trace.horizon_ns = config.horizon;
    trace.events = generate_healthy(topo, workload, config);
    for (std::size_t i = 0; i < faults.size(); ++i) {
        trace.events = inject(std::move(trace.events), faults[i], {topo, workload, config, i});
        trace.injections.push_back(to_record(faults[i]));
    }
    return trace;
}

}  // namespace skewscope
