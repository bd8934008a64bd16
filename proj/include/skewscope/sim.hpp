#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "skewscope/rng.hpp"
#include "skewscope/telemetry.hpp"
#include "skewscope/trace_ops.hpp"

namespace skewscope {

enum class LengthShape : std::uint8_t { Uniform, Fixed };

struct LengthDist {
    std::uint32_t min = 1;
    std::uint32_t max = 1;
    LengthShape shape = LengthShape::Uniform;
    bool operator==(const LengthDist&) const = default;
};

struct WorkloadSpec {
    double request_rate_per_s = 24.0;
    LengthDist prompt_len{256, 512, LengthShape::Uniform};
    LengthDist decode_len{64, 128, LengthShape::Uniform};
    std::uint64_t bytes_per_prompt_token = 64;
    std::uint64_t prefill_bytes_per_prompt_token = 65'536;
    std::uint64_t bytes_per_decode_step = 4'096;
    std::uint64_t egress_bytes_per_token = 256;
    std::uint64_t kv_handoff_bytes_per_step = 8ULL << 20;
    std::uint64_t collective_bytes_per_step = 16ULL << 20;
    DurationNs step_period_ns = 20 * kNsPerMs;
    std::uint32_t decode_slots = 16;
    /// 0 means unbounded.
    std::uint64_t max_requests = 0;
    /// Share of NIC capacity consumed by unrelated tenants (storage, other jobs).
    double nic_background_frac = 0.3;

    bool operator==(const WorkloadSpec&) const = default;

    void check() const {
        if (!(request_rate_per_s > 0)) throw ConfigError("request_rate_per_s must be > 0");
        auto dist = [](const LengthDist& d, const char* name) {
            if (d.min == 0 || d.max < d.min) throw ConfigError(std::string(name) + " must satisfy 0 < min <= max");
        };
        dist(prompt_len, "prompt_len");
        dist(decode_len, "decode_len");
        if (bytes_per_prompt_token == 0) throw ConfigError("bytes_per_prompt_token must be > 0");
        if (prefill_bytes_per_prompt_token == 0) throw ConfigError("prefill_bytes_per_prompt_token must be > 0");
        if (bytes_per_decode_step == 0) throw ConfigError("bytes_per_decode_step must be > 0");
        if (egress_bytes_per_token == 0) throw ConfigError("egress_bytes_per_token must be > 0");
        if (kv_handoff_bytes_per_step == 0) throw ConfigError("kv_handoff_bytes_per_step must be > 0");
        if (collective_bytes_per_step == 0) throw ConfigError("collective_bytes_per_step must be > 0");
        if (step_period_ns < 100 * kNsPerUs) throw ConfigError("step_period_ns must be >= 100000");
        if (decode_slots == 0) throw ConfigError("decode_slots must be > 0");
        if (!(nic_background_frac >= 0 && nic_background_frac < 1))
            throw ConfigError("nic_background_frac must lie in [0, 1)");
    }
};

struct FaultSpec {
    PathologyKind kind = PathologyKind::BurstAdmissionBacklog;
    TimestampNs start = 0;
    TimestampNs end = 0;
    Location location;
    double magnitude = 1.0;
    bool operator==(const FaultSpec&) const = default;
};

struct SimConfig {
    std::uint64_t seed = 1;
    TimestampNs horizon = 60 * kNsPerSecond;
    std::string rng = std::string(CounterRng::kId);
    DurationNs queue_sample_period_ns = kNsPerMs;
    DurationNs link_sample_period_ns = 10 * kNsPerMs;
    /// Upper bound of the uniform timing noise added to step-driven events.
    DurationNs time_noise_ns = 50 * kNsPerUs;
    bool operator==(const SimConfig&) const = default;

    void check() const {
        if (rng != CounterRng::kId) throw ConfigError("unsupported rng '" + rng + "'");
        if (queue_sample_period_ns == 0) throw ConfigError("queue_sample_period_ns must be > 0");
        if (link_sample_period_ns == 0) throw ConfigError("link_sample_period_ns must be > 0");
    }
};

/// Location fields a fault of this kind must carry (and no others).
struct LocationShape {
    bool node = false, gpu = false, rank = false, stage = false, flow = false;
};

inline LocationShape location_shape(PathologyKind k) {
    using K = PathologyKind;
    switch (k) {
        case K::NetworkCongestion: return {};
        case K::H2dStarvation:
        case K::D2hBottleneck:
        case K::KernelLaunchLatency:
        case K::IntraNodeGpuSkew:
        case K::P2pThrottling:
        case K::DecodeEarlyStopSkew: return {.node = true, .gpu = true};
        case K::TpStraggler: return {.node = true, .rank = true};
        case K::PpBubble: return {.node = true, .stage = true};
        case K::HeadOfLineBlocking: return {.node = true, .flow = true};
        default: return {.node = true};
    }
}

inline void check_fault(const FaultSpec& f, const ClusterTopology& topo, TimestampNs horizon) {
    const std::string name(to_string(f.kind));
    if (!(f.start < f.end)) throw ConfigError("fault " + name + ": start must be < end");
    if (f.end > horizon) throw ConfigError("fault " + name + ": interval exceeds simulation horizon");
    if (!(f.magnitude >= 1.0)) throw ConfigError("fault " + name + ": magnitude must be >= 1.0");
    const auto shape = location_shape(f.kind);
    auto field = [&](bool wanted, bool present, const char* fname) {
        if (wanted && !present) throw ConfigError("fault " + name + ": location." + fname + " is required");
        if (!wanted && present) throw ConfigError("fault " + name + ": location." + fname + " is not meaningful");
    };
    const auto& l = f.location;
    field(shape.node, l.node_id.has_value(), "node");
    field(shape.gpu, l.gpu_id.has_value(), "gpu");
    field(shape.rank, l.rank.has_value(), "rank");
    field(shape.stage, l.stage.has_value(), "stage");
    field(shape.flow, l.flow_id.has_value(), "flow");
    if (l.node_id && *l.node_id >= topo.num_nodes) throw ConfigError("fault " + name + ": node out of range");
    if (l.gpu_id && *l.gpu_id >= topo.gpus_per_node) throw ConfigError("fault " + name + ": gpu out of range");
    if (l.rank && *l.rank >= topo.tp_degree) throw ConfigError("fault " + name + ": rank out of range");
    if (l.stage && *l.stage + 1 >= topo.pp_stages)
        throw ConfigError("fault " + name + ": stage must name a boundary (stage < pp_stages - 1)");
}

/// Maps (replica, stage, rank) onto physical GPUs, filling nodes in order.
struct Placement {
    ClusterTopology topo;

    [[nodiscard]] std::uint32_t replicas() const { return topo.total_gpus() / (topo.tp_degree * topo.pp_stages); }
    [[nodiscard]] std::uint32_t global(std::uint32_t replica, std::uint32_t stage, std::uint32_t rank) const {
        return (replica * topo.pp_stages + stage) * topo.tp_degree + rank;
    }
    [[nodiscard]] std::uint32_t node(std::uint32_t replica, std::uint32_t stage, std::uint32_t rank) const {
        return global(replica, stage, rank) / topo.gpus_per_node;
    }
    [[nodiscard]] std::uint32_t gpu(std::uint32_t replica, std::uint32_t stage, std::uint32_t rank) const {
        return global(replica, stage, rank) % topo.gpus_per_node;
    }
    /// Node that terminates north-south traffic for a replica.
    [[nodiscard]] std::uint32_t front_node(std::uint32_t replica) const { return node(replica, 0, 0); }
};

// Fixed shape constants of the healthy model.
namespace model {
inline constexpr std::uint64_t kMtuBytes = 1'500;
inline constexpr DurationNs kIngressPacketSpacingNs = 10 * kNsPerUs;
inline constexpr DurationNs kIngressPacketJitterNs = 2 * kNsPerUs;
inline constexpr double kNsRetransmitProb = 0.005;
inline constexpr double kFabricRetransmitProb = 0.002;
inline constexpr std::uint32_t kPrefillSteps = 2;
inline constexpr DurationNs kH2dChunkSpacingNs = 200 * kNsPerUs;
inline constexpr DurationNs kD2hBaseLatencyNs = 5 * kNsPerUs;
inline constexpr DurationNs kD2hLatencyNoiseNs = kNsPerUs;
inline constexpr std::uint64_t kP2pBytes = 1ULL << 20;
inline constexpr double kP2pBytesPerSecond = 25e9;
inline constexpr std::uint64_t kFabricPacketBytes = 64 * 1024;
inline constexpr std::uint32_t kFabricFlowsPerNode = 2;
inline constexpr std::uint32_t kQueuePairsPerNode = 2;
inline constexpr std::uint32_t kCreditsPerUpdate = 64;
inline constexpr std::uint32_t kTokenTags = 4;
inline constexpr std::uint32_t kBaseQueueDepth = 4;
inline constexpr std::uint64_t kPinnedPoolBytes = 1ULL << 30;

/// Step offsets as fractions of the step period.
inline constexpr double kDoorbellAt = 0.05, kPrefillAt = 0.10, kLaunchAt = 0.20, kFabricAt = 0.20,
                        kCollectiveAt = 0.30, kP2pAt = 0.40, kCreditAt = 0.45, kHandoffAt = 0.50, kD2hAt = 0.60,
                        kEgressAt = 0.75;

inline std::uint64_t fabric_flow_id(std::uint32_t node, std::uint32_t k) { return std::uint64_t{node} * kFabricFlowsPerNode + k; }
inline std::uint32_t queue_pair_id(std::uint32_t node, std::uint32_t k) { return node * kQueuePairsPerNode + k; }
}  // namespace model

namespace rngtag {
enum : std::uint64_t {
    Arrival = 1,
    Prompt,
    Decode,
    IngressPkt,
    IngressRetx,
    EgressRetx,
    StepNoise,
    D2hLatency,
    P2pDuration,
    FabricRetx,
    Link,
    Queue,
    Fault = 32,
};
}

namespace detail {

inline std::uint32_t draw_length(const CounterRng& rng, std::uint64_t tag, std::uint64_t id, const LengthDist& d) {
    if (d.shape == LengthShape::Fixed || d.max == d.min) return d.min;
    return d.min + static_cast<std::uint32_t>(rng.below(entity_key(tag, id), 0, d.max - d.min + 1));
}

struct Request {
    std::uint64_t id = 0;
    TimestampNs arrival = 0;
    std::uint32_t prompt = 0;
    std::uint32_t decode = 0;
};

struct Slot {
    std::optional<Request> req;
    std::uint64_t first_token_step = 0;
    std::uint32_t emitted = 0;
};

/// Produces the fault-free event stream.
class HealthyGenerator {
public:
    HealthyGenerator(const ClusterTopology& topo, const WorkloadSpec& wl, const SimConfig& cfg)
        : topo_(topo), wl_(wl), cfg_(cfg), rng_(cfg.seed), place_{topo} {}

    std::vector<TelemetryEvent> run() {
        if (cfg_.horizon == 0) return {};
        registrations();
        const auto requests = arrivals();
        for (std::uint32_t r = 0; r < place_.replicas(); ++r) replica(r, requests);
        queue_samples();
        link_samples();
        sort_events(out_);
        return std::move(out_);
    }

private:
    template <class P>
    void emit(TimestampNs ts, std::uint32_t node, P payload) {
        if (ts < cfg_.horizon) out_.push_back(make_event(ts, node, std::move(payload)));
    }

    TimestampNs noisy(TimestampNs base, std::uint64_t entity, std::uint64_t seq) const {
        if (cfg_.time_noise_ns == 0) return base;
        return base + rng_.below(entity_key(rngtag::StepNoise, entity), seq, cfg_.time_noise_ns);
    }

    TimestampNs offset(TimestampNs step_start, double frac) const {
        return step_start + static_cast<TimestampNs>(frac * static_cast<double>(wl_.step_period_ns));
    }

    void registrations() {
        for (std::uint32_t n = 0; n < topo_.num_nodes; ++n)
            for (std::uint32_t g = 0; g < topo_.gpus_per_node; ++g) emit(g, n, MemRegister{model::kPinnedPoolBytes});
    }

    std::vector<Request> arrivals() {
        std::vector<Request> reqs;
        const double mean_gap_ns = 1e9 / wl_.request_rate_per_s;
        double t = 0.0;
        for (std::uint64_t i = 0;; ++i) {
            if (wl_.max_requests && i >= wl_.max_requests) break;
            t += rng_.exponential(entity_key(rngtag::Arrival), i, mean_gap_ns);
            if (t >= static_cast<double>(cfg_.horizon)) break;
            Request r{i, static_cast<TimestampNs>(t), draw_length(rng_, rngtag::Prompt, i, wl_.prompt_len),
                      draw_length(rng_, rngtag::Decode, i, wl_.decode_len)};
            ingress(r, place_.front_node(static_cast<std::uint32_t>(i % place_.replicas())));
            reqs.push_back(r);
        }
        return reqs;
    }

    void ingress(const Request& r, std::uint32_t node) {
        const std::uint64_t total = std::uint64_t{r.prompt} * wl_.bytes_per_prompt_token;
        const std::uint64_t packets = (total + model::kMtuBytes - 1) / model::kMtuBytes;
        for (std::uint64_t p = 0; p < packets; ++p) {
            const std::uint64_t bytes = std::min<std::uint64_t>(model::kMtuBytes, total - p * model::kMtuBytes);
            const TimestampNs ts = r.arrival + p * model::kIngressPacketSpacingNs +
                                   rng_.below(entity_key(rngtag::IngressPkt, r.id), p, model::kIngressPacketJitterNs);
            emit(ts, node, IngressPacket{r.id, bytes, false, p == 0});
            if (rng_.chance(entity_key(rngtag::IngressRetx, r.id), p, model::kNsRetransmitProb))
                emit(ts + 3 * model::kIngressPacketSpacingNs, node, IngressPacket{r.id, bytes, true, p == 0});
        }
    }

    void replica(std::uint32_t r, const std::vector<Request>& all) {
        const auto replicas = place_.replicas();
        std::deque<Request> queue;
        std::size_t next = 0;
        std::vector<Slot> slots(wl_.decode_slots);
        const TimestampNs phase = wl_.step_period_ns * r / replicas;
        const std::uint32_t front = place_.front_node(r);

        for (std::uint64_t j = 0;; ++j) {
            const TimestampNs t = phase + j * wl_.step_period_ns;
            if (t >= cfg_.horizon) break;
            while (next < all.size() && all[next].arrival <= t) {
                if (all[next].id % replicas == r) queue.push_back(all[next]);
                ++next;
            }
            for (auto& s : slots) {
                if (s.req || queue.empty()) continue;
                s.req = queue.front();
                queue.pop_front();
                s.first_token_step = j + model::kPrefillSteps;
                s.emitted = 0;
                prefill(r, *s.req, t);
            }

            bool active = false;
            for (std::uint32_t k = 0; k < slots.size(); ++k) {
                auto& s = slots[k];
                if (!s.req || j < s.first_token_step) continue;
                active = true;
                const auto seq = s.req->id * 1024 + s.emitted;
                const TimestampNs ts = noisy(offset(t, model::kEgressAt), entity_key(1, front, k), j);
                emit(ts, front, EgressPacket{s.req->id, wl_.egress_bytes_per_token, false, k});
                if (rng_.chance(entity_key(rngtag::EgressRetx, front), seq, model::kNsRetransmitProb))
                    emit(ts + wl_.step_period_ns / 4, front, EgressPacket{s.req->id, wl_.egress_bytes_per_token, true, k});
                if (++s.emitted >= s.req->decode) s.req.reset();
            }
            if (active) decode_step(r, j, t);
        }
    }

    void prefill(std::uint32_t r, const Request& req, TimestampNs t) {
        const auto& d = wl_.prompt_len;
        const std::uint32_t span = d.max - d.min + 1;
        const std::uint32_t chunks = 1 + static_cast<std::uint32_t>((std::uint64_t{req.prompt - d.min} * 4) / span);
        const std::uint64_t total = std::uint64_t{req.prompt} * wl_.prefill_bytes_per_prompt_token;
        const std::uint64_t per = std::max<std::uint64_t>(1, total / (std::uint64_t{chunks} * topo_.tp_degree));
        const TimestampNs base = noisy(offset(t, model::kPrefillAt), entity_key(2, r), req.id);
        for (std::uint32_t k = 0; k < topo_.tp_degree; ++k) {
            const auto node = place_.node(r, 0, k);
            const auto gpu = place_.gpu(r, 0, k);
            for (std::uint32_t c = 0; c < chunks; ++c) emit(base + c * model::kH2dChunkSpacingNs + k, node, DmaH2D{gpu, per});
            emit(noisy(offset(t, model::kLaunchAt), entity_key(3, node, gpu), req.id), node,
                 DoorbellWrite{gpu, static_cast<std::uint32_t>(req.id % 8)});
        }
    }

    void decode_step(std::uint32_t r, std::uint64_t j, TimestampNs t) {
        const auto replicas = place_.replicas();
        for (std::uint32_t s = 0; s < topo_.pp_stages; ++s) {
            const std::uint64_t collective = (j * replicas + r) * topo_.pp_stages + s;
            for (std::uint32_t k = 0; k < topo_.tp_degree; ++k) {
                const auto node = place_.node(r, s, k);
                const auto gpu = place_.gpu(r, s, k);
                const auto ent = std::uint64_t{node} * 64 + gpu;
                emit(noisy(offset(t, model::kDoorbellAt), entity_key(4, ent), j), node,
                     DoorbellWrite{gpu, static_cast<std::uint32_t>(j % 8)});
                emit(noisy(offset(t, model::kCollectiveAt), entity_key(5, ent), j), node,
                     CollectiveBurst{collective, k, wl_.collective_bytes_per_step});
                const auto lat = model::kD2hBaseLatencyNs +
                                 rng_.below(entity_key(rngtag::D2hLatency, ent), j, model::kD2hLatencyNoiseNs);
                emit(noisy(offset(t, model::kD2hAt), entity_key(6, ent), j), node,
                     DmaD2H{gpu, wl_.bytes_per_decode_step, lat});
            }
            const auto node0 = place_.node(r, s, 0);
            if (topo_.tp_degree >= 2) {
                const auto src_rank = static_cast<std::uint32_t>(j % topo_.tp_degree);
                const auto dst_rank = static_cast<std::uint32_t>((j + 1) % topo_.tp_degree);
                const auto n = place_.node(r, s, src_rank);
                if (n == place_.node(r, s, dst_rank)) {
                    const double secs = static_cast<double>(model::kP2pBytes) / model::kP2pBytesPerSecond;
                    const double noise = 1.0 + 0.05 * rng_.uniform(entity_key(rngtag::P2pDuration, n), j);
                    emit(noisy(offset(t, model::kP2pAt), entity_key(7, n), j), n,
                         DmaP2P{place_.gpu(r, s, src_rank), place_.gpu(r, s, dst_rank), model::kP2pBytes,
                                static_cast<DurationNs>(secs * 1e9 * noise)});
                }
            }
            if (s + 1 < topo_.pp_stages) {
                emit(noisy(offset(t, model::kHandoffAt), entity_key(8, node0, s), j), node0,
                     StageHandoff{s, s + 1, j, wl_.kv_handoff_bytes_per_step,
                                  static_cast<std::uint32_t>(j % model::kTokenTags)});
            }
            for (std::uint32_t k = 0; k < model::kFabricFlowsPerNode; ++k) {
                const auto flow = model::fabric_flow_id(node0, k);
                const auto ts = noisy(offset(t, model::kFabricAt + 0.1 * k), entity_key(9, flow), j);
                emit(ts, node0, FabricPacket{flow, model::kFabricPacketBytes, false, false});
                if (rng_.chance(entity_key(rngtag::FabricRetx, flow), j, model::kFabricRetransmitProb))
                    emit(ts + 10 * kNsPerUs, node0, FabricPacket{flow, model::kFabricPacketBytes, true, false});
            }
            for (std::uint32_t k = 0; k < model::kQueuePairsPerNode; ++k) {
                const auto qp = model::queue_pair_id(node0, k);
                emit(noisy(offset(t, model::kCreditAt + 0.05 * k), entity_key(10, qp), j), node0,
                     RdmaCreditUpdate{qp, model::kCreditsPerUpdate});
            }
        }
    }

    void queue_samples() {
        const auto period = cfg_.queue_sample_period_ns;
        const std::size_t buckets = static_cast<std::size_t>(cfg_.horizon / period + 1);
        std::vector<std::vector<std::uint64_t>> rx(topo_.num_nodes, std::vector<std::uint64_t>(buckets, 0));
        auto tx = rx;
        for (const auto& e : out_) {
            if (const auto* p = e.as<IngressPacket>()) rx[e.node_id][e.ts / period] += p->bytes;
            if (const auto* p = e.as<EgressPacket>()) tx[e.node_id][e.ts / period] += p->bytes;
        }
        const double cap = topo_.nic_capacity_bytes_per_s;
        const double per_s = 1e9 / static_cast<double>(period);
        for (std::uint32_t n = 0; n < topo_.num_nodes; ++n) {
            for (std::uint64_t k = 1; k * period < cfg_.horizon; ++k) {
                const auto ent = entity_key(rngtag::Queue, n);
                const double bg_rx = wl_.nic_background_frac * cap * (0.95 + 0.1 * rng_.uniform(ent, 4 * k));
                const double bg_tx = wl_.nic_background_frac * cap * (0.95 + 0.1 * rng_.uniform(ent, 4 * k + 1));
                NicQueueSample q;
                q.rx_depth_pkts = model::kBaseQueueDepth + static_cast<std::uint32_t>(rng_.below(ent, 4 * k + 2, 2));
                q.tx_depth_pkts = model::kBaseQueueDepth + static_cast<std::uint32_t>(rng_.below(ent, 4 * k + 3, 2));
                q.rx_bytes_per_s = static_cast<std::uint64_t>(bg_rx + static_cast<double>(rx[n][k - 1]) * per_s);
                q.tx_bytes_per_s = static_cast<std::uint64_t>(bg_tx + static_cast<double>(tx[n][k - 1]) * per_s);
                emit(k * period, n, q);
            }
        }
    }

    void link_samples() {
        if (topo_.num_nodes < 2) return;
        const auto period = cfg_.link_sample_period_ns;
        const auto jitter = topo_.fabric_jitter_ns;
        for (std::uint32_t n = 0; n < topo_.num_nodes; ++n) {
            for (std::uint32_t peer = 0; peer < topo_.num_nodes; ++peer) {
                if (peer == n) continue;
                const auto ent = entity_key(rngtag::Link, n, peer);
                for (std::uint64_t k = 0; k * period < cfg_.horizon; ++k) {
                    LinkSample s{peer, topo_.fabric_base_latency_ns, jitter / 2};
                    if (jitter > 0) {
                        s.latency_ns += rng_.below(ent, 2 * k, jitter);
                        s.jitter_ns += rng_.below(ent, 2 * k + 1, jitter / 2 + 1);
                    }
                    emit(k * period + (n * topo_.num_nodes + peer) * kNsPerUs, n, s);
                }
            }
        }
    }

    ClusterTopology topo_;
    WorkloadSpec wl_;
    SimConfig cfg_;
    CounterRng rng_;
    Placement place_;
    std::vector<TelemetryEvent> out_;
};

}  // namespace detail

/// Fault-free event stream for the given inputs.
inline std::vector<TelemetryEvent> generate_healthy(const ClusterTopology& topo, const WorkloadSpec& wl,
                                                    const SimConfig& cfg) {
    return detail::HealthyGenerator(topo, wl, cfg).run();
}

}  // namespace skewscope
