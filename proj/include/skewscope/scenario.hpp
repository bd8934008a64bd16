#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "skewscope/inject.hpp"
#include "skewscope/sim.hpp"
#include "skewscope/telemetry.hpp"

// Scenario files: INI-like text with [topology], [workload], [sim] and any
// number of [fault] sections. Lines are `key = value`; '#' starts a comment.
// Durations accept a unit suffix (ns, us, ms, s); bare integers are ns.
//
//   name = tp_straggler
//   [topology]
//   num_nodes = 4
//   [fault]
//   kind = TpStraggler
//   start = 20s
//   end = 30s
//   node = 0
//   rank = 3
//   magnitude = 3.0

namespace skewscope {

struct Scenario {
    std::string name;
    ClusterTopology topology;
    WorkloadSpec workload;
    SimConfig config;
    std::vector<FaultSpec> faults;

    bool operator==(const Scenario&) const = default;

    /// Validates every part; errors name the offending field.
    void check() const {
        topology.check();
        workload.check();
        config.check();
        for (const auto& f : faults) check_fault(f, topology, config.horizon);
    }

    [[nodiscard]] Trace run() const { return simulate(topology, workload, faults, config); }
};

namespace detail::scn {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <class T>
T number(std::string_view text) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) throw ConfigError("cannot parse '" + std::string(text) + "'");
    return value;
}

/// Integer nanoseconds from "<n>[ns|us|ms|s]".
inline DurationNs duration(std::string_view text) {
    static constexpr std::pair<std::string_view, DurationNs> kUnits[] = {
        {"ns", 1}, {"us", kNsPerUs}, {"ms", kNsPerMs}, {"s", kNsPerSecond}};
    for (const auto& [suffix, scale] : kUnits) {
        if (text.size() > suffix.size() && text.ends_with(suffix)) {
            const auto digits = text.substr(0, text.size() - suffix.size());
            if (digits.back() < '0' || digits.back() > '9') continue;  // e.g. "ms" matched by "s"
            const auto n = number<DurationNs>(digits);
            if (n > std::numeric_limits<DurationNs>::max() / scale) throw ConfigError("duration overflows");
            return n * scale;
        }
    }
    return number<DurationNs>(text);
}

inline LengthShape shape(std::string_view text) {
    if (text == "uniform") return LengthShape::Uniform;
    if (text == "fixed") return LengthShape::Fixed;
    throw ConfigError("expected uniform/fixed, got '" + std::string(text) + "'");
}

inline std::string_view shape_name(LengthShape s) { return s == LengthShape::Fixed ? "fixed" : "uniform"; }

using Setter = std::function<void(std::string_view)>;
using Binding = std::map<std::string, Setter, std::less<>>;

inline Binding topology_fields(ClusterTopology& t) {
    return {
        {"num_nodes", [&](auto v) { t.num_nodes = number<std::uint32_t>(v); }},
        {"gpus_per_node", [&](auto v) { t.gpus_per_node = number<std::uint32_t>(v); }},
        {"tp_degree", [&](auto v) { t.tp_degree = number<std::uint32_t>(v); }},
        {"pp_stages", [&](auto v) { t.pp_stages = number<std::uint32_t>(v); }},
        {"nic_capacity_bytes_per_s", [&](auto v) { t.nic_capacity_bytes_per_s = number<double>(v); }},
        {"pcie_capacity_bytes_per_s", [&](auto v) { t.pcie_capacity_bytes_per_s = number<double>(v); }},
        {"fabric_base_latency", [&](auto v) { t.fabric_base_latency_ns = duration(v); }},
        {"fabric_jitter", [&](auto v) { t.fabric_jitter_ns = duration(v); }},
    };
}

inline Binding workload_fields(WorkloadSpec& w) {
    return {
        {"request_rate_per_s", [&](auto v) { w.request_rate_per_s = number<double>(v); }},
        {"prompt_len_min", [&](auto v) { w.prompt_len.min = number<std::uint32_t>(v); }},
        {"prompt_len_max", [&](auto v) { w.prompt_len.max = number<std::uint32_t>(v); }},
        {"prompt_len_shape", [&](auto v) { w.prompt_len.shape = shape(v); }},
        {"decode_len_min", [&](auto v) { w.decode_len.min = number<std::uint32_t>(v); }},
        {"decode_len_max", [&](auto v) { w.decode_len.max = number<std::uint32_t>(v); }},
        {"decode_len_shape", [&](auto v) { w.decode_len.shape = shape(v); }},
        {"bytes_per_prompt_token", [&](auto v) { w.bytes_per_prompt_token = number<std::uint64_t>(v); }},
        {"prefill_bytes_per_prompt_token", [&](auto v) { w.prefill_bytes_per_prompt_token = number<std::uint64_t>(v); }},
        {"bytes_per_decode_step", [&](auto v) { w.bytes_per_decode_step = number<std::uint64_t>(v); }},
        {"egress_bytes_per_token", [&](auto v) { w.egress_bytes_per_token = number<std::uint64_t>(v); }},
        {"kv_handoff_bytes_per_step", [&](auto v) { w.kv_handoff_bytes_per_step = number<std::uint64_t>(v); }},
        {"collective_bytes_per_step", [&](auto v) { w.collective_bytes_per_step = number<std::uint64_t>(v); }},
        {"step_period", [&](auto v) { w.step_period_ns = duration(v); }},
        {"decode_slots", [&](auto v) { w.decode_slots = number<std::uint32_t>(v); }},
        {"max_requests", [&](auto v) { w.max_requests = number<std::uint64_t>(v); }},
        {"nic_background_frac", [&](auto v) { w.nic_background_frac = number<double>(v); }},
    };
}

inline Binding sim_fields(SimConfig& c) {
    return {
        {"seed", [&](auto v) { c.seed = number<std::uint64_t>(v); }},
        {"horizon", [&](auto v) { c.horizon = duration(v); }},
        {"rng", [&](auto v) { c.rng = std::string(v); }},
        {"queue_sample_period", [&](auto v) { c.queue_sample_period_ns = duration(v); }},
        {"link_sample_period", [&](auto v) { c.link_sample_period_ns = duration(v); }},
        {"time_noise", [&](auto v) { c.time_noise_ns = duration(v); }},
    };
}

inline Binding fault_fields(FaultSpec& f) {
    return {
        {"kind",
         [&](auto v) {
             auto k = parse_pathology(v);
             if (!k) throw ConfigError("unknown pathology '" + std::string(v) + "'");
             f.kind = *k;
         }},
        {"start", [&](auto v) { f.start = duration(v); }},
        {"end", [&](auto v) { f.end = duration(v); }},
        {"magnitude", [&](auto v) { f.magnitude = number<double>(v); }},
        {"node", [&](auto v) { f.location.node_id = number<std::uint32_t>(v); }},
        {"gpu", [&](auto v) { f.location.gpu_id = number<std::uint32_t>(v); }},
        {"rank", [&](auto v) { f.location.rank = number<std::uint32_t>(v); }},
        {"stage", [&](auto v) { f.location.stage = number<std::uint32_t>(v); }},
        {"flow", [&](auto v) { f.location.flow_id = number<std::uint64_t>(v); }},
    };
}

}  // namespace detail::scn

/// Integer nanoseconds from "<n>[ns|us|ms|s]"; a bare integer is ns.
inline DurationNs parse_duration(std::string_view text) { return detail::scn::duration(text); }

/// Parses a scenario; `source` prefixes error messages. Unknown sections,
/// unknown or repeated keys and unparsable values are ConfigErrors naming the
/// section and field. The result is validated with Scenario::check().
inline Scenario parse_scenario(std::istream& is, std::string_view source = "scenario") {
    using namespace detail::scn;
    Scenario sc;
    std::string section;
    Binding binding;
    std::vector<std::string> seen;
    bool name_set = false;
    std::vector<bool> fault_has_kind;

    auto where = [&](std::size_t line_no) {
        return std::string(source) + ":" + std::to_string(line_no) + (section.empty() ? "" : " [" + section + "]");
    };
    // Fault bindings hold a reference into sc.faults, so they are rebuilt
    // whenever the vector may have reallocated.
    auto bind = [&]() {
        seen.clear();
        if (section == "topology") binding = topology_fields(sc.topology);
        else if (section == "workload") binding = workload_fields(sc.workload);
        else if (section == "sim") binding = sim_fields(sc.config);
        else if (section == "fault") binding = fault_fields(sc.faults.back());
    };
    std::vector<std::string> sections_done;

    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(is, raw)) {
        ++line_no;
        std::string_view line(raw);
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where(line_no) + ": malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section == "fault") {
                sc.faults.emplace_back();
                fault_has_kind.push_back(false);
            } else if (section == "topology" || section == "workload" || section == "sim") {
                if (std::find(sections_done.begin(), sections_done.end(), section) != sections_done.end())
                    throw ConfigError(where(line_no) + ": section repeated");
                sections_done.push_back(section);
            } else {
                throw ConfigError(where(line_no) + ": unknown section");
            }
            bind();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where(line_no) + ": expected 'key = value'");
        const auto key = std::string(trim(line.substr(0, eq)));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where(line_no) + ": empty key");
        if (value.empty()) throw ConfigError(where(line_no) + " field '" + key + "': empty value");
        if (section.empty()) {
            if (key != "name") throw ConfigError(where(line_no) + " field '" + key + "': unknown field");
            if (name_set) throw ConfigError(where(line_no) + " field 'name': repeated");
            sc.name = std::string(value);
            name_set = true;
            continue;
        }
        const auto it = binding.find(key);
        if (it == binding.end()) throw ConfigError(where(line_no) + " field '" + key + "': unknown field");
        if (std::find(seen.begin(), seen.end(), key) != seen.end())
            throw ConfigError(where(line_no) + " field '" + key + "': repeated");
        seen.push_back(key);
        try {
            it->second(value);
        } catch (const ConfigError& e) {
            throw ConfigError(where(line_no) + " field '" + key + "': " + e.what());
        }
        if (section == "fault" && key == "kind") fault_has_kind.back() = true;
    }
    for (std::size_t i = 0; i < sc.faults.size(); ++i) {
        if (!fault_has_kind[i]) throw ConfigError(std::string(source) + ": fault #" + std::to_string(i + 1) + " field 'kind': missing");
    }
    try {
        sc.check();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(source) + ": " + e.what());
    }
    return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open scenario '" + path.string() + "'");
    auto sc = parse_scenario(is, path.string());
    if (sc.name.empty()) sc.name = path.stem().string();
    return sc;
}

namespace detail::scn {

inline std::string fmt_duration(DurationNs ns) {
    if (ns != 0 && ns % kNsPerSecond == 0) return std::to_string(ns / kNsPerSecond) + "s";
    if (ns != 0 && ns % kNsPerMs == 0) return std::to_string(ns / kNsPerMs) + "ms";
    if (ns != 0 && ns % kNsPerUs == 0) return std::to_string(ns / kNsPerUs) + "us";
    return std::to_string(ns) + "ns";
}

inline std::string fmt_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail::scn

/// Writes every field explicitly; parse_scenario(format_scenario(s)) == s.
inline std::string format_scenario(const Scenario& sc) {
    using namespace detail::scn;
    std::ostringstream os;
    if (!sc.name.empty()) os << "name = " << sc.name << '\n';
    const auto& t = sc.topology;
    os << "\n[topology]\n"
       << "num_nodes = " << t.num_nodes << '\n'
       << "gpus_per_node = " << t.gpus_per_node << '\n'
       << "tp_degree = " << t.tp_degree << '\n'
       << "pp_stages = " << t.pp_stages << '\n'
       << "nic_capacity_bytes_per_s = " << fmt_double(t.nic_capacity_bytes_per_s) << '\n'
       << "pcie_capacity_bytes_per_s = " << fmt_double(t.pcie_capacity_bytes_per_s) << '\n'
       << "fabric_base_latency = " << fmt_duration(t.fabric_base_latency_ns) << '\n'
       << "fabric_jitter = " << fmt_duration(t.fabric_jitter_ns) << '\n';
    const auto& w = sc.workload;
    os << "\n[workload]\n"
       << "request_rate_per_s = " << fmt_double(w.request_rate_per_s) << '\n'
       << "prompt_len_min = " << w.prompt_len.min << '\n'
       << "prompt_len_max = " << w.prompt_len.max << '\n'
       << "prompt_len_shape = " << shape_name(w.prompt_len.shape) << '\n'
       << "decode_len_min = " << w.decode_len.min << '\n'
       << "decode_len_max = " << w.decode_len.max << '\n'
       << "decode_len_shape = " << shape_name(w.decode_len.shape) << '\n'
       << "bytes_per_prompt_token = " << w.bytes_per_prompt_token << '\n'
       << "prefill_bytes_per_prompt_token = " << w.prefill_bytes_per_prompt_token << '\n'
       << "bytes_per_decode_step = " << w.bytes_per_decode_step << '\n'
       << "egress_bytes_per_token = " << w.egress_bytes_per_token << '\n'
       << "kv_handoff_bytes_per_step = " << w.kv_handoff_bytes_per_step << '\n'
       << "collective_bytes_per_step = " << w.collective_bytes_per_step << '\n'
       << "step_period = " << fmt_duration(w.step_period_ns) << '\n'
       << "decode_slots = " << w.decode_slots << '\n'
       << "max_requests = " << w.max_requests << '\n'
       << "nic_background_frac = " << fmt_double(w.nic_background_frac) << '\n';
    const auto& c = sc.config;
    os << "\n[sim]\n"
       << "seed = " << c.seed << '\n'
       << "horizon = " << fmt_duration(c.horizon) << '\n'
       << "rng = " << c.rng << '\n'
       << "queue_sample_period = " << fmt_duration(c.queue_sample_period_ns) << '\n'
       << "link_sample_period = " << fmt_duration(c.link_sample_period_ns) << '\n'
       << "time_noise = " << fmt_duration(c.time_noise_ns) << '\n';
    for (const auto& f : sc.faults) {
        os << "\n[fault]\n"
           << "kind = " << to_string(f.kind) << '\n'
           << "start = " << fmt_duration(f.start) << '\n'
           << "end = " << fmt_duration(f.end) << '\n'
           << "magnitude = " << fmt_double(f.magnitude) << '\n';
        if (f.location.node_id) os << "node = " << *f.location.node_id << '\n';
        if (f.location.gpu_id) os << "gpu = " << *f.location.gpu_id << '\n';
        if (f.location.rank) os << "rank = " << *f.location.rank << '\n';
        if (f.location.stage) os << "stage = " << *f.location.stage << '\n';
        if (f.location.flow_id) os << "flow = " << *f.location.flow_id << '\n';
    }
    return os.str();
}

/// Scenario files (*.scn) of a directory, sorted by file name.
inline std::vector<std::filesystem::path> scenario_files(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    if (!std::filesystem::is_directory(dir)) throw ConfigError("not a directory: '" + dir.string() + "'");
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".scn") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace skewscope
