#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "skewscope/records.hpp"
#include "skewscope/stats.hpp"
#include "skewscope/telemetry.hpp"
#include "skewscope/trace_io.hpp"

// Windowing, thresholds and the Finding record shared by all detectors.

namespace skewscope {

struct Window {
    TimestampNs start = 0;
    TimestampNs end = 0;
    bool operator==(const Window&) const = default;
    auto operator<=>(const Window&) const = default;
    [[nodiscard]] DurationNs length() const { return end - start; }
};

/// Intersection over union of two half-open intervals; 0 when both are empty.
inline double window_iou(Window a, Window b) {
    const auto lo = std::max(a.start, b.start), hi = std::min(a.end, b.end);
    const double inter = hi > lo ? static_cast<double>(hi - lo) : 0.0;
    const double uni = static_cast<double>(a.length() + b.length()) - inter;
    return uni > 0 ? inter / uni : 0.0;
}

struct WindowPlan {
    DurationNs length_ns = 10 * kNsPerSecond;
    DurationNs hop_ns = 10 * kNsPerSecond;

    void check() const {
        if (hop_ns == 0) throw ConfigError("window plan: hop_ns must be > 0");
        if (hop_ns > length_ns) throw ConfigError("window plan: hop_ns must not exceed length_ns");
    }

    /// Windows [k*hop, k*hop + length) that fit inside the horizon. A horizon
    /// shorter than one window yields the single window [0, horizon).
    [[nodiscard]] std::vector<Window> windows(TimestampNs horizon) const {
        check();
        std::vector<Window> out;
        if (horizon == 0) return out;
        if (horizon < length_ns) return {Window{0, horizon}};
        for (TimestampNs s = 0; s + length_ns <= horizon; s += hop_ns) out.push_back({s, s + length_ns});
        return out;
    }
};

/// Detection thresholds. Every threshold is addressable by its key so catalog
/// entries and threshold files can name them.
struct DetectorConfig {
    double gap_factor = 4.0;
    double spread_factor = 3.0;
    double skew_ratio = 2.0;
    double utilization_frac = 0.9;
    double retransmit_frac = 0.05;
    double jitter_cv = 0.5;
    double churn_rate = 0.5;
    double small_dma_frac = 0.7;
    double min_events = 8;
    double ewma_alpha = 0.3;

    static constexpr std::array<std::string_view, 10> kKeys = {
        "gap_factor", "spread_factor", "skew_ratio", "utilization_frac", "retransmit_frac",
        "jitter_cv",  "churn_rate",    "small_dma_frac", "min_events",   "ewma_alpha"};

    [[nodiscard]] static bool has_key(std::string_view key) {
        return std::find(kKeys.begin(), kKeys.end(), key) != kKeys.end();
    }

    [[nodiscard]] double get(std::string_view key) const { return field(*this, key); }
    void set(std::string_view key, double value) { field(*this, key) = value; }

    void check() const {
        for (auto key : kKeys) {
            if (!(get(key) > 0)) throw ConfigError("detector config: " + std::string(key) + " must be > 0");
        }
        if (utilization_frac > 1.0) throw ConfigError("detector config: utilization_frac must lie in (0, 1]");
        if (ewma_alpha > 1.0) throw ConfigError("detector config: ewma_alpha must lie in (0, 1]");
        if (min_events < 1) throw ConfigError("detector config: min_events must be >= 1");
    }

    [[nodiscard]] std::size_t min_count() const { return static_cast<std::size_t>(min_events); }

private:
    template <class Self>
    static std::conditional_t<std::is_const_v<Self>, const double&, double&> field(Self& c, std::string_view key) {
        if (key == "gap_factor") return c.gap_factor;
        if (key == "spread_factor") return c.spread_factor;
        if (key == "skew_ratio") return c.skew_ratio;
        if (key == "utilization_frac") return c.utilization_frac;
        if (key == "retransmit_frac") return c.retransmit_frac;
        if (key == "jitter_cv") return c.jitter_cv;
        if (key == "churn_rate") return c.churn_rate;
        if (key == "small_dma_frac") return c.small_dma_frac;
        if (key == "min_events") return c.min_events;
        if (key == "ewma_alpha") return c.ewma_alpha;
        throw ConfigError("detector config: unknown key '" + std::string(key) + "'");
    }
};

/// Parses a thresholds file: `key=value` tokens, any number per line, `#` comments.
inline DetectorConfig parse_detector_config(std::istream& is) {
    DetectorConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        try {
            for (const auto& f : records::split(line)) cfg.set(f.key, records::parse_value<double>(f.key, f.value));
        } catch (const FormatError& e) {
            throw ConfigError("thresholds line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    cfg.check();
    return cfg;
}

inline DetectorConfig load_detector_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open thresholds file '" + path.string() + "'");
    return parse_detector_config(is);
}

inline std::string format_detector_config(const DetectorConfig& cfg) {
    std::string out;
    for (auto key : DetectorConfig::kKeys) {
        records::Writer w;
        w.add(key, cfg.get(key));
        out += w.str() + '\n';
    }
    return out;
}

using Evidence = std::map<std::string, double>;

/// One fired red flag.
struct Finding {
    PathologyKind kind = PathologyKind::BurstAdmissionBacklog;
    Window window;
    Location location;
    double severity = 0.0;
    Evidence evidence;

    bool operator==(const Finding&) const = default;
};

/// Deterministic order: window start, kind, location, then window end.
inline bool finding_less(const Finding& a, const Finding& b) {
    if (a.window.start != b.window.start) return a.window.start < b.window.start;
    if (a.kind != b.kind) return a.kind < b.kind;
    if (a.location != b.location) return a.location < b.location;
    return a.window.end < b.window.end;
}

inline void sort_findings(std::vector<Finding>& findings) { std::stable_sort(findings.begin(), findings.end(), finding_less); }

inline constexpr std::string_view kEvidencePrefix = "ev.";

inline std::string format_finding(const Finding& f) {
    records::Writer w;
    w.add("kind", to_string(f.kind)).add("start", f.window.start).add("end", f.window.end);
    detail::write_location(w, f.location);
    w.add("severity", f.severity);
    for (const auto& [k, v] : f.evidence) w.add(std::string(kEvidencePrefix) + k, v);
    return w.str();
}

inline Finding parse_finding(std::string_view line) {
    const auto fields = records::split(line);
    Finding f;
    std::vector<records::Field> core;
    for (const auto& fld : fields) {
        if (fld.key.starts_with(kEvidencePrefix))
            f.evidence[std::string(fld.key.substr(kEvidencePrefix.size()))] = records::parse_value<double>(fld.key, fld.value);
        else
            core.push_back(fld);
    }
    records::Reader r(std::move(core));
    const auto kind_name = r.get<std::string>("kind");
    const auto kind = parse_pathology(kind_name);
    if (!kind) throw FormatError("finding: unknown kind '" + kind_name + "'");
    f.kind = *kind;
    f.window = {r.get<TimestampNs>("start"), r.get<TimestampNs>("end")};
    f.location = detail::read_location(r);
    f.severity = r.get<double>("severity");
    if (auto extra = r.unused(); !extra.empty()) throw FormatError("finding: unknown field '" + extra.front() + "'");
    if (f.window.start > f.window.end) throw FormatError("finding: window start after end");
    if (!(f.severity >= 0.0 && f.severity <= 1.0)) throw FormatError("finding: severity outside [0, 1]");
    return f;
}

inline void write_findings(std::ostream& os, std::span<const Finding> findings) {
    for (const auto& f : findings) os << format_finding(f) << '\n';
}

inline std::vector<Finding> read_findings(std::istream& is) {
    std::vector<Finding> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        try {
            out.push_back(parse_finding(line));
        } catch (const FormatError& e) {
            throw FormatError("findings line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline void write_findings_file(const std::filesystem::path& path, std::span<const Finding> findings) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
    write_findings(os, findings);
}

inline std::vector<Finding> read_findings_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open findings '" + path.string() + "'");
    return read_findings(is);
}

}  // namespace skewscope
