#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "skewscope/detect_core.hpp"
#include "skewscope/records.hpp"
#include "skewscope/runbook_text.hpp"
#include "skewscope/telemetry.hpp"

// Root-cause attribution: correlates findings across vantage points into
// reports carrying a cause label and the runbook's mitigation directives.
// Rules are plain data; the built-in table can be replaced or extended.

namespace skewscope {

enum class Confidence : std::uint8_t { Corroborated = 0, SingleSignal = 1, CorroboratedByAbsence = 2 };

inline constexpr std::string_view to_string(Confidence c) {
    switch (c) {
        case Confidence::Corroborated: return "corroborated";
        case Confidence::SingleSignal: return "single-signal";
        case Confidence::CorroboratedByAbsence: return "corroborated-by-absence";
    }
    return "?";
}

inline std::optional<Confidence> parse_confidence(std::string_view s) {
    for (auto c : {Confidence::Corroborated, Confidence::SingleSignal, Confidence::CorroboratedByAbsence}) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

/// One correlation rule. A finding whose kind is in `primary` anchors the
/// rule; unassigned findings of a `linked` kind (any other kind when `linked`
/// is empty) join it; the rule fires when at least `min_linked` joined and no
/// finding of an `absent` kind exists. `same_node` and `overlapping` constrain
/// both linked and absent findings relative to the primary.
struct AttributionRule {
    std::string id;
    int priority = 0;
    std::vector<PathologyKind> primary;
    std::vector<PathologyKind> linked;
    std::size_t min_linked = 1;
    std::vector<PathologyKind> absent;
    bool same_node = true;
    bool overlapping = true;
    /// Root-cause label; empty means "the primary kind's runbook root cause".
    std::string label;
    Confidence confidence = Confidence::Corroborated;

    bool operator==(const AttributionRule&) const = default;

    void check() const {
        if (id.empty()) throw ConfigError("attribution rule: empty id");
        if (primary.empty()) throw ConfigError("attribution rule " + id + ": no primary kind");
        if (id == kSingleSignalRule) throw ConfigError("attribution rule id '" + id + "' is reserved");
    }

    static constexpr std::string_view kSingleSignalRule = "single";
};

/// Identifier used in reports produced without a rule.
inline constexpr std::string_view kSingleSignalRule = AttributionRule::kSingleSignalRule;

struct RootCauseReport {
    std::string rule;
    Finding primary;
    std::vector<Finding> linked;
    std::string root_cause_label;
    std::vector<std::string> directives;
    Confidence confidence = Confidence::SingleSignal;

    bool operator==(const RootCauseReport&) const = default;
};

namespace detail {

inline std::vector<PathologyKind> kinds_at(VantagePoint v) {
    std::vector<PathologyKind> out;
    for (auto k : all_pathologies()) {
        if (home_vantage(k) == v) out.push_back(k);
    }
    return out;
}

inline bool windows_overlap(const Window& a, const Window& b) { return a.start < b.end && b.start < a.end; }

inline bool same_node(const Finding& a, const Finding& b) {
    return a.location.node_id && b.location.node_id && *a.location.node_id == *b.location.node_id;
}

inline bool contains(const std::vector<PathologyKind>& ks, PathologyKind k) {
    return std::find(ks.begin(), ks.end(), k) != ks.end();
}

}  // namespace detail

/// The six compiled-in rules.
inline std::vector<AttributionRule> builtin_rules() {
    using K = PathologyKind;
    auto rule = [](std::string id, int priority, std::vector<K> primary, std::vector<K> linked, std::string label) {
        AttributionRule r;
        r.id = std::move(id);
        r.priority = priority;
        r.primary = std::move(primary);
        r.linked = std::move(linked);
        r.label = std::move(label);
        return r;
    };
    std::vector<AttributionRule> out;
    out.push_back(rule("R1", 30, {K::H2dStarvation}, {K::TpStraggler}, "local PCIe feed starvation"));
    auto r2 = rule("R2", 30, {K::EgressBacklog, K::EgressJitter}, {K::EgressBacklog, K::EgressJitter}, "network-side");
    r2.min_linked = 0;
    r2.absent = detail::kinds_at(VantagePoint::PcieObserver);
    r2.confidence = Confidence::CorroboratedByAbsence;
    out.push_back(std::move(r2));
    auto r3 = rule("R3", 20, {K::BandwidthSaturation, K::PcieLinkSaturation}, {}, "");
    r3.min_linked = 2;
    out.push_back(std::move(r3));
    auto r4 = rule("R4", 20, {K::DecodeEarlyStopSkew, K::EarlyCompletionSkew}, {K::PpBubble}, "early token exit variance");
    r4.same_node = false;
    out.push_back(std::move(r4));
    out.push_back(rule("R5", 10, {K::HostCpuBottleneck}, {K::KernelLaunchLatency}, "CPU-side orchestration lag"));
    out.push_back(rule("R6", 10, {K::DecodeEarlyStopSkew}, {K::EarlyStopSkewAcrossNodes}, ""));
    return out;
}

/// Directives of the primary kind followed by those of linked kinds, without repeats.
inline std::vector<std::string> report_directives(const Finding& primary, std::span<const Finding> linked) {
    std::vector<std::string> out;
    auto add = [&](PathologyKind k) {
        for (auto& d : directives_for(k)) {
            if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(std::move(d));
        }
    };
    add(primary.kind);
    for (const auto& f : linked) add(f.kind);
    return out;
}

/// Applies `rules` in descending priority (ties by id) and wraps every
/// remaining finding in a single-signal report. Each input finding lands in
/// exactly one report. Reports are ordered by their primary finding.
inline std::vector<RootCauseReport> attribute(std::span<const Finding> input, const ClusterTopology& topology,
                                              std::span<const AttributionRule> rules) {
    topology.check();
    for (const auto& rule : rules) rule.check();
    std::vector<Finding> findings(input.begin(), input.end());
    // Total order so the result does not depend on the input order, even for
    // findings that share kind, window and location.
    std::sort(findings.begin(), findings.end(), [](const Finding& a, const Finding& b) {
        if (finding_less(a, b)) return true;
        if (finding_less(b, a)) return false;
        return std::tie(a.severity, a.evidence) < std::tie(b.severity, b.evidence);
    });

    std::vector<const AttributionRule*> order;
    for (const auto& rule : rules) order.push_back(&rule);
    std::stable_sort(order.begin(), order.end(), [](const AttributionRule* a, const AttributionRule* b) {
        return a->priority != b->priority ? a->priority > b->priority : a->id < b->id;
    });

    std::vector<bool> taken(findings.size(), false);
    std::vector<RootCauseReport> reports;
    auto related = [](const AttributionRule& rule, const Finding& anchor, const Finding& other) {
        return (!rule.same_node || detail::same_node(anchor, other)) &&
               (!rule.overlapping || detail::windows_overlap(anchor.window, other.window));
    };

    for (const auto* rule : order) {
        for (std::size_t p = 0; p < findings.size(); ++p) {
            if (taken[p] || !detail::contains(rule->primary, findings[p].kind)) continue;
            const auto& anchor = findings[p];
            // Absence is judged against every finding, assigned or not.
            const bool blocked = std::any_of(findings.begin(), findings.end(), [&](const Finding& f) {
                return &f != &anchor && detail::contains(rule->absent, f.kind) && related(*rule, anchor, f);
            });
            if (blocked) continue;
            std::vector<std::size_t> joined;
            for (std::size_t j = 0; j < findings.size(); ++j) {
                if (j == p || taken[j]) continue;
                const bool kind_ok = rule->linked.empty() || detail::contains(rule->linked, findings[j].kind);
                // Windows of linked findings always overlap the primary's.
                if (kind_ok && related(*rule, anchor, findings[j]) &&
                    detail::windows_overlap(anchor.window, findings[j].window))
                    joined.push_back(j);
            }
            if (joined.size() < rule->min_linked) continue;
            RootCauseReport rep;
            rep.rule = rule->id;
            rep.primary = anchor;
            for (auto j : joined) {
                rep.linked.push_back(findings[j]);
                taken[j] = true;
            }
            taken[p] = true;
            rep.root_cause_label =
                rule->label.empty() ? std::string(runbook_row(anchor.kind).root_cause) : rule->label;
            rep.directives = report_directives(rep.primary, rep.linked);
            rep.confidence = rule->confidence;
            reports.push_back(std::move(rep));
        }
    }

    for (std::size_t i = 0; i < findings.size(); ++i) {
        if (taken[i]) continue;
        RootCauseReport rep;
        rep.rule = std::string(kSingleSignalRule);
        rep.primary = findings[i];
        rep.root_cause_label = std::string(runbook_row(findings[i].kind).root_cause);
        rep.directives = directives_for(findings[i].kind);
        rep.confidence = Confidence::SingleSignal;
        reports.push_back(std::move(rep));
    }
    std::stable_sort(reports.begin(), reports.end(),
                     [](const RootCauseReport& a, const RootCauseReport& b) { return finding_less(a.primary, b.primary); });
    return reports;
}

inline std::vector<RootCauseReport> attribute(std::span<const Finding> findings, const ClusterTopology& topology) {
    static const auto rules = builtin_rules();
    return attribute(findings, topology, rules);
}

// ---------------------------------------------------------------------------
// Rule files: one rule per line,
//   id=R1 priority=30 primary=H2dStarvation linked=TpStraggler min_linked=1
//   absent=PcieObserver same_node=1 overlapping=1 label=local%20PCIe... confidence=corroborated
// Kind lists are comma-separated; a vantage name expands to that runbook's kinds.

namespace detail {

inline std::vector<PathologyKind> parse_kind_list(std::string_view key, std::string_view text) {
    std::vector<PathologyKind> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto comma = text.find(',', pos);
        if (comma == std::string_view::npos) comma = text.size();
        const auto item = text.substr(pos, comma - pos);
        if (auto k = parse_pathology(item)) {
            out.push_back(*k);
        } else if (auto v = parse_vantage(item)) {
            for (auto kk : kinds_at(*v)) out.push_back(kk);
        } else {
            throw ConfigError("field '" + std::string(key) + "': unknown kind '" + std::string(item) + "'");
        }
        pos = comma + 1;
    }
    return out;
}

inline std::string format_kind_list(const std::vector<PathologyKind>& ks) {
    std::string out;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (i) out.push_back(',');
        out.append(to_string(ks[i]));
    }
    return out;
}

}  // namespace detail

inline std::string format_rule(const AttributionRule& rule) {
    records::Writer w;
    w.add("id", rule.id).add("priority", rule.priority).add("primary", detail::format_kind_list(rule.primary));
    if (!rule.linked.empty()) w.add("linked", detail::format_kind_list(rule.linked));
    w.add("min_linked", rule.min_linked);
    if (!rule.absent.empty()) w.add("absent", detail::format_kind_list(rule.absent));
    w.add("same_node", rule.same_node).add("overlapping", rule.overlapping);
    if (!rule.label.empty()) w.add("label", records::escape(rule.label));
    w.add("confidence", to_string(rule.confidence));
    return w.str();
}

inline AttributionRule parse_rule(std::string_view line) {
    records::Reader r(records::split(line));
    AttributionRule rule;
    try {
        rule.id = r.get<std::string>("id");
        rule.priority = r.get<int>("priority");
        rule.primary = detail::parse_kind_list("primary", r.get<std::string>("primary"));
        if (auto l = r.get_optional<std::string>("linked")) rule.linked = detail::parse_kind_list("linked", *l);
        rule.min_linked = r.get_optional<std::size_t>("min_linked").value_or(1);
        if (auto a = r.get_optional<std::string>("absent")) rule.absent = detail::parse_kind_list("absent", *a);
        rule.same_node = r.get_optional<bool>("same_node").value_or(true);
        rule.overlapping = r.get_optional<bool>("overlapping").value_or(true);
        if (auto l = r.get_optional<std::string>("label")) rule.label = records::unescape(*l);
        if (auto c = r.get_optional<std::string>("confidence")) {
            auto conf = parse_confidence(*c);
            if (!conf) throw ConfigError("field 'confidence': unknown value '" + *c + "'");
            rule.confidence = *conf;
        }
    } catch (const FormatError& e) {
        throw ConfigError(std::string("attribution rule: ") + e.what());
    }
    if (auto extra = r.unused(); !extra.empty()) throw ConfigError("attribution rule: unknown field '" + extra.front() + "'");
    rule.check();
    return rule;
}

inline std::vector<AttributionRule> read_rules(std::istream& is) {
    std::vector<AttributionRule> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(parse_rule(line));
        } catch (const ConfigError& e) {
            throw ConfigError("rules line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline std::vector<AttributionRule> load_rules(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open rules file '" + path.string() + "'");
    return read_rules(is);
}

// ---------------------------------------------------------------------------
// Report files. Each report is a `report` line followed by its findings:
//   report=0 rule=R1 confidence=corroborated label=... directives=a|b|c
//   of=0 role=primary kind=H2dStarvation start=... end=... node=0 ...
//   of=0 role=linked kind=TpStraggler ...

inline constexpr std::string_view kReportHeader = "#skewscope-reports v1";

inline void write_reports(std::ostream& os, std::span<const RootCauseReport> reports) {
    os << kReportHeader << '\n';
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& rep = reports[i];
        records::Writer w;
        w.add("report", i).add("rule", rep.rule).add("confidence", to_string(rep.confidence));
        w.add("label", records::escape(rep.root_cause_label)).add("directives", records::join_escaped(rep.directives));
        os << w.str() << '\n';
        os << "of=" << i << " role=primary " << format_finding(rep.primary) << '\n';
        for (const auto& f : rep.linked) os << "of=" << i << " role=linked " << format_finding(f) << '\n';
    }
}

inline std::vector<RootCauseReport> read_reports(std::istream& is) {
    std::vector<RootCauseReport> out;
    std::vector<bool> has_primary;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        try {
            if (line.starts_with("report=")) {
                records::Reader r(records::split(line));
                if (r.get<std::size_t>("report") != out.size()) throw FormatError("reports out of sequence");
                RootCauseReport rep;
                rep.rule = r.get<std::string>("rule");
                const auto conf_text = r.get<std::string>("confidence");
                const auto conf = parse_confidence(conf_text);
                if (!conf) throw FormatError("unknown confidence '" + conf_text + "'");
                rep.confidence = *conf;
                rep.root_cause_label = records::unescape(r.get<std::string>("label"));
                rep.directives = records::split_escaped(r.get<std::string>("directives"));
                if (auto extra = r.unused(); !extra.empty()) throw FormatError("unknown field '" + extra.front() + "'");
                out.push_back(std::move(rep));
                has_primary.push_back(false);
            } else {
                // "of=<i> role=<r> <finding>"
                const auto fields = records::split(line);
                if (fields.size() < 2 || fields[0].key != "of" || fields[1].key != "role")
                    throw FormatError("expected 'report=' or 'of= role=' line");
                const auto idx = records::parse_value<std::size_t>("of", fields[0].value);
                if (idx + 1 != out.size()) throw FormatError("finding does not belong to the current report");
                const auto body = line.find(' ', line.find("role="));
                if (body == std::string::npos) throw FormatError("missing finding fields");
                const auto finding = parse_finding(std::string_view(line).substr(body + 1));
                if (fields[1].value == "primary") {
                    if (has_primary[idx]) throw FormatError("report has two primary findings");
                    out[idx].primary = finding;
                    has_primary[idx] = true;
                } else if (fields[1].value == "linked") {
                    if (!has_primary[idx]) throw FormatError("linked finding before primary");
                    out[idx].linked.push_back(finding);
                } else {
                    throw FormatError("unknown role '" + std::string(fields[1].value) + "'");
                }
            }
        } catch (const FormatError& e) {
            throw FormatError("reports line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!has_primary[i]) throw FormatError("report " + std::to_string(i) + " has no primary finding");
    }
    return out;
}

inline std::string describe_location(const Location& loc) {
    std::string out;
    auto part = [&](std::string_view name, const auto& v) {
        if (!v) return;
        if (!out.empty()) out.push_back(' ');
        out.append(name);
        out += std::to_string(*v);
    };
    part("node", loc.node_id);
    part("gpu", loc.gpu_id);
    part("rank", loc.rank);
    part("stage", loc.stage);
    part("flow", loc.flow_id);
    return out.empty() ? "cluster" : out;
}

/// Human-readable rendering in runbook column order:
/// Signal -> Effect -> Root Cause -> Directives.
inline void write_report_table(std::ostream& os, std::span<const RootCauseReport> reports) {
    if (reports.empty()) {
        os << "no findings\n";
        return;
    }
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& rep = reports[i];
        const auto& row = runbook_row(rep.primary.kind);
        const double s0 = static_cast<double>(rep.primary.window.start) / static_cast<double>(kNsPerSecond);
        const double s1 = static_cast<double>(rep.primary.window.end) / static_cast<double>(kNsPerSecond);
        std::ostringstream head;
        head << "[" << i << "] " << to_string(rep.primary.kind) << " @ " << describe_location(rep.primary.location)
             << ", window [" << s0 << "s, " << s1 << "s), severity " << rep.primary.severity << " (" << rep.rule
             << ", " << to_string(rep.confidence) << ")";
        os << head.str() << '\n';
        os << "    Signal:     " << row.red_flag << '\n';
        for (const auto& f : rep.linked) {
            os << "    Linked:     " << to_string(f.kind) << " @ " << describe_location(f.location) << " - "
               << runbook_row(f.kind).red_flag << '\n';
        }
        os << "    Effect:     " << row.effect << '\n';
        os << "    Root cause: " << rep.root_cause_label << '\n';
        os << "    Directives:\n";
        for (const auto& d : rep.directives) os << "      - " << d << '\n';
    }
}

inline void write_reports_file(const std::filesystem::path& path, std::span<const RootCauseReport> reports) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
    write_reports(os, reports);
}

inline std::vector<RootCauseReport> read_reports_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open reports '" + path.string() + "'");
    return read_reports(is);
}

}  // namespace skewscope
