#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <future>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "skewscope/attribution.hpp"
#include "skewscope/detect_core.hpp"
#include "skewscope/records.hpp"
#include "skewscope/runbook.hpp"
#include "skewscope/scenario.hpp"

// Evaluation harness: simulate each scenario, detect, attribute, and score the
// findings against the scenario's own injection log.

namespace skewscope {

/// Minimum window IoU for a finding to count as detecting an injection.
inline constexpr double kMatchIoU = 0.5;

/// Same kind, window IoU >= kMatchIoU, and the finding's location agrees with
/// every location field the injection specifies.
inline bool matches(const Finding& f, const InjectionRecord& inj) {
    return f.kind == inj.kind && window_iou(f.window, {inj.start, inj.end}) >= kMatchIoU &&
           f.location.covers(inj.location);
}

struct KindScore {
    std::size_t true_positives = 0;
    std::size_t false_negatives = 0;
    std::size_t false_positives = 0;
    /// Sum over true positives of the best matching window IoU.
    double iou_sum = 0.0;

    bool operator==(const KindScore&) const = default;

    [[nodiscard]] double mean_window_iou() const {
        return true_positives ? iou_sum / static_cast<double>(true_positives) : 0.0;
    }

    KindScore& operator+=(const KindScore& o) {
        true_positives += o.true_positives;
        false_negatives += o.false_negatives;
        false_positives += o.false_positives;
        iou_sum += o.iou_sum;
        return *this;
    }
};

using KindScores = std::array<KindScore, kPathologyCount>;

struct ScenarioOutcome {
    std::string name;
    std::size_t injections = 0;
    std::size_t findings = 0;
    /// Findings that match at least one injection.
    std::size_t matched_findings = 0;
    std::size_t reports = 0;
    /// Reports containing at least one matched finding.
    std::size_t matched_reports = 0;
    KindScores per_kind{};

    [[nodiscard]] bool healthy() const { return injections == 0; }
};

struct EvalResult {
    std::vector<ScenarioOutcome> scenarios;
    KindScores per_kind{};

    [[nodiscard]] KindScore total() const {
        KindScore t;
        for (const auto& k : per_kind) t += k;
        return t;
    }

    /// TP / (TP + FN), with 0/0 defined as 1.
    [[nodiscard]] double recall() const {
        const auto t = total();
        const auto denom = t.true_positives + t.false_negatives;
        return denom ? static_cast<double>(t.true_positives) / static_cast<double>(denom) : 1.0;
    }

    /// Matched findings / all findings, with 0/0 defined as 1.
    [[nodiscard]] double precision() const {
        std::size_t matched = 0, all = 0;
        for (const auto& s : scenarios) matched += s.matched_findings, all += s.findings;
        return all ? static_cast<double>(matched) / static_cast<double>(all) : 1.0;
    }

    /// Reports that contain a matched finding / all reports, with 0/0 defined
    /// as 1. Attribution folds secondary symptoms into one report, so this is
    /// the precision an operator reading reports experiences.
    [[nodiscard]] double post_attribution_precision() const {
        std::size_t matched = 0, all = 0;
        for (const auto& s : scenarios) matched += s.matched_reports, all += s.reports;
        return all ? static_cast<double>(matched) / static_cast<double>(all) : 1.0;
    }

    [[nodiscard]] std::size_t healthy_findings() const {
        std::size_t n = 0;
        for (const auto& s : scenarios) n += s.healthy() ? s.findings : 0;
        return n;
    }

    /// The acceptance gate: every injection detected, healthy scenarios clean.
    [[nodiscard]] bool passed() const { return recall() == 1.0 && healthy_findings() == 0; }
};

/// Scores one scenario's findings and reports against its injections.
inline ScenarioOutcome score(std::string name, std::span<const InjectionRecord> injections,
                             std::span<const Finding> findings, std::span<const RootCauseReport> reports) {
    ScenarioOutcome out;
    out.name = std::move(name);
    out.injections = injections.size();
    out.findings = findings.size();
    out.reports = reports.size();
    auto is_matched = [&](const Finding& f) {
        return std::any_of(injections.begin(), injections.end(), [&](const InjectionRecord& i) { return matches(f, i); });
    };
    for (const auto& inj : injections) {
        auto& ks = out.per_kind[static_cast<std::size_t>(inj.kind)];
        double best = -1.0;
        for (const auto& f : findings) {
            if (matches(f, inj)) best = std::max(best, window_iou(f.window, {inj.start, inj.end}));
        }
        if (best >= 0.0) {
            ++ks.true_positives;
            ks.iou_sum += best;
        } else {
            ++ks.false_negatives;
        }
    }
    for (const auto& f : findings) {
        if (is_matched(f)) ++out.matched_findings;
        else ++out.per_kind[static_cast<std::size_t>(f.kind)].false_positives;
    }
    for (const auto& r : reports) {
        const bool hit = is_matched(r.primary) || std::any_of(r.linked.begin(), r.linked.end(), is_matched);
        if (hit) ++out.matched_reports;
    }
    return out;
}

struct EvalOptions {
    DetectorConfig config;
    WindowPlan plan;
    /// Scenarios evaluated concurrently; 1 runs inline.
    std::size_t jobs = 1;
};

/// Simulates, detects, attributes and scores one scenario.
inline ScenarioOutcome evaluate_scenario(const Scenario& sc, const EvalOptions& opt) {
    const auto trace = sc.run();
    const auto findings = run_detectors(trace, opt.plan, opt.config);
    const auto reports = attribute(findings, trace.topology);
    return score(sc.name, trace.injections, findings, reports);
}

/// Evaluates every scenario; outcomes keep the input order regardless of `jobs`.
inline EvalResult evaluate(std::span<const Scenario> scenarios, const EvalOptions& opt) {
    opt.config.check();
    opt.plan.check();
    EvalResult result;
    result.scenarios.resize(scenarios.size());
    const std::size_t jobs = std::max<std::size_t>(1, opt.jobs);
    for (std::size_t base = 0; base < scenarios.size(); base += jobs) {
        const std::size_t end = std::min(scenarios.size(), base + jobs);
        if (jobs == 1) {
            result.scenarios[base] = evaluate_scenario(scenarios[base], opt);
            continue;
        }
        std::vector<std::future<ScenarioOutcome>> batch;
        for (std::size_t i = base; i < end; ++i)
            batch.push_back(std::async(std::launch::async, [&, i] { return evaluate_scenario(scenarios[i], opt); }));
        for (std::size_t i = base; i < end; ++i) result.scenarios[i] = batch[i - base].get();
    }
    for (const auto& s : result.scenarios) {
        for (std::size_t k = 0; k < kPathologyCount; ++k) result.per_kind[k] += s.per_kind[k];
    }
    return result;
}

/// Per-kind table followed by per-scenario lines and the aggregates.
inline void write_eval_table(std::ostream& os, const EvalResult& r) {
    auto fixed = [](double v) {
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(3);
        s << v;
        return s.str();
    };
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    os << pad("kind", 28) << pad("TP", 5) << pad("FN", 5) << pad("FP", 5) << "mean_IoU\n";
    for (auto k : all_pathologies()) {
        const auto& s = r.per_kind[static_cast<std::size_t>(k)];
        os << pad(std::string(to_string(k)), 28) << pad(std::to_string(s.true_positives), 5)
           << pad(std::to_string(s.false_negatives), 5) << pad(std::to_string(s.false_positives), 5)
           << (s.true_positives ? fixed(s.mean_window_iou()) : "-") << '\n';
    }
    os << '\n';
    for (const auto& s : r.scenarios) {
        os << "scenario " << pad(s.name, 30) << " injections=" << s.injections << " findings=" << s.findings
           << " reports=" << s.reports << '\n';
    }
    os << '\n'
       << "recall " << fixed(r.recall()) << '\n'
       << "precision " << fixed(r.precision()) << '\n'
       << "post_attribution_precision " << fixed(r.post_attribution_precision()) << '\n'
       << "healthy_findings " << r.healthy_findings() << '\n'
       << "result " << (r.passed() ? "PASS" : "FAIL") << '\n';
}

/// Structured records: one line per kind, one per scenario, one aggregate line.
inline void write_eval_records(std::ostream& os, const EvalResult& r) {
    for (auto k : all_pathologies()) {
        const auto& s = r.per_kind[static_cast<std::size_t>(k)];
        records::Writer w;
        w.add("kind", to_string(k)).add("tp", s.true_positives).add("fn", s.false_negatives);
        w.add("fp", s.false_positives).add("mean_iou", s.mean_window_iou());
        os << w.str() << '\n';
    }
    for (const auto& s : r.scenarios) {
        records::Writer w;
        w.add("scenario", records::escape(s.name)).add("injections", s.injections).add("findings", s.findings);
        w.add("matched_findings", s.matched_findings).add("reports", s.reports).add("matched_reports", s.matched_reports);
        os << w.str() << '\n';
    }
    records::Writer w;
    w.add("recall", r.recall()).add("precision", r.precision());
    w.add("post_attribution_precision", r.post_attribution_precision()).add("healthy_findings", r.healthy_findings());
    w.add("passed", r.passed());
    os << w.str() << '\n';
}

}  // namespace skewscope
