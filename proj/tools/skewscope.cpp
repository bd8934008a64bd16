// skewscope: simulate DPU telemetry, detect runbook pathologies, attribute
// root causes and score detectors against injected faults.
//
// Exit codes: 0 success / clean, 1 findings present (with --fail-on-findings)
// or failed evaluation, 2 usage or input error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "skewscope/attribution.hpp"
#include "skewscope/detect_core.hpp"
#include "skewscope/eval.hpp"
#include "skewscope/runbook.hpp"
#include "skewscope/runbook_text.hpp"
#include "skewscope/scenario.hpp"
#include "skewscope/trace_io.hpp"
#include "skewscope/trace_ops.hpp"

namespace fs = std::filesystem;
using namespace skewscope;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFindings = 1;
constexpr int kExitInput = 2;

/// Environment variable naming the default thresholds file.
constexpr const char* kThresholdsEnv = "SKEWSCOPE_THRESHOLDS";

struct Common {
    std::string format = "text";
    std::string thresholds;
    [[nodiscard]] bool records() const { return format == "records"; }
};

DetectorConfig load_thresholds(const Common& c) {
    if (!c.thresholds.empty()) return load_detector_config(c.thresholds);
    if (const char* env = std::getenv(kThresholdsEnv); env && *env) return load_detector_config(env);
    return {};
}

std::set<PathologyKind> parse_only(const std::string& text) {
    std::set<PathologyKind> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        auto k = parse_pathology(item);
        if (!k) throw ConfigError("--only: unknown pathology '" + item + "'");
        out.insert(*k);
    }
    if (out.empty()) throw ConfigError("--only: no pathologies given");
    return out;
}

WindowPlan make_plan(const std::string& length, const std::string& hop) {
    WindowPlan plan;
    if (!length.empty()) plan.length_ns = parse_duration(length);
    if (!hop.empty()) plan.hop_ns = parse_duration(hop);
    plan.check();
    return plan;
}

int cmd_simulate(const Common&, const std::string& scenario_path, const std::string& out, std::optional<std::uint64_t> seed) {
    auto sc = load_scenario(scenario_path);
    if (seed) sc.config.seed = *seed;
    const auto trace = sc.run();
    write_trace_file(out, trace);
    std::cerr << "simulate: " << sc.name << ": " << trace.events.size() << " events, " << trace.injections.size()
              << " injections -> " << out << '\n';
    return kExitOk;
}

int cmd_detect(const Common& c, const std::string& trace_path, const std::string& out, const std::string& only,
               const WindowPlan& plan, bool fail_on_findings) {
    const auto config = load_thresholds(c);
    const auto trace = read_trace_file(trace_path);
    const auto enabled = only.empty() ? all_kinds() : parse_only(only);
    const auto findings = run_detectors(trace, plan, config, enabled);
    if (!out.empty()) write_findings_file(out, findings);
    if (c.records()) {
        write_findings(std::cout, findings);
    } else {
        for (const auto& f : findings) {
            std::cout << to_string(f.kind) << " @ " << describe_location(f.location) << " [" << f.window.start << ", "
                      << f.window.end << ") severity " << f.severity << '\n';
        }
        std::cout << findings.size() << " finding(s)\n";
    }
    return fail_on_findings && !findings.empty() ? kExitFindings : kExitOk;
}

int cmd_attribute(const Common& c, const std::string& findings_path, const std::string& trace_path,
                  const std::string& out, const std::string& rules_path, bool fail_on_findings) {
    const auto findings = read_findings_file(findings_path);
    const auto trace = read_trace_file(trace_path);
    const auto rules = rules_path.empty() ? builtin_rules() : load_rules(rules_path);
    const auto reports = attribute(findings, trace.topology, rules);
    if (!out.empty()) write_reports_file(out, reports);
    if (c.records()) write_reports(std::cout, reports);
    else write_report_table(std::cout, reports);
    return fail_on_findings && !reports.empty() ? kExitFindings : kExitOk;
}

int cmd_eval(const Common& c, const std::string& dir, const WindowPlan& plan, std::optional<std::uint64_t> seed,
             std::size_t jobs) {
    const auto files = scenario_files(dir);
    if (files.empty()) throw ConfigError("no *.scn scenarios in '" + dir + "'");
    std::vector<Scenario> scenarios;
    for (const auto& f : files) {
        scenarios.push_back(load_scenario(f));
        if (seed) scenarios.back().config.seed = *seed;
    }
    EvalOptions opt;
    opt.config = load_thresholds(c);
    opt.plan = plan;
    opt.jobs = jobs ? jobs : std::max(1u, std::thread::hardware_concurrency());
    const auto result = evaluate(scenarios, opt);
    if (c.records()) write_eval_records(std::cout, result);
    else write_eval_table(std::cout, result);
    return result.passed() ? kExitOk : kExitFindings;
}

int cmd_list(const Common& c) {
    for (auto k : all_pathologies()) {
        const auto& row = runbook_row(k);
        const auto dirs = directives_for(k);
        if (c.records()) {
            records::Writer w;
            w.add("kind", to_string(k)).add("vantage", to_string(home_vantage(k)));
            w.add("red_flag", records::escape(row.red_flag)).add("directives", records::join_escaped(dirs));
            std::cout << w.str() << '\n';
        } else {
            std::cout << to_string(k) << '\t' << to_string(home_vantage(k)) << '\t' << row.red_flag << '\t'
                      << row.directives << '\n';
        }
    }
    return kExitOk;
}

int cmd_validate(const Common& c, const std::string& trace_path) {
    const auto trace = read_trace_file(trace_path);
    const auto violations = validate_trace(trace);
    for (const auto& v : violations) {
        if (c.records()) {
            records::Writer w;
            w.add("index", v.index).add("message", records::escape(v.message));
            std::cout << w.str() << '\n';
        } else {
            std::cout << v.message << '\n';
        }
    }
    if (!c.records()) {
        std::cout << (violations.empty() ? "valid" : "invalid") << ": " << trace.events.size() << " events, "
                  << violations.size() << " violation(s)\n";
    }
    return violations.empty() ? kExitOk : kExitInput;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DPU telemetry pathology simulator, detector and attribution engine"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--format", common.format, "Output format")
        ->check(CLI::IsMember({"text", "records"}))
        ->capture_default_str();
    app.add_option("--thresholds", common.thresholds,
                   std::string("Detector thresholds file (default: $") + kThresholdsEnv + ")");

    std::string scenario, out, trace, findings, only, rules, dir, window_len, window_hop;
    std::optional<std::uint64_t> seed;
    bool fail_on_findings = false;
    std::size_t jobs = 0;

    auto* sim = app.add_subcommand("simulate", "Simulate a scenario into a trace file and .faults sidecar");
    sim->add_option("--scenario", scenario, "Scenario file")->required();
    sim->add_option("--out", out, "Trace output path")->required();
    sim->add_option("--seed", seed, "Override the scenario seed");

    auto add_window = [&](CLI::App* cmd) {
        cmd->add_option("--window", window_len, "Window length, e.g. 10s (default 10s)");
        cmd->add_option("--hop", window_hop, "Window hop, e.g. 5s (default = 10s)");
    };

    auto* det = app.add_subcommand("detect", "Run detectors over a trace");
    det->add_option("--trace", trace, "Trace file")->required();
    det->add_option("--out", out, "Findings output path");
    det->add_option("--only", only, "Comma-separated pathology kinds to run");
    det->add_flag("--fail-on-findings", fail_on_findings, "Exit 1 when any finding is produced");
    add_window(det);

    auto* att = app.add_subcommand("attribute", "Correlate findings into root-cause reports");
    att->add_option("--findings", findings, "Findings file")->required();
    att->add_option("--trace", trace, "Trace the findings came from")->required();
    att->add_option("--out", out, "Report output path");
    att->add_option("--rules", rules, "Attribution rules file (default: built-in rules)");
    att->add_flag("--fail-on-findings", fail_on_findings, "Exit 1 when any report is produced");

    auto* ev = app.add_subcommand("eval", "Score detectors against a scenario directory");
    ev->add_option("--scenarios", dir, "Directory of *.scn files")->required();
    ev->add_option("--seed", seed, "Override every scenario's seed");
    ev->add_option("--jobs", jobs, "Scenarios evaluated concurrently (default: hardware threads)");
    add_window(ev);

    auto* list = app.add_subcommand("list-pathologies", "Print the 28 runbook rows");

    auto* val = app.add_subcommand("validate", "Check a trace file's invariants");
    val->add_option("--trace", trace, "Trace file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*sim) return cmd_simulate(common, scenario, out, seed);
        if (*det) return cmd_detect(common, trace, out, only, make_plan(window_len, window_hop), fail_on_findings);
        if (*att) return cmd_attribute(common, findings, trace, out, rules, fail_on_findings);
        if (*ev) return cmd_eval(common, dir, make_plan(window_len, window_hop), seed, jobs);
        if (*list) return cmd_list(common);
        if (*val) return cmd_validate(common, trace);
    } catch (const std::exception& e) {
        std::cerr << "skewscope: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitInput;
}
