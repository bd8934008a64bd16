// Attribution: the built-in correlation rules on the attribution scenarios,
// the partition property, rule precedence and rule/report IO.

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "skewscope/attribution.hpp"
#include "skewscope/runbook.hpp"
#include "skewscope/scenario.hpp"

using namespace skewscope;
using K = PathologyKind;

namespace {

const std::filesystem::path kScenarios = std::filesystem::path(SKEWSCOPE_SOURCE_DIR) / "scenarios";

Finding finding(K kind, TimestampNs start, std::optional<std::uint32_t> node = 0, double severity = 0.5) {
    Finding f;
    f.kind = kind;
    f.window = {start, start + 10 * kNsPerSecond};
    f.location.node_id = node;
    f.severity = severity;
    return f;
}

std::vector<RootCauseReport> attribute_scenario(const std::string& file) {
    const auto trace = load_scenario(kScenarios / "attribution" / file).run();
    const auto findings = run_detectors(trace);
    return attribute(findings, trace.topology);
}

const RootCauseReport* find_rule(const std::vector<RootCauseReport>& reports, std::string_view rule) {
    auto it = std::find_if(reports.begin(), reports.end(), [&](const auto& r) { return r.rule == rule; });
    return it == reports.end() ? nullptr : &*it;
}

std::vector<std::string> flatten(const std::vector<RootCauseReport>& reports) {
    std::vector<std::string> out;
    for (const auto& r : reports) {
        out.push_back(format_finding(r.primary));
        for (const auto& l : r.linked) out.push_back(format_finding(l));
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST(Attribute, EmptyInputGivesNoReports) { EXPECT_TRUE(attribute({}, ClusterTopology{}).empty()); }

TEST(Attribute, LoneFindingIsSingleSignalWithRunbookDirectives) {
    const std::vector<Finding> in{finding(K::FlowSkew, 0)};
    const auto reports = attribute(in, ClusterTopology{});
    ASSERT_EQ(reports.size(), 1u);
    EXPECT_EQ(reports[0].rule, kSingleSignalRule);
    EXPECT_EQ(reports[0].confidence, Confidence::SingleSignal);
    EXPECT_EQ(reports[0].directives, (std::vector<std::string>{"Verify flow hashing", "rebalance RPC streams"}));
    EXPECT_EQ(reports[0].root_cause_label, runbook_row(K::FlowSkew).root_cause);
    EXPECT_TRUE(reports[0].linked.empty());
}

TEST(Attribute, StragglerWithH2dStarvationIsLocalPcieFeed) {
    const auto reports = attribute_scenario("tp_straggler_with_h2d_starvation.scn");
    const auto* r1 = find_rule(reports, "R1");
    ASSERT_NE(r1, nullptr);
    EXPECT_EQ(r1->primary.kind, K::H2dStarvation);
    EXPECT_EQ(r1->root_cause_label, "local PCIe feed starvation");
    EXPECT_EQ(r1->confidence, Confidence::Corroborated);
    ASSERT_FALSE(r1->linked.empty());
    EXPECT_TRUE(std::all_of(r1->linked.begin(), r1->linked.end(), [](const auto& f) { return f.kind == K::TpStraggler; }));
    // The H2D directives lead, then the straggler's, without repeats.
    const auto h2d = directives_for(K::H2dStarvation);
    ASSERT_GE(r1->directives.size(), h2d.size());
    EXPECT_TRUE(std::equal(h2d.begin(), h2d.end(), r1->directives.begin()));
}

TEST(Attribute, EgressBacklogWithCleanPcieIsNetworkSide) {
    const auto reports = attribute_scenario("egress_backlog_clean_pcie.scn");
    const auto* r2 = find_rule(reports, "R2");
    ASSERT_NE(r2, nullptr);
    EXPECT_EQ(r2->primary.kind, K::EgressBacklog);
    EXPECT_EQ(r2->root_cause_label, "network-side");
    EXPECT_EQ(r2->confidence, Confidence::CorroboratedByAbsence);
}

TEST(Attribute, OverlappingPcieFindingBlocksNetworkSide) {
    const std::vector<Finding> clean{finding(K::EgressBacklog, 20 * kNsPerSecond)};
    ASSERT_EQ(attribute(clean, ClusterTopology{}).at(0).root_cause_label, "network-side");

    auto dirty = clean;
    dirty.push_back(finding(K::PcieLinkSaturation, 20 * kNsPerSecond));
    for (const auto& r : attribute(dirty, ClusterTopology{})) EXPECT_NE(r.root_cause_label, "network-side");

    // A PCIe finding on another node or in a disjoint window does not block.
    auto elsewhere = clean;
    elsewhere.push_back(finding(K::PcieLinkSaturation, 20 * kNsPerSecond, 1));
    elsewhere.push_back(finding(K::PcieLinkSaturation, 40 * kNsPerSecond));
    EXPECT_NE(find_rule(attribute(elsewhere, ClusterTopology{}), "R2"), nullptr);
}

TEST(Attribute, RemainingBuiltinRulesFire) {
    const std::vector<Finding> sat{finding(K::PcieLinkSaturation, 0), finding(K::H2dStarvation, 0),
                                   finding(K::D2hBottleneck, 0)};
    const auto sat_reports = attribute(sat, ClusterTopology{});
    const auto* r3 = find_rule(sat_reports, "R3");
    ASSERT_NE(r3, nullptr);
    EXPECT_EQ(r3->linked.size(), 2u);
    EXPECT_EQ(r3->root_cause_label, runbook_row(K::PcieLinkSaturation).root_cause);
    const std::vector<Finding> sat_one{finding(K::PcieLinkSaturation, 0), finding(K::H2dStarvation, 0)};
    EXPECT_EQ(find_rule(attribute(sat_one, ClusterTopology{}), "R3"), nullptr);

    const std::vector<Finding> early{finding(K::EarlyCompletionSkew, 0), finding(K::PpBubble, 0, 2)};
    const auto early_reports = attribute(early, ClusterTopology{});
    const auto* r4 = find_rule(early_reports, "R4");
    ASSERT_NE(r4, nullptr);
    EXPECT_EQ(r4->root_cause_label, "early token exit variance");

    const std::vector<Finding> cpu{finding(K::HostCpuBottleneck, 0), finding(K::KernelLaunchLatency, 0)};
    const auto cpu_reports = attribute(cpu, ClusterTopology{});
    const auto* r5 = find_rule(cpu_reports, "R5");
    ASSERT_NE(r5, nullptr);
    EXPECT_EQ(r5->root_cause_label, "CPU-side orchestration lag");

    // R4 outranks R6 for a decode early stop that also has a pipeline bubble.
    const std::vector<Finding> stop{finding(K::DecodeEarlyStopSkew, 0), finding(K::EarlyStopSkewAcrossNodes, 0)};
    EXPECT_NE(find_rule(attribute(stop, ClusterTopology{}), "R6"), nullptr);
    auto both = stop;
    both.push_back(finding(K::PpBubble, 0));
    const auto reports = attribute(both, ClusterTopology{});
    EXPECT_NE(find_rule(reports, "R4"), nullptr);
    EXPECT_EQ(find_rule(reports, "R6"), nullptr);
}

TEST(Attribute, LinkedFindingsMustOverlapAndShareTheNode) {
    const std::vector<Finding> apart{finding(K::H2dStarvation, 0), finding(K::TpStraggler, 20 * kNsPerSecond)};
    EXPECT_EQ(find_rule(attribute(apart, ClusterTopology{}), "R1"), nullptr);
    const std::vector<Finding> other_node{finding(K::H2dStarvation, 0), finding(K::TpStraggler, 0, 1)};
    EXPECT_EQ(find_rule(attribute(other_node, ClusterTopology{}), "R1"), nullptr);
    const std::vector<Finding> together{finding(K::H2dStarvation, 0), finding(K::TpStraggler, 0)};
    EXPECT_NE(find_rule(attribute(together, ClusterTopology{}), "R1"), nullptr);
}

TEST(Attribute, PriorityThenIdDecidesWhichRuleClaimsAFinding) {
    auto make = [](std::string id, int priority) {
        AttributionRule r;
        r.id = std::move(id);
        r.priority = priority;
        r.primary = {K::TpStraggler};
        r.linked = {K::PpBubble};
        r.label = r.id;
        return r;
    };
    const std::vector<Finding> in{finding(K::TpStraggler, 0), finding(K::PpBubble, 0)};
    const std::vector<AttributionRule> by_priority{make("A", 1), make("B", 2)};
    EXPECT_EQ(attribute(in, ClusterTopology{}, by_priority).at(0).rule, "B");
    const std::vector<AttributionRule> by_id{make("Z", 5), make("M", 5)};
    EXPECT_EQ(attribute(in, ClusterTopology{}, by_id).at(0).rule, "M");
}

TEST(Attribute, ReservedAndIncompleteRulesAreRejected) {
    AttributionRule r;
    r.id = "single";
    r.primary = {K::FlowSkew};
    const std::vector<AttributionRule> reserved{r};
    EXPECT_THROW(attribute({}, ClusterTopology{}, reserved), ConfigError);
    r.id = "X";
    r.primary.clear();
    const std::vector<AttributionRule> empty_primary{r};
    EXPECT_THROW(attribute({}, ClusterTopology{}, empty_primary), ConfigError);
}

TEST(Attribute, EveryFindingLandsInExactlyOneReport) {
    std::mt19937_64 rng(31);
    const auto kinds = all_pathologies();
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Finding> in;
        const auto n = rng() % 25;
        for (std::size_t i = 0; i < n; ++i) {
            auto f = finding(kinds[rng() % kinds.size()], (rng() % 6) * 10 * kNsPerSecond,
                             rng() % 5 == 0 ? std::nullopt : std::optional<std::uint32_t>(rng() % 3),
                             static_cast<double>(rng() % 100) / 100.0);
            if (rng() % 2) f.location.gpu_id = static_cast<std::uint32_t>(rng() % 4);
            in.push_back(f);
        }
        const auto reports = attribute(in, ClusterTopology{});
        std::vector<std::string> want;
        for (const auto& f : in) want.push_back(format_finding(f));
        std::sort(want.begin(), want.end());
        ASSERT_EQ(flatten(reports), want) << "trial " << trial;
        ASSERT_TRUE(std::is_sorted(reports.begin(), reports.end(),
                                   [](const auto& a, const auto& b) { return finding_less(a.primary, b.primary); }));
        for (const auto& r : reports) {
            for (const auto& l : r.linked) {
                ASSERT_TRUE(l.window.start < r.primary.window.end && r.primary.window.start < l.window.end);
            }
        }
        // Order of the input does not matter.
        std::shuffle(in.begin(), in.end(), rng);
        ASSERT_EQ(attribute(in, ClusterTopology{}), reports);
    }
}

TEST(RuleIo, BuiltinsRoundTrip) {
    const auto rules = builtin_rules();
    ASSERT_EQ(rules.size(), 6u);
    std::ostringstream os;
    for (const auto& r : rules) os << format_rule(r) << '\n';
    std::istringstream is(os.str());
    EXPECT_EQ(read_rules(is), rules);
}

TEST(RuleIo, VantageNamesExpandAndErrorsAreConfigErrors) {
    const auto r = parse_rule("id=X priority=1 primary=EgressBacklog absent=PcieObserver min_linked=0");
    EXPECT_EQ(r.absent.size(), 10u);
    EXPECT_THROW(parse_rule("id=X primary=NotAKind"), ConfigError);
    EXPECT_THROW(parse_rule("id=X"), ConfigError);
    EXPECT_THROW(parse_rule("id=X primary=FlowSkew colour=red"), ConfigError);
}

TEST(ReportIo, RoundTrip) {
    const std::vector<Finding> in{finding(K::H2dStarvation, 0), finding(K::TpStraggler, 0),
                                  finding(K::FlowSkew, 10 * kNsPerSecond, std::nullopt)};
    const auto reports = attribute(in, ClusterTopology{});
    std::ostringstream os;
    write_reports(os, reports);
    std::istringstream is(os.str());
    const auto back = read_reports(is);
    ASSERT_EQ(back.size(), reports.size());
    std::ostringstream again;
    write_reports(again, back);
    EXPECT_EQ(again.str(), os.str());
    EXPECT_EQ(back[0].root_cause_label, reports[0].root_cause_label);

    std::istringstream no_header("report=0 rule=R1\n");
    EXPECT_THROW(read_reports(no_header), FormatError);
}

TEST(ReportText, DescribesLocations) {
    Location loc;
    EXPECT_EQ(describe_location(loc), "cluster");
    loc.node_id = 0;
    loc.gpu_id = 1;
    EXPECT_EQ(describe_location(loc), "node0 gpu1");
}
