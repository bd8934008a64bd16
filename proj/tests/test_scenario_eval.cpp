// Scenario files and the evaluation harness.

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "skewscope/eval.hpp"
#include "skewscope/scenario.hpp"
#include "support.hpp"

using namespace skewscope;
using K = PathologyKind;

namespace {

const std::filesystem::path kScenarios = std::filesystem::path(SKEWSCOPE_SOURCE_DIR) / "scenarios";

Scenario parse(const std::string& text) {
    std::istringstream is(text);
    return parse_scenario(is, "t.scn");
}

std::string config_error(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Duration, Suffixes) {
    EXPECT_EQ(parse_duration("250"), 250u);
    EXPECT_EQ(parse_duration("7ns"), 7u);
    EXPECT_EQ(parse_duration("3us"), 3 * kNsPerUs);
    EXPECT_EQ(parse_duration("20ms"), 20 * kNsPerMs);
    EXPECT_EQ(parse_duration("60s"), 60 * kNsPerSecond);
    for (const char* bad : {"", "s", "1h", "-1s", "1.5s", "99999999999999999999s"})
        EXPECT_THROW(parse_duration(bad), ConfigError) << bad;
}

TEST(ScenarioParse, DefaultsAndSections) {
    const auto sc = parse("name = demo\n[topology]\nnum_nodes = 2\n# comment\n[fault]\nkind = FlowSkew\nstart = 1s\n"
                          "end = 2s\nnode = 1\n");
    EXPECT_EQ(sc.name, "demo");
    EXPECT_EQ(sc.topology.num_nodes, 2u);
    EXPECT_EQ(sc.workload, WorkloadSpec{});
    ASSERT_EQ(sc.faults.size(), 1u);
    EXPECT_EQ(sc.faults[0].kind, K::FlowSkew);
    EXPECT_EQ(sc.faults[0].end, 2 * kNsPerSecond);
}

TEST(ScenarioParse, ErrorsNameTheField) {
    EXPECT_NE(config_error("[topology]\nnum_nodes = x\n").find("num_nodes"), std::string::npos);
    EXPECT_NE(config_error("[topology]\nnum_nodes = x\n").find("t.scn:2"), std::string::npos);
    EXPECT_NE(config_error("[sim]\nhorizon = 5parsecs\n").find("horizon"), std::string::npos);
    EXPECT_NE(config_error("[topology]\ncolour = red\n").find("colour"), std::string::npos);
    EXPECT_NE(config_error("[nope]\n").find("nope"), std::string::npos);
    EXPECT_FALSE(config_error("[topology]\n[topology]\n").empty());
    EXPECT_FALSE(config_error("[topology]\nnum_nodes = 1\nnum_nodes = 2\n").empty());
    EXPECT_FALSE(config_error("[fault]\nstart = 1s\nend = 2s\n").empty());
    EXPECT_FALSE(config_error("[topology]\nname = late\n").empty());
    EXPECT_NE(config_error("[fault]\nkind = Bogus\n").find("kind"), std::string::npos);
}

TEST(ScenarioParse, ParallelismMustFitTheCluster) {
    const auto err = config_error("[topology]\nnum_nodes = 1\ngpus_per_node = 4\ntp_degree = 4\npp_stages = 2\n");
    EXPECT_FALSE(err.empty());
}

TEST(ScenarioParse, FaultMustMatchItsLocationShape) {
    EXPECT_FALSE(config_error("[fault]\nkind = TpStraggler\nstart = 1s\nend = 2s\nnode = 0\n").empty());
    EXPECT_FALSE(config_error("[fault]\nkind = TpStraggler\nstart = 2s\nend = 1s\nnode = 0\nrank = 1\n").empty());
}

TEST(ScenarioFormat, RoundTripsRandomScenarios) {
    std::mt19937_64 rng(41);
    const auto kinds = all_pathologies();
    for (int trial = 0; trial < 200; ++trial) {
        Scenario sc;
        sc.name = "s" + std::to_string(trial);
        sc.topology.num_nodes = 2 + static_cast<std::uint32_t>(rng() % 7);
        sc.topology.nic_capacity_bytes_per_s = 1e9 * static_cast<double>(1 + rng() % 400) / 7.0;
        sc.workload.request_rate_per_s = static_cast<double>(1 + rng() % 1000) / 3.0;
        sc.workload.prompt_len = {1, 1 + static_cast<std::uint32_t>(rng() % 999),
                                  rng() % 2 ? LengthShape::Fixed : LengthShape::Uniform};
        sc.workload.step_period_ns = kNsPerMs * (1 + rng() % 50) + rng() % 1000;
        sc.workload.nic_background_frac = static_cast<double>(rng() % 90) / 100.0;
        sc.config.seed = rng();
        sc.config.horizon = kNsPerSecond * (1 + rng() % 100);
        const auto nfaults = rng() % 3;
        for (std::size_t i = 0; i < nfaults; ++i) {
            auto f = skewscope::testing::golden_fault(kinds[rng() % kinds.size()],
                                                      1.0 + static_cast<double>(rng() % 1000) / 97.0);
            f.start = rng() % sc.config.horizon;
            f.end = f.start + 1 + rng() % (sc.config.horizon - f.start);
            if (f.location.node_id) f.location.node_id = static_cast<std::uint32_t>(rng() % sc.topology.num_nodes);
            sc.faults.push_back(f);
        }
        sc.check();
        const auto text = format_scenario(sc);
        const auto back = parse(text);
        ASSERT_EQ(back, sc) << text;
        ASSERT_EQ(format_scenario(back), text);
    }
}

TEST(ScenarioFiles, GoldenDirectoryIsComplete) {
    const auto files = scenario_files(kScenarios / "golden");
    ASSERT_EQ(files.size(), kPathologyCount + 1);
    std::set<K> covered;
    for (const auto& f : files) {
        const auto sc = load_scenario(f);
        EXPECT_EQ(sc.name, f.stem().string().substr(3)) << f;
        for (const auto& fault : sc.faults) covered.insert(fault.kind);
    }
    EXPECT_EQ(covered.size(), kPathologyCount);
    EXPECT_THROW(scenario_files(kScenarios / "does-not-exist"), ConfigError);
}

TEST(Score, CountsMatchesMissesAndStrays) {
    const InjectionRecord inj{K::FlowSkew, 20 * kNsPerSecond, 30 * kNsPerSecond, {0, std::nullopt, std::nullopt, std::nullopt, std::nullopt}, 3};
    Finding hit{K::FlowSkew, {20 * kNsPerSecond, 30 * kNsPerSecond}, {0, std::nullopt, std::nullopt, std::nullopt, std::nullopt}, 0.5, {}};
    Finding wrong_place = hit;
    wrong_place.location.node_id = 1;
    Finding wrong_time = hit;
    wrong_time.window = {40 * kNsPerSecond, 50 * kNsPerSecond};
    Finding coarse = hit;
    coarse.location = {};
    const std::vector<InjectionRecord> injections{inj};

    EXPECT_TRUE(matches(hit, inj));
    EXPECT_FALSE(matches(wrong_place, inj));
    EXPECT_FALSE(matches(wrong_time, inj));
    EXPECT_FALSE(matches(coarse, inj));

    const std::vector<Finding> findings{hit, wrong_place, wrong_time};
    const auto out = score("x", injections, findings, {});
    const auto& ks = out.per_kind[static_cast<std::size_t>(K::FlowSkew)];
    EXPECT_EQ(ks.true_positives, 1u);
    EXPECT_EQ(ks.false_negatives, 0u);
    EXPECT_EQ(ks.false_positives, 2u);
    EXPECT_DOUBLE_EQ(ks.mean_window_iou(), 1.0);
    EXPECT_EQ(out.matched_findings, 1u);

    const auto missed = score("y", injections, {}, {});
    EXPECT_EQ(missed.per_kind[static_cast<std::size_t>(K::FlowSkew)].false_negatives, 1u);
}

TEST(Evaluate, HealthyOnlyIsPerfectAndEmpty) {
    const std::vector<Scenario> only{load_scenario(kScenarios / "golden" / "00_healthy.scn")};
    const auto r = evaluate(only, {});
    EXPECT_EQ(r.recall(), 1.0);
    const auto t = r.total();
    EXPECT_EQ(t.true_positives, 0u);
    EXPECT_EQ(t.false_negatives, 0u);
    EXPECT_EQ(t.false_positives, 0u);
    EXPECT_EQ(r.healthy_findings(), 0u);
    EXPECT_TRUE(r.passed());
}

TEST(Evaluate, LooseThresholdsLoseRecall) {
    const std::vector<Scenario> scs{load_scenario(kScenarios / "golden" / "02_ingress_starvation.scn")};
    EvalOptions opt;
    EXPECT_EQ(evaluate(scs, opt).recall(), 1.0);
    opt.config.gap_factor = 1000;
    const auto r = evaluate(scs, opt);
    EXPECT_LT(r.recall(), 1.0);
    EXPECT_FALSE(r.passed());
}

TEST(Evaluate, ParallelMatchesSerialAndKeepsOrder) {
    std::vector<Scenario> scs;
    for (const char* f : {"00_healthy.scn", "20_tp_straggler.scn", "05_egress_backlog.scn"})
        scs.push_back(load_scenario(kScenarios / "golden" / f));
    EvalOptions serial, parallel;
    parallel.jobs = 3;
    const auto a = evaluate(scs, serial);
    const auto b = evaluate(scs, parallel);
    ASSERT_EQ(a.scenarios.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(a.scenarios[i].name, scs[i].name);
        EXPECT_EQ(b.scenarios[i].name, scs[i].name);
        EXPECT_EQ(a.scenarios[i].findings, b.scenarios[i].findings);
    }
    EXPECT_EQ(a.per_kind, b.per_kind);
    std::ostringstream ta, tb;
    write_eval_table(ta, a);
    write_eval_table(tb, b);
    EXPECT_EQ(ta.str(), tb.str());
    EXPECT_NE(ta.str().find("result PASS"), std::string::npos);
}
