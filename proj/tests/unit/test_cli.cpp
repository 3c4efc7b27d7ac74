// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "test_helpers.hpp"

using namespace stcache;
using stcache::testing::scratch_dir;
using stcache::testing::slurp;
using stcache::testing::spit;

namespace {

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string make_trace(const std::filesystem::path& dir, const std::string& frames = "13") {
    const std::string path = (dir / "t.stct").string();
    const CliRun r = run({"synth", "--seed", "4", "--frames", frames, "--tokens", "8", "--layers", "1", "--heads", "2",
                       "--dh", "8", "--out", path});
    EXPECT_EQ(r.code, 0) << r.err;
    return path;
}

}  // namespace

TEST(Cli, ReplayEmitsOneJsonLinePerChunkPlusSummary) {
    const auto dir = scratch_dir("cli_replay");
    const std::string trace = make_trace(dir);
    const CliRun r = run({"replay", "--trace", trace, "--policy", "stac"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream lines(r.out);
    std::string line;
    int chunks = 0;
    std::string last_type;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        last_type = j["type"];
        chunks += last_type == "chunk";
    }
    EXPECT_EQ(chunks, 4);  // 1 + 4 + 4 + 4
    EXPECT_EQ(last_type, "summary");
}

TEST(Cli, StatsOutAndCsv) {
    const auto dir = scratch_dir("cli_csv");
    const std::string trace = make_trace(dir);
    const std::string out = (dir / "s.csv").string();
    const CliRun r = run({"replay", "--trace", trace, "--csv", "--stats-out", out, "--policy", "window", "--window", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string csv = slurp(out);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Cli, SeedCheckPassesOnDeterministicReplay) {
    const auto dir = scratch_dir("cli_seed");
    const std::string trace = make_trace(dir);
    EXPECT_EQ(run({"replay", "--trace", trace, "--seed-check", "--threads", "2"}).code, 0);
}

TEST(Cli, CompareWritesDivergenceReport) {
    const auto dir = scratch_dir("cli_compare");
    const std::string trace = make_trace(dir);
    const CliRun r = run({"compare", "--trace", trace, "--a", "full", "--b", "stac:budget-mult=20,split=0.2/0.8/0"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_LT(j["overall"]["rel_l2"].get<double>(), 1e-9);
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch_dir("cli_codes");
    const std::string trace = make_trace(dir);
    EXPECT_EQ(run({}).code, cli::kUsage);
    EXPECT_EQ(run({"replay"}).code, cli::kUsage);
    EXPECT_EQ(run({"replay", "--trace", trace, "--gamma", "abc"}).code, cli::kUsage);
    EXPECT_EQ(run({"replay", "--trace", trace, "--policy", "bogus"}).code, cli::kConfigInvalid);
    EXPECT_EQ(run({"replay", "--trace", trace, "--gamma", "1.5"}).code, cli::kConfigInvalid);
    EXPECT_EQ(run({"replay", "--trace", trace, "--split", "0.5,0.5,0.5"}).code, cli::kConfigInvalid);
    EXPECT_EQ(run({"replay", "--trace", (dir / "missing.stct").string()}).code, cli::kTraceInvalid);

    const std::string bytes = slurp(trace);
    spit(dir / "cut.stct", bytes.substr(0, bytes.size() - 100));
    const CliRun cut = run({"replay", "--trace", (dir / "cut.stct").string()});
    EXPECT_EQ(cut.code, cli::kTraceInvalid);
    EXPECT_NE(cut.err.find("record 12"), std::string::npos) << cut.err;
}

TEST(Cli, PolicySpecParsing) {
    const Policy p = cli::parse_policy_spec("stac:gamma=0.5,g-cap=2,split=0.25/0.5/0.25,half");
    EXPECT_EQ(p.kind, PolicyKind::stac);
    EXPECT_EQ(p.config.gamma, 0.5);
    EXPECT_EQ(p.config.g_cap, 2u);
    EXPECT_EQ(p.config.anchor_frac, 0.5);
    EXPECT_TRUE(p.config.half_precision);
    EXPECT_EQ(cli::parse_policy_spec("window").kind, PolicyKind::window);
}

TEST(Cli, DefaultSynthTraceReplaysWithinTemporalBudget) {
    const auto dir = scratch_dir("cli_defaults");
    const std::string path = (dir / "d.stct").string();
    ASSERT_EQ(run({"synth", "--out", path}).code, 0);
    const CliRun r = run({"replay", "--trace", path, "--no-timing"});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string last = r.out.substr(r.out.rfind('\n', r.out.size() - 2) + 1);
    const auto summary = nlohmann::json::parse(last);
    EXPECT_EQ(summary["frames"], 100);
    EXPECT_LE(summary["peak_temporal_tokens"].get<int>(), 9 * 32);
}

TEST(Cli, StacBeatsOneFrameWindowAtMatchedMemory) {
    const auto dir = scratch_dir("cli_ordering");
    const std::string path = (dir / "r.stct").string();
    ASSERT_EQ(run({"synth", "--out", path, "--frames", "120", "--layers", "1", "--heads", "1", "--motion", "revisit"}).code, 0);
    const CliRun s = run({"compare", "--trace", path, "--a", "full", "--b", "stac", "--no-timing"});
    ASSERT_EQ(s.code, 0) << s.err;
    const auto js = nlohmann::json::parse(s.out);
    const int peak = js["b"]["peak_total_tokens"];
    const int window = (peak + 31) / 32 - 1;
    const CliRun w = run({"compare", "--trace", path, "--a", "full", "--b", "window:window=" + std::to_string(window)});
    ASSERT_EQ(w.code, 0) << w.err;
    const auto jw = nlohmann::json::parse(w.out);
    EXPECT_GE(jw["b"]["peak_total_tokens"].get<int>(), peak);
    EXPECT_LE(js["overall"]["rel_l2"].get<double>(), jw["overall"]["rel_l2"].get<double>());
    const CliRun w1 = run({"compare", "--trace", path, "--a", "full", "--b", "window:window=1"});
    EXPECT_LT(js["overall"]["rel_l2"].get<double>(), nlohmann::json::parse(w1.out)["overall"]["rel_l2"].get<double>());
}
