#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "geothinker/mini_vlm.hpp"
#include "json.hpp"

// Exercises the installed binaries end to end through std::system. Paths come
// from the build system; GEOTHINKER_CORRUPTED_CLI_PATH points at the variant
// compiled with a deliberately wrong backward rule.

using nlohmann::json;

namespace {

int run(const std::string& cmd) {
  int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string cli() { return GEOTHINKER_CLI_PATH; }
std::string corrupted_cli() { return GEOTHINKER_CORRUPTED_CLI_PATH; }

std::string fresh_dir(const std::string& name) {
  std::string dir = ::testing::TempDir() + "cli_" + name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  EXPECT_TRUE(is.good()) << path;
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json slurp_json(const std::string& path) { return json::parse(slurp(path)); }

// small enough that a training run takes well under a second
void write_quick_config(const std::string& path, double lr = 0.05, int steps = 100) {
  json doc = {{"model",
               {{"frames", 8},
                {"grid_h", 2},
                {"grid_w", 2},
                {"c", 8},
                {"c_geo", 8},
                {"d_k", 4},
                {"depth", 3},
                {"seed", 7},
                {"steps", steps},
                {"lr", lr}}},
              {"plan", {{"rho", 0.34}, {"mode", "centered"}}}};
  std::ofstream os(path);
  os << doc.dump(2);
}

}  // namespace

TEST(CliUsage, NoSubcommandIsAUsageError) {
  EXPECT_EQ(run(cli() + " > /dev/null 2>&1"), 2);
}

TEST(CliUsage, UnknownSubcommandIsAUsageError) {
  EXPECT_EQ(run(cli() + " frobnicate > /dev/null 2>&1"), 2);
}

TEST(CliPlan, PrintsTheCenteredFixture) {
  std::string dir = fresh_dir("plan");
  ASSERT_EQ(run(cli() + " plan 36 0.5 centered > " + dir + "/plan.json 2>/dev/null"), 0);
  json plan = slurp_json(dir + "/plan.json");
  EXPECT_EQ(plan.at("total_layers"), 36);
  EXPECT_EQ(plan.at("mode"), "centered");
  ASSERT_EQ(plan.at("selected").size(), 18u);
  EXPECT_EQ(plan.at("selected")[0], 9);
  EXPECT_EQ(plan.at("selected")[17], 26);
  EXPECT_TRUE(plan.at("warnings").empty());
}

TEST(CliPlan, FrontAnchoredWithEndBuffer) {
  std::string dir = fresh_dir("plan_fa");
  ASSERT_EQ(run(cli() + " plan 36 0.75 front-anchored --end-buffer 0.25 > " + dir +
                "/plan.json 2>/dev/null"),
            0);
  json plan = slurp_json(dir + "/plan.json");
  ASSERT_EQ(plan.at("selected").size(), 27u);
  EXPECT_EQ(plan.at("selected")[0], 0);
  EXPECT_EQ(plan.at("selected")[26], 26);
}

TEST(CliPlan, RejectsOutOfRangeRatio) {
  EXPECT_EQ(run(cli() + " plan 8 0.0 centered > /dev/null 2>&1"), 2);
  EXPECT_EQ(run(cli() + " plan 8 1.5 centered > /dev/null 2>&1"), 2);
}

TEST(CliFlops, ReportsTheBigFixture) {
  std::string dir = fresh_dir("flops");
  ASSERT_EQ(run(cli() + " flops > " + dir + "/report.json 2>/dev/null"), 0);
  json report = slurp_json(dir + "/report.json");
  EXPECT_EQ(report.at("backbone").get<long long>(), 24'708'544'200'704LL);
  EXPECT_EQ(report.at("sgf").get<long long>(), 646'598'098'944LL);
  EXPECT_LT(report.at("sgf_fraction").get<double>(), 0.05);
  EXPECT_EQ(report.at("fusion_layers"), 14);
}

TEST(CliFlops, CompareTableHonorsTheMergeBypass) {
  std::string dir = fresh_dir("flops_cmp");
  ASSERT_EQ(run(cli() + " flops --compare > " + dir + "/table.csv 2>/dev/null"), 0);
  std::string table = slurp(dir + "/table.csv");
  std::istringstream lines(table);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "frames,merge_requested,merge_effective,backbone,sgf,total,sgf_fraction");
  std::vector<std::string> rows;
  while (std::getline(lines, line))
    if (!line.empty()) rows.push_back(line);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[1].substr(0, 6), "8,4,2,");  // bypass keeps short clips at merge 2
  EXPECT_EQ(rows[0].substr(6), rows[1].substr(6));
}

TEST(CliConfig, UnknownKeyIsRejected) {
  std::string dir = fresh_dir("badkey");
  std::ofstream(dir + "/cfg.json") << R"({"model": {"framez": 4}})";
  EXPECT_EQ(run(cli() + " flops --config " + dir + "/cfg.json > /dev/null 2>&1"), 2);
}

TEST(CliConfig, MalformedJsonIsRejected) {
  std::string dir = fresh_dir("badjson");
  std::ofstream(dir + "/cfg.json") << "{not json";
  EXPECT_EQ(run(cli() + " flops --config " + dir + "/cfg.json > /dev/null 2>&1"), 2);
}

TEST(CliConfig, MissingFileIsRejected) {
  EXPECT_EQ(run(cli() + " gradcheck --config /no/such/file.json > /dev/null 2>&1"), 2);
}

TEST(CliGradcheck, HealthyBuildPassesAndWritesReport) {
  std::string dir = fresh_dir("gradcheck");
  ASSERT_EQ(run(cli() + " gradcheck --out " + dir + " > /dev/null 2>&1"), 0);
  json report = slurp_json(dir + "/gradcheck.json");
  EXPECT_TRUE(report.at("ok").get<bool>());
  EXPECT_LT(report.at("sgf").at("worst").get<double>(), 1e-4);
  EXPECT_LT(report.at("mini_vlm").at("worst").get<double>(), 1e-4);
  EXPECT_GT(report.at("mini_vlm").at("groups").size(), 20u);
}

TEST(CliGradcheck, CorruptedBackwardRuleIsCaught) {
  std::string dir = fresh_dir("gradcheck_bad");
  EXPECT_EQ(run(corrupted_cli() + " gradcheck --out " + dir + " > /dev/null 2>&1"), 1);
  json report = slurp_json(dir + "/gradcheck.json");
  EXPECT_FALSE(report.at("ok").get<bool>());
}

TEST(CliTrainToy, WritesTheFullArtifactSet) {
  std::string dir = fresh_dir("train");
  write_quick_config(dir + "/cfg.json");
  ASSERT_EQ(run(cli() + " train-toy --config " + dir + "/cfg.json --out " + dir +
                "/run > /dev/null 2>&1"),
            0);

  std::string loss = slurp(dir + "/run/loss.csv");
  EXPECT_EQ(loss.substr(0, 10), "step,loss\n");
  EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), 12);  // header + 10 records + final

  json summary = slurp_json(dir + "/run/summary.json");
  EXPECT_TRUE(summary.contains("final_mse"));
  EXPECT_TRUE(summary.contains("var_y"));
  EXPECT_TRUE(summary.contains("selectivity_margin"));
  EXPECT_EQ(summary.at("alpha_values").size(), 1u);
  EXPECT_FALSE(summary.at("diverged").get<bool>());

  EXPECT_TRUE(std::filesystem::exists(dir + "/run/checkpoint/manifest.json"));
  EXPECT_TRUE(std::filesystem::exists(dir + "/run/heatmap_frame0.pgm"));
  EXPECT_TRUE(std::filesystem::exists(dir + "/run/heatmap_frame7.csv"));
}

TEST(CliTrainToy, RerunsAreByteIdentical) {
  std::string dir = fresh_dir("train_det");
  write_quick_config(dir + "/cfg.json");
  ASSERT_EQ(run(cli() + " train-toy --config " + dir + "/cfg.json --out " + dir +
                "/a > /dev/null 2>&1"),
            0);
  ASSERT_EQ(run(cli() + " train-toy --config " + dir + "/cfg.json --out " + dir +
                "/b > /dev/null 2>&1"),
            0);
  EXPECT_EQ(slurp(dir + "/a/loss.csv"), slurp(dir + "/b/loss.csv"));
  EXPECT_EQ(slurp(dir + "/a/summary.json"), slurp(dir + "/b/summary.json"));
  EXPECT_EQ(slurp(dir + "/a/heatmap_frame0.pgm"), slurp(dir + "/b/heatmap_frame0.pgm"));
  EXPECT_EQ(slurp(dir + "/a/heatmap_frame3.csv"), slurp(dir + "/b/heatmap_frame3.csv"));
}

TEST(CliTrainToy, AblationFlagDropsEveryFusionLayer) {
  std::string dir = fresh_dir("train_ab");
  write_quick_config(dir + "/cfg.json");
  ASSERT_EQ(run(cli() + " train-toy --config " + dir + "/cfg.json --out " + dir +
                "/run --ablate-sgf > /dev/null 2>&1"),
            0);
  json summary = slurp_json(dir + "/run/summary.json");
  EXPECT_TRUE(summary.at("alpha_values").empty());
  EXPECT_FALSE(std::filesystem::exists(dir + "/run/heatmap_frame0.pgm"));
}

TEST(CliTrainToy, DivergentRunExitsOneWithStepIndex) {
  std::string dir = fresh_dir("train_div");
  write_quick_config(dir + "/cfg.json", 1e8);
  ASSERT_EQ(run(cli() + " train-toy --config " + dir + "/cfg.json --out " + dir +
                "/run > /dev/null 2>&1"),
            1);
  json summary = slurp_json(dir + "/run/summary.json");
  EXPECT_TRUE(summary.at("diverged").get<bool>());
  EXPECT_GE(summary.at("diverged_step").get<int>(), 1);
}

TEST(CliTrainToy, EnvVarOverridesTheOutputDirectory) {
  std::string dir = fresh_dir("train_env");
  write_quick_config(dir + "/cfg.json", 0.05, 10);
  ASSERT_EQ(run("GEOTHINKER_OUT=" + dir + "/env_out " + cli() + " train-toy --config " +
                dir + "/cfg.json --out " + dir + "/flag_out > /dev/null 2>&1"),
            0);
  EXPECT_TRUE(std::filesystem::exists(dir + "/env_out/loss.csv"));
  EXPECT_FALSE(std::filesystem::exists(dir + "/flag_out"));
}

TEST(CliHeatmap, FreshZeroGateCheckpointRendersMidGray) {
  using namespace geothinker;
  std::string dir = fresh_dir("heatmap_gray");

  MiniVlmConfig cfg;
  cfg.frames = 3;
  cfg.grid_h = 3;
  cfg.grid_w = 2;
  cfg.c = 8;
  cfg.c_geo = 8;
  cfg.d_k = 4;
  cfg.depth = 3;
  cfg.plan = plan_layers(3, 0.34, PlanMode::centered);
  cfg.merge = 2;
  cfg.seed = 11;
  MiniVlmParams params = mini_vlm_init(cfg);
  for (SgfParams& f : params.fusion)
    for (double& v : f.w_g.data) v = 0.0;  // gate now computes sigmoid(0) everywhere
  mini_vlm_save(params, dir + "/ckpt");

  ASSERT_EQ(run(cli() + " heatmap --checkpoint " + dir + "/ckpt --out " + dir +
                "/maps > /dev/null 2>&1"),
            0);
  for (int i = 0; i < 3; ++i) {
    std::string pgm = slurp(dir + "/maps/heatmap_frame" + std::to_string(i) + ".pgm");
    std::string expected_header = "P5\n2 3\n255\n";
    ASSERT_EQ(pgm.substr(0, expected_header.size()), expected_header);
    std::string payload = pgm.substr(expected_header.size());
    ASSERT_EQ(payload.size(), 6u);
    for (char byte : payload) EXPECT_EQ(static_cast<unsigned char>(byte), 128);
  }
}

TEST(CliHeatmap, MissingCheckpointIsAnInputError) {
  EXPECT_EQ(run(cli() + " heatmap --checkpoint /no/such/dir > /dev/null 2>&1"), 2);
}
