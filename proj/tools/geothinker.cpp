// Command-line front end. Exit codes: 0 success, 1 a check or training run
// failed, 2 bad usage or unreadable input.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "geothinker/flops.hpp"
#include "geothinker/gradcheck.hpp"
#include "geothinker/layer_plan.hpp"
#include "geothinker/mini_vlm.hpp"
#include "geothinker/run_config.hpp"
#include "geothinker/sgf.hpp"
#include "json.hpp"

using namespace geothinker;
using nlohmann::json;

namespace {

// precedence: GEOTHINKER_OUT env var, then --out, then the config's io.out
std::string resolve_out_dir(const std::string& flag_value, const RunConfig& rc) {
  const char* env = std::getenv("GEOTHINKER_OUT");
  if (env && *env) return env;
  if (!flag_value.empty()) return flag_value;
  return rc.out_dir;
}

RunConfig load_or_default(const std::string& config_path) {
  if (config_path.empty()) return load_run_config(json::object());
  return load_run_config_file(config_path);
}

json gradcheck_to_json(const GradcheckReport& report) {
  json groups = json::array();
  for (const GradcheckGroup& g : report.groups)
    groups.push_back({{"name", g.name}, {"max_rel_error", g.max_rel_error}});
  return json{{"groups", groups}, {"worst", report.worst}, {"ok", report.ok()}};
}

int cmd_gradcheck(const std::string& config_path, std::optional<uint64_t> seed_flag,
                  const std::string& out_flag) {
  RunConfig rc = load_or_default(config_path);
  uint64_t seed = seed_flag.value_or(rc.model.seed);

  GradcheckReport sgf = gradcheck_sgf(seed);
  GradcheckReport vlm = gradcheck_mini_vlm(seed);
  bool ok = sgf.ok() && vlm.ok();

  json report{{"seed", seed},
              {"threshold", 1e-4},
              {"sgf", gradcheck_to_json(sgf)},
              {"mini_vlm", gradcheck_to_json(vlm)},
              {"ok", ok}};
  std::cout << report.dump(2) << "\n";

  std::string out_dir = resolve_out_dir(out_flag, rc);
  std::filesystem::create_directories(out_dir);
  std::ofstream os = open_out(out_dir + "/gradcheck.json", false);
  os << report.dump(2) << "\n";
  return ok ? 0 : 1;
}

void write_loss_csv(const std::string& path, const std::vector<TrainPoint>& curve) {
  std::vector<std::vector<std::string>> rows;
  for (const TrainPoint& p : curve)
    rows.push_back({std::to_string(p.step), format_double(p.loss)});
  write_csv(path, {"step", "loss"}, rows);
}

void write_heatmaps(const std::string& dir, const AttentionTrace& trace) {
  for (int i = 0; i < trace.n; ++i) {
    std::string base = dir + "/heatmap_frame" + std::to_string(i);
    write_importance_pgm(trace, i, base + ".pgm");
    write_importance_csv(trace, i, base + ".csv");
  }
}

int cmd_train_toy(const std::string& config_path, std::optional<uint64_t> seed_flag,
                  const std::string& out_flag, bool ablate) {
  RunConfig rc = load_or_default(config_path);
  if (seed_flag) rc.model.seed = *seed_flag;
  if (ablate) rc.model.plan = LayerPlan::none(rc.model.depth);

  std::string out_dir = resolve_out_dir(out_flag, rc);
  std::filesystem::create_directories(out_dir);

  TrainResult r = train(rc.model);
  write_loss_csv(out_dir + "/loss.csv", r.curve);

  json summary;
  if (r.diverged) {
    summary = json{{"diverged", true}, {"diverged_step", r.diverged_step}};
    std::ofstream os = open_out(out_dir + "/summary.json", false);
    os << summary.dump(2) << "\n";
    std::cerr << "training diverged at step " << r.diverged_step << "\n";
    return 1;
  }

  mini_vlm_save(r.params, out_dir + "/checkpoint");
  if (r.trace) write_heatmaps(out_dir, *r.trace);

  summary = json{{"final_mse", r.final_mse},
                 {"var_y", r.var_y},
                 {"alpha_values", r.alpha_values},
                 {"selectivity_margin", r.selectivity},
                 {"trace_fusion_index", r.trace_fusion_index},
                 {"diverged", false}};
  std::ofstream os = open_out(out_dir + "/summary.json", false);
  os << summary.dump(2) << "\n";
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_plan(int layers, double rho, const std::string& mode_name, double end_buffer,
             double start_offset) {
  LayerPlan plan = plan_layers(layers, rho, plan_mode_from_string(mode_name), end_buffer,
                               start_offset);
  json out{{"total_layers", plan.total_layers}, {"rho", plan.rho},
           {"mode", to_string(plan.mode)},     {"start_offset", plan.start_offset},
           {"end_buffer", plan.end_buffer},    {"selected", plan.selected},
           {"warnings", plan.warnings}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_flops(const std::string& config_path, bool compare) {
  RunConfig rc = load_or_default(config_path);
  if (compare) {
    std::cout << "frames,merge_requested,merge_effective,backbone,sgf,total,sgf_fraction\n";
    for (const ComparePoint& p : compare_grid(rc.arch))
      std::cout << p.frames << ',' << p.merge_requested << ',' << p.merge_effective << ','
                << p.backbone << ',' << p.sgf << ',' << p.total << ','
                << format_double(p.sgf_fraction) << "\n";
    return 0;
  }
  FlopsReport report = overhead_report(rc.arch);
  json out{{"backbone", report.backbone},
           {"sgf", report.sgf},
           {"geometry_encoder", report.geometry_encoder},
           {"total", report.total},
           {"sgf_fraction", report.sgf_fraction},
           {"merge_effective", effective_merge(rc.arch)},
           {"d_k", resolved_dk(rc.arch)},
           {"fusion_layers", rc.arch.plan.selected.size()}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_heatmap(const std::string& checkpoint, uint64_t seed, const std::string& out_flag) {
  MiniVlmParams params = mini_vlm_load(checkpoint);
  if (params.fusion.empty())
    throw std::invalid_argument("checkpoint has no fusion layers, nothing to visualize");

  ToyBatch batch = toy_task_generate(params.config, seed);
  MiniVlmOutput out = mini_vlm_forward(params, batch, true);
  std::vector<double> alphas;
  for (const SgfParams& f : params.fusion) alphas.push_back(f.alpha.data[0]);
  const AttentionTrace& trace = out.traces[most_open_fusion_layer(alphas)];

  RunConfig defaults;
  std::string out_dir = resolve_out_dir(out_flag, defaults);
  std::filesystem::create_directories(out_dir);
  write_heatmaps(out_dir, trace);
  std::cout << "wrote " << trace.n << " heatmap frames to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatial-grounded fusion toolkit"};
  app.require_subcommand(1);
  // shared options like --config may appear after the subcommand name
  app.fallthrough();

  std::string config_path, out_flag;
  std::optional<uint64_t> seed_flag;
  app.add_option("--config", config_path, "JSON run configuration")->capture_default_str();
  app.add_option("--out", out_flag, "output directory (GEOTHINKER_OUT overrides)");
  app.add_option("--seed", seed_flag, "override the config seed");

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "compare analytic gradients against central differences");

  CLI::App* train_toy =
      app.add_subcommand("train-toy", "train the toy model on the synthetic retrieval task");
  bool ablate = false;
  train_toy->add_flag("--ablate-sgf", ablate, "drop every fusion layer from the plan");

  CLI::App* plan = app.add_subcommand("plan", "print the fusion layer selection as JSON");
  int plan_layers_arg = 0;
  double plan_rho = 0.5, plan_end_buffer = 0.0, plan_start_offset = 0.0;
  std::string plan_mode = "centered";
  plan->add_option("layers", plan_layers_arg, "backbone layer count")->required();
  plan->add_option("rho", plan_rho, "fusion ratio in (0, 1]")->required();
  plan->add_option("mode", plan_mode, "centered or front-anchored");
  plan->add_option("--end-buffer", plan_end_buffer, "tail fraction kept fusion-free");
  plan->add_option("--start-offset", plan_start_offset, "head fraction skipped");

  CLI::App* flops = app.add_subcommand("flops", "analytic cost report as JSON");
  bool compare = false;
  flops->add_flag("--compare", compare, "CSV sweep over frame counts and merge sizes");

  CLI::App* heatmap =
      app.add_subcommand("heatmap", "render importance scores from a checkpoint");
  std::string checkpoint;
  uint64_t heatmap_seed = 42;
  heatmap->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  heatmap->add_option("--batch-seed", heatmap_seed, "seed for the rendered batch");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gradcheck->parsed()) return cmd_gradcheck(config_path, seed_flag, out_flag);
    if (train_toy->parsed()) return cmd_train_toy(config_path, seed_flag, out_flag, ablate);
    if (plan->parsed())
      return cmd_plan(plan_layers_arg, plan_rho, plan_mode, plan_end_buffer,
                      plan_start_offset);
    if (flops->parsed()) return cmd_flops(config_path, compare);
    if (heatmap->parsed()) return cmd_heatmap(checkpoint, heatmap_seed, out_flag);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
