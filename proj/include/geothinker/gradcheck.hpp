#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "geothinker/mini_vlm.hpp"
#include "geothinker/sgf.hpp"
#include "geothinker/tensor.hpp"

namespace geothinker {

// Self-contained gradient verification, shipped with the library so a build
// can vouch for its own backward pass. Central differences with h = 1e-5;
// error metric |a - n| / max(1, |a|, |n|), relative for large gradients and
// absolute for tiny ones.

struct GradcheckGroup {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  double worst = 0.0;
  bool ok(double threshold = 1e-4) const { return worst < threshold; }
};

inline double gradcheck_rel_error(double analytic, double numeric) {
  double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / denom;
}

inline GradcheckGroup gradcheck_compare(const std::string& name, Tensor& param,
                                        const std::function<double()>& eval,
                                        double h = 1e-5) {
  GradcheckGroup g{name, 0.0};
  for (size_t i = 0; i < param.data.size(); ++i) {
    double keep = param.data[i];
    param.data[i] = keep + h;
    double up = eval();
    param.data[i] = keep - h;
    double down = eval();
    param.data[i] = keep;
    double numeric = (up - down) / (2.0 * h);
    g.max_rel_error = std::max(g.max_rel_error, gradcheck_rel_error(param.grad[i], numeric));
  }
  return g;
}

inline GradcheckReport gradcheck_finish(std::vector<GradcheckGroup> groups) {
  GradcheckReport report;
  report.groups = std::move(groups);
  for (const GradcheckGroup& g : report.groups)
    report.worst = std::max(report.worst, g.max_rel_error);
  return report;
}

// One fusion layer on random inputs, alpha = 0.5 so the whole path carries
// gradient; loss is the sum of squared outputs.
inline GradcheckReport gradcheck_sgf(uint64_t seed) {
  SgfConfig cfg{6, 6, 4, kEpsilonOutOfDomain};
  SgfParams params = sgf_init(cfg, seed);
  params.alpha.data[0] = 0.5;

  int n = 2, L = 4;
  Rng data = Rng(seed).split(rng_stream::data);
  Tensor h_img = Tensor::zeros({n * L, cfg.c});
  for (double& v : h_img.data) v = data.uniform(-1.0, 1.0);
  Tensor geo = Tensor::zeros({n, L, cfg.c_geo});
  for (double& v : geo.data) v = data.uniform(-1.0, 1.0);

  auto loss_value = [&]() {
    Tape tape;
    SgfNodeIds ids = sgf_leaf_ids(tape, params);
    int out = sgf_apply(tape, ids, cfg, tape.leaf(h_img), tape.leaf(geo));
    return tape.val(tape.sum(tape.mul(out, out)))[0];
  };

  Tape tape;
  std::vector<ParamBinding> binds;
  SgfNodeIds ids = sgf_bind_ids(tape, params, binds);
  int out = sgf_apply(tape, ids, cfg, tape.leaf(h_img), tape.leaf(geo));
  tape.backward(tape.sum(tape.mul(out, out)));
  fetch_grads(tape, binds);

  std::vector<GradcheckGroup> groups;
  std::vector<Tensor*> tensors = params.learnables();
  for (size_t i = 0; i < tensors.size(); ++i) {
    std::string name = i < 8 ? kSgfTensorNames[i] : "alpha";
    groups.push_back(gradcheck_compare("sgf." + name, *tensors[i], loss_value));
  }
  return gradcheck_finish(std::move(groups));
}

// The small end-to-end stack: three blocks, fusion in the middle, masked MSE
// loss, alpha = 0.3.
inline GradcheckReport gradcheck_mini_vlm(uint64_t seed) {
  MiniVlmConfig cfg;
  cfg.frames = 2;
  cfg.grid_h = 2;
  cfg.grid_w = 2;
  cfg.c = 6;
  cfg.c_geo = 6;
  cfg.d_k = 4;
  cfg.depth = 3;
  cfg.plan = plan_layers(3, 0.34, PlanMode::centered);
  cfg.merge = 2;
  cfg.seed = seed;
  MiniVlmParams params = mini_vlm_init(cfg);
  params.fusion[0].alpha.data[0] = 0.3;
  ToyBatch batch = toy_task_generate(cfg, Rng(seed).split(rng_stream::data).next_u64());

  auto loss_value = [&]() {
    return masked_mse_value(mini_vlm_forward(params, batch).predictions, batch);
  };

  Tape tape;
  std::vector<ParamBinding> binds;
  MiniVlmNodeIds ids = mini_vlm_bind_ids(tape, params, binds);
  int sem = tape.leaf(batch.semantic);
  int geo = tape.leaf(
      Tensor({cfg.frames, cfg.tokens_per_frame(), cfg.c_geo}, batch.geometry.values));
  tape.backward(masked_mse(tape, mini_vlm_apply(tape, ids, cfg, sem, geo), batch));
  fetch_grads(tape, binds);

  std::vector<std::string> names;
  for (int i = 0; i < cfg.depth; ++i)
    for (const char* part : {"w1", "b1", "w2", "b2"})
      names.push_back("block" + std::to_string(i) + "." + part);
  for (size_t k = 0; k < params.fusion.size(); ++k) {
    for (int i = 0; i < 8; ++i)
      names.push_back("fusion" + std::to_string(k) + "." + kSgfTensorNames[i]);
    names.push_back("fusion" + std::to_string(k) + ".alpha");
  }
  names.push_back("readout.w");
  names.push_back("readout.b");

  std::vector<GradcheckGroup> groups;
  for (size_t i = 0; i < binds.size(); ++i)
    groups.push_back(gradcheck_compare(names.at(i), *binds[i].param, loss_value));
  return gradcheck_finish(std::move(groups));
}

}  // namespace geothinker
