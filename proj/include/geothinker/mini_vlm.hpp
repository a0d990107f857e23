#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geothinker/grid.hpp"
#include "geothinker/layer_plan.hpp"
#include "geothinker/rng.hpp"
#include "geothinker/sgf.hpp"
#include "geothinker/tensor.hpp"

namespace geothinker {

// A deliberately small stand-in for the language backbone: every block is a
// token-local residual MLP, so nothing except the fusion layers can move
// information between tokens or frames. That keeps the frame-strictness of
// the fusion path observable end to end, bitwise.
struct MiniVlmConfig {
  int frames = 0;
  int grid_h = 0, grid_w = 0;  // token grid per frame after the merge
  int c = 0;                   // backbone width
  int c_geo = 0;               // geometry width
  int d_k = 0;
  int depth = 0;               // backbone block count
  LayerPlan plan;
  int merge = 2;
  int merge_bypass_threshold = 8;
  double epsilon = kEpsilonOutOfDomain;
  uint64_t seed = 0;
  int steps = 0;
  double lr = 0.0;

  int tokens_per_frame() const { return grid_h * grid_w; }
  int mlp_hidden() const { return 2 * c; }
  int effective_merge() const {
    if (merge > 2 && frames <= merge_bypass_threshold) return 2;
    return merge;
  }
  SgfConfig sgf_config() const { return SgfConfig{c, c_geo, d_k, epsilon}; }
};

inline void check_config(const MiniVlmConfig& cfg) {
  if (cfg.frames < 1 || cfg.grid_h < 1 || cfg.grid_w < 1 || cfg.depth < 1)
    throw std::invalid_argument("mini vlm config: counts must be positive");
  if (cfg.c < 2 || cfg.c_geo < 2 || cfg.d_k < 1)
    throw std::invalid_argument(
        "mini vlm config: need c >= 2 and c_geo >= 2 (channel 0 is special in both "
        "streams) and d_k >= 1");
  if (cfg.merge != 1 && cfg.merge != 2 && cfg.merge != 4)
    throw std::invalid_argument("mini vlm config: merge size must be 1, 2, or 4");
  if (cfg.plan.total_layers != cfg.depth)
    throw std::invalid_argument("mini vlm config: plan covers " +
                                std::to_string(cfg.plan.total_layers) +
                                " layers but depth is " + std::to_string(cfg.depth));
  for (int idx : cfg.plan.selected)
    if (idx < 0 || idx >= cfg.depth)
      throw std::invalid_argument("mini vlm config: plan selects a layer outside the stack");
  if (!(cfg.epsilon > 0.0))
    throw std::invalid_argument("mini vlm config: epsilon must be positive");
  if (cfg.steps < 0 || !(cfg.lr >= 0.0))
    throw std::invalid_argument("mini vlm config: steps and lr cannot be negative");
}

struct BackboneBlockParams {
  Tensor w1, b1;  // c -> hidden
  Tensor w2, b2;  // hidden -> c
};

struct MiniVlmParams {
  MiniVlmConfig config;
  std::vector<BackboneBlockParams> blocks;  // config.depth of them
  std::vector<SgfParams> fusion;            // one per plan-selected layer, in order
  Tensor w_out, b_out;                      // per-token scalar readout

  std::vector<Tensor*> learnables() {
    std::vector<Tensor*> all;
    for (BackboneBlockParams& b : blocks) {
      all.push_back(&b.w1);
      all.push_back(&b.b1);
      all.push_back(&b.w2);
      all.push_back(&b.b2);
    }
    for (SgfParams& s : fusion)
      for (Tensor* t : s.learnables()) all.push_back(t);
    all.push_back(&w_out);
    all.push_back(&b_out);
    return all;
  }
};

// Parameters for every block come from stream tags that depend only on the
// block position, so a model with fusion layers and its fusion-free ablation
// start from identical backbone weights.
inline MiniVlmParams mini_vlm_init(const MiniVlmConfig& cfg) {
  check_config(cfg);
  MiniVlmParams p;
  p.config = cfg;
  Rng weights = Rng(cfg.seed).split(rng_stream::weights);
  int hidden = cfg.mlp_hidden();
  for (int i = 0; i < cfg.depth; ++i) {
    Rng r = weights.split(100 + i);
    BackboneBlockParams b;
    b.w1 = init_linear_weight(cfg.c, hidden, r);
    b.b1 = Tensor::zeros({hidden});
    b.w2 = init_linear_weight(hidden, cfg.c, r);
    b.b2 = Tensor::zeros({cfg.c});
    p.blocks.push_back(std::move(b));
  }
  for (size_t k = 0; k < cfg.plan.selected.size(); ++k)
    p.fusion.push_back(sgf_init(cfg.sgf_config(), weights.split(200 + k)));
  Rng r = weights.split(300);
  p.w_out = init_linear_weight(cfg.c, 1, r);
  p.b_out = Tensor::zeros({1});
  return p;
}

// ---- synthetic task ----

// One training example set. Targets live in geometry channel 0 of every
// token; the masked quarter of the tokens additionally carry, in channels
// 1.., a unit-amplitude copy of their own semantic channels 1.., which is the
// only thing that ties a geometry token back to its semantic counterpart.
// Semantic channel 0 gets +1 on masked tokens; the semantic stream never
// sees the targets themselves.
struct ToyBatch {
  int frames = 0, grid_h = 0, grid_w = 0;
  Tensor semantic;     // (n, L, c)
  TokenGrid geometry;  // n x H' x W' x c_geo
  std::vector<char> mask;  // n*L entries, 1 = carries signal
  Tensor targets;      // (n, L)

  int masked_count() const {
    int k = 0;
    for (char m : mask) k += m;
    return k;
  }
};

inline constexpr double kSemanticNoiseScale = 0.1;
inline constexpr double kMaskFraction = 0.25;
inline constexpr double kRelevanceMarker = 1.0;

namespace toy_stream {
constexpr uint64_t geometry_noise = 5;
}

inline ToyBatch toy_task_generate(const MiniVlmConfig& cfg, uint64_t seed) {
  check_config(cfg);
  int n = cfg.frames, L = cfg.tokens_per_frame(), c = cfg.c, cg = cfg.c_geo;
  int m = cfg.effective_merge();
  Rng root(seed);
  Rng target_rng = root.split(rng_stream::data);
  Rng sem_rng = root.split(rng_stream::noise);
  Rng mask_rng = root.split(rng_stream::mask);
  Rng geo_rng = root.split(toy_stream::geometry_noise);

  ToyBatch batch;
  batch.frames = n;
  batch.grid_h = cfg.grid_h;
  batch.grid_w = cfg.grid_w;

  // semantic tokens are drawn at the pre-merge resolution and pooled down,
  // the same way real patch tokens would reach the backbone
  TokenGrid pre(n, cfg.grid_h * m, cfg.grid_w * m, c, Provenance::semantic);
  for (double& v : pre.values) v = kSemanticNoiseScale * sem_rng.normal();
  TokenGrid merged = spatial_merge(pre, m);
  batch.semantic = Tensor({n, L, c}, merged.values);

  batch.targets = Tensor::zeros({n, L});
  for (double& y : batch.targets.data) y = target_rng.uniform(-1.0, 1.0);

  // a fixed-size random quarter of each frame, chosen by partial shuffle
  batch.mask.assign(static_cast<size_t>(n) * L, 0);
  int per_frame = static_cast<int>(std::llround(kMaskFraction * L));
  if (per_frame < 1) per_frame = 1;
  if (per_frame >= L) per_frame = L - 1;
  if (L == 1) per_frame = 1;
  std::vector<int> order(L);
  for (int f = 0; f < n; ++f) {
    for (int i = 0; i < L; ++i) order[i] = i;
    for (int i = 0; i < per_frame; ++i) {
      int j = i + static_cast<int>(mask_rng.uniform() * (L - i));
      if (j >= L) j = L - 1;
      std::swap(order[i], order[j]);
    }
    for (int i = 0; i < per_frame; ++i) batch.mask[f * L + order[i]] = 1;
  }

  // the marker that tells the gate (which reads semantics only) that this
  // token's geometry is worth attending to
  for (int t = 0; t < n * L; ++t)
    if (batch.mask[t]) batch.semantic.data[static_cast<size_t>(t) * c] += kRelevanceMarker;

  // merging divided the semantic noise scale by m, so the echo rescales it
  // back to unit amplitude
  double echo_scale = static_cast<double>(m) / kSemanticNoiseScale;
  batch.geometry = TokenGrid(n, cfg.grid_h, cfg.grid_w, cg, Provenance::geometry);
  for (int t = 0; t < n * L; ++t) {
    double* geo = batch.geometry.values.data() + static_cast<size_t>(t) * cg;
    geo[0] = batch.targets.data[t];
    const double* sem = batch.semantic.data.data() + static_cast<size_t>(t) * c;
    for (int j = 1; j < cg; ++j) {
      if (batch.mask[t])
        geo[j] = echo_scale * sem[1 + (j - 1) % (c - 1)];
      else
        geo[j] = geo_rng.normal();
    }
  }
  return batch;
}

// ---- forward graph ----

struct BlockNodeIds {
  int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};

struct MiniVlmNodeIds {
  std::vector<BlockNodeIds> blocks;
  std::vector<SgfNodeIds> fusion;
  int w_out = -1, b_out = -1;
};

inline MiniVlmNodeIds mini_vlm_leaf_ids(Tape& tape, const MiniVlmParams& p) {
  MiniVlmNodeIds ids;
  for (const BackboneBlockParams& b : p.blocks)
    ids.blocks.push_back({tape.leaf(b.w1), tape.leaf(b.b1), tape.leaf(b.w2), tape.leaf(b.b2)});
  for (const SgfParams& s : p.fusion) ids.fusion.push_back(sgf_leaf_ids(tape, s));
  ids.w_out = tape.leaf(p.w_out);
  ids.b_out = tape.leaf(p.b_out);
  return ids;
}

inline MiniVlmNodeIds mini_vlm_bind_ids(Tape& tape, MiniVlmParams& p,
                                        std::vector<ParamBinding>& binds) {
  MiniVlmNodeIds ids;
  for (BackboneBlockParams& b : p.blocks)
    ids.blocks.push_back({bind_param(tape, b.w1, binds), bind_param(tape, b.b1, binds),
                          bind_param(tape, b.w2, binds), bind_param(tape, b.b2, binds)});
  for (SgfParams& s : p.fusion) ids.fusion.push_back(sgf_bind_ids(tape, s, binds));
  ids.w_out = bind_param(tape, p.w_out, binds);
  ids.b_out = bind_param(tape, p.b_out, binds);
  return ids;
}

// Runs the stack: fusion (when planned) is applied to the input of the
// selected block. Returns the (n, L) per-token predictions; fills traces
// with one entry per fusion layer when asked.
inline int mini_vlm_apply(Tape& tape, const MiniVlmNodeIds& ids, const MiniVlmConfig& cfg,
                          int semantic, int geo,
                          std::vector<SgfTraceIds>* traces = nullptr) {
  const Shape& ss = tape.at(semantic).shape;
  int n = cfg.frames, L = cfg.tokens_per_frame();
  if (ss != Shape{n, L, cfg.c})
    throw std::invalid_argument("mini_vlm_apply: semantic shape " + shape_str(ss) +
                                " does not match the config");
  int h = tape.reshape(semantic, {n * L, cfg.c});
  SgfConfig sgf_cfg = cfg.sgf_config();
  size_t fusion_idx = 0;
  for (int layer = 0; layer < cfg.depth; ++layer) {
    if (cfg.plan.contains(layer)) {
      SgfTraceIds tr;
      h = sgf_apply(tape, ids.fusion[fusion_idx], sgf_cfg, h, geo,
                    traces ? &tr : nullptr);
      if (traces) traces->push_back(tr);
      ++fusion_idx;
    }
    const BlockNodeIds& b = ids.blocks[layer];
    int inner = tape.linear(tape.gelu(tape.linear(h, b.w1, b.b1)), b.w2, b.b2);
    h = tape.add(h, inner);
  }
  int pred = tape.linear(h, ids.w_out, ids.b_out);  // (n*L, 1)
  return tape.reshape(pred, {n, L});
}

// mean squared error over the masked tokens only: the unmasked three
// quarters carry no retrievable target (their geometry has no signature a
// query could match), so averaging them in would put a hard floor under
// every model
inline int masked_mse(Tape& tape, int pred, const ToyBatch& batch) {
  int count = batch.masked_count();
  if (count == 0) throw std::invalid_argument("masked_mse: batch has no masked tokens");
  Tensor weights = Tensor::zeros({batch.frames, batch.grid_h * batch.grid_w});
  for (size_t i = 0; i < batch.mask.size(); ++i)
    if (batch.mask[i]) weights.data[i] = 1.0 / count;
  int diff = tape.sub(pred, tape.leaf(batch.targets));
  return tape.sum(tape.mul(tape.mul(diff, diff), tape.leaf(weights)));
}

// plain-data forward for callers that only need numbers
struct MiniVlmOutput {
  Tensor predictions;                    // (n, L)
  std::vector<AttentionTrace> traces;    // one per fusion layer
};

inline MiniVlmOutput mini_vlm_forward(const MiniVlmParams& params, const ToyBatch& batch,
                                      bool capture_traces = false) {
  const MiniVlmConfig& cfg = params.config;
  Tape tape;
  MiniVlmNodeIds ids = mini_vlm_leaf_ids(tape, params);
  int sem = tape.leaf(batch.semantic);
  int geo = tape.leaf(Tensor({cfg.frames, cfg.tokens_per_frame(), cfg.c_geo},
                             batch.geometry.values));
  std::vector<SgfTraceIds> trace_ids;
  int pred = mini_vlm_apply(tape, ids, cfg, sem, geo,
                            capture_traces ? &trace_ids : nullptr);
  MiniVlmOutput out;
  out.predictions = tape.at(pred);
  if (capture_traces) {
    for (const SgfTraceIds& tr : trace_ids) {
      AttentionTrace t;
      t.n = cfg.frames;
      t.grid_h = cfg.grid_h;
      t.grid_w = cfg.grid_w;
      t.q = tape.at(tr.q);
      t.k = tape.at(tr.k);
      t.v = tape.at(tr.v);
      t.s_imp = tape.at(tr.s_imp);
      t.s_bias = tape.at(tr.s_bias);
      t.weights = tape.at(tr.weights);
      t.delta = tape.at(tr.delta);
      out.traces.push_back(std::move(t));
    }
  }
  return out;
}

// ---- metrics ----

inline double masked_mse_value(const Tensor& pred, const ToyBatch& batch) {
  int count = batch.masked_count();
  double acc = 0.0;
  for (size_t i = 0; i < batch.mask.size(); ++i) {
    if (!batch.mask[i]) continue;
    double d = pred.data[i] - batch.targets.data[i];
    acc += d * d;
  }
  return acc / count;
}

inline double masked_target_variance(const ToyBatch& batch) {
  int count = batch.masked_count();
  double mean = 0.0;
  for (size_t i = 0; i < batch.mask.size(); ++i)
    if (batch.mask[i]) mean += batch.targets.data[i];
  mean /= count;
  double var = 0.0;
  for (size_t i = 0; i < batch.mask.size(); ++i) {
    if (!batch.mask[i]) continue;
    double d = batch.targets.data[i] - mean;
    var += d * d;
  }
  return var / count;
}

// mean gate score on masked tokens minus mean on the rest
inline double selectivity_margin(const AttentionTrace& trace, const ToyBatch& batch) {
  double on = 0.0, off = 0.0;
  int n_on = 0, n_off = 0;
  for (size_t i = 0; i < batch.mask.size(); ++i) {
    if (batch.mask[i]) {
      on += trace.s_imp.data[i];
      ++n_on;
    } else {
      off += trace.s_imp.data[i];
      ++n_off;
    }
  }
  if (n_on == 0 || n_off == 0) return 0.0;
  return on / n_on - off / n_off;
}

// ---- training ----

struct TrainPoint {
  int step = 0;
  double loss = 0.0;  // held-out loss, measured before the step's update
};

struct TrainResult {
  std::vector<TrainPoint> curve;
  double final_mse = 0.0;
  double var_y = 0.0;
  std::vector<double> alpha_values;   // raw alpha per fusion layer
  double selectivity = 0.0;           // margin on the held-out batch
  bool diverged = false;
  int diverged_step = -1;
  MiniVlmParams params;
  std::optional<AttentionTrace> trace;  // most-open fusion layer, held-out batch
  int trace_fusion_index = -1;          // which fusion layer the trace came from
  ToyBatch eval_batch;
};

// The heatmaps and the selectivity margin are read from the fusion layer
// whose gate opened widest (largest |tanh(alpha)|). A layer whose alpha
// stayed near zero contributed nothing to the output, so its importance
// head received no training signal and only shows initialization noise.
inline size_t most_open_fusion_layer(const std::vector<double>& alphas) {
  size_t best = 0;
  for (size_t i = 1; i < alphas.size(); ++i)
    if (std::fabs(std::tanh(alphas[i])) > std::fabs(std::tanh(alphas[best]))) best = i;
  return best;
}

inline constexpr int kLossRecordEvery = 10;

namespace train_stream {
constexpr uint64_t step_batches = 7000;
constexpr uint64_t eval_batch = 8000;
}

inline uint64_t toy_batch_seed(const MiniVlmConfig& cfg, int step) {
  return Rng(cfg.seed).split(train_stream::step_batches).split(step).next_u64();
}

inline uint64_t toy_eval_seed(const MiniVlmConfig& cfg) {
  return Rng(cfg.seed).split(train_stream::eval_batch).next_u64();
}

// Plain full-batch gradient descent on the masked MSE. Every step draws a
// fresh batch, so nothing can be memorized; the recorded curve is the loss
// on one fixed held-out batch, which makes it flat when lr = 0 and
// reproducible bit for bit.
inline TrainResult train(const MiniVlmConfig& cfg) {
  check_config(cfg);
  TrainResult result;
  result.params = mini_vlm_init(cfg);
  result.eval_batch = toy_task_generate(cfg, toy_eval_seed(cfg));

  auto eval_loss = [&]() {
    MiniVlmOutput out = mini_vlm_forward(result.params, result.eval_batch);
    return masked_mse_value(out.predictions, result.eval_batch);
  };

  for (int step = 0; step < cfg.steps; ++step) {
    if (step % kLossRecordEvery == 0) result.curve.push_back({step, eval_loss()});
    ToyBatch batch = toy_task_generate(cfg, toy_batch_seed(cfg, step));
    Tape tape;
    std::vector<ParamBinding> binds;
    MiniVlmNodeIds ids = mini_vlm_bind_ids(tape, result.params, binds);
    int sem = tape.leaf(batch.semantic);
    int geo = tape.leaf(
        Tensor({cfg.frames, cfg.tokens_per_frame(), cfg.c_geo}, batch.geometry.values));
    int loss = masked_mse(tape, mini_vlm_apply(tape, ids, cfg, sem, geo), batch);
    double loss_value = tape.val(loss)[0];
    if (!std::isfinite(loss_value)) {
      result.diverged = true;
      result.diverged_step = step;
      return result;
    }
    tape.backward(loss);
    fetch_grads(tape, binds);
    std::vector<Tensor*> params;
    for (const ParamBinding& b : binds) params.push_back(b.param);
    sgd_step(params, cfg.lr);
  }

  double final_loss = eval_loss();
  result.curve.push_back({cfg.steps, final_loss});
  result.final_mse = final_loss;
  result.var_y = masked_target_variance(result.eval_batch);
  for (const SgfParams& s : result.params.fusion)
    result.alpha_values.push_back(s.alpha.data[0]);
  if (!result.params.fusion.empty()) {
    MiniVlmOutput out = mini_vlm_forward(result.params, result.eval_batch, true);
    size_t pick = most_open_fusion_layer(result.alpha_values);
    result.trace = std::move(out.traces[pick]);
    result.trace_fusion_index = static_cast<int>(pick);
    result.selectivity = selectivity_margin(*result.trace, result.eval_batch);
  }
  return result;
}

// The stock demonstration setup: 48 clips of a 2x2 post-merge grid, fusion
// in the middle two of four blocks. Small enough to train in seconds, large
// enough that the fusion-free ablation cannot do better than predicting the
// mean. Calibration notes: on a 4x4 grid the retrieval bootstrap starves
// (attention over 16 keys dilutes the early gradient 16-fold and training
// goes nowhere in 2000 steps); at 2x2 with one signal token per frame the
// gate alone can already collapse attention onto the grounded token, which
// is exactly the behaviour the layer exists to show.
inline MiniVlmConfig toy_reference_config(uint64_t seed = 42) {
  MiniVlmConfig cfg;
  cfg.frames = 48;
  cfg.grid_h = 2;
  cfg.grid_w = 2;
  cfg.c = 16;
  cfg.c_geo = 16;
  cfg.d_k = 8;
  cfg.depth = 4;
  cfg.plan = plan_layers(4, 0.5, PlanMode::centered);
  cfg.merge = 2;
  cfg.epsilon = kEpsilonOutOfDomain;
  cfg.seed = seed;
  cfg.steps = 2000;
  cfg.lr = 0.05;
  return cfg;
}

// ---- checkpointing ----

inline nlohmann::json mini_vlm_manifest(const MiniVlmParams& p) {
  const MiniVlmConfig& cfg = p.config;
  nlohmann::json plan = {{"total_layers", cfg.plan.total_layers},
                         {"rho", cfg.plan.rho},
                         {"mode", to_string(cfg.plan.mode)},
                         {"start_offset", cfg.plan.start_offset},
                         {"end_buffer", cfg.plan.end_buffer},
                         {"selected", cfg.plan.selected}};
  return nlohmann::json{{"frames", cfg.frames},
                        {"grid_h", cfg.grid_h},
                        {"grid_w", cfg.grid_w},
                        {"c", cfg.c},
                        {"c_geo", cfg.c_geo},
                        {"d_k", cfg.d_k},
                        {"depth", cfg.depth},
                        {"plan", plan},
                        {"merge", cfg.merge},
                        {"merge_bypass_threshold", cfg.merge_bypass_threshold},
                        {"epsilon", cfg.epsilon},
                        {"seed", cfg.seed},
                        {"steps", cfg.steps},
                        {"lr", cfg.lr}};
}

inline MiniVlmConfig mini_vlm_config_from_json(const nlohmann::json& m) {
  MiniVlmConfig cfg;
  cfg.frames = m.at("frames").get<int>();
  cfg.grid_h = m.at("grid_h").get<int>();
  cfg.grid_w = m.at("grid_w").get<int>();
  cfg.c = m.at("c").get<int>();
  cfg.c_geo = m.at("c_geo").get<int>();
  cfg.d_k = m.at("d_k").get<int>();
  cfg.depth = m.at("depth").get<int>();
  const nlohmann::json& plan = m.at("plan");
  cfg.plan.total_layers = plan.at("total_layers").get<int>();
  cfg.plan.rho = plan.at("rho").get<double>();
  cfg.plan.mode = plan_mode_from_string(plan.at("mode").get<std::string>());
  cfg.plan.start_offset = plan.at("start_offset").get<double>();
  cfg.plan.end_buffer = plan.at("end_buffer").get<double>();
  cfg.plan.selected = plan.at("selected").get<std::vector<int>>();
  cfg.merge = m.at("merge").get<int>();
  cfg.merge_bypass_threshold = m.at("merge_bypass_threshold").get<int>();
  cfg.epsilon = m.at("epsilon").get<double>();
  cfg.seed = m.at("seed").get<uint64_t>();
  cfg.steps = m.at("steps").get<int>();
  cfg.lr = m.at("lr").get<double>();
  return cfg;
}

inline void mini_vlm_save(const MiniVlmParams& p, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    std::string base = dir + "/block" + std::to_string(i);
    save_param_file(base + "_w1.tgrd", p.blocks[i].w1);
    save_param_file(base + "_b1.tgrd", p.blocks[i].b1);
    save_param_file(base + "_w2.tgrd", p.blocks[i].w2);
    save_param_file(base + "_b2.tgrd", p.blocks[i].b2);
  }
  for (size_t k = 0; k < p.fusion.size(); ++k)
    sgf_save(p.fusion[k], dir, "fusion" + std::to_string(k));
  save_param_file(dir + "/readout_w.tgrd", p.w_out);
  save_param_file(dir + "/readout_b.tgrd", p.b_out);
  std::ofstream os = open_out(dir + "/manifest.json", false);
  os << mini_vlm_manifest(p).dump(2) << "\n";
  if (!os) throw std::runtime_error("manifest write failed");
}

inline MiniVlmParams mini_vlm_load(const std::string& dir) {
  std::ifstream is = open_in(dir + "/manifest.json", false);
  MiniVlmConfig cfg = mini_vlm_config_from_json(nlohmann::json::parse(is));
  check_config(cfg);
  MiniVlmParams p;
  p.config = cfg;
  int hidden = cfg.mlp_hidden();
  for (int i = 0; i < cfg.depth; ++i) {
    std::string base = dir + "/block" + std::to_string(i);
    BackboneBlockParams b;
    b.w1 = load_param_file(base + "_w1.tgrd", {cfg.c, hidden});
    b.b1 = load_param_file(base + "_b1.tgrd", {hidden});
    b.w2 = load_param_file(base + "_w2.tgrd", {hidden, cfg.c});
    b.b2 = load_param_file(base + "_b2.tgrd", {cfg.c});
    p.blocks.push_back(std::move(b));
  }
  for (size_t k = 0; k < cfg.plan.selected.size(); ++k)
    p.fusion.push_back(sgf_load(dir, "fusion" + std::to_string(k)));
  p.w_out = load_param_file(dir + "/readout_w.tgrd", {cfg.c, 1});
  p.b_out = load_param_file(dir + "/readout_b.tgrd", {1});
  return p;
}

}  // namespace geothinker
