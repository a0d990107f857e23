#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "geothinker/grid.hpp"
#include "geothinker/rng.hpp"
#include "geothinker/tensor.hpp"
#include "json.hpp"

namespace geothinker {

// presets for the shift inside the gating log
inline constexpr double kEpsilonOutOfDomain = 1e-6;
inline constexpr double kEpsilonInDomain = 0.1;

struct SgfConfig {
  int c = 0;      // backbone channel width
  int c_geo = 0;  // geometry token width
  int d_k = 0;    // query/key width
  double epsilon = kEpsilonOutOfDomain;  // not learnable
};

// One fusion layer's parameters. The value projection lands back on width c
// so the residual add needs no extra projection; alpha starts at exactly 0,
// which makes the whole layer an identity map until training moves it.
struct SgfParams {
  SgfConfig config;
  Tensor w_q, b_q;  // c -> d_k
  Tensor w_k, b_k;  // c_geo -> d_k
  Tensor w_v, b_v;  // c_geo -> c
  Tensor w_g, b_g;  // c -> 1
  Tensor alpha;     // scalar

  std::vector<Tensor*> learnables() {
    return {&w_q, &b_q, &w_k, &b_k, &w_v, &b_v, &w_g, &b_g, &alpha};
  }
};

inline Tensor init_linear_weight(int fan_in, int fan_out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros({fan_in, fan_out});
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

inline SgfParams sgf_init(const SgfConfig& cfg, Rng rng) {
  if (cfg.c < 1 || cfg.c_geo < 1 || cfg.d_k < 1)
    throw std::invalid_argument("sgf_init: channel widths must be positive");
  if (!(cfg.epsilon > 0.0))
    throw std::invalid_argument("sgf_init: epsilon must be positive");
  SgfParams p;
  p.config = cfg;
  p.w_q = init_linear_weight(cfg.c, cfg.d_k, rng);
  p.b_q = Tensor::zeros({cfg.d_k});
  p.w_k = init_linear_weight(cfg.c_geo, cfg.d_k, rng);
  p.b_k = Tensor::zeros({cfg.d_k});
  p.w_v = init_linear_weight(cfg.c_geo, cfg.c, rng);
  p.b_v = Tensor::zeros({cfg.c});
  p.w_g = init_linear_weight(cfg.c, 1, rng);
  p.b_g = Tensor::zeros({1});
  p.alpha = Tensor::scalar(0.0);
  return p;
}

inline SgfParams sgf_init(const SgfConfig& cfg, uint64_t seed) {
  return sgf_init(cfg, Rng(seed).split(rng_stream::weights));
}

// Tape ids of one layer's parameters for the current forward pass.
struct SgfNodeIds {
  int w_q = -1, b_q = -1, w_k = -1, b_k = -1;
  int w_v = -1, b_v = -1, w_g = -1, b_g = -1, alpha = -1;
};

// read-only: params enter the tape as plain leaves
inline SgfNodeIds sgf_leaf_ids(Tape& tape, const SgfParams& p) {
  SgfNodeIds ids;
  ids.w_q = tape.leaf(p.w_q);
  ids.b_q = tape.leaf(p.b_q);
  ids.w_k = tape.leaf(p.w_k);
  ids.b_k = tape.leaf(p.b_k);
  ids.w_v = tape.leaf(p.w_v);
  ids.b_v = tape.leaf(p.b_v);
  ids.w_g = tape.leaf(p.w_g);
  ids.b_g = tape.leaf(p.b_g);
  ids.alpha = tape.leaf(p.alpha);
  return ids;
}

// training: params enter via bindings so gradients can be fetched back
inline SgfNodeIds sgf_bind_ids(Tape& tape, SgfParams& p, std::vector<ParamBinding>& binds) {
  SgfNodeIds ids;
  ids.w_q = bind_param(tape, p.w_q, binds);
  ids.b_q = bind_param(tape, p.b_q, binds);
  ids.w_k = bind_param(tape, p.w_k, binds);
  ids.b_k = bind_param(tape, p.b_k, binds);
  ids.w_v = bind_param(tape, p.w_v, binds);
  ids.b_v = bind_param(tape, p.b_v, binds);
  ids.w_g = bind_param(tape, p.w_g, binds);
  ids.b_g = bind_param(tape, p.b_g, binds);
  ids.alpha = bind_param(tape, p.alpha, binds);
  return ids;
}

// gate MLP + sigmoid, one score per token: (n, L, c) -> (n, L), values in (0,1)
inline int importance_scores(Tape& tape, int sh, const SgfNodeIds& ids) {
  const Shape& s = tape.at(sh).shape;
  if (s.size() != 3)
    throw std::invalid_argument("importance_scores: expected (n, L, c), got " +
                                shape_str(s));
  int scores = tape.sigmoid(tape.linear(sh, ids.w_g, ids.b_g));
  return tape.reshape(scores, {s[0], s[1]});
}

// additive attention bias log(s + eps), elementwise over (n, L)
inline int gating_bias(Tape& tape, int s_imp, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("gating_bias: epsilon must be positive");
  return tape.log_shifted(s_imp, epsilon);
}

// Per-frame attention. Each frame is sliced out and handled as an isolated
// (L, *) problem, so logits between tokens of different frames are never
// formed; the per-key bias vector is broadcast across every query row.
// Returns {delta (n, L, c), weights (n, L, L)}.
inline std::pair<int, int> frame_strict_attention(Tape& tape, int q, int k, int v,
                                                  int s_bias) {
  const Shape& qs = tape.at(q).shape;
  const Shape& ks = tape.at(k).shape;
  const Shape& vs = tape.at(v).shape;
  const Shape& bs = tape.at(s_bias).shape;
  if (qs.size() != 3 || ks.size() != 3 || vs.size() != 3 || bs.size() != 2)
    throw std::invalid_argument("frame_strict_attention: ranks must be q,k,v=3 bias=2");
  int n = qs[0], L = qs[1], d_k = qs[2];
  if (ks[0] != n || ks[1] != L || ks[2] != d_k || vs[0] != n || vs[1] != L ||
      bs[0] != n || bs[1] != L)
    throw std::invalid_argument("frame_strict_attention: frame/token extents disagree, " +
                                shape_str(qs) + " vs " + shape_str(ks) + " vs " +
                                shape_str(vs) + " vs " + shape_str(bs));
  double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
  std::vector<int> weight_parts, delta_parts;
  weight_parts.reserve(n);
  delta_parts.reserve(n);
  for (int i = 0; i < n; ++i) {
    int qi = tape.slice_frame(q, i);
    int ki = tape.slice_frame(k, i);
    int vi = tape.slice_frame(v, i);
    int bi = tape.slice_frame(s_bias, i);
    int logits = tape.scale(tape.matmul(qi, tape.transpose_last2(ki)), inv_sqrt_dk);
    int wi = tape.softmax_lastdim(tape.add_lastdim(logits, bi));
    weight_parts.push_back(wi);
    delta_parts.push_back(tape.matmul(wi, vi));
  }
  return {tape.stack_frames(delta_parts), tape.stack_frames(weight_parts)};
}

// tape ids of the intermediate results of one forward pass
struct SgfTraceIds {
  int q = -1, k = -1, v = -1;
  int s_imp = -1, s_bias = -1;
  int weights = -1, delta = -1;
};

// Full fusion layer on the tape. h_img is the flat (n*L, c) semantic stream,
// geo the (n, L, c_geo) geometry stream; the result is h_img plus the
// tanh(alpha)-scaled attention readout, same flat shape.
inline int sgf_apply(Tape& tape, const SgfNodeIds& ids, const SgfConfig& cfg, int h_img,
                     int geo, SgfTraceIds* trace = nullptr) {
  const Shape& hs = tape.at(h_img).shape;
  const Shape& gs = tape.at(geo).shape;
  if (hs.size() != 2 || gs.size() != 3)
    throw std::invalid_argument("sgf_apply: expected h_img (tokens, c) and geo (n, L, c_geo)");
  int n = gs[0], L = gs[1];
  if (hs[0] != n * L || hs[1] != cfg.c || gs[2] != cfg.c_geo)
    throw std::invalid_argument("sgf_apply: token count or width mismatch, h_img " +
                                shape_str(hs) + " vs geo " + shape_str(gs));
  int sh = tape.reshape(h_img, {n, L, cfg.c});
  int q = tape.linear(sh, ids.w_q, ids.b_q);
  int k = tape.linear(geo, ids.w_k, ids.b_k);
  int v = tape.linear(geo, ids.w_v, ids.b_v);
  int s_imp = importance_scores(tape, sh, ids);
  int s_bias = gating_bias(tape, s_imp, cfg.epsilon);
  auto [delta, weights] = frame_strict_attention(tape, q, k, v, s_bias);
  int flat_delta = tape.reshape(delta, {n * L, cfg.c});
  int mixed = tape.mul(flat_delta, tape.tanh(ids.alpha));
  if (trace) *trace = SgfTraceIds{q, k, v, s_imp, s_bias, weights, delta};
  return tape.add(h_img, mixed);
}

// Everything a forward pass computed, lifted off the tape. The grid extent
// (grid_h x grid_w, L tokens) rides along so score maps can be rasterized.
struct AttentionTrace {
  int n = 0, grid_h = 0, grid_w = 0;
  Tensor q, k, v;
  Tensor s_imp, s_bias;
  Tensor weights;
  Tensor delta;
};

struct SgfResult {
  Tensor h_hat;
  std::optional<AttentionTrace> trace;
};

inline SgfResult sgf_forward(const Tensor& h_img, const TokenGrid& geo,
                             const SgfParams& params, bool capture_trace = false) {
  if (h_img.shape.size() != 2)
    throw std::invalid_argument("sgf_forward: h_img must be (tokens, c)");
  if (h_img.shape[0] != geo.token_count())
    throw std::invalid_argument("sgf_forward: h_img has " + std::to_string(h_img.shape[0]) +
                                " tokens but the geometry grid has " +
                                std::to_string(geo.token_count()));
  if (geo.c != params.config.c_geo || h_img.shape[1] != params.config.c)
    throw std::invalid_argument("sgf_forward: channel widths disagree with the parameters");
  Tape tape;
  SgfNodeIds ids = sgf_leaf_ids(tape, params);
  int h = tape.leaf(h_img);
  int g = tape.reshape(tape.leaf(flatten_tokens(geo)),
                       {geo.n, static_cast<int>(geo.tokens_per_frame()), geo.c});
  SgfTraceIds tr;
  int out = sgf_apply(tape, ids, params.config, h, g, capture_trace ? &tr : nullptr);
  SgfResult result;
  result.h_hat = tape.at(out);
  if (capture_trace) {
    AttentionTrace t;
    t.n = geo.n;
    t.grid_h = geo.h;
    t.grid_w = geo.w;
    t.q = tape.at(tr.q);
    t.k = tape.at(tr.k);
    t.v = tape.at(tr.v);
    t.s_imp = tape.at(tr.s_imp);
    t.s_bias = tape.at(tr.s_bias);
    t.weights = tape.at(tr.weights);
    t.delta = tape.at(tr.delta);
    result.trace = std::move(t);
  }
  return result;
}

// Max absolute gap between the two readings of the gate: additive bias
// log(s + eps) inside the softmax vs. multiplicative weighting of the
// unnormalized attention by (s + eps). Algebraically zero; this measures the
// floating-point daylight between them.
inline double gating_equivalence_check(const Tensor& logits, const Tensor& s_imp,
                                       double epsilon) {
  if (logits.shape.size() != 2 || logits.shape[0] != logits.shape[1])
    throw std::invalid_argument("gating_equivalence_check: logits must be square");
  int L = logits.shape[0];
  if (s_imp.size() != L)
    throw std::invalid_argument("gating_equivalence_check: need one score per key");
  double worst = 0.0;
  std::vector<double> a(L), b(L);
  for (int q = 0; q < L; ++q) {
    const double* z = logits.data.data() + static_cast<size_t>(q) * L;
    double mx = z[0];
    for (int k = 1; k < L; ++k) mx = std::max(mx, z[k]);
    double sa = 0.0, sb = 0.0;
    for (int k = 0; k < L; ++k) {
      double w = s_imp.data[k] + epsilon;
      a[k] = std::exp(z[k] - mx + std::log(w));
      b[k] = std::exp(z[k] - mx) * w;
      sa += a[k];
      sb += b[k];
    }
    for (int k = 0; k < L; ++k) worst = std::max(worst, std::abs(a[k] / sa - b[k] / sb));
  }
  return worst;
}

// ---- trace export ----

inline void check_trace_frame(const AttentionTrace& tr, int frame) {
  if (frame < 0 || frame >= tr.n)
    throw std::invalid_argument("trace export: frame out of range");
}

// importance scores of one frame as a grid_h x grid_w grayscale raster
inline void write_importance_pgm(const AttentionTrace& tr, int frame,
                                 const std::string& path) {
  check_trace_frame(tr, frame);
  int L = tr.grid_h * tr.grid_w;
  std::vector<unsigned char> pixels(static_cast<size_t>(L));
  for (int i = 0; i < L; ++i)
    pixels[i] = score_to_byte(tr.s_imp.data[static_cast<size_t>(frame) * L + i]);
  write_pgm(path, tr.grid_w, tr.grid_h, pixels);
}

inline void write_importance_csv(const AttentionTrace& tr, int frame,
                                 const std::string& path) {
  check_trace_frame(tr, frame);
  std::vector<std::string> header;
  for (int x = 0; x < tr.grid_w; ++x) header.push_back("col" + std::to_string(x));
  std::vector<std::vector<std::string>> rows;
  int L = tr.grid_h * tr.grid_w;
  for (int y = 0; y < tr.grid_h; ++y) {
    std::vector<std::string> row;
    for (int x = 0; x < tr.grid_w; ++x)
      row.push_back(format_double(
          tr.s_imp.data[static_cast<size_t>(frame) * L + y * tr.grid_w + x]));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

// one frame's L x L attention matrix, row = query, column = key
inline void write_attention_csv(const AttentionTrace& tr, int frame,
                                const std::string& path) {
  check_trace_frame(tr, frame);
  int L = tr.grid_h * tr.grid_w;
  std::vector<std::string> header;
  for (int k = 0; k < L; ++k) header.push_back("key" + std::to_string(k));
  std::vector<std::vector<std::string>> rows;
  for (int q = 0; q < L; ++q) {
    std::vector<std::string> row;
    for (int k = 0; k < L; ++k)
      row.push_back(format_double(
          tr.weights.data[(static_cast<size_t>(frame) * L + q) * L + k]));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

// ---- checkpointing ----

inline void save_param_file(const std::string& path, const Tensor& t) {
  save_tgrd(tensor_to_grid(t), path);
}

inline Tensor load_param_file(const std::string& path, const Shape& shape) {
  TokenGrid g = load_tgrd(path);
  if (static_cast<long long>(g.values.size()) != numel(shape))
    throw std::runtime_error("parameter file " + path + " holds " +
                             std::to_string(g.values.size()) + " values, expected " +
                             std::to_string(numel(shape)));
  return grid_to_tensor(g, shape);
}

inline nlohmann::json sgf_manifest(const SgfParams& p) {
  return nlohmann::json{{"c", p.config.c},
                        {"c_geo", p.config.c_geo},
                        {"d_k", p.config.d_k},
                        {"epsilon", p.config.epsilon},
                        {"alpha", p.alpha.data[0]}};
}

inline const char* const kSgfTensorNames[8] = {"w_q", "b_q", "w_k", "b_k",
                                               "w_v", "b_v", "w_g", "b_g"};

inline void sgf_save(const SgfParams& p, const std::string& dir,
                     const std::string& prefix = "sgf") {
  std::filesystem::create_directories(dir);
  const Tensor* tensors[8] = {&p.w_q, &p.b_q, &p.w_k, &p.b_k, &p.w_v, &p.b_v, &p.w_g, &p.b_g};
  for (int i = 0; i < 8; ++i)
    save_param_file(dir + "/" + prefix + "_" + kSgfTensorNames[i] + ".tgrd", *tensors[i]);
  std::ofstream os = open_out(dir + "/" + prefix + "_manifest.json", false);
  os << sgf_manifest(p).dump(2) << "\n";
  if (!os) throw std::runtime_error("manifest write failed");
}

inline SgfParams sgf_load(const std::string& dir, const std::string& prefix = "sgf") {
  std::ifstream is = open_in(dir + "/" + prefix + "_manifest.json", false);
  nlohmann::json m = nlohmann::json::parse(is);
  SgfConfig cfg;
  cfg.c = m.at("c").get<int>();
  cfg.c_geo = m.at("c_geo").get<int>();
  cfg.d_k = m.at("d_k").get<int>();
  cfg.epsilon = m.at("epsilon").get<double>();
  if (cfg.c < 1 || cfg.c_geo < 1 || cfg.d_k < 1 || !(cfg.epsilon > 0.0))
    throw std::runtime_error("manifest rejected: bad dimensions or epsilon");
  SgfParams p;
  p.config = cfg;
  Shape shapes[8] = {{cfg.c, cfg.d_k},   {cfg.d_k}, {cfg.c_geo, cfg.d_k}, {cfg.d_k},
                     {cfg.c_geo, cfg.c}, {cfg.c},   {cfg.c, 1},           {1}};
  Tensor* tensors[8] = {&p.w_q, &p.b_q, &p.w_k, &p.b_k, &p.w_v, &p.b_v, &p.w_g, &p.b_g};
  for (int i = 0; i < 8; ++i)
    *tensors[i] =
        load_param_file(dir + "/" + prefix + "_" + kSgfTensorNames[i] + ".tgrd", shapes[i]);
  p.alpha = Tensor::scalar(m.at("alpha").get<double>());
  return p;
}

}  // namespace geothinker
