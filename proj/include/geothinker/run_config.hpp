#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "geothinker/flops.hpp"
#include "geothinker/io_util.hpp"
#include "geothinker/mini_vlm.hpp"
#include "json.hpp"

namespace geothinker {

// One JSON document drives every command. Sections and their defaults:
//   model: toy model fields        (defaults to the stock demonstration setup)
//   plan:  {rho, mode, start_offset, end_buffer}   (0.5, centered, 0, 0)
//   flops: analytic cost fields    (defaults to the 7B-style probe)
//   io:    {out}                   ("out")
//   seed:  overrides model.seed
// Unknown keys anywhere are rejected so that a typo cannot silently fall
// back to a default.

struct RunConfig {
  MiniVlmConfig model;
  ArchSpec arch;
  std::string out_dir = "out";
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::string& section,
                                const std::vector<std::string>& allowed) {
  if (!obj.is_object())
    throw std::invalid_argument("config: section '" + section + "' must be a JSON object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const std::string& k : allowed) known |= item.key() == k;
    if (!known)
      throw std::invalid_argument("config: unknown key '" + item.key() + "' in section '" +
                                  section + "'");
  }
}

template <typename T>
void maybe_get(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

struct PlanArgs {
  double rho = 0.5;
  PlanMode mode = PlanMode::centered;
  double start_offset = 0.0;
  double end_buffer = 0.0;
};

inline RunConfig load_run_config(const nlohmann::json& doc) {
  detail::reject_unknown_keys(doc, "top level", {"model", "plan", "flops", "io", "seed"});

  PlanArgs plan;
  if (doc.contains("plan")) {
    const nlohmann::json& p = doc.at("plan");
    detail::reject_unknown_keys(p, "plan", {"rho", "mode", "start_offset", "end_buffer"});
    detail::maybe_get(p, "rho", plan.rho);
    if (p.contains("mode")) plan.mode = plan_mode_from_string(p.at("mode").get<std::string>());
    detail::maybe_get(p, "start_offset", plan.start_offset);
    detail::maybe_get(p, "end_buffer", plan.end_buffer);
  }

  RunConfig rc;
  rc.model = toy_reference_config();
  if (doc.contains("model")) {
    const nlohmann::json& m = doc.at("model");
    detail::reject_unknown_keys(
        m, "model",
        {"frames", "grid_h", "grid_w", "c", "c_geo", "d_k", "depth", "merge",
         "merge_bypass_threshold", "epsilon", "seed", "steps", "lr"});
    detail::maybe_get(m, "frames", rc.model.frames);
    detail::maybe_get(m, "grid_h", rc.model.grid_h);
    detail::maybe_get(m, "grid_w", rc.model.grid_w);
    detail::maybe_get(m, "c", rc.model.c);
    detail::maybe_get(m, "c_geo", rc.model.c_geo);
    detail::maybe_get(m, "d_k", rc.model.d_k);
    detail::maybe_get(m, "depth", rc.model.depth);
    detail::maybe_get(m, "merge", rc.model.merge);
    detail::maybe_get(m, "merge_bypass_threshold", rc.model.merge_bypass_threshold);
    detail::maybe_get(m, "epsilon", rc.model.epsilon);
    detail::maybe_get(m, "seed", rc.model.seed);
    detail::maybe_get(m, "steps", rc.model.steps);
    detail::maybe_get(m, "lr", rc.model.lr);
  }
  rc.model.plan = plan_layers(rc.model.depth, plan.rho, plan.mode, plan.end_buffer,
                              plan.start_offset);

  rc.arch = arch_7b_like();
  if (doc.contains("flops")) {
    const nlohmann::json& f = doc.at("flops");
    detail::reject_unknown_keys(f, "flops",
                                {"hidden", "depth", "ffn", "frames", "tokens_per_frame",
                                 "merge", "merge_bypass_threshold", "geo_width", "d_k",
                                 "text_tokens"});
    detail::maybe_get(f, "hidden", rc.arch.hidden);
    detail::maybe_get(f, "depth", rc.arch.depth);
    detail::maybe_get(f, "ffn", rc.arch.ffn);
    detail::maybe_get(f, "frames", rc.arch.frames);
    detail::maybe_get(f, "tokens_per_frame", rc.arch.tokens_per_frame);
    detail::maybe_get(f, "merge", rc.arch.merge);
    detail::maybe_get(f, "merge_bypass_threshold", rc.arch.merge_bypass_threshold);
    detail::maybe_get(f, "geo_width", rc.arch.geo_width);
    detail::maybe_get(f, "d_k", rc.arch.d_k);
    detail::maybe_get(f, "text_tokens", rc.arch.text_tokens);
  }
  rc.arch.plan = plan_layers(rc.arch.depth, plan.rho, plan.mode, plan.end_buffer,
                             plan.start_offset);

  if (doc.contains("io")) {
    const nlohmann::json& io = doc.at("io");
    detail::reject_unknown_keys(io, "io", {"out"});
    detail::maybe_get(io, "out", rc.out_dir);
  }
  if (doc.contains("seed")) rc.model.seed = doc.at("seed").get<uint64_t>();

  check_config(rc.model);
  check_arch(rc.arch);
  return rc;
}

inline RunConfig load_run_config_file(const std::string& path) {
  std::ifstream is = open_in(path, false);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
  }
  return load_run_config(doc);
}

}  // namespace geothinker
