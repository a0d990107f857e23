#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace geothinker {

enum class PlanMode { centered, front_anchored };

inline std::string to_string(PlanMode m) {
  return m == PlanMode::centered ? "centered" : "front-anchored";
}

inline PlanMode plan_mode_from_string(const std::string& s) {
  if (s == "centered") return PlanMode::centered;
  if (s == "front-anchored" || s == "front_anchored") return PlanMode::front_anchored;
  throw std::invalid_argument("unknown plan mode: " + s);
}

// rounding convention used everywhere in the planner: half away from zero
inline int round_half_away(double x) { return static_cast<int>(std::llround(x)); }

struct LayerPlan {
  int total_layers = 0;
  double rho = 0.0;
  PlanMode mode = PlanMode::centered;
  double start_offset = 0.0;
  double end_buffer = 0.0;
  std::vector<int> selected;
  std::vector<std::string> warnings;

  bool contains(int layer) const {
    for (int s : selected)
      if (s == layer) return true;
    return false;
  }

  // ablation helper: keep the bookkeeping, select nothing
  static LayerPlan none(int n_layers) {
    LayerPlan p;
    p.total_layers = n_layers;
    return p;
  }
};

// Contiguous fusion window over n_layers decoder layers.
//
//   centered:       [round((1-rho)/2 * N), same + round(rho*N))
//   front-anchored: [round(start*N), round(start*N) + round(rho*N))
//                   clipped to [0, N - round(end_buffer*N))
//
// Anchoring the centered window at its rounded left edge and sizing it by
// round(rho*N) keeps the selected count equal to round(rho*N) for every N,
// which rounding both edges independently does not.
inline LayerPlan plan_layers(int n_layers, double rho, PlanMode mode, double end_buffer = 0.0,
                             double start_offset = 0.0) {
  if (n_layers < 1) throw std::invalid_argument("plan: layer count must be >= 1");
  if (!(rho > 0.0) || rho > 1.0)
    throw std::invalid_argument("plan: fusion ratio must lie in (0, 1], got " +
                                std::to_string(rho));
  if (start_offset < 0.0 || start_offset >= 1.0)
    throw std::invalid_argument("plan: start offset must lie in [0, 1)");
  if (end_buffer < 0.0 || end_buffer >= 1.0)
    throw std::invalid_argument("plan: end buffer must lie in [0, 1)");

  LayerPlan plan;
  plan.total_layers = n_layers;
  plan.rho = rho;
  plan.mode = mode;
  plan.start_offset = start_offset;
  plan.end_buffer = end_buffer;

  int lo = 0, hi = 0;
  if (mode == PlanMode::centered) {
    lo = round_half_away((1.0 - rho) / 2.0 * n_layers);
    hi = lo + round_half_away(rho * n_layers);
  } else {
    lo = round_half_away(start_offset * n_layers);
    int count = round_half_away(rho * n_layers);
    int window_hi = n_layers - round_half_away(end_buffer * n_layers);
    hi = std::min(lo + count, window_hi);
  }
  for (int i = std::max(lo, 0); i < std::min(hi, n_layers); ++i) plan.selected.push_back(i);

  if (plan.selected.empty())
    throw std::invalid_argument("plan: selection is empty for rho=" + std::to_string(rho) +
                                ", N=" + std::to_string(n_layers));
  if (rho == 1.0)
    plan.warnings.push_back(
        "fusion ratio 1.0 selects every layer; expect interference with final decoding");
  if (plan.selected.back() == n_layers - 1)
    plan.warnings.push_back("selection includes the final layer");
  return plan;
}

// size of the window the selection is clipped to (mode dependent)
inline int plan_window_size(const LayerPlan& p) {
  int lo = p.mode == PlanMode::centered
               ? round_half_away((1.0 - p.rho) / 2.0 * p.total_layers)
               : round_half_away(p.start_offset * p.total_layers);
  int hi = p.mode == PlanMode::centered
               ? p.total_layers
               : p.total_layers - round_half_away(p.end_buffer * p.total_layers);
  return std::max(0, hi - std::max(lo, 0));
}

struct PlanDiagnostics {
  bool ok = true;
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
};

// invariant checks that report instead of aborting
inline PlanDiagnostics validate_plan(const LayerPlan& p) {
  PlanDiagnostics d;
  auto fail = [&](const std::string& msg) {
    d.ok = false;
    d.errors.push_back(msg);
  };
  if (p.total_layers < 1) fail("total layer count must be >= 1");
  if (p.selected.empty() && p.rho > 0.0) fail("selection is empty");
  for (size_t i = 0; i < p.selected.size(); ++i) {
    if (p.selected[i] < 0 || p.selected[i] >= p.total_layers) {
      fail("selected index " + std::to_string(p.selected[i]) + " outside [0, " +
           std::to_string(p.total_layers) + ")");
      break;
    }
    if (i > 0 && p.selected[i] <= p.selected[i - 1]) {
      fail("selected indices not strictly increasing");
      break;
    }
  }
  if (!p.selected.empty() && d.ok) {
    int expect = std::min(round_half_away(p.rho * p.total_layers), plan_window_size(p));
    if (static_cast<int>(p.selected.size()) != expect)
      fail("selection size " + std::to_string(p.selected.size()) + " != expected " +
           std::to_string(expect));
  }
  if (!p.selected.empty() && p.selected.back() == p.total_layers - 1)
    d.warnings.push_back("selection includes the final layer");
  return d;
}

}  // namespace geothinker
