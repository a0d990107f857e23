#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "geothinker/io_util.hpp"
#include "geothinker/tensor.hpp"

namespace geothinker {

enum class Provenance : uint8_t { semantic = 0, geometry = 1 };

// Per-frame token grid, values laid out (frame, row, col, channel) row-major.
struct TokenGrid {
  int n = 0, h = 0, w = 0, c = 0;
  Provenance provenance = Provenance::semantic;
  std::vector<double> values;

  TokenGrid() = default;
  TokenGrid(int n_, int h_, int w_, int c_, Provenance p)
      : n(n_), h(h_), w(w_), c(c_), provenance(p) {
    if (n <= 0 || h <= 0 || w <= 0 || c <= 0)
      throw std::invalid_argument("token grid extents must be positive");
    values.assign(static_cast<size_t>(n) * h * w * c, 0.0);
  }

  long long tokens_per_frame() const { return static_cast<long long>(h) * w; }
  long long token_count() const { return static_cast<long long>(n) * h * w; }
  long long size() const { return static_cast<long long>(values.size()); }

  double& at(int i, int y, int x, int ch) {
    return values[((static_cast<size_t>(i) * h + y) * w + x) * c + ch];
  }
  double at(int i, int y, int x, int ch) const {
    return values[((static_cast<size_t>(i) * h + y) * w + x) * c + ch];
  }

  bool finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// row-major position of token (frame i, row r, col x) in the flat sequence
inline long long token_index(const TokenGrid& g, int i, int r, int x) {
  return static_cast<long long>(i) * g.tokens_per_frame() + static_cast<long long>(r) * g.w + x;
}

// mean-pool m x m blocks per channel; m in {1, 2, 4}. When extents do not
// divide by m, pad_edges replicates the last row / column; otherwise error.
inline TokenGrid spatial_merge(const TokenGrid& g, int m, bool pad_edges = false) {
  if (m != 1 && m != 2 && m != 4) throw std::invalid_argument("merge size must be 1, 2 or 4");
  if (m == 1) return g;
  TokenGrid src = g;
  if (g.h % m != 0 || g.w % m != 0) {
    if (!pad_edges)
      throw std::invalid_argument("grid extents " + std::to_string(g.h) + "x" +
                                  std::to_string(g.w) + " not divisible by merge size " +
                                  std::to_string(m));
    int ph = (g.h + m - 1) / m * m;
    int pw = (g.w + m - 1) / m * m;
    TokenGrid padded(g.n, ph, pw, g.c, g.provenance);
    for (int i = 0; i < g.n; ++i)
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x)
          for (int ch = 0; ch < g.c; ++ch)
            padded.at(i, y, x, ch) = g.at(i, std::min(y, g.h - 1), std::min(x, g.w - 1), ch);
    src = std::move(padded);
  }
  TokenGrid out(src.n, src.h / m, src.w / m, src.c, src.provenance);
  double inv = 1.0 / (m * m);
  std::vector<double> block(static_cast<size_t>(m) * m);
  for (int i = 0; i < out.n; ++i)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x)
        for (int ch = 0; ch < out.c; ++ch) {
          for (int dy = 0; dy < m; ++dy)
            for (int dx = 0; dx < m; ++dx)
              block[dy * m + dx] = src.at(i, y * m + dy, x * m + dx, ch);
          // pairwise reduction keeps the mean of equal values exact
          for (int width = m * m; width > 1; width /= 2)
            for (int j = 0; j < width / 2; ++j) block[j] = block[2 * j] + block[2 * j + 1];
          out.at(i, y, x, ch) = block[0] * inv;
        }
  return out;
}

// Bilinear resample to (target_h, target_w) with half-pixel centers:
// source coord = (t + 0.5) * S / T - 0.5, clamped into [0, S-1].
inline TokenGrid resample_geometry(const TokenGrid& g, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0)
    throw std::invalid_argument("resample target extents must be positive");
  TokenGrid out(g.n, target_h, target_w, g.c, g.provenance);
  for (int ty = 0; ty < target_h; ++ty) {
    double sy = (ty + 0.5) * static_cast<double>(g.h) / target_h - 0.5;
    if (sy < 0.0) sy = 0.0;
    if (sy > g.h - 1.0) sy = g.h - 1.0;
    int y0 = static_cast<int>(sy);
    int y1 = std::min(y0 + 1, g.h - 1);
    double fy = sy - y0;
    for (int tx = 0; tx < target_w; ++tx) {
      double sx = (tx + 0.5) * static_cast<double>(g.w) / target_w - 0.5;
      if (sx < 0.0) sx = 0.0;
      if (sx > g.w - 1.0) sx = g.w - 1.0;
      int x0 = static_cast<int>(sx);
      int x1 = std::min(x0 + 1, g.w - 1);
      double fx = sx - x0;
      // two-stage lerp: constant fields pass through untouched
      for (int i = 0; i < g.n; ++i)
        for (int ch = 0; ch < g.c; ++ch) {
          double top = g.at(i, y0, x0, ch) + fx * (g.at(i, y0, x1, ch) - g.at(i, y0, x0, ch));
          double bot = g.at(i, y1, x0, ch) + fx * (g.at(i, y1, x1, ch) - g.at(i, y1, x0, ch));
          out.at(i, ty, tx, ch) = top + fy * (bot - top);
        }
    }
  }
  return out;
}

// (n, h, w, c) -> (n*h*w, c) sequence; the layout is shared so this is a
// shape change only
inline Tensor flatten_tokens(const TokenGrid& g) {
  return Tensor({static_cast<int>(g.token_count()), g.c}, g.values);
}

inline TokenGrid unflatten_tokens(const Tensor& seq, int n, int h, int w, Provenance p) {
  if (seq.shape.size() != 2 || seq.shape[0] != n * h * w)
    throw std::invalid_argument("unflatten_tokens: sequence shape " + shape_str(seq.shape) +
                                " does not cover " + std::to_string(n * h * w) + " tokens");
  TokenGrid g(n, h, w, seq.shape[1], p);
  g.values = seq.data;
  return g;
}

// ---- binary container ----
//
// layout: magic "TGRD", u32le n, h, w, c, one provenance byte, then
// n*h*w*c f64le values in grid order

inline void save_tgrd(const TokenGrid& g, std::ostream& os) {
  os.write("TGRD", 4);
  write_u32le(os, static_cast<uint32_t>(g.n));
  write_u32le(os, static_cast<uint32_t>(g.h));
  write_u32le(os, static_cast<uint32_t>(g.w));
  write_u32le(os, static_cast<uint32_t>(g.c));
  char p = static_cast<char>(g.provenance);
  os.write(&p, 1);
  for (double v : g.values) write_f64le(os, v);
  if (!os) throw std::runtime_error("token grid write failed");
}

inline void save_tgrd(const TokenGrid& g, const std::string& path) {
  std::ofstream os = open_out(path, true);
  save_tgrd(g, os);
}

inline TokenGrid load_tgrd(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "TGRD")
    throw std::runtime_error("not a token grid container (bad magic)");
  uint32_t n = read_u32le(is), h = read_u32le(is), w = read_u32le(is), c = read_u32le(is);
  char p;
  is.read(&p, 1);
  if (!is) throw std::runtime_error("truncated token grid header");
  if (n == 0 || h == 0 || w == 0 || c == 0 || p < 0 || p > 1)
    throw std::runtime_error("token grid header rejected");
  TokenGrid g(static_cast<int>(n), static_cast<int>(h), static_cast<int>(w),
              static_cast<int>(c), static_cast<Provenance>(p));
  for (double& v : g.values) v = read_f64le(is);
  if (!g.finite()) throw std::runtime_error("token grid payload contains non-finite values");
  return g;
}

inline TokenGrid load_tgrd(const std::string& path) {
  std::ifstream is = open_in(path, true);
  return load_tgrd(is);
}

// single channel of a single frame as CSV, header row first
inline void write_channel_csv(const TokenGrid& g, int frame, int channel,
                              const std::string& path) {
  if (frame < 0 || frame >= g.n || channel < 0 || channel >= g.c)
    throw std::invalid_argument("write_channel_csv: frame or channel out of range");
  std::vector<std::string> header;
  for (int x = 0; x < g.w; ++x) header.push_back("col" + std::to_string(x));
  std::vector<std::vector<std::string>> rows;
  for (int y = 0; y < g.h; ++y) {
    std::vector<std::string> row;
    for (int x = 0; x < g.w; ++x) row.push_back(format_double(g.at(frame, y, x, channel)));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

// parameters ride in the same container as 1 x rows x cols x 1 grids
inline TokenGrid tensor_to_grid(const Tensor& t) {
  int rows = 1, cols = 1;
  if (t.shape.size() == 2) {
    rows = t.shape[0];
    cols = t.shape[1];
  } else if (t.shape.size() == 1) {
    cols = t.shape[0];
  } else {
    throw std::invalid_argument("tensor_to_grid: expected rank 1 or 2");
  }
  TokenGrid g(1, rows, cols, 1, Provenance::semantic);
  g.values = t.data;
  return g;
}

inline Tensor grid_to_tensor(const TokenGrid& g, const Shape& shape) {
  Tensor t(shape, g.values);
  return t;
}

}  // namespace geothinker
