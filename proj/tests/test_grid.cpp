#include "geothinker/grid.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "geothinker/rng.hpp"
#include "oracles.hpp"

using geothinker::Provenance;
using geothinker::Rng;
using geothinker::TokenGrid;

namespace {

TokenGrid random_grid(int n, int h, int w, int c, Provenance p, uint64_t seed) {
  TokenGrid g(n, h, w, c, p);
  Rng rng(seed);
  for (double& v : g.values) v = rng.uniform(-1.0, 1.0);
  return g;
}

// nearest-neighbour upsample by an integer factor, used only by tests
TokenGrid nearest_upsample(const TokenGrid& g, int m) {
  TokenGrid out(g.n, g.h * m, g.w * m, g.c, g.provenance);
  for (int i = 0; i < g.n; ++i)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x)
        for (int ch = 0; ch < g.c; ++ch) out.at(i, y, x, ch) = g.at(i, y / m, x / m, ch);
  return out;
}

}  // namespace

TEST(Merge, IdentityAndHandValues) {
  TokenGrid g = random_grid(2, 3, 5, 4, Provenance::semantic, 1);
  TokenGrid same = geothinker::spatial_merge(g, 1);
  EXPECT_EQ(same.values, g.values);

  TokenGrid tiny(1, 2, 2, 1, Provenance::semantic);
  tiny.values = {1.0, 2.0, 3.0, 4.0};
  TokenGrid merged = geothinker::spatial_merge(tiny, 2);
  EXPECT_EQ(merged.h, 1);
  EXPECT_EQ(merged.w, 1);
  EXPECT_EQ(merged.values, (std::vector<double>{2.5}));

  TokenGrid flat(1, 4, 4, 2, Provenance::geometry);
  for (double& v : flat.values) v = 7.0;
  TokenGrid m4 = geothinker::spatial_merge(flat, 4);
  EXPECT_EQ(m4.h, 1);
  for (double v : m4.values) EXPECT_EQ(v, 7.0);
  EXPECT_EQ(m4.provenance, Provenance::geometry);
}

TEST(Merge, OutputIsBlockMean) {
  TokenGrid g = random_grid(2, 4, 6, 3, Provenance::semantic, 2);
  TokenGrid out = geothinker::spatial_merge(g, 2);
  for (int i = 0; i < out.n; ++i)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x)
        for (int ch = 0; ch < out.c; ++ch) {
          double mean = (g.at(i, 2 * y, 2 * x, ch) + g.at(i, 2 * y, 2 * x + 1, ch) +
                         g.at(i, 2 * y + 1, 2 * x, ch) + g.at(i, 2 * y + 1, 2 * x + 1, ch)) /
                        4.0;
          ASSERT_NEAR(out.at(i, y, x, ch), mean, 1e-12);
        }
}

TEST(Merge, RecoversBlockConstantExactly) {
  for (int m : {2, 4}) {
    TokenGrid small = random_grid(2, 3, 2, 2, Provenance::semantic, 40 + m);
    TokenGrid big = nearest_upsample(small, m);
    TokenGrid back = geothinker::spatial_merge(big, m);
    EXPECT_EQ(back.values, small.values) << "m=" << m;
  }
}

TEST(Merge, EdgePaddingReplicates) {
  TokenGrid g(1, 3, 3, 1, Provenance::semantic);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) g.at(0, y, x, 0) = y * 3 + x;
  EXPECT_THROW(geothinker::spatial_merge(g, 2), std::invalid_argument);
  TokenGrid out = geothinker::spatial_merge(g, 2, true);
  EXPECT_EQ(out.h, 2);
  EXPECT_EQ(out.w, 2);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0, 0), (0.0 + 1.0 + 3.0 + 4.0) / 4.0);
  // right column replicates col 2, bottom row replicates row 2
  EXPECT_DOUBLE_EQ(out.at(0, 0, 1, 0), (2.0 + 2.0 + 5.0 + 5.0) / 4.0);
  EXPECT_DOUBLE_EQ(out.at(0, 1, 1, 0), 8.0);
}

TEST(Resample, IdentityWhenShapesMatch) {
  TokenGrid g = random_grid(3, 4, 5, 2, Provenance::geometry, 3);
  TokenGrid out = geothinker::resample_geometry(g, 4, 5);
  ASSERT_EQ(out.values.size(), g.values.size());
  for (size_t i = 0; i < g.values.size(); ++i) ASSERT_NEAR(out.values[i], g.values[i], 1e-12);
  EXPECT_EQ(out.provenance, Provenance::geometry);
}

TEST(Resample, HandValuesAndConstantField) {
  TokenGrid tiny(1, 2, 2, 1, Provenance::geometry);
  tiny.values = {1.0, 2.0, 3.0, 4.0};
  TokenGrid down = geothinker::resample_geometry(tiny, 1, 1);
  EXPECT_NEAR(down.values[0], 2.5, 1e-12);

  TokenGrid flat(2, 3, 4, 2, Provenance::geometry);
  for (double& v : flat.values) v = -0.75;
  for (auto [th, tw] : {std::pair{7, 2}, std::pair{1, 9}, std::pair{5, 5}}) {
    TokenGrid out = geothinker::resample_geometry(flat, th, tw);
    for (double v : out.values) ASSERT_EQ(v, -0.75);
  }
}

TEST(Resample, MatchesNaiveOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    int sh = 1 + static_cast<int>(rng.uniform() * 6);
    int sw = 1 + static_cast<int>(rng.uniform() * 6);
    int th = 1 + static_cast<int>(rng.uniform() * 6);
    int tw = 1 + static_cast<int>(rng.uniform() * 6);
    TokenGrid g = random_grid(2, sh, sw, 3, Provenance::geometry, 100 + trial);
    TokenGrid out = geothinker::resample_geometry(g, th, tw);
    for (int i = 0; i < g.n; ++i)
      for (int ch = 0; ch < g.c; ++ch) {
        std::vector<double> plane(static_cast<size_t>(sh) * sw);
        for (int y = 0; y < sh; ++y)
          for (int x = 0; x < sw; ++x) plane[y * sw + x] = g.at(i, y, x, ch);
        std::vector<double> want = oracle::naive_bilinear(plane, sh, sw, th, tw);
        for (int y = 0; y < th; ++y)
          for (int x = 0; x < tw; ++x)
            ASSERT_NEAR(out.at(i, y, x, ch), want[y * tw + x], 1e-12);
      }
  }
}

TEST(Resample, OutputsStayWithinInputRange) {
  TokenGrid g = random_grid(1, 5, 4, 2, Provenance::geometry, 9);
  double lo = g.values[0], hi = g.values[0];
  for (double v : g.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  TokenGrid out = geothinker::resample_geometry(g, 13, 3);
  for (double v : out.values) {
    ASSERT_GE(v, lo - 1e-12);
    ASSERT_LE(v, hi + 1e-12);
  }
}

TEST(Flatten, RoundTripBitwiseUpToLargerShapes) {
  for (int n : {1, 3})
    for (int h : {1, 5})
      for (int w : {2, 7})
        for (int c : {1, 4}) {
          TokenGrid g = random_grid(n, h, w, c, Provenance::semantic, n * 100 + h * 10 + w + c);
          geothinker::Tensor seq = geothinker::flatten_tokens(g);
          EXPECT_EQ(seq.shape, (geothinker::Shape{n * h * w, c}));
          TokenGrid back = geothinker::unflatten_tokens(seq, n, h, w, g.provenance);
          EXPECT_EQ(back.values, g.values);
        }
}

TEST(Flatten, TokenIndexMatchesCountingOracle) {
  TokenGrid g = random_grid(3, 4, 5, 2, Provenance::semantic, 13);
  // oracle: walk tokens in storage order and count
  long long counted = 0;
  for (int i = 0; i < g.n; ++i)
    for (int r = 0; r < g.h; ++r)
      for (int x = 0; x < g.w; ++x) {
        ASSERT_EQ(geothinker::token_index(g, i, r, x), counted);
        ASSERT_EQ(geothinker::token_index(g, i, r, x),
                  static_cast<long long>(i) * g.h * g.w + static_cast<long long>(r) * g.w + x);
        ++counted;
      }
  geothinker::Tensor seq = geothinker::flatten_tokens(g);
  for (int i = 0; i < g.n; ++i)
    for (int r = 0; r < g.h; ++r)
      for (int x = 0; x < g.w; ++x)
        for (int ch = 0; ch < g.c; ++ch)
          ASSERT_EQ(seq.data[geothinker::token_index(g, i, r, x) * g.c + ch], g.at(i, r, x, ch));
}

TEST(Container, RoundTripPreservesEverything) {
  for (Provenance p : {Provenance::semantic, Provenance::geometry}) {
    TokenGrid g = random_grid(2, 3, 4, 5, p, 21);
    std::stringstream ss;
    geothinker::save_tgrd(g, ss);
    TokenGrid back = geothinker::load_tgrd(ss);
    EXPECT_EQ(back.n, g.n);
    EXPECT_EQ(back.h, g.h);
    EXPECT_EQ(back.w, g.w);
    EXPECT_EQ(back.c, g.c);
    EXPECT_EQ(back.provenance, p);
    EXPECT_EQ(back.values, g.values);
  }
}

TEST(Container, RejectsBadInput) {
  std::stringstream bad("NOPE this is not a grid");
  EXPECT_THROW(geothinker::load_tgrd(bad), std::runtime_error);

  TokenGrid g = random_grid(1, 2, 2, 1, Provenance::semantic, 5);
  std::stringstream ss;
  geothinker::save_tgrd(g, ss);
  std::string full = ss.str();
  std::stringstream truncated(full.substr(0, full.size() - 3));
  EXPECT_THROW(geothinker::load_tgrd(truncated), std::runtime_error);

  TokenGrid nan_grid = g;
  nan_grid.values[1] = std::nan("");
  std::stringstream ss2;
  geothinker::save_tgrd(nan_grid, ss2);
  EXPECT_THROW(geothinker::load_tgrd(ss2), std::runtime_error);
}

TEST(Container, ChannelCsvHasHeaderFirst) {
  TokenGrid g(1, 2, 3, 1, Provenance::semantic);
  g.values = {0.5, 1.0, -1.25, 2.0, 0.0, 3.5};
  std::string path = "grid_channel_test.csv";
  geothinker::write_channel_csv(g, 0, 0, path);
  std::ifstream is(path);
  std::string line;
  ASSERT_TRUE(std::getline(is, line));
  EXPECT_EQ(line, "col0,col1,col2");
  ASSERT_TRUE(std::getline(is, line));
  EXPECT_EQ(line, "0.5,1,-1.25");
  ASSERT_TRUE(std::getline(is, line));
  EXPECT_EQ(line, "2,0,3.5");
  std::remove(path.c_str());
}

TEST(Container, TensorBridgeRoundTrip) {
  Rng rng(55);
  geothinker::Tensor w = geothinker::Tensor::zeros({3, 4});
  for (double& v : w.data) v = rng.uniform(-1, 1);
  TokenGrid g = geothinker::tensor_to_grid(w);
  EXPECT_EQ(g.h, 3);
  EXPECT_EQ(g.w, 4);
  geothinker::Tensor back = geothinker::grid_to_tensor(g, {3, 4});
  EXPECT_EQ(back.data, w.data);
}
