#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace uqseg;

TEST(Closing, SolidSquareIsUnchanged) {
  const Grid2D sq = oracle::solid_rect(10, 10, 2, 2, 7, 7);
  EXPECT_EQ(morphological_close(sq), sq);
}

TEST(Closing, FillsOnePixelGapInStrip) {
  Grid2D strip(1, 5);
  for (std::size_t x : {0, 1, 3, 4}) strip(0, x) = 1.0f;
  const Grid2D closed = morphological_close(strip);
  for (std::size_t x = 0; x < 5; ++x) EXPECT_EQ(closed(0, x), 1.0f) << x;
}

TEST(Closing, EmptyStaysEmpty) {
  const Grid2D e(6, 6);
  EXPECT_EQ(morphological_close(e, 2), e);
}

TEST(Closing, IsExtensiveOnRandomMasks) {
  auto g = oracle::engine(11);
  for (int t = 0; t < 20; ++t) {
    const Grid2D m = oracle::random_mask(12, 9, 0.4, g);
    const Grid2D c = morphological_close(m);
    for (std::size_t i = 0; i < m.size(); ++i) ASSERT_GE(c[i], m[i]);
  }
}

TEST(Erode, BackgroundBorderErodesEdges) {
  const Grid2D full(3, 3, 1.0f);
  const Grid2D e = erode3x3(full, BorderMode::background);
  EXPECT_EQ(count_foreground(e), 1u);
  EXPECT_EQ(e(1, 1), 1.0f);
  EXPECT_EQ(erode3x3(full, BorderMode::ignore), full);
}

TEST(Components, DiagonalNeighboursJoin) {
  Grid2D m(3, 3);
  m(0, 0) = m(1, 1) = m(2, 2) = 1.0f;
  EXPECT_EQ(connected_components(m).size(), 1u);
}

TEST(Components, SeparatedBlobsSplit) {
  Grid2D m = oracle::solid_rect(8, 8, 0, 0, 1, 1);
  m(5, 5) = m(5, 6) = 1.0f;
  const auto cs = connected_components(m);
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(count_foreground(cs[0]), 4u);
  EXPECT_EQ(count_foreground(cs[1]), 2u);
}

TEST(Components, PartitionTheForeground) {
  auto g = oracle::engine(12);
  for (int t = 0; t < 20; ++t) {
    const Grid2D m = oracle::random_mask(10, 10, 0.3, g);
    Grid2D sum(10, 10);
    for (const auto& c : connected_components(m))
      for (std::size_t i = 0; i < c.size(); ++i) sum[i] += c[i];
    EXPECT_EQ(sum, m);
  }
}

TEST(CcaPipeline, LargeBlobSurvivesUnchanged) {
  const Grid2D m = oracle::solid_rect(64, 64, 10, 10, 49, 49);
  const auto out = cca_pipeline(m);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], m);
}

TEST(CcaPipeline, SmallBlobIsDropped) {
  const Grid2D m = oracle::solid_rect(64, 64, 5, 5, 34, 34);  // 900 pixels
  EXPECT_TRUE(cca_pipeline(m).empty());
}

TEST(CcaPipeline, OutputIsSubsetOfInput) {
  auto g = oracle::engine(13);
  const Grid2D m = oracle::random_mask(40, 40, 0.6, g);
  for (const auto& c : cca_pipeline(m, 50))
    for (std::size_t i = 0; i < c.size(); ++i) ASSERT_LE(c[i], m[i]);
}

TEST(ColourSplit, OneTargetPerColour) {
  MultiChannelGrid rgb(3, 2, 2);
  rgb(0, 0, 0) = 1.0f;                      // red at (0,0)
  rgb(1, 0, 1) = 1.0f;                      // green at (0,1)
  rgb(0, 1, 1) = 1.0f;                      // red at (1,1)
  const auto t = split_colour_coded(rgb);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].first, (Rgb8{255, 0, 0}));
  EXPECT_EQ(t[1].first, (Rgb8{0, 255, 0}));
  EXPECT_EQ(count_foreground(t[0].second), 2u);
  EXPECT_EQ(t[0].second(1, 1), 1.0f);
  EXPECT_EQ(count_foreground(t[1].second), 1u);
}

TEST(ColourSplit, UnionEqualsNonBlackPixels) {
  auto g = oracle::engine(14);
  std::uniform_int_distribution<int> pick(0, 3);
  MultiChannelGrid rgb(3, 9, 7);
  const float palette[4][3] = {{0, 0, 0}, {1, 0, 0}, {0, 0, 1}, {1, 1, 0}};
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 7; ++x) {
      const int k = pick(g);
      for (std::size_t c = 0; c < 3; ++c) rgb(c, y, x) = palette[k][c];
    }
  Grid2D sum(9, 7);
  for (const auto& [colour, m] : split_colour_coded(rgb))
    for (std::size_t i = 0; i < m.size(); ++i) sum[i] += m[i];
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const bool nonblack = rgb.channel(0)[i] + rgb.channel(1)[i] + rgb.channel(2)[i] > 0;
    EXPECT_EQ(sum[i], nonblack ? 1.0f : 0.0f);
  }
}

TEST(Percentile, InterpolatesBetweenOrderStatistics) {
  EXPECT_DOUBLE_EQ(percentile({3, 1, 2}, 50), 2.0);
  EXPECT_DOUBLE_EQ(percentile({0, 10}, 25), 2.5);
  EXPECT_DOUBLE_EQ(percentile({4}, 99), 4.0);
  EXPECT_THROW(percentile({}, 50), ValidationError);
}

TEST(NormalizeVolume, TwoVoxelsMapNearPlusMinusOne) {
  const Volume3D v(1, 1, 2, std::vector<float>{10.0f, 20.0f});
  const Volume3D l(1, 1, 2, 1.0f);
  const auto n = normalize_volume(v, l);
  // Clipping at the extreme percentiles pulls the two values in by 2 * 0.05%.
  EXPECT_NEAR(n(0, 0, 0), -1.0, 1.5e-3);
  EXPECT_NEAR(n(0, 0, 1), 1.0, 1.5e-3);
}

TEST(NormalizeVolume, RejectsDegenerateForeground) {
  const Volume3D v(1, 2, 2, 5.0f);
  EXPECT_THROW(normalize_volume(v, Volume3D(1, 2, 2, 1.0f)), ValidationError);
  EXPECT_THROW(normalize_volume(v, Volume3D(1, 2, 2, 0.0f)), ValidationError);
}

TEST(NormalizeVolume, ForegroundHasZeroMeanUnitStdBeforeClipping) {
  auto g = oracle::engine(15);
  std::normal_distribution<double> nd(40.0, 7.0);
  Volume3D v(4, 10, 10), l(4, 10, 10);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v.values()[i] = static_cast<float>(nd(g));
    l.values()[i] = (i % 3 == 0) ? 1.0f : 0.0f;
  }
  const auto n = normalize_volume(v, l);
  double s = 0, sq = 0, c = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (l.values()[i] < 0.5f) continue;
    s += n.values()[i];
    sq += n.values()[i] * n.values()[i];
    ++c;
  }
  const double mean = s / c;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(std::sqrt(sq / c - mean * mean), 1.0, 0.02);
}

TEST(SliceAxial, KeepsOnlySlicesWithLabels) {
  Volume3D v(3, 2, 2), l(3, 2, 2);
  for (std::size_t i = 0; i < v.size(); ++i) v.values()[i] = static_cast<float>(i);
  l(1, 0, 1) = 2.0f;
  const auto s = slice_axial(v, l);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].depth, 1u);
  EXPECT_EQ(s[0].image(0, 0), 4.0f);
  EXPECT_EQ(s[0].mask(0, 1), 1.0f);
  EXPECT_EQ(count_foreground(s[0].mask), 1u);
}
