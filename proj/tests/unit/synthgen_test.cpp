#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"

using namespace uqseg;

namespace {

double luma_gap(const Scene& s) {
  double in = 0, out = 0, nin = 0, nout = 0;
  for (std::size_t i = 0; i < s.mask.size(); ++i) {
    const double l = luma(s.image.channel(0)[i], s.image.channel(1)[i], s.image.channel(2)[i]);
    if (s.mask[i] > 0.5f) {
      in += l;
      ++nin;
    } else {
      out += l;
      ++nout;
    }
  }
  return std::abs(in / nin - out / nout);
}

Scene make(ChallengeKind kind, double intensity, std::uint64_t seed, ShapeFamily shape = ShapeFamily::ellipse) {
  SceneSpec spec;
  spec.kind = kind;
  spec.intensity = intensity;
  spec.shape = shape;
  Rng rng(seed);
  return generate_scene(spec, rng);
}

}  // namespace

TEST(Synth, CleanObjectsStandOut) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto shape = static_cast<ShapeFamily>(s % 3);
    EXPECT_GE(luma_gap(make(ChallengeKind::clean, 0.0, s, shape)), 0.2) << s;
  }
}

TEST(Synth, CamouflageHidesObjectsAtFullIntensity) {
  for (std::uint64_t s = 0; s < 30; ++s) EXPECT_LE(luma_gap(make(ChallengeKind::camouflage, 1.0, s)), 0.15) << s;
}

TEST(Synth, EveryKindProducesValidScenes) {
  for (const auto kind : kAllChallengeKinds) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Scene sc = make(kind, 0.8, s, static_cast<ShapeFamily>(s % 3));
      ASSERT_EQ(sc.image.channels(), 3u);
      EXPECT_GE(count_foreground(sc.mask), 16u);
      for (std::size_t c = 0; c < 3; ++c)
        for (float v : sc.image.channel(c)) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
      for (float v : sc.mask) ASSERT_TRUE(v == 0.0f || v == 1.0f);
    }
    EXPECT_EQ(challenge_from_string(to_string(kind)), kind);
  }
}

TEST(Synth, SameSeedSameScene) {
  const Scene a = make(ChallengeKind::noise, 0.7, 9);
  const Scene b = make(ChallengeKind::noise, 0.7, 9);
  const Scene c = make(ChallengeKind::noise, 0.7, 10);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_FALSE(a.image == c.image);
}

TEST(Synth, RejectsTinyObjects) {
  SceneSpec spec;
  spec.min_radius = 1.0;
  spec.max_radius = 2.0;  // pi * 4 < 16
  Rng rng(0);
  EXPECT_THROW(generate_scene(spec, rng), ValidationError);
  spec.max_radius = 40.0;
  EXPECT_THROW(generate_scene(spec, rng), ValidationError);
}

TEST(BBoxFromMask, TightInclusiveBox) {
  const Grid2D m = oracle::solid_rect(10, 12, 2, 3, 5, 8);
  EXPECT_EQ(bbox_from_mask(m), (BBox{3, 2, 8, 5}));
  Grid2D p(4, 4);
  p(1, 2) = 1.0f;
  const BBox b = bbox_from_mask(p);
  EXPECT_EQ(b, (BBox{2, 1, 2, 1}));
  EXPECT_EQ(b.width(), 1);
  EXPECT_THROW(bbox_from_mask(Grid2D(3, 3)), ValidationError);
}

TEST(GenerateDataset, WritesCountFilesAndManifest) {
  const auto dir = oracle::temp_dir("gen");
  GenerateOptions opt;
  opt.kind = ChallengeKind::flare;
  opt.count = 7;
  opt.seed = 3;
  const auto m = generate_dataset(dir / "eval_flare", opt);
  ASSERT_EQ(m.records.size(), 7u);
  const auto samples = load_dataset(dir / "eval_flare");
  ASSERT_EQ(samples.size(), 7u);
  EXPECT_EQ(samples[3].id, "0003_0");
  EXPECT_EQ(samples[3].dataset, "eval_flare");
  std::set<std::uint64_t> seeds;
  for (const auto& r : m.records) {
    EXPECT_EQ(r.kind, "flare");
    seeds.insert(r.seed);
  }
  EXPECT_EQ(seeds.size(), 7u);
  EXPECT_EQ(read_manifest(dir / "eval_flare" / "manifest.json").records, m.records);
}

TEST(GenerateDataset, RegenerationIsByteIdentical) {
  const auto dir = oracle::temp_dir("gen2");
  GenerateOptions opt;
  opt.kind = ChallengeKind::shadow;
  opt.count = 3;
  generate_dataset(dir / "a", opt);
  generate_dataset(dir / "b", opt);
  for (const char* f : {"manifest.json", "images/0002.ppm", "masks/0001_0.pgm"}) {
    EXPECT_EQ(read_text_file(dir / "a" / f), read_text_file(dir / "b" / f)) << f;
  }
}
