#include <gtest/gtest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace uqseg;

namespace {

RefinementInput random_input(std::size_t h, std::size_t w, std::mt19937_64& g) {
  return {oracle::random_map(h, w, g), oracle::random_map(h, w, g), "random"};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST(FusionVariants, NamesRoundTrip) {
  for (FusionVariant v : kAllFusionVariants) EXPECT_EQ(fusion_variant_from_string(to_string(v)), v);
  EXPECT_THROW(fusion_variant_from_string("fusion_magic"), ValidationError);
}

TEST(RefinementInput, Normalizations) {
  const Grid2D prior(1, 3, 0.5f);
  const auto e = RefinementInput::from_entropy(prior, Grid2D(1, 3, std::vector<float>{0.0f, 0.3465736f, 0.6931472f}));
  EXPECT_NEAR(e.uncertainty[1], 0.5f, 1e-6);
  EXPECT_NEAR(e.uncertainty[2], 1.0f, 1e-6);
  const auto v = RefinementInput::from_variance(prior, Grid2D(1, 3, std::vector<float>{2.0f, 4.0f, 3.0f}));
  EXPECT_FLOAT_EQ(v.uncertainty[0], 0.0f);
  EXPECT_FLOAT_EQ(v.uncertainty[1], 1.0f);
  EXPECT_FLOAT_EQ(v.uncertainty[2], 0.5f);
  for (float u : RefinementInput::ones(prior).uncertainty) EXPECT_EQ(u, 1.0f);
  const Grid2D m = oracle::solid_rect(3, 3, 0, 0, 1, 1);
  const auto gt = RefinementInput::ground_truth(m);
  EXPECT_EQ(gt.prior, m);
  for (float u : gt.uncertainty) EXPECT_EQ(u, 0.0f);
}

TEST(Fusion, IdentityWiringReproducesBaseModelExactly) {
  const RefNet model = fixture::tiny_model(3);
  const auto s = fixture::samples(3, 16, 3);
  const FusionLayer id = FusionLayer::identity(kPromptChannels, 7);
  auto g = oracle::engine(40);
  for (const auto& x : s) {
    const PromptSet p = fixture::box_prompt(x.mask);
    EXPECT_EQ(fuse_and_forward(model, id, x.image, p, random_input(16, 16, g)), forward(model, x.image, p).probmap);
  }
}

TEST(Fusion, PackUnpackRoundTrip) {
  FusionLayer f = FusionLayer::identity(kPromptChannels, 1);
  std::vector<double> p = f.pack();
  ASSERT_EQ(p.size(), f.parameter_count());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(i) * 0.01;
  f.unpack(p);
  EXPECT_EQ(f.pack(), p);
  EXPECT_THROW(f.unpack(std::vector<double>(3)), ValidationError);
}

TEST(Fusion, GradientMatchesFiniteDifferencesOverAllParameters) {
  const RefNet model = fixture::tiny_model(4, {8, 8});
  auto g = oracle::engine(41);
  std::normal_distribution<double> n(0, 1);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    FusionLayer f = FusionLayer::identity(kPromptChannels, static_cast<std::uint64_t>(inst));
    // Randomize the fuse conv so every parameter carries gradient.
    for (double& w : f.fuse().weights()) w += 0.3 * n(g);
    for (double& b : f.fuse().bias()) b = 0.1 * n(g);
    const MultiChannelGrid image(std::vector<Grid2D>{oracle::random_map(8, 8, g), oracle::random_map(8, 8, g),
                                                     oracle::random_map(8, 8, g)});
    const Grid2D mask = oracle::solid_rect(8, 8, 2, 2, 5, 6);
    const PromptSet prompt = fixture::box_prompt(mask);
    const RefinementInput input = random_input(8, 8, g);
    const auto lg = fusion_loss_and_grad(model, f, image, prompt, input, mask);
    const std::vector<double> theta = f.pack();
    auto loss = [&](const std::vector<double>& th) {
      FusionLayer h = f;
      h.unpack(th);
      return bce_loss_from_logits(fuse_and_forward_full(model, h, image, prompt, input).logits, mask);
    };
    EXPECT_NEAR(lg.loss, loss(theta), 1e-12);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double fd = oracle::central_diff(loss, theta, k, 1e-5);
      const double err = std::abs(lg.grad[k] - fd) / std::max({std::abs(lg.grad[k]), std::abs(fd), 1e-6});
      worst = std::max(worst, err);
      EXPECT_LT(err, 1e-4) << "instance " << inst << " parameter " << k << " analytic " << lg.grad[k] << " fd " << fd;
    }
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Fusion, ZeroStepsReturnsInitialLayer) {
  const RefNet model = fixture::tiny_model(5);
  const auto fit = fixture::samples(3, 16, 5);
  const FusionLayer id = FusionLayer::identity(kPromptChannels, 2);
  FusionTrainConfig cfg;
  cfg.steps = 0;
  EXPECT_EQ(train_fusion(model, id, fit, FusionVariant::fusion_sam_ones, nullptr, cfg).pack(), id.pack());
  EXPECT_THROW(train_fusion(model, id, fit, FusionVariant::no_refine, nullptr, cfg), ValidationError);
  cfg.steps = 1;
  EXPECT_THROW(train_fusion(model, id, fit, FusionVariant::fusion_la, nullptr, cfg), ValidationError);
}

TEST(Fusion, TrainingLeavesBaseModelFrozenAndOutputsValid) {
  const RefNet model = fixture::tiny_model(6);
  const auto enc = model.encoder.parameters();
  const auto fit = fixture::samples(4, 16, 6);
  LaplaceFitConfig lcfg;
  const auto post = fit_laplace(model, fit, lcfg);
  FusionTrainConfig cfg;
  cfg.steps = 10;
  cfg.ensemble_size = 3;
  cfg.optimizer.learning_rate = 1e-2;
  const FusionLayer id = FusionLayer::identity(kPromptChannels, 3);
  const FusionLayer trained = train_fusion(model, id, fit, FusionVariant::fusion_la, &post, cfg);
  EXPECT_EQ(model.encoder.parameters(), enc);
  EXPECT_NE(trained.pack(), id.pack());
  EXPECT_EQ(train_fusion(model, id, fit, FusionVariant::fusion_la, &post, cfg).pack(), trained.pack());
  auto g = oracle::engine(42);
  const auto out = fuse_and_forward(model, trained, fit[0].image, fixture::box_prompt(fit[0].mask), random_input(16, 16, g));
  for (float v : out) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
}

TEST(Fusion, GroundTruthVariantLowersTrainingLoss) {
  // Median over seeds of (final BCE on the fit set) < (identity BCE).
  std::vector<double> gains;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RefNet model(fixture::tiny_encoder(seed));
    const auto fit = fixture::samples(6, 16, seed);
    DecoderTrainConfig dcfg;
    dcfg.steps = 100;
    dcfg.optimizer.learning_rate = 1e-2;
    model.decoder = train_decoder(model, fit, dcfg);
    const FusionLayer id = FusionLayer::identity(kPromptChannels, seed);
    FusionTrainConfig cfg;
    cfg.steps = 80;
    cfg.optimizer.learning_rate = 1e-2;
    cfg.seed = seed;
    const FusionLayer trained = train_fusion(model, id, fit, FusionVariant::upper_bound_gt, nullptr, cfg);
    double before = 0, after = 0;
    for (const auto& s : fit) {
      const PromptSet p = fixture::box_prompt(s.mask);
      const auto in = RefinementInput::ground_truth(s.mask);
      before += bce_loss_from_logits(fuse_and_forward_full(model, id, s.image, p, in).logits, s.mask);
      after += bce_loss_from_logits(fuse_and_forward_full(model, trained, s.image, p, in).logits, s.mask);
    }
    gains.push_back(before - after);
  }
  EXPECT_GT(median(gains), 0.0);
}

TEST(RefineEval, RecordsEveryVariantPerSample) {
  const RefNet model = fixture::tiny_model(7);
  auto samples = fixture::samples(3, 16, 7);
  for (auto& s : samples) s.dataset = "eval_shadow";
  const auto post = fit_laplace(model, samples, {});
  RefinementComponents parts;
  parts.posterior = &post;
  parts.ensemble_size = 3;
  for (FusionVariant v : kAllFusionVariants)
    if (v != FusionVariant::no_refine) parts.fusion.emplace(v, FusionLayer::identity(kPromptChannels, 1));
  const std::vector<FusionVariant> variants(kAllFusionVariants.begin(), kAllFusionVariants.end());
  const auto recs = refine_eval(model, parts, samples, variants, 11);
  ASSERT_EQ(recs.size(), samples.size() * variants.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto base = forward(model, s.image, fixture::box_prompt(s.mask)).probmap;
    for (std::size_t j = 0; j < variants.size(); ++j) {
      const auto& r = recs[i * variants.size() + j];
      EXPECT_EQ(r.variant, variants[j]);
      EXPECT_EQ(r.metrics.method, to_string(variants[j]));
      EXPECT_EQ(r.metrics.sample, s.id);
      // Identity wiring ignores the refinement input, so every row equals
      // the unrefined prediction.
      const auto expected = evaluate_sample(s.id, s.dataset, r.metrics.method, base, predictive_entropy(base), s.mask);
      EXPECT_EQ(r.metrics.iou, expected.iou);
      EXPECT_EQ(r.metrics.pearson, expected.pearson);
    }
  }
  RefinementComponents missing;
  EXPECT_THROW(refine_eval(model, missing, samples, variants, 11), ValidationError);
}
