#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace uqseg;

TEST(EncodePrompt, BoxChannels) {
  PromptSet p;
  p.bbox = BBox{1, 1, 3, 3};
  const auto e = encode_prompt(p, 6, 8);
  const double diag = 10.0;
  EXPECT_EQ(e(0, 2, 2), 1.0f);
  EXPECT_EQ(e(0, 0, 0), 0.0f);
  EXPECT_FLOAT_EQ(e(1, 2, 2), static_cast<float>(1.0 / diag));   // one pixel from every edge
  EXPECT_FLOAT_EQ(e(1, 1, 1), 0.0f);                             // on the edge
  EXPECT_FLOAT_EQ(e(1, 1, 7), static_cast<float>(-4.0 / diag));  // four columns right of x1
  EXPECT_FLOAT_EQ(e(1, 5, 5), static_cast<float>(-std::sqrt(8.0) / diag));
  for (std::size_t c : {2u, 3u})
    for (float v : e.channel(c)) EXPECT_EQ(v, 0.0f);
}

TEST(EncodePrompt, PointGaussians) {
  PromptSet p;
  p.points = {{2, 3, PointLabel::foreground}, {5, 5, PointLabel::background}};
  const auto e = encode_prompt(p, 8, 8);
  EXPECT_NEAR(e(2, 2, 3), 1.0, 1e-6);
  EXPECT_NEAR(e(2, 2, 4), std::exp(-1.0 / 8.0), 1e-6);
  EXPECT_NEAR(std::exp(-1.0 / 8.0), 0.8825, 1e-4);
  EXPECT_NEAR(e(3, 5, 5), 1.0, 1e-6);
  EXPECT_NEAR(e(3, 2, 3), std::exp(-13.0 / 8.0), 1e-6);
  for (float v : e.channel(0)) EXPECT_EQ(v, 0.0f);
}

TEST(Forward, ZeroDecoderGivesOneHalf) {
  RefNet m(fixture::tiny_encoder());
  const auto s = fixture::samples(1);
  const auto r = forward(m, s[0].image, fixture::box_prompt(s[0].mask));
  for (float v : r.probmap) EXPECT_EQ(v, 0.5f);
}

TEST(Forward, LargeBiasSaturates) {
  RefNet m(fixture::tiny_encoder());
  m.decoder.b = 20.0;
  const auto s = fixture::samples(1);
  const auto r = forward(m, s[0].image, fixture::box_prompt(s[0].mask));
  for (float v : r.probmap) EXPECT_NEAR(v, 1.0f, 1e-8);
}

TEST(Forward, RejectsEmptyPromptAndWrongChannels) {
  RefNet m(fixture::tiny_encoder());
  const auto s = fixture::samples(1);
  EXPECT_THROW(forward(m, s[0].image, PromptSet{}), ValidationError);
  EXPECT_THROW(forward(m, MultiChannelGrid(2, 16, 16), fixture::box_prompt(s[0].mask)), ValidationError);
}

TEST(Encoder, MatchesNaiveConvolutionOn4x4) {
  const auto cfg = fixture::tiny_encoder(5, {3, 2});
  const Encoder enc(cfg);
  auto g = oracle::engine(5);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor3 x(4, 4, cfg.input_channels());
  for (double& v : x.data) v = u(g);

  std::vector<double> act = x.data;
  std::size_t cin = cfg.input_channels();
  for (const auto& layer : enc.stack().layers()) {
    act = oracle::conv_tanh_naive(act, 4, 4, cin, layer.weights(), layer.bias(), layer.out_channels(), 3);
    cin = layer.out_channels();
  }
  const Tensor3 y = enc.forward(x);
  ASSERT_EQ(y.data.size(), act.size());
  for (std::size_t i = 0; i < act.size(); ++i) EXPECT_NEAR(y.data[i], act[i], 1e-12);
}

TEST(Encoder, WeightsArePureFunctionOfSeed) {
  EXPECT_EQ(Encoder(fixture::tiny_encoder(3)).parameters(), Encoder(fixture::tiny_encoder(3)).parameters());
  EXPECT_NE(Encoder(fixture::tiny_encoder(3)).parameters(), Encoder(fixture::tiny_encoder(4)).parameters());
}

TEST(PromptSchedule, EightCumulativeSteps) {
  const auto s = fixture::samples(1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto sched = sample_prompt_schedule(s[0].mask, rng);
    ASSERT_EQ(sched.size(), kScheduleSteps);
    const std::size_t first_points = sched[0].points.size();
    EXPECT_TRUE(sched[0].bbox.has_value() != (first_points == 1));
    for (std::size_t k = 0; k < sched.size(); ++k) {
      EXPECT_EQ(sched[k].points.size(), first_points + k);
      EXPECT_EQ(sched[k].bbox, sched[0].bbox);
      for (const auto& p : sched[k].points) {
        const bool inside = s[0].mask(static_cast<std::size_t>(p.y), static_cast<std::size_t>(p.x)) > 0.5f;
        EXPECT_EQ(inside, p.label == PointLabel::foreground);
      }
      if (k > 0) {
        for (std::size_t j = 0; j < sched[k - 1].points.size(); ++j) EXPECT_EQ(sched[k].points[j], sched[k - 1].points[j]);
      }
    }
    Rng replay(seed);
    EXPECT_EQ(sample_prompt_schedule(s[0].mask, replay), sched);
  }
}

TEST(PerturbBox, ZeroNoiseIsIdentity) {
  Rng rng(1);
  const BBox b{3, 4, 20, 30};
  EXPECT_EQ(perturb_bbox(b, rng, 64, 64, {0.0, 20.0}), b);
}

TEST(PerturbBox, ShiftNeverExceedsCap) {
  Rng rng(2);
  const BBox b{50, 50, 349, 349};  // 300 px box in a 400 px image
  int max_shift = 0;
  for (int t = 0; t < 2000; ++t) {
    const BBox p = perturb_bbox(b, rng, 400, 400, {0.1, 20.0});
    for (int d : {p.x0 - b.x0, p.y0 - b.y0, p.x1 - b.x1, p.y1 - b.y1}) max_shift = std::max(max_shift, std::abs(d));
  }
  EXPECT_EQ(max_shift, 20);
}

TEST(PerturbBox, ResultStaysValid) {
  Rng rng(3);
  auto g = oracle::engine(3);
  std::uniform_int_distribution<int> c(0, 31);
  for (int t = 0; t < 500; ++t) {
    int x0 = c(g), x1 = c(g), y0 = c(g), y1 = c(g);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    const BBox p = perturb_bbox({x0, y0, x1, y1}, rng, 32, 32, {0.5, 20.0});
    ASSERT_TRUE(p.valid_for(32, 32));
  }
}

TEST(Bce, HalfProbabilityGivesLn2) {
  const Grid2D p(3, 3, 0.5f);
  auto g = oracle::engine(6);
  EXPECT_NEAR(bce_loss(p, oracle::random_mask(3, 3, 0.5, g)), std::log(2.0), 1e-12);
}

TEST(Bce, PerfectPredictionIsNearZero) {
  auto g = oracle::engine(7);
  const Grid2D m = oracle::random_mask(4, 4, 0.5, g);
  EXPECT_NEAR(bce_loss(m, m), -std::log(1.0 - kProbClamp), 1e-12);
}

TEST(Bce, LogitFormMatchesSoftplusOracle) {
  auto g = oracle::engine(8);
  std::normal_distribution<double> n(0, 3);
  Grid<double> z(5, 5);
  for (double& v : z) v = n(g);
  const Grid2D m = oracle::random_mask(5, 5, 0.5, g);
  const std::vector<double> zv(z.begin(), z.end());
  EXPECT_NEAR(bce_loss_from_logits(z, m), oracle::summed_bce_from_logits(zv, m) / 25.0, 1e-10);
}

TEST(Bce, ClosedFormGradientMatchesFiniteDifferences) {
  auto g = oracle::engine(9);
  std::normal_distribution<double> n(0, 1);
  for (int inst = 0; inst < 20; ++inst) {
    Tensor3 phi(6, 6, 5);
    for (double& v : phi.data) v = std::tanh(n(g));
    const Grid2D m = oracle::random_mask(6, 6, 0.4, g);
    std::vector<double> theta(6);
    for (double& t : theta) t = n(g);
    auto loss = [&](const std::vector<double>& th) {
      std::vector<double> z(36);
      for (std::size_t i = 0; i < 36; ++i) {
        z[i] = th[5];
        for (std::size_t k = 0; k < 5; ++k) z[i] += th[k] * phi.pixel(i)[k];
      }
      return oracle::summed_bce_from_logits(z, m) / 36.0;
    };
    LinearDecoder dec(5);
    dec.unpack(theta);
    Grid<double> p(6, 6);
    const auto z = decode_logits(phi, dec);
    for (std::size_t i = 0; i < 36; ++i) p[i] = sigmoid(z[i]);
    const auto exact = bce_grad(phi, p, m).pack();
    for (std::size_t k = 0; k < 6; ++k) {
      const double fd = oracle::central_diff(loss, theta, k, 1e-5);
      EXPECT_LT(oracle::rel_err(exact[k], fd, 1e-8), 1e-5) << inst << "/" << k;
    }
  }
}

TEST(TrainDecoder, ZeroStepsReturnsCurrentDecoder) {
  const RefNet m = fixture::tiny_model();
  const auto fit = fixture::samples(3);
  DecoderTrainConfig cfg;
  cfg.steps = 0;
  EXPECT_EQ(train_decoder(m, fit, cfg), m.decoder);
}

TEST(TrainDecoder, EncoderStaysFrozenAndLossDrops) {
  RefNet m(fixture::tiny_encoder());
  const auto before = m.encoder.parameters();
  const auto fit = fixture::samples(6);
  DecoderTrainConfig cfg;
  cfg.steps = 150;
  cfg.optimizer.learning_rate = 1e-2;
  std::vector<double> losses;
  const auto dec = train_decoder(m, fit, cfg, [&](std::size_t, double l) { losses.push_back(l); });
  EXPECT_EQ(m.encoder.parameters(), before);
  EXPECT_NE(dec, m.decoder);
  ASSERT_EQ(losses.size(), 150u);
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    head += losses[i];
    tail += losses[losses.size() - 1 - i];
  }
  EXPECT_LT(tail, head);
  // Same config, same decoder.
  EXPECT_EQ(train_decoder(m, fit, cfg), dec);
}
