#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "uqseg/augment.hpp"
#include "uqseg/dataset.hpp"
#include "uqseg/error.hpp"
#include "uqseg/optim.hpp"
#include "uqseg/prompt.hpp"
#include "uqseg/refnet.hpp"
#include "uqseg/rng.hpp"

namespace uqseg {

/// Called after every optimizer step with (step index, loss).
using StepCallback = std::function<void(std::size_t, double)>;

/// Visits indices 0..n-1 in a fresh random permutation each epoch.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, Rng rng) : order_(n), rng_(std::move(rng)) {
    detail::require(n > 0, "EpochSampler: empty set");
  }

  std::size_t next() {
    if (pos_ == 0) shuffle();
    const std::size_t i = order_[pos_];
    pos_ = (pos_ + 1) % order_.size();
    return i;
  }

 private:
  void shuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.uniform_index(i)]);
  }

  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  Rng rng_;
};

inline void check_finite_loss(double loss, std::size_t step, const char* what) {
  if (!std::isfinite(loss)) {
    throw DivergenceError(std::string(what) + ": non-finite loss at step " + std::to_string(step));
  }
}

struct DecoderTrainConfig {
  std::size_t steps = 2000;
  OptimizerConfig optimizer{1e-4, 0.01, 0.1};
  double hflip_probability = 0.5;
  BoxNoise box_noise{};
  std::uint64_t seed = 0;
};

/// Single-image training example: optionally flipped image/mask and one prompt
/// drawn uniformly from the 8-step schedule, box jittered when present.
struct TrainingExample {
  MultiChannelGrid image;
  Grid2D mask;
  PromptSet prompt;
};

inline TrainingExample draw_training_example(const Sample& sample, Rng& rng, double hflip_probability,
                                             const BoxNoise& noise) {
  TrainingExample ex{sample.image, sample.mask, {}};
  if (hflip_probability > 0.0 && rng.bernoulli(hflip_probability)) {
    ex.image = hflip(ex.image);
    ex.mask = hflip(ex.mask);
  }
  const auto schedule = sample_prompt_schedule(ex.mask, rng);
  ex.prompt = schedule[rng.uniform_index(schedule.size())];
  if (ex.prompt.bbox) ex.prompt.bbox = perturb_bbox(*ex.prompt.bbox, rng, ex.mask.height(), ex.mask.width(), noise);
  return ex;
}

/// Trains the linear decoder (w, b) with batch size 1; the encoder is never
/// touched. Zero steps returns the model's current decoder.
inline LinearDecoder train_decoder(const RefNet& model, std::span<const Sample> fit_set,
                                   const DecoderTrainConfig& config, const StepCallback& on_step = {}) {
  detail::require(!fit_set.empty(), "train_decoder: empty fit set");
  const Rng base(config.seed);
  EpochSampler sampler(fit_set.size(), base.fork("train/order"));
  std::vector<double> params = model.decoder.pack();
  AdamW opt(params.size(), config.optimizer);
  RefNet working = model;
  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng rng = base.fork("train/step/" + std::to_string(step));
    const TrainingExample ex =
        draw_training_example(fit_set[sampler.next()], rng, config.hflip_probability, config.box_noise);
    working.decoder.unpack(params);
    const Tensor3 features = encode_features(working, ex.image, ex.prompt);
    const Grid<double> logits = decode_logits(features, working.decoder);
    const double loss = bce_loss_from_logits(logits, ex.mask);
    check_finite_loss(loss, step, "train_decoder");
    Grid<double> p(logits.height(), logits.width());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
    std::vector<double> grad = bce_grad(features, p, ex.mask).pack();
    opt.step(params, grad);
    if (on_step) on_step(step, loss);
  }
  LinearDecoder out = model.decoder;
  out.unpack(params);
  return out;
}

}  // namespace uqseg
