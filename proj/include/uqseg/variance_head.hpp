#pragma once

// Learned heteroscedastic variance head on top of the frozen model:
//   s(i, j) = v . [phi(i, j); z(i, j)] + c,  clamped to [-10, 10],
// trained with
//   L = 1 / (2HW) * sum exp(-s) (M - sigmoid(z))^2 + s.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "uqseg/dataset.hpp"
#include "uqseg/error.hpp"
#include "uqseg/grid.hpp"
#include "uqseg/optim.hpp"
#include "uqseg/prompt.hpp"
#include "uqseg/refnet.hpp"
#include "uqseg/rng.hpp"
#include "uqseg/train.hpp"
#include "uqseg/uq.hpp"

namespace uqseg {

inline constexpr double kLogVarianceMin = -10.0;
inline constexpr double kLogVarianceMax = 10.0;

struct VarianceHead {
  std::vector<double> v;  // D + 1 entries, logit weight last
  double c = 0.0;

  VarianceHead() = default;
  explicit VarianceHead(std::size_t feature_dim) : v(feature_dim + 1, 0.0) {}

  [[nodiscard]] std::size_t feature_dim() const noexcept { return v.size() - 1; }

  /// Unclamped head output for one pixel.
  [[nodiscard]] double raw(std::span<const double> phi, double logit) const noexcept {
    double s = c + v.back() * logit;
    for (std::size_t k = 0; k + 1 < v.size(); ++k) s += v[k] * phi[k];
    return s;
  }

  [[nodiscard]] std::vector<double> pack() const {
    std::vector<double> p = v;
    p.push_back(c);
    return p;
  }
  void unpack(std::span<const double> p) {
    detail::require(p.size() == v.size() + 1, "VarianceHead::unpack: size mismatch");
    std::copy_n(p.begin(), v.size(), v.begin());
    c = p.back();
  }
  friend bool operator==(const VarianceHead&, const VarianceHead&) = default;
};

/// Clamped log-variance map.
inline Grid<double> head_log_variance(const VarianceHead& head, const Tensor3& features, const Grid<double>& logits) {
  detail::require(features.channels == head.feature_dim(), "head_log_variance: feature dimension mismatch");
  Grid<double> s(logits.height(), logits.width());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = std::clamp(head.raw(features.pixel(i), logits[i]), kLogVarianceMin, kLogVarianceMax);
  }
  return s;
}

template <typename P, typename S>
double heteroscedastic_loss(const Grid<P>& probmap, const Grid2D& mask, const Grid<S>& logvar) {
  require_same_shape(probmap, mask, "heteroscedastic_loss");
  require_same_shape(probmap, logvar, "heteroscedastic_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < probmap.size(); ++i) {
    const double s = std::clamp(static_cast<double>(logvar[i]), kLogVarianceMin, kLogVarianceMax);
    const double err = static_cast<double>(mask[i]) - static_cast<double>(probmap[i]);
    total += std::exp(-s) * err * err + s;
  }
  return total / (2.0 * static_cast<double>(probmap.size()));
}

/// d L / d s per pixel: (1 / 2HW)(1 - exp(-s) err^2); zero where the raw head
/// output sits outside the clamp range.
inline Grid<double> heteroscedastic_logvar_grad(const Grid<double>& probmap, const Grid2D& mask,
                                                const Grid<double>& raw_logvar) {
  Grid<double> g(probmap.height(), probmap.width());
  const double scale = 1.0 / (2.0 * static_cast<double>(probmap.size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double s = raw_logvar[i];
    if (s < kLogVarianceMin || s > kLogVarianceMax) continue;
    const double err = static_cast<double>(mask[i]) - probmap[i];
    g[i] = scale * (1.0 - std::exp(-s) * err * err);
  }
  return g;
}

struct HeadLossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // packed like VarianceHead::pack()
};

/// Loss and gradient for one forward pass of the frozen model.
inline HeadLossAndGrad heteroscedastic_head_grad(const VarianceHead& head, const Tensor3& features,
                                                 const Grid<double>& logits, const Grid2D& mask) {
  Grid<double> p(logits.height(), logits.width());
  Grid<double> raw(logits.height(), logits.width());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = sigmoid(logits[i]);
    raw[i] = head.raw(features.pixel(i), logits[i]);
  }
  HeadLossAndGrad out;
  out.loss = heteroscedastic_loss(p, mask, raw);
  const Grid<double> ds = heteroscedastic_logvar_grad(p, mask, raw);
  const std::size_t d = head.feature_dim();
  out.grad.assign(d + 2, 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds[i] == 0.0) continue;
    const auto phi = features.pixel(i);
    for (std::size_t k = 0; k < d; ++k) out.grad[k] += ds[i] * phi[k];
    out.grad[d] += ds[i] * logits[i];
    out.grad[d + 1] += ds[i];
  }
  return out;
}

struct VarianceHeadTrainConfig {
  std::size_t steps = 500;
  OptimizerConfig optimizer{1e-4, 1e-4, 0.1};
  std::uint64_t seed = 0;
};

/// Each step takes one image, sums the heteroscedastic loss over all 8 prompts
/// of its schedule and applies a single update to (v, c). The model is only
/// read.
inline VarianceHead train_variance_head(const RefNet& model, std::span<const Sample> fit_set,
                                        const VarianceHeadTrainConfig& config, const StepCallback& on_step = {}) {
  detail::require(!fit_set.empty(), "train_variance_head: empty fit set");
  const Rng base(config.seed);
  EpochSampler sampler(fit_set.size(), base.fork("varnet/order"));
  VarianceHead head(model.encoder.feature_dim());
  std::vector<double> params = head.pack();
  AdamW opt(params.size(), config.optimizer);
  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng rng = base.fork("varnet/step/" + std::to_string(step));
    const Sample& sample = fit_set[sampler.next()];
    head.unpack(params);
    std::vector<double> grad(params.size(), 0.0);
    double loss = 0.0;
    for (const PromptSet& prompt : sample_prompt_schedule(sample.mask, rng)) {
      const Tensor3 features = encode_features(model, sample.image, prompt);
      const Grid<double> logits = decode_logits(features, model.decoder);
      const HeadLossAndGrad lg = heteroscedastic_head_grad(head, features, logits, sample.mask);
      loss += lg.loss;
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += lg.grad[k];
    }
    check_finite_loss(loss, step, "train_variance_head");
    opt.step(params, grad);
    if (on_step) on_step(step, loss);
  }
  head.unpack(params);
  return head;
}

enum class VarianceOutput { variance, log_variance };

/// Deterministic uncertainty: mean map is the frozen model's prediction, U is
/// exp(s) (or s itself with log_variance output).
inline UQResult uq_varnet(const RefNet& model, const VarianceHead& head, const MultiChannelGrid& image,
                          const PromptSet& prompt, VarianceOutput output = VarianceOutput::variance) {
  const ForwardResult fwd = forward(model, image, prompt);
  const Grid<double> s = head_log_variance(head, fwd.features, fwd.logits);
  UQResult r;
  r.mean = fwd.probmap;
  r.uncertainty = Grid2D(s.height(), s.width());
  for (std::size_t i = 0; i < s.size(); ++i) {
    r.uncertainty[i] = static_cast<float>(output == VarianceOutput::variance ? std::exp(s[i]) : s[i]);
  }
  r.method = "varnet";
  r.ensemble_size = 1;
  return r;
}

}  // namespace uqseg
