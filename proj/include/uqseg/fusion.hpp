#pragma once

// Dense embedding fusion refinement. An uncertainty map is encoded by a small
// conv stack, concatenated with the dense prompt channels and a prior
// prediction map, and mixed back down to the prompt channel count by a 1x1
// convolution. The fused channels replace the prompt channels in a second
// forward pass of the frozen model.

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uqseg/conv.hpp"
#include "uqseg/dataset.hpp"
#include "uqseg/error.hpp"
#include "uqseg/grid.hpp"
#include "uqseg/laplace.hpp"
#include "uqseg/metrics.hpp"
#include "uqseg/optim.hpp"
#include "uqseg/prompt.hpp"
#include "uqseg/refnet.hpp"
#include "uqseg/train.hpp"
#include "uqseg/uq.hpp"

namespace uqseg {

inline constexpr std::size_t kUncertaintyFeatures = 4;

/// Refinement variants, one per comparison row.
enum class FusionVariant {
  no_refine,        // baseline forward pass, no fusion
  fusion_sam_ones,  // prior = baseline map, U = ones
  fusion_la_ones,   // prior = Laplace mean map, U = ones
  fusion_la,        // prior = Laplace mean map, U = Laplace entropy
  upper_bound_gt,   // prior = ground-truth mask, U = zeros
};

inline constexpr std::array<FusionVariant, 5> kAllFusionVariants{
    FusionVariant::no_refine, FusionVariant::fusion_sam_ones, FusionVariant::fusion_la_ones, FusionVariant::fusion_la,
    FusionVariant::upper_bound_gt};

inline std::string_view to_string(FusionVariant v) {
  switch (v) {
    case FusionVariant::no_refine: return "no_refine";
    case FusionVariant::fusion_sam_ones: return "fusion_sam_ones";
    case FusionVariant::fusion_la_ones: return "fusion_la_ones";
    case FusionVariant::fusion_la: return "fusion_la";
    case FusionVariant::upper_bound_gt: return "upper_bound_gt";
  }
  return "no_refine";
}

inline FusionVariant fusion_variant_from_string(std::string_view s) {
  for (FusionVariant v : kAllFusionVariants) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("unknown refinement variant '" + std::string(s) + "'");
}

inline bool uses_laplace(FusionVariant v) {
  return v == FusionVariant::fusion_la_ones || v == FusionVariant::fusion_la;
}

/// Prior map plus uncertainty already normalized to [0, 1].
struct RefinementInput {
  Grid2D prior;
  Grid2D uncertainty;
  std::string tag;

  /// Entropy-based U, divided by ln 2.
  static RefinementInput from_entropy(Grid2D prior, const Grid2D& entropy, std::string tag = "entropy") {
    require_same_shape(prior, entropy, "RefinementInput");
    Grid2D u(entropy.height(), entropy.width());
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = static_cast<float>(std::clamp(entropy[i] / std::numbers::ln2, 0.0, 1.0));
    }
    return {std::move(prior), std::move(u), std::move(tag)};
  }

  /// Variance-based U, min-max normalized per image (constant maps become 0).
  static RefinementInput from_variance(Grid2D prior, const Grid2D& variance, std::string tag = "variance") {
    require_same_shape(prior, variance, "RefinementInput");
    const auto [lo, hi] = std::minmax_element(variance.begin(), variance.end());
    const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
    Grid2D u(variance.height(), variance.width());
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = range > 0.0 ? static_cast<float>((variance[i] - *lo) / range) : 0.0f;
    }
    return {std::move(prior), std::move(u), std::move(tag)};
  }

  static RefinementInput ones(Grid2D prior) {
    Grid2D u(prior.height(), prior.width(), 1.0f);
    return {std::move(prior), std::move(u), "(Ones Map)"};
  }

  static RefinementInput ground_truth(const Grid2D& mask) {
    return {mask, Grid2D(mask.height(), mask.width(), 0.0f), "Ground truth mask"};
  }
};

class FusionLayer {
 public:
  FusionLayer() = default;

  /// Identity wiring: the 1x1 conv passes the prompt channels through and puts
  /// zero weight on the prior and uncertainty features. The uncertainty
  /// encoder gets seeded random weights.
  static FusionLayer identity(std::size_t prompt_channels, std::uint64_t seed) {
    FusionLayer f;
    f.prompt_channels_ = prompt_channels;
    Rng rng(seed);
    Rng r1 = rng.fork("fusion/uncertainty/layer/0");
    Rng r2 = rng.fork("fusion/uncertainty/layer/1");
    f.uncertainty_encoder_ = ConvTanhStack({Conv2D::random(1, kUncertaintyFeatures, 3, r1),
                                            Conv2D::random(kUncertaintyFeatures, kUncertaintyFeatures, 3, r2)});
    f.fuse_ = Conv2D(prompt_channels + 1 + kUncertaintyFeatures, prompt_channels, 1);
    for (std::size_t c = 0; c < prompt_channels; ++c) f.fuse_.weight(c, 0, 0, c) = 1.0;
    return f;
  }

  [[nodiscard]] std::size_t prompt_channels() const noexcept { return prompt_channels_; }
  [[nodiscard]] const ConvTanhStack& uncertainty_encoder() const noexcept { return uncertainty_encoder_; }
  [[nodiscard]] const Conv2D& fuse() const noexcept { return fuse_; }
  Conv2D& fuse() noexcept { return fuse_; }

  [[nodiscard]] std::size_t parameter_count() const {
    return uncertainty_encoder_.parameter_count() + fuse_.parameter_count();
  }

  /// [uncertainty encoder (per layer: weights, bias) ; fuse weights ; fuse bias]
  [[nodiscard]] std::vector<double> pack() const {
    std::vector<double> p = uncertainty_encoder_.pack_parameters();
    p.insert(p.end(), fuse_.weights().begin(), fuse_.weights().end());
    p.insert(p.end(), fuse_.bias().begin(), fuse_.bias().end());
    return p;
  }

  void unpack(std::span<const double> p) {
    detail::require(p.size() == parameter_count(), "FusionLayer::unpack: size mismatch");
    const std::size_t n_enc = uncertainty_encoder_.parameter_count();
    uncertainty_encoder_.unpack_parameters(p.first(n_enc));
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(n_enc), fuse_.weights().size(), fuse_.weights().begin());
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(n_enc + fuse_.weights().size()), fuse_.bias().size(),
                fuse_.bias().begin());
  }

  struct Trace {
    ConvTanhStack::Trace uncertainty;
    Tensor3 fuse_input;
  };

  /// Fused replacement for the dense prompt channels.
  [[nodiscard]] Tensor3 fuse_channels(const Tensor3& prompt_channels, const RefinementInput& input,
                                      Trace* trace = nullptr) const {
    detail::require(prompt_channels.channels == prompt_channels_, "FusionLayer: prompt channel mismatch");
    detail::require(input.prior.height() == prompt_channels.height && input.prior.width() == prompt_channels.width,
                    "FusionLayer: prior map resolution mismatch");
    require_same_shape(input.prior, input.uncertainty, "FusionLayer");
    const Tensor3 prior = to_tensor(input.prior);
    const Tensor3 ufeat = uncertainty_encoder_.forward(to_tensor(input.uncertainty),
                                                       trace ? &trace->uncertainty : nullptr);
    Tensor3 cat = concat_channels({&prompt_channels, &prior, &ufeat});
    Tensor3 fused = fuse_.forward(cat);
    if (trace) trace->fuse_input = std::move(cat);
    return fused;
  }

  /// Backpropagates d loss / d fused channels into parameter gradients packed
  /// like pack().
  [[nodiscard]] std::vector<double> backward(const Trace& trace, const Tensor3& grad_fused) const {
    std::vector<double> grad(parameter_count(), 0.0);
    const std::size_t n_enc = uncertainty_encoder_.parameter_count();
    std::span<double> all(grad);
    fuse_.accumulate_parameter_grad(trace.fuse_input, grad_fused, all.subspan(n_enc, fuse_.weights().size()),
                                    all.subspan(n_enc + fuse_.weights().size(), fuse_.bias().size()));
    const Tensor3 grad_cat = fuse_.backward_input(grad_fused);
    const Tensor3 grad_ufeat = slice_channels(grad_cat, prompt_channels_ + 1, kUncertaintyFeatures);
    std::vector<double> enc_grad;
    (void)uncertainty_encoder_.backward(trace.uncertainty, grad_ufeat, &enc_grad);
    std::copy(enc_grad.begin(), enc_grad.end(), grad.begin());
    return grad;
  }

 private:
  std::size_t prompt_channels_ = 0;
  ConvTanhStack uncertainty_encoder_;
  Conv2D fuse_;
};

/// Second forward pass with fused prompt channels.
inline ForwardResult fuse_and_forward_full(const RefNet& model, const FusionLayer& fusion,
                                           const MultiChannelGrid& image, const PromptSet& prompt,
                                           const RefinementInput& input) {
  const Tensor3 pc = to_tensor(encode_prompt(prompt, image.height(), image.width()));
  return forward_with_prompt_channels(model, image, fusion.fuse_channels(pc, input));
}

inline Grid2D fuse_and_forward(const RefNet& model, const FusionLayer& fusion, const MultiChannelGrid& image,
                               const PromptSet& prompt, const RefinementInput& input) {
  return fuse_and_forward_full(model, fusion, image, prompt, input).probmap;
}

struct FusionLossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// BCE of the refined map and its gradient with respect to every fusion
/// parameter, backpropagated through the frozen encoder.
inline FusionLossAndGrad fusion_loss_and_grad(const RefNet& model, const FusionLayer& fusion,
                                              const MultiChannelGrid& image, const PromptSet& prompt,
                                              const RefinementInput& input, const Grid2D& mask) {
  const Tensor3 pc = to_tensor(encode_prompt(prompt, image.height(), image.width()));
  FusionLayer::Trace ftrace;
  const Tensor3 fused = fusion.fuse_channels(pc, input, &ftrace);
  ConvTanhStack::Trace etrace;
  const ForwardResult fwd = forward_with_prompt_channels(model, image, fused, &etrace);

  FusionLossAndGrad out;
  out.loss = bce_loss_from_logits(fwd.logits, mask);
  const Grid<double> dz = bce_logit_grad(fwd.logits, mask);
  Tensor3 dphi(fwd.features.height, fwd.features.width, fwd.features.channels);
  for (std::size_t i = 0; i < dz.size(); ++i) {
    for (std::size_t k = 0; k < dphi.channels; ++k) dphi.data[i * dphi.channels + k] = dz[i] * model.decoder.w[k];
  }
  const Tensor3 dinput = model.encoder.backward_input(etrace, std::move(dphi));
  const Tensor3 dfused =
      slice_channels(dinput, model.encoder.config().image_channels, model.encoder.config().prompt_channels);
  out.grad = fusion.backward(ftrace, dfused);
  return out;
}

struct FusionTrainConfig {
  std::size_t steps = 300;
  OptimizerConfig optimizer{1e-4, 0.01, 0.1};
  double hflip_probability = 0.5;
  BoxNoise box_noise{};
  std::size_t ensemble_size = kDefaultEnsembleSize;
  std::uint64_t seed = 0;
};

/// Builds the refinement input a variant sees for one (image, prompt). The
/// Laplace ensemble is drawn from `rng`; `base` is the frozen forward pass.
inline RefinementInput make_refinement_input(FusionVariant variant, const ForwardResult& base,
                                             const LaplacePosterior* posterior, const Grid2D& mask,
                                             std::size_t ensemble_size, const Rng& rng) {
  switch (variant) {
    case FusionVariant::fusion_sam_ones:
      return RefinementInput::ones(base.probmap);
    case FusionVariant::fusion_la_ones:
    case FusionVariant::fusion_la: {
      if (!posterior) throw ValidationError("refinement variant needs a Laplace posterior");
      const UQResult la = laplace_ensemble(base.features, *posterior, ensemble_size, rng);
      return variant == FusionVariant::fusion_la ? RefinementInput::from_entropy(la.mean, la.uncertainty, "LA")
                                                 : RefinementInput::ones(la.mean);
    }
    case FusionVariant::upper_bound_gt:
      return RefinementInput::ground_truth(mask);
    case FusionVariant::no_refine:
      break;
  }
  throw ValidationError("no_refine has no refinement input");
}

/// Trains only the fusion parameters on the fit set, starting from `fusion`
/// (normally the identity wiring). Laplace ensembles are resampled per step.
inline FusionLayer train_fusion(const RefNet& model, const FusionLayer& fusion, std::span<const Sample> fit_set,
                                FusionVariant variant, const LaplacePosterior* posterior,
                                const FusionTrainConfig& config, const StepCallback& on_step = {}) {
  detail::require(!fit_set.empty(), "train_fusion: empty fit set");
  detail::require(variant != FusionVariant::no_refine, "train_fusion: no_refine has nothing to train");
  const Rng base(config.seed);
  EpochSampler sampler(fit_set.size(), base.fork("fusion/order"));
  FusionLayer working = fusion;
  std::vector<double> params = working.pack();
  AdamW opt(params.size(), config.optimizer);
  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng rng = base.fork("fusion/step/" + std::to_string(step));
    const TrainingExample ex =
        draw_training_example(fit_set[sampler.next()], rng, config.hflip_probability, config.box_noise);
    const ForwardResult fwd = forward(model, ex.image, ex.prompt);
    const RefinementInput input =
        make_refinement_input(variant, fwd, posterior, ex.mask, config.ensemble_size, rng.fork("laplace"));
    working.unpack(params);
    FusionLossAndGrad lg = fusion_loss_and_grad(model, working, ex.image, ex.prompt, input, ex.mask);
    check_finite_loss(lg.loss, step, "train_fusion");
    opt.step(params, lg.grad);
    if (on_step) on_step(step, lg.loss);
  }
  working.unpack(params);
  return working;
}

/// Everything refine_eval needs for the requested variants. Fusion layers are
/// looked up by variant; the posterior is needed by the Laplace variants.
struct RefinementComponents {
  std::map<FusionVariant, FusionLayer> fusion;
  const LaplacePosterior* posterior = nullptr;
  std::size_t ensemble_size = kDefaultEnsembleSize;
  double laplace_noise_scale = 1.0;
};

struct RefineRecord {
  EvalRecord metrics;
  FusionVariant variant = FusionVariant::no_refine;
};

/// Stream label shared with the Laplace row of the evaluation, so the LA prior
/// map used here is the same P-bar that evaluation reports.
inline std::string laplace_stream_label(const Sample& s) { return "eval/" + s.dataset + "/" + s.id + "/laplace"; }

/// Refines every sample under every variant with its ground-truth box as the
/// prompt. U for the pearson column is the entropy of the row's own map.
inline std::vector<RefineRecord> refine_eval(const RefNet& model, const RefinementComponents& parts,
                                             std::span<const Sample> samples, std::span<const FusionVariant> variants,
                                             std::uint64_t seed, const MetricOptions& opt = {}) {
  for (FusionVariant v : variants) {
    if (v != FusionVariant::no_refine && !parts.fusion.contains(v)) {
      throw ValidationError("refine_eval: no trained fusion layer for variant " + std::string(to_string(v)));
    }
    if (uses_laplace(v) && !parts.posterior) {
      throw ValidationError("refine_eval: variant " + std::string(to_string(v)) + " needs a Laplace posterior");
    }
  }
  const Rng base(seed);
  std::vector<RefineRecord> out;
  for (const Sample& s : samples) {
    PromptSet prompt;
    prompt.bbox = bbox_from_mask(s.mask);
    const ForwardResult fwd = forward(model, s.image, prompt);
    std::optional<UQResult> la;
    for (FusionVariant v : variants) {
      Grid2D refined;
      if (v == FusionVariant::no_refine) {
        refined = fwd.probmap;
      } else {
        RefinementInput input;
        if (uses_laplace(v)) {
          if (!la) {
            la = laplace_ensemble(fwd.features, *parts.posterior, parts.ensemble_size,
                                  base.fork(laplace_stream_label(s)), parts.laplace_noise_scale);
          }
          input = v == FusionVariant::fusion_la ? RefinementInput::from_entropy(la->mean, la->uncertainty, "LA")
                                                : RefinementInput::ones(la->mean);
        } else {
          input = make_refinement_input(v, fwd, nullptr, s.mask, parts.ensemble_size, base);
        }
        refined = fuse_and_forward(model, parts.fusion.at(v), s.image, prompt, input);
      }
      out.push_back({evaluate_sample(s.id, s.dataset, std::string(to_string(v)), refined, predictive_entropy(refined),
                                     s.mask, opt),
                     v});
    }
  }
  return out;
}

}  // namespace uqseg
