#pragma once

// Ensemble-based pixel uncertainty: members P_1..P_N are averaged into the
// mean map and U is the binary predictive entropy of that mean.

#include <cmath>
#include <concepts>
#include <numbers>
#include <string>
#include <vector>

#include "uqseg/augment.hpp"
#include "uqseg/error.hpp"
#include "uqseg/grid.hpp"
#include "uqseg/prompt.hpp"
#include "uqseg/refnet.hpp"
#include "uqseg/rng.hpp"

namespace uqseg {

inline constexpr std::size_t kDefaultEnsembleSize = 10;

struct UQResult {
  Grid2D mean;
  Grid2D uncertainty;
  std::vector<Grid2D> members;
  std::string method;
  std::size_t ensemble_size = 0;
};

/// Natural-log binary entropy with 0 log 0 = 0.
inline double binary_entropy(double p) noexcept {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

inline Grid2D predictive_entropy(const Grid2D& pbar) {
  Grid2D u(pbar.height(), pbar.width());
  for (std::size_t i = 0; i < pbar.size(); ++i) {
    const double p = pbar[i];
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("predictive_entropy: value outside [0, 1]");
    u[i] = static_cast<float>(binary_entropy(p));
  }
  return u;
}

/// Pixelwise mean of the members (accumulated in double) and its entropy.
inline UQResult ensemble(std::vector<Grid2D> members, std::string method = "ensemble") {
  detail::require(!members.empty(), "ensemble: no members");
  const Grid2D& first = members.front();
  for (const auto& m : members) require_same_shape(first, m, "ensemble");
  Grid2D mean(first.height(), first.width());
  const double inv_n = 1.0 / static_cast<double>(members.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    double acc = 0.0;
    for (const auto& m : members) acc += m[i];
    mean[i] = static_cast<float>(acc * inv_n);
  }
  UQResult r;
  r.uncertainty = predictive_entropy(mean);
  r.mean = std::move(mean);
  r.ensemble_size = members.size();
  r.members = std::move(members);
  r.method = std::move(method);
  return r;
}

/// Anything mapping (image, prompt) to a probability map.
template <typename F>
concept Predictor = requires(const F& f, const MultiChannelGrid& img, const PromptSet& prompt) {
  { f(img, prompt) } -> std::convertible_to<Grid2D>;
};

inline auto refnet_predictor(const RefNet& model) {
  return [&model](const MultiChannelGrid& img, const PromptSet& prompt) { return forward(model, img, prompt).probmap; };
}

/// Test-time augmentation ensemble. Member k draws its transform from
/// rng.fork("tta/member/k").
template <Predictor F>
UQResult uq_tta(const F& predict, const MultiChannelGrid& image, const PromptSet& prompt,
                const AugmentationPolicy& policy, std::size_t n, const Rng& rng) {
  detail::require(n >= 1, "uq_tta: ensemble size must be >= 1");
  std::vector<Grid2D> members;
  members.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Rng member_rng = rng.fork("tta/member/" + std::to_string(k));
    const AugmentParams params = sample_augmentation(policy, member_rng);
    const Grid2D p = predict(apply_augmentation(image, params), augment_prompt(prompt, params, image.width()));
    members.push_back(align_output(p, params));
  }
  return ensemble(std::move(members), "tta");
}

inline UQResult uq_tta(const RefNet& model, const MultiChannelGrid& image, const PromptSet& prompt,
                       const AugmentationPolicy& policy, std::size_t n, const Rng& rng) {
  return uq_tta(refnet_predictor(model), image, prompt, policy, n, rng);
}

/// Prompt-perturbation ensemble: member k jitters the box with
/// rng.fork("prompt/member/k").
template <Predictor F>
UQResult uq_prompt(const F& predict, const MultiChannelGrid& image, const PromptSet& prompt, const BoxNoise& noise,
                   std::size_t n, const Rng& rng) {
  detail::require(n >= 1, "uq_prompt: ensemble size must be >= 1");
  if (!prompt.bbox) throw ValidationError("uq_prompt: prompt has no bounding box");
  std::vector<Grid2D> members;
  members.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Rng member_rng = rng.fork("prompt/member/" + std::to_string(k));
    PromptSet perturbed = prompt;
    perturbed.bbox = perturb_bbox(*prompt.bbox, member_rng, image.height(), image.width(), noise);
    members.push_back(predict(image, perturbed));
  }
  return ensemble(std::move(members), "prompt");
}

inline UQResult uq_prompt(const RefNet& model, const MultiChannelGrid& image, const PromptSet& prompt,
                          const BoxNoise& noise, std::size_t n, const Rng& rng) {
  return uq_prompt(refnet_predictor(model), image, prompt, noise, n, rng);
}

}  // namespace uqseg
