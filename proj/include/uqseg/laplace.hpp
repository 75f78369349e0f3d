#pragma once

// Last-layer Laplace approximation over the linear decoder (w, b).
//
// Posterior N(theta_map, (H + tau I)^-1) with H the diagonal generalized
// Gauss-Newton curvature of the summed BCE: for psi = [phi; 1],
//   H_kk = sum_pixels p (1 - p) psi_k^2.
// For sigmoid + BCE this coincides with the exact Hessian diagonal.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "uqseg/dataset.hpp"
#include "uqseg/error.hpp"
#include "uqseg/grid.hpp"
#include "uqseg/prompt.hpp"
#include "uqseg/refnet.hpp"
#include "uqseg/rng.hpp"
#include "uqseg/uq.hpp"

namespace uqseg {

struct LaplacePosterior {
  LinearDecoder map;
  std::vector<double> hessian_diag;  // D + 1 entries, bias last
  double prior_precision = 1.0;

  [[nodiscard]] std::size_t dim() const noexcept { return hessian_diag.size(); }
  [[nodiscard]] double precision(std::size_t k) const { return hessian_diag[k] + prior_precision; }
};

/// Adds the GGN diagonal of one image's summed BCE to `hessian`. A nonzero
/// fit_resolution restricts the sum to a nearest-neighbour r x r subsample.
inline void accumulate_ggn_diagonal(const Tensor3& features, const Grid<double>& logits, std::span<double> hessian,
                                    std::size_t fit_resolution = 0) {
  detail::require(hessian.size() == features.channels + 1, "accumulate_ggn_diagonal: size mismatch");
  detail::require(features.pixels() == logits.size(), "accumulate_ggn_diagonal: feature/logit mismatch");
  const std::size_t d = features.channels;
  auto add_pixel = [&](std::size_t i) {
    const double p = sigmoid(logits[i]);
    const double curvature = p * (1.0 - p);
    const auto phi = features.pixel(i);
    for (std::size_t k = 0; k < d; ++k) hessian[k] += curvature * phi[k] * phi[k];
    hessian[d] += curvature;
  };
  const std::size_t h = features.height;
  const std::size_t w = features.width;
  if (fit_resolution == 0 || (fit_resolution >= h && fit_resolution >= w)) {
    for (std::size_t i = 0; i < features.pixels(); ++i) add_pixel(i);
    return;
  }
  // Nearest-neighbour downsampling to fit_resolution x fit_resolution.
  const std::size_t rh = std::min(fit_resolution, h);
  const std::size_t rw = std::min(fit_resolution, w);
  for (std::size_t j = 0; j < rh; ++j) {
    const std::size_t y = (2 * j + 1) * h / (2 * rh);
    for (std::size_t k = 0; k < rw; ++k) {
      const std::size_t x = (2 * k + 1) * w / (2 * rw);
      add_pixel(y * w + x);
    }
  }
}

struct LaplaceFitConfig {
  double prior_precision = 1.0;
  /// 0 = full resolution; otherwise curvature is taken on an r x r subsample.
  std::size_t fit_resolution = 0;
  std::uint64_t seed = 0;
};

/// One pass over the fit set; image i uses one prompt drawn uniformly from its
/// 8-step schedule (stream fork(seed, "laplace/fit/i")).
inline LaplacePosterior fit_laplace(const RefNet& model, std::span<const Sample> fit_set,
                                    const LaplaceFitConfig& config) {
  detail::require(!fit_set.empty(), "fit_laplace: empty fit set");
  detail::require(config.prior_precision > 0.0, "fit_laplace: prior precision must be positive");
  LaplacePosterior post{model.decoder, std::vector<double>(model.decoder.dim() + 1, 0.0), config.prior_precision};
  const Rng base(config.seed);
  for (std::size_t i = 0; i < fit_set.size(); ++i) {
    Rng rng = base.fork("laplace/fit/" + std::to_string(i));
    const auto schedule = sample_prompt_schedule(fit_set[i].mask, rng);
    const PromptSet& prompt = schedule[rng.uniform_index(schedule.size())];
    const Tensor3 features = encode_features(model, fit_set[i].image, prompt);
    accumulate_ggn_diagonal(features, decode_logits(features, model.decoder), post.hessian_diag,
                            config.fit_resolution);
  }
  return post;
}

/// theta = theta_map + scale * eps, eps_k ~ N(0, 1 / (H_kk + tau)).
inline LinearDecoder sample_decoder(const LaplacePosterior& post, Rng& rng, double scale = 1.0) {
  std::vector<double> theta = post.map.pack();
  for (std::size_t k = 0; k < theta.size(); ++k) {
    theta[k] += scale * rng.normal() / std::sqrt(post.precision(k));
  }
  LinearDecoder out(post.map.dim());
  out.unpack(theta);
  return out;
}

/// Laplace ensemble over precomputed features; member n samples its decoder
/// from rng.fork("laplace/member/n").
inline UQResult laplace_ensemble(const Tensor3& features, const LaplacePosterior& post, std::size_t n, const Rng& rng,
                                 double noise_scale = 1.0) {
  detail::require(n >= 1, "uq_laplace: ensemble size must be >= 1");
  detail::require(post.dim() == features.channels + 1, "uq_laplace: posterior/feature dimension mismatch");
  for (std::size_t k = 0; k < post.dim(); ++k) {
    if (!(post.precision(k) > 0.0)) throw ValidationError("uq_laplace: non-positive posterior precision");
  }
  std::vector<Grid2D> members;
  members.reserve(n);
  for (std::size_t m = 0; m < n; ++m) {
    Rng member_rng = rng.fork("laplace/member/" + std::to_string(m));
    const LinearDecoder theta = sample_decoder(post, member_rng, noise_scale);
    members.push_back(probmap_from_logits(decode_logits(features, theta)));
  }
  return ensemble(std::move(members), "laplace");
}

/// Features are computed once with the frozen encoder and shared by all
/// members. noise_scale = 0 collapses every member onto the MAP decoder.
inline UQResult uq_laplace(const RefNet& model, const LaplacePosterior& post, const MultiChannelGrid& image,
                           const PromptSet& prompt, std::size_t n, const Rng& rng, double noise_scale = 1.0) {
  detail::require(post.dim() == model.decoder.dim() + 1, "uq_laplace: posterior/model dimension mismatch");
  return laplace_ensemble(encode_features(model, image, prompt), post, n, rng, noise_scale);
}

}  // namespace uqseg
