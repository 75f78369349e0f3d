#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "uqseg/error.hpp"
#include "uqseg/grid.hpp"
#include "uqseg/preprocess.hpp"

namespace uqseg {

/// E = |P - M| per pixel.
inline Grid2D error_map(const Grid2D& probmap, const Grid2D& mask) {
  require_same_shape(probmap, mask, "error_map");
  Grid2D e(probmap.height(), probmap.width());
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] = static_cast<float>(std::abs(static_cast<double>(probmap[i]) - static_cast<double>(mask[i])));
  }
  return e;
}

/// P >= threshold as a {0, 1} grid.
inline Grid2D binarize(const Grid2D& probmap, double threshold = 0.5) {
  Grid2D b(probmap.height(), probmap.width());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = static_cast<double>(probmap[i]) >= threshold ? 1.0f : 0.0f;
  return b;
}

namespace metrics_detail {
inline double binary_iou(const Grid2D& a, const Grid2D& b) {
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] > 0.5f;
    const bool y = b[i] > 0.5f;
    inter += (x && y) ? 1u : 0u;
    uni += (x || y) ? 1u : 0u;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}
}  // namespace metrics_detail

/// Thresholded IoU; two empty masks score 1.
inline double iou(const Grid2D& probmap, const Grid2D& mask, double threshold = 0.5) {
  require_same_shape(probmap, mask, "iou");
  return metrics_detail::binary_iou(binarize(probmap, threshold), mask);
}

inline constexpr double kBoundaryFraction = 0.02;

/// Boundary width d = max(1, round(fraction * image diagonal)).
inline std::size_t boundary_width(std::size_t height, std::size_t width, double fraction = kBoundaryFraction) {
  const double diag = std::sqrt(static_cast<double>(height * height + width * width));
  return static_cast<std::size_t>(std::max(1.0, std::round(fraction * diag)));
}

/// Pixels of G within d of its contour: G AND NOT erode^d(G), where each
/// erosion is 3x3 and the image exterior counts as background.
inline Grid2D boundary_band(const Grid2D& mask, std::size_t d) {
  Grid2D eroded = mask;
  for (std::size_t i = 0; i < d; ++i) eroded = erode3x3(eroded, BorderMode::background);
  Grid2D band(mask.height(), mask.width());
  for (std::size_t i = 0; i < band.size(); ++i) band[i] = (mask[i] > 0.5f && eroded[i] <= 0.5f) ? 1.0f : 0.0f;
  return band;
}

/// Boundary IoU |band(P) & band(M)| / |band(P) | band(M)|; both bands empty scores 1.
inline double boundary_iou(const Grid2D& probmap, const Grid2D& mask, double threshold = 0.5,
                           double fraction = kBoundaryFraction) {
  require_same_shape(probmap, mask, "boundary_iou");
  const std::size_t d = boundary_width(mask.height(), mask.width(), fraction);
  return metrics_detail::binary_iou(boundary_band(binarize(probmap, threshold), d), boundary_band(mask, d));
}

inline constexpr double kPearsonMinVariance = 1e-12;

/// Sample Pearson correlation over all pixels. Returns nullopt when either
/// input has (population) variance below 1e-12.
inline std::optional<double> pearson(const Grid2D& u, const Grid2D& e) {
  require_same_shape(u, e, "pearson");
  detail::require(!u.empty(), "pearson: empty input");
  // Welford-style co-moment update.
  double mu = 0.0, me = 0.0, cuu = 0.0, cee = 0.0, cue = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double du = static_cast<double>(u[i]) - mu;
    const double de = static_cast<double>(e[i]) - me;
    mu += du / n;
    me += de / n;
    const double du2 = static_cast<double>(u[i]) - mu;
    const double de2 = static_cast<double>(e[i]) - me;
    cuu += du * du2;
    cee += de * de2;
    cue += du * de2;
  }
  const double n = static_cast<double>(u.size());
  if (cuu / n < kPearsonMinVariance || cee / n < kPearsonMinVariance) return std::nullopt;
  return std::clamp(cue / std::sqrt(cuu * cee), -1.0, 1.0);
}

/// Mean squared difference (P - M)^2.
inline double brier(const Grid2D& probmap, const Grid2D& mask) {
  require_same_shape(probmap, mask, "brier");
  double total = 0.0;
  for (std::size_t i = 0; i < probmap.size(); ++i) {
    const double d = static_cast<double>(probmap[i]) - static_cast<double>(mask[i]);
    total += d * d;
  }
  return total / static_cast<double>(probmap.size());
}

struct EvalRecord {
  std::string sample;
  std::string dataset;
  std::string method;
  double iou = 0.0;
  double biou = 0.0;
  std::optional<double> pearson;
  double brier = 0.0;
};

struct MetricOptions {
  double threshold = 0.5;
  double boundary_fraction = kBoundaryFraction;
};

/// Full record for one (prediction, uncertainty, mask) triple; E uses the
/// prediction map itself.
inline EvalRecord evaluate_sample(std::string sample, std::string dataset, std::string method, const Grid2D& pbar,
                                  const Grid2D& uncertainty, const Grid2D& mask, const MetricOptions& opt = {}) {
  EvalRecord r;
  r.sample = std::move(sample);
  r.dataset = std::move(dataset);
  r.method = std::move(method);
  r.iou = iou(pbar, mask, opt.threshold);
  r.biou = boundary_iou(pbar, mask, opt.threshold, opt.boundary_fraction);
  r.pearson = pearson(uncertainty, error_map(pbar, mask));
  r.brier = brier(pbar, mask);
  return r;
}

}  // namespace uqseg
