#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "uqseg/error.hpp"
#include "uqseg/grid.hpp"
#include "uqseg/rng.hpp"

namespace uqseg {

/// Axis-aligned box with inclusive pixel coordinates.
struct BBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  [[nodiscard]] int width() const noexcept { return x1 - x0 + 1; }
  [[nodiscard]] int height() const noexcept { return y1 - y0 + 1; }
  [[nodiscard]] bool valid_for(std::size_t h, std::size_t w) const noexcept {
    return 0 <= x0 && x0 <= x1 && x1 < static_cast<int>(w) && 0 <= y0 && y0 <= y1 && y1 < static_cast<int>(h);
  }
  [[nodiscard]] bool contains(int y, int x) const noexcept { return x0 <= x && x <= x1 && y0 <= y && y <= y1; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

enum class PointLabel { background = 0, foreground = 1 };

struct PromptPoint {
  int y = 0;
  int x = 0;
  PointLabel label = PointLabel::foreground;
  friend bool operator==(const PromptPoint&, const PromptPoint&) = default;
};

struct PromptSet {
  std::optional<BBox> bbox;
  std::vector<PromptPoint> points;

  [[nodiscard]] bool valid() const noexcept { return bbox.has_value() || !points.empty(); }
  friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

inline constexpr std::size_t kPromptChannels = 4;
inline constexpr double kPointSigmaPx = 2.0;

/// Tight box over pixels > 0.5.
template <typename T>
BBox bbox_from_mask(const Grid<T>& mask) {
  BBox box{static_cast<int>(mask.width()), static_cast<int>(mask.height()), -1, -1};
  for (std::size_t y = 0; y < mask.height(); ++y) {
    for (std::size_t x = 0; x < mask.width(); ++x) {
      if (mask(y, x) > T(0.5)) {
        box.x0 = std::min(box.x0, static_cast<int>(x));
        box.y0 = std::min(box.y0, static_cast<int>(y));
        box.x1 = std::max(box.x1, static_cast<int>(x));
        box.y1 = std::max(box.y1, static_cast<int>(y));
      }
    }
  }
  if (box.x1 < 0) throw ValidationError("bbox_from_mask: empty mask");
  return box;
}

/// Dense prompt encoding with four channels:
///   0  inside-box indicator
///   1  signed distance to the box edge (positive inside, Euclidean outside),
///      divided by the image diagonal and clamped to [-1, 1]
///   2  sum of unit-height Gaussians (sigma 2 px) at foreground points
///   3  same for background points
/// Missing elements leave their channels at zero.
inline MultiChannelGrid encode_prompt(const PromptSet& prompt, std::size_t height, std::size_t width) {
  MultiChannelGrid out(kPromptChannels, height, width);
  const double diag = std::sqrt(static_cast<double>(height * height + width * width));
  if (prompt.bbox) {
    const BBox& b = *prompt.bbox;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const int yi = static_cast<int>(y);
        const int xi = static_cast<int>(x);
        double dist = 0.0;
        if (b.contains(yi, xi)) {
          out(0, y, x) = 1.0f;
          dist = std::min({xi - b.x0, b.x1 - xi, yi - b.y0, b.y1 - yi});
        } else {
          const double dx = std::max({b.x0 - xi, 0, xi - b.x1});
          const double dy = std::max({b.y0 - yi, 0, yi - b.y1});
          dist = -std::sqrt(dx * dx + dy * dy);
        }
        out(1, y, x) = static_cast<float>(std::clamp(dist / diag, -1.0, 1.0));
      }
    }
  }
  const double inv_two_var = 1.0 / (2.0 * kPointSigmaPx * kPointSigmaPx);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double fg = 0.0;
      double bg = 0.0;
      for (const auto& p : prompt.points) {
        const double dy = static_cast<double>(y) - p.y;
        const double dx = static_cast<double>(x) - p.x;
        const double g = std::exp(-(dx * dx + dy * dy) * inv_two_var);
        (p.label == PointLabel::foreground ? fg : bg) += g;
      }
      out(2, y, x) = static_cast<float>(fg);
      out(3, y, x) = static_cast<float>(bg);
    }
  }
  return out;
}

inline constexpr std::size_t kScheduleSteps = 8;
inline constexpr double kScheduleBoxProbability = 0.5;
inline constexpr double kScheduleForegroundProbability = 0.5;

namespace prompt_detail {
inline PromptPoint sample_point(const Grid2D& mask, bool foreground, Rng& rng) {
  std::vector<std::size_t> region;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if ((mask[i] > 0.5f) == foreground) region.push_back(i);
  }
  if (region.empty()) {
    foreground = !foreground;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if ((mask[i] > 0.5f) == foreground) region.push_back(i);
    }
  }
  const std::size_t idx = region[rng.uniform_index(region.size())];
  return {static_cast<int>(idx / mask.width()), static_cast<int>(idx % mask.width()),
          foreground ? PointLabel::foreground : PointLabel::background};
}
}  // namespace prompt_detail

/// Cumulative multi-step prompt schedule. Step 1 is the mask's bbox or a single
/// foreground point (equal odds); each later step appends one point, foreground
/// or background with equal odds, placed uniformly within that region. When
/// the chosen region is empty the other one is used.
///
/// Draw order per step: one uniform for the box/point or fg/bg choice, then one
/// uniform_index for the location when a point is placed.
inline std::vector<PromptSet> sample_prompt_schedule(const Grid2D& mask, Rng& rng,
                                                     std::size_t step_count = kScheduleSteps) {
  if (count_foreground(mask) == 0) throw ValidationError("sample_prompt_schedule: empty mask");
  std::vector<PromptSet> steps;
  steps.reserve(step_count);
  PromptSet current;
  if (rng.uniform() < kScheduleBoxProbability) {
    current.bbox = bbox_from_mask(mask);
  } else {
    current.points.push_back(prompt_detail::sample_point(mask, true, rng));
  }
  steps.push_back(current);
  for (std::size_t k = 1; k < step_count; ++k) {
    const bool fg = rng.uniform() < kScheduleForegroundProbability;
    current.points.push_back(prompt_detail::sample_point(mask, fg, rng));
    steps.push_back(current);
  }
  return steps;
}

struct BoxNoise {
  double noise_frac = 0.1;
  double cap_px = 20.0;
};

/// Jitters each coordinate by N(0, (noise_frac * side)^2), clamps the shift to
/// +-cap_px, rounds to the pixel grid and clamps to the image. Crossed
/// coordinates are swapped so the result stays a valid (>= 1x1) box.
inline BBox perturb_bbox(const BBox& box, Rng& rng, std::size_t height, std::size_t width,
                         const BoxNoise& noise = {}) {
  detail::require(noise.noise_frac >= 0.0, "perturb_bbox: negative noise_frac");
  const double bw = box.width();
  const double bh = box.height();
  auto shift = [&](double side) {
    const double s = std::clamp(rng.normal() * noise.noise_frac * side, -noise.cap_px, noise.cap_px);
    return static_cast<int>(std::lround(s));
  };
  BBox out;
  out.x0 = box.x0 + shift(bw);
  out.y0 = box.y0 + shift(bh);
  out.x1 = box.x1 + shift(bw);
  out.y1 = box.y1 + shift(bh);
  const int max_x = static_cast<int>(width) - 1;
  const int max_y = static_cast<int>(height) - 1;
  out.x0 = std::clamp(out.x0, 0, max_x);
  out.x1 = std::clamp(out.x1, 0, max_x);
  out.y0 = std::clamp(out.y0, 0, max_y);
  out.y1 = std::clamp(out.y1, 0, max_y);
  if (out.x0 > out.x1) std::swap(out.x0, out.x1);
  if (out.y0 > out.y1) std::swap(out.y0, out.y1);
  return out;
}

/// Mirrors a prompt left-right (x -> W - 1 - x).
inline PromptSet hflip_prompt(const PromptSet& prompt, std::size_t width) {
  const int w = static_cast<int>(width);
  PromptSet out = prompt;
  if (out.bbox) {
    const BBox b = *out.bbox;
    out.bbox = BBox{w - 1 - b.x1, b.y0, w - 1 - b.x0, b.y1};
  }
  for (auto& p : out.points) p.x = w - 1 - p.x;
  return out;
}

}  // namespace uqseg
