#pragma once

// Test-time augmentation transforms. Photometric ops act per pixel; the one
// geometric op (horizontal flip) is undone on the output by align_output so
// ensemble members stay spatially registered.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "uqseg/error.hpp"
#include "uqseg/grid.hpp"
#include "uqseg/prompt.hpp"
#include "uqseg/rng.hpp"
#include "uqseg/synthgen.hpp"

namespace uqseg {

enum class AugmentKind { hflip, brightness, contrast, saturation, greyscale, hue };

/// One stochastic transform. For hflip and greyscale `param` is the firing
/// probability; for the jitters it is the maximum magnitude.
struct AugmentOp {
  AugmentKind kind;
  double param;
};

struct AugmentationPolicy {
  std::vector<AugmentOp> ops;

  static AugmentationPolicy identity() { return {}; }

  /// Flip plus the two colour-jitter blocks and greyscale of the training TTA set.
  static AugmentationPolicy tta_train() {
    return {{{AugmentKind::hflip, 0.5},
             {AugmentKind::brightness, 0.1},
             {AugmentKind::contrast, 0.03},
             {AugmentKind::saturation, 0.03},
             {AugmentKind::greyscale, 0.05},
             {AugmentKind::brightness, 0.1},
             {AugmentKind::contrast, 0.05},
             {AugmentKind::saturation, 0.05}}};
  }

  /// Hue rotation over up to half the hue circle in either direction.
  static AugmentationPolicy tta_hue() { return {{{AugmentKind::hue, 0.5}}}; }

  static AugmentationPolicy from_name(std::string_view name) {
    if (name == "train") return tta_train();
    if (name == "hue") return tta_hue();
    if (name == "identity") return identity();
    throw ValidationError("unknown TTA policy '" + std::string(name) + "'");
  }
};

/// A sampled transform: hflip/greyscale carry 1.0 when fired, jitters carry
/// the additive offset (brightness, hue) or multiplicative factor.
struct AppliedOp {
  AugmentKind kind;
  double value;
};

struct AugmentParams {
  std::vector<AppliedOp> ops;

  [[nodiscard]] bool flips() const {
    std::size_t n = 0;
    for (const auto& op : ops) n += op.kind == AugmentKind::hflip ? 1 : 0;
    return n % 2 == 1;
  }
};

inline AugmentParams sample_augmentation(const AugmentationPolicy& policy, Rng& rng) {
  AugmentParams params;
  for (const auto& op : policy.ops) {
    if (op.param <= 0.0) continue;
    switch (op.kind) {
      case AugmentKind::hflip:
      case AugmentKind::greyscale:
        if (rng.bernoulli(op.param)) params.ops.push_back({op.kind, 1.0});
        break;
      case AugmentKind::brightness:
      case AugmentKind::hue:
        params.ops.push_back({op.kind, rng.uniform(-op.param, op.param)});
        break;
      case AugmentKind::contrast:
      case AugmentKind::saturation:
        params.ops.push_back({op.kind, rng.uniform(1.0 - op.param, 1.0 + op.param)});
        break;
    }
  }
  return params;
}

template <typename T>
Grid<T> hflip(const Grid<T>& g) {
  Grid<T> out(g.height(), g.width());
  for (std::size_t y = 0; y < g.height(); ++y) {
    for (std::size_t x = 0; x < g.width(); ++x) out(y, g.width() - 1 - x) = g(y, x);
  }
  return out;
}

inline MultiChannelGrid hflip(const MultiChannelGrid& img) {
  std::vector<Grid2D> ch;
  for (std::size_t c = 0; c < img.channels(); ++c) ch.push_back(hflip(img.channel(c)));
  return MultiChannelGrid(std::move(ch));
}

namespace augment_detail {

inline std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  double h = 0.0;
  if (delta > 0.0) {
    if (mx == r) {
      h = std::fmod((g - b) / delta, 6.0);
    } else if (mx == g) {
      h = (b - r) / delta + 2.0;
    } else {
      h = (r - g) / delta + 4.0;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  const double s = mx > 0.0 ? delta / mx : 0.0;
  return {h, s, mx};
}

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double h6 = (h - std::floor(h)) * 6.0;
  const int sector = std::min(static_cast<int>(h6), 5);
  const double f = h6 - sector;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

inline float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace augment_detail

/// Applies the sampled ops in order. Requires a 3-channel image.
inline MultiChannelGrid apply_augmentation(const MultiChannelGrid& image, const AugmentParams& params) {
  using augment_detail::clamp01;
  detail::require(image.channels() == 3, "apply_augmentation: expected an RGB image");
  MultiChannelGrid out = image;
  const std::size_t n = image.height() * image.width();
  for (const auto& op : params.ops) {
    // Re-bound each op: hflip replaces the channel storage.
    auto& r = out.channel(0);
    auto& g = out.channel(1);
    auto& b = out.channel(2);
    switch (op.kind) {
      case AugmentKind::hflip:
        out = hflip(out);
        break;
      case AugmentKind::brightness:
        for (std::size_t c = 0; c < 3; ++c) {
          for (float& v : out.channel(c)) v = clamp01(v + op.value);
        }
        break;
      case AugmentKind::contrast: {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += luma(r[i], g[i], b[i]);
        mean /= static_cast<double>(n);
        for (std::size_t c = 0; c < 3; ++c) {
          for (float& v : out.channel(c)) v = clamp01(mean + op.value * (v - mean));
        }
        break;
      }
      case AugmentKind::saturation:
        for (std::size_t i = 0; i < n; ++i) {
          const double l = luma(r[i], g[i], b[i]);
          r[i] = clamp01(l + op.value * (r[i] - l));
          g[i] = clamp01(l + op.value * (g[i] - l));
          b[i] = clamp01(l + op.value * (b[i] - l));
        }
        break;
      case AugmentKind::greyscale:
        for (std::size_t i = 0; i < n; ++i) {
          const float l = clamp01(luma(r[i], g[i], b[i]));
          r[i] = g[i] = b[i] = l;
        }
        break;
      case AugmentKind::hue:
        for (std::size_t i = 0; i < n; ++i) {
          const auto hsv = augment_detail::rgb_to_hsv(r[i], g[i], b[i]);
          const auto rgb = augment_detail::hsv_to_rgb(hsv[0] + op.value, hsv[1], hsv[2]);
          r[i] = clamp01(rgb[0]);
          g[i] = clamp01(rgb[1]);
          b[i] = clamp01(rgb[2]);
        }
        break;
    }
  }
  return out;
}

/// Moves prompt coordinates into the augmented frame.
inline PromptSet augment_prompt(const PromptSet& prompt, const AugmentParams& params, std::size_t width) {
  return params.flips() ? hflip_prompt(prompt, width) : prompt;
}

/// Maps a prediction made on the augmented image back to the original frame.
inline Grid2D align_output(const Grid2D& probmap, const AugmentParams& params) {
  return params.flips() ? hflip(probmap) : probmap;
}

}  // namespace uqseg
