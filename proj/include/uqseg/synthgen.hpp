#pragma once

// Synthetic promptable-segmentation scenes: one bright, saturated object on a
// dark low-saturation textured background ("clean"), plus shifted variants that
// break that appearance prior in different ways.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uqseg/error.hpp"
#include "uqseg/grid.hpp"
#include "uqseg/rng.hpp"

namespace uqseg {

enum class ShapeFamily { ellipse, polygon, blob };
enum class ChallengeKind { clean, shadow, camouflage, transparency, flare, noise };

inline constexpr std::array<ChallengeKind, 6> kAllChallengeKinds{
    ChallengeKind::clean,        ChallengeKind::shadow, ChallengeKind::camouflage,
    ChallengeKind::transparency, ChallengeKind::flare,  ChallengeKind::noise};

inline std::string_view to_string(ChallengeKind k) {
  switch (k) {
    case ChallengeKind::clean: return "clean";
    case ChallengeKind::shadow: return "shadow";
    case ChallengeKind::camouflage: return "camouflage";
    case ChallengeKind::transparency: return "transparency";
    case ChallengeKind::flare: return "flare";
    case ChallengeKind::noise: return "noise";
  }
  return "clean";
}

inline ChallengeKind challenge_from_string(std::string_view s) {
  for (ChallengeKind k : kAllChallengeKinds) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown challenge kind '" + std::string(s) + "'");
}

inline std::string_view to_string(ShapeFamily s) {
  switch (s) {
    case ShapeFamily::ellipse: return "ellipse";
    case ShapeFamily::polygon: return "polygon";
    case ShapeFamily::blob: return "blob";
  }
  return "ellipse";
}

struct SceneSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  ShapeFamily shape = ShapeFamily::ellipse;
  double min_radius = 8.0;
  double max_radius = 18.0;
  double texture_amplitude = 0.06;
  std::size_t texture_cells = 6;
  ChallengeKind kind = ChallengeKind::clean;
  double intensity = 0.0;
};

struct Scene {
  MultiChannelGrid image;
  Grid2D mask;
};

inline constexpr double kMinObjectArea = 16.0;
inline constexpr double kShadowStrength = 0.6;
inline constexpr double kCamouflageMaxShift = 0.15;
inline constexpr double kTransparencyStrength = 0.8;
inline constexpr double kNoiseSigma = 0.2;

/// Rec.601 luma.
inline double luma(double r, double g, double b) noexcept { return 0.299 * r + 0.587 * g + 0.114 * b; }

namespace synth_detail {

// Bilinear upsampling of a (cells + 1)^2 lattice of N(0, 1) values.
inline Grid<double> value_noise(std::size_t h, std::size_t w, std::size_t cells, Rng& rng) {
  const std::size_t n = cells + 1;
  std::vector<double> lattice(n * n);
  for (double& v : lattice) v = rng.normal();
  Grid<double> out(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) / static_cast<double>(h) * static_cast<double>(cells);
    const std::size_t y0 = std::min(static_cast<std::size_t>(fy), cells - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) / static_cast<double>(w) * static_cast<double>(cells);
      const std::size_t x0 = std::min(static_cast<std::size_t>(fx), cells - 1);
      const double tx = fx - static_cast<double>(x0);
      const double a = lattice[y0 * n + x0];
      const double b = lattice[y0 * n + x0 + 1];
      const double c = lattice[(y0 + 1) * n + x0];
      const double d = lattice[(y0 + 1) * n + x0 + 1];
      out(y, x) = (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d);
    }
  }
  return out;
}

inline std::array<double, 3> hue_to_rgb(double hue) {
  const double h6 = std::fmod(hue, 1.0) * 6.0;
  const double x = 1.0 - std::abs(std::fmod(h6, 2.0) - 1.0);
  switch (static_cast<int>(h6)) {
    case 0: return {1, x, 0};
    case 1: return {x, 1, 0};
    case 2: return {0, 1, x};
    case 3: return {0, x, 1};
    case 4: return {x, 0, 1};
    default: return {1, 0, x};
  }
}

// Rasterizes one random shape of the requested family, centred so its extent
// (<= radius) stays at least one pixel inside the image.
inline Grid2D draw_shape(const SceneSpec& spec, Rng& rng, double& radius_out, double& cy_out, double& cx_out) {
  const double r = rng.uniform(spec.min_radius, spec.max_radius);
  const double cy = rng.uniform(r + 1.0, static_cast<double>(spec.height) - 2.0 - r);
  const double cx = rng.uniform(r + 1.0, static_cast<double>(spec.width) - 2.0 - r);
  radius_out = r;
  cy_out = cy;
  cx_out = cx;
  Grid2D mask(spec.height, spec.width);
  auto fill = [&](auto&& inside) {
    for (std::size_t y = 0; y < spec.height; ++y) {
      for (std::size_t x = 0; x < spec.width; ++x) {
        if (inside(static_cast<double>(y) - cy, static_cast<double>(x) - cx)) mask(y, x) = 1.0f;
      }
    }
  };
  switch (spec.shape) {
    case ShapeFamily::ellipse: {
      const double ra = r;
      const double rb = r * rng.uniform(0.55, 1.0);
      const double theta = rng.uniform(0.0, std::numbers::pi);
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      fill([&](double dy, double dx) {
        const double u = c * dx + s * dy;
        const double v = -s * dx + c * dy;
        return (u * u) / (ra * ra) + (v * v) / (rb * rb) <= 1.0;
      });
      break;
    }
    case ShapeFamily::polygon: {
      const std::size_t k = 5 + rng.uniform_index(4);
      std::vector<double> vy(k), vx(k);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < k; ++i) {
        const double a = phase + 2.0 * std::numbers::pi * (static_cast<double>(i) + rng.uniform(-0.3, 0.3)) /
                                     static_cast<double>(k);
        const double rr = r * rng.uniform(0.6, 1.0);
        vy[i] = rr * std::sin(a);
        vx[i] = rr * std::cos(a);
      }
      fill([&](double dy, double dx) {
        bool inside = false;
        for (std::size_t i = 0, j = k - 1; i < k; j = i++) {
          if ((vy[i] > dy) != (vy[j] > dy) && dx < (vx[j] - vx[i]) * (dy - vy[i]) / (vy[j] - vy[i]) + vx[i]) {
            inside = !inside;
          }
        }
        return inside;
      });
      break;
    }
    case ShapeFamily::blob: {
      std::array<double, 3> amp{}, ph{};
      for (std::size_t i = 0; i < 3; ++i) {
        amp[i] = rng.uniform(0.0, 0.08);
        ph[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      }
      fill([&](double dy, double dx) {
        const double a = std::atan2(dy, dx);
        double rr = 0.75;
        for (std::size_t i = 0; i < 3; ++i) rr += amp[i] * std::cos(static_cast<double>(i + 2) * a + ph[i]);
        return std::sqrt(dy * dy + dx * dx) <= r * rr;
      });
      break;
    }
  }
  return mask;
}

// Mean of the mask over a (2 * radius + 1)^2 window, clipped to the image.
inline Grid<double> box_soften(const Grid2D& mask, int radius) {
  const int h = static_cast<int>(mask.height());
  const int w = static_cast<int>(mask.width());
  Grid<double> out(mask.height(), mask.width());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      int count = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int sy = y + dy;
          const int sx = x + dx;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
          sum += mask(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
          ++count;
        }
      }
      out(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = sum / count;
    }
  }
  return out;
}

}  // namespace synth_detail

inline void validate(const SceneSpec& spec) {
  detail::require(spec.height >= 8 && spec.width >= 8, "SceneSpec: image must be at least 8x8");
  detail::require(spec.min_radius > 0.0 && spec.min_radius <= spec.max_radius, "SceneSpec: bad radius range");
  detail::require(2.0 * spec.max_radius + 3.0 <= static_cast<double>(std::min(spec.height, spec.width)),
                  "SceneSpec: object cannot fit inside the image");
  // Largest shape any family can draw is a disc of max_radius; smaller than
  // the minimum area means every draw is degenerate.
  detail::require(std::numbers::pi * spec.max_radius * spec.max_radius >= kMinObjectArea,
                  "SceneSpec: object area below " + std::to_string(static_cast<int>(kMinObjectArea)) + " px");
  detail::require(spec.intensity >= 0.0 && spec.intensity <= 1.0, "SceneSpec: intensity outside [0, 1]");
  detail::require(spec.texture_cells >= 1, "SceneSpec: texture_cells must be positive");
}

/// Draws one scene. Identical (spec, rng state) gives identical output.
inline Scene generate_scene(const SceneSpec& spec, Rng& rng) {
  validate(spec);
  const std::size_t h = spec.height;
  const std::size_t w = spec.width;

  // Background: grey level, slight tint, two octaves of band-limited texture.
  const double grey = rng.uniform(0.2, 0.4);
  std::array<double, 3> tint{};
  for (double& t : tint) t = rng.uniform(-0.04, 0.04);
  Grid<double> texture = synth_detail::value_noise(h, w, spec.texture_cells, rng);
  const Grid<double> fine = synth_detail::value_noise(h, w, 2 * spec.texture_cells, rng);
  for (std::size_t i = 0; i < texture.size(); ++i) texture[i] = spec.texture_amplitude * (texture[i] + 0.5 * fine[i]);

  Grid2D mask;
  double radius = 0.0, cy = 0.0, cx = 0.0;
  for (int attempt = 0;; ++attempt) {
    mask = synth_detail::draw_shape(spec, rng, radius, cy, cx);
    if (static_cast<double>(count_foreground(mask)) >= kMinObjectArea) break;
    if (attempt >= 31) throw ValidationError("generate_scene: could not draw an object of >= 16 px");
  }

  // Object colour: target luma plus a saturated hue offset.
  const auto hue_rgb = synth_detail::hue_to_rgb(rng.uniform());
  const double hue_luma = luma(hue_rgb[0], hue_rgb[1], hue_rgb[2]);
  const double target_luma = rng.uniform(0.65, 0.85);
  const double saturation = rng.uniform(0.3, 0.6);
  std::array<double, 3> object_rgb{};
  for (std::size_t c = 0; c < 3; ++c) object_rgb[c] = target_luma + saturation * (hue_rgb[c] - hue_luma);

  std::vector<Grid<double>> img(3, Grid<double>(h, w));
  std::vector<Grid<double>> bg(3, Grid<double>(h, w));
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < h * w; ++i) bg[c][i] = grey + tint[c] + texture[i];
  }
  auto object_at = [&](std::size_t c, std::size_t y) {
    return object_rgb[c] + 0.05 * (static_cast<double>(y) - cy) / radius;
  };

  const double intensity = spec.intensity;
  switch (spec.kind) {
    case ChallengeKind::clean:
    case ChallengeKind::flare:
    case ChallengeKind::noise:
    case ChallengeKind::transparency: {
      const double alpha = spec.kind == ChallengeKind::transparency ? 1.0 - kTransparencyStrength * intensity : 1.0;
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            img[c](y, x) = mask(y, x) > 0.5f ? alpha * object_at(c, y) + (1.0 - alpha) * bg[c](y, x) : bg[c](y, x);
          }
        }
      }
      break;
    }
    case ChallengeKind::camouflage: {
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const double shift = sign * kCamouflageMaxShift * (1.0 - 0.5 * intensity);
      for (std::size_t c = 0; c < 3; ++c) {
        // The object keeps the background texture pattern but its own region
        // mean is re-centred, so the inside/outside mean gap is exactly |shift|.
        double in = 0.0, out = 0.0, n_in = 0.0;
        for (std::size_t i = 0; i < h * w; ++i) {
          if (mask[i] > 0.5f) {
            in += bg[c][i];
            n_in += 1.0;
          } else {
            out += bg[c][i];
          }
        }
        const double offset = in / n_in - out / (static_cast<double>(h * w) - n_in);
        for (std::size_t i = 0; i < h * w; ++i) img[c][i] = bg[c][i] + (mask[i] > 0.5f ? shift - offset : 0.0);
      }
      break;
    }
    case ChallengeKind::shadow: {
      const Grid<double> soft = synth_detail::box_soften(mask, 2);
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < h * w; ++i) img[c][i] = bg[c][i] * (1.0 - kShadowStrength * intensity * soft[i]);
      }
      break;
    }
  }

  if (spec.kind == ChallengeKind::flare) {
    std::vector<std::size_t> object_pixels;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] > 0.5f) object_pixels.push_back(i);
    }
    const std::size_t centre = object_pixels[rng.uniform_index(object_pixels.size())];
    const double fy = static_cast<double>(centre / w);
    const double fx = static_cast<double>(centre % w);
    const double flare_radius = radius * rng.uniform(0.8, 1.2);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double d = std::hypot(static_cast<double>(y) - fy, static_cast<double>(x) - fx);
        const double falloff = std::max(0.0, 1.0 - d / flare_radius);
        for (std::size_t c = 0; c < 3; ++c) img[c](y, x) += intensity * falloff * falloff;
      }
    }
  }
  if (spec.kind == ChallengeKind::noise) {
    const double sigma = kNoiseSigma * intensity;
    for (std::size_t c = 0; c < 3; ++c) {
      for (double& v : img[c]) v += sigma * rng.normal();
    }
  }

  Scene scene;
  std::vector<Grid2D> channels;
  for (std::size_t c = 0; c < 3; ++c) {
    Grid2D ch(h, w);
    for (std::size_t i = 0; i < h * w; ++i) ch[i] = static_cast<float>(std::clamp(img[c][i], 0.0, 1.0));
    channels.push_back(std::move(ch));
  }
  scene.image = MultiChannelGrid(std::move(channels));
  scene.mask = std::move(mask);
  return scene;
}

}  // namespace uqseg
