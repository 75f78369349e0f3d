#pragma once

// Mask and volume preprocessing: morphological closing, connected components,
// the closing/CCA/AND/area-filter pipeline, colour-coded mask splitting, and
// CT-style foreground z-scoring with percentile clipping.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "uqseg/error.hpp"
#include "uqseg/grid.hpp"

namespace uqseg {

enum class BorderMode {
  /// Out-of-bounds pixels are background (erosion eats pixels on the border).
  background,
  /// Out-of-bounds pixels are skipped (the OpenCV morphology default).
  ignore,
};

namespace morph_detail {
template <bool Dilate>
Grid2D morph3x3(const Grid2D& mask, BorderMode border) {
  const int h = static_cast<int>(mask.height());
  const int w = static_cast<int>(mask.width());
  Grid2D out(mask.height(), mask.width());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool result = !Dilate;
      for (int dy = -1; dy <= 1 && result == !Dilate; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int sy = y + dy;
          const int sx = x + dx;
          bool v;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
            if (Dilate || border == BorderMode::ignore) continue;
            v = false;
          } else {
            v = mask(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) > 0.5f;
          }
          if (Dilate && v) {
            result = true;
            break;
          }
          if (!Dilate && !v) {
            result = false;
            break;
          }
        }
      }
      out(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = result ? 1.0f : 0.0f;
    }
  }
  return out;
}
}  // namespace morph_detail

inline Grid2D dilate3x3(const Grid2D& mask) { return morph_detail::morph3x3<true>(mask, BorderMode::ignore); }

inline Grid2D erode3x3(const Grid2D& mask, BorderMode border = BorderMode::background) {
  return morph_detail::morph3x3<false>(mask, border);
}

/// Closing (3x3 dilation then 3x3 erosion), applied `iterations` times.
/// Erosion skips out-of-bounds pixels so closing never removes border pixels.
inline Grid2D morphological_close(const Grid2D& mask, std::size_t iterations = 1) {
  Grid2D out = mask;
  for (std::size_t i = 0; i < iterations; ++i) out = erode3x3(dilate3x3(out), BorderMode::ignore);
  return out;
}

/// 8-connected components, one binary grid each, ordered by their first pixel
/// in row-major order.
inline std::vector<Grid2D> connected_components(const Grid2D& mask) {
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  std::vector<int> label(mask.size(), -1);
  std::vector<Grid2D> components;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (mask[start] <= 0.5f || label[start] >= 0) continue;
    const int id = static_cast<int>(components.size());
    Grid2D comp(h, w);
    stack.push_back(start);
    label[start] = id;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      comp[i] = 1.0f;
      const auto y = static_cast<std::ptrdiff_t>(i / w);
      const auto x = static_cast<std::ptrdiff_t>(i % w);
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          const std::ptrdiff_t sy = y + dy;
          const std::ptrdiff_t sx = x + dx;
          if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx >= static_cast<std::ptrdiff_t>(w)) continue;
          const auto j = static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx);
          if (mask[j] > 0.5f && label[j] < 0) {
            label[j] = id;
            stack.push_back(j);
          }
        }
      }
    }
    components.push_back(std::move(comp));
  }
  return components;
}

inline constexpr std::size_t kCcaMinArea = 1000;
inline constexpr std::size_t kCcaClosingIterations = 2;

/// Close twice, label components of the closed mask, AND each with the
/// original mask, keep those whose post-AND area is strictly above min_area.
inline std::vector<Grid2D> cca_pipeline(const Grid2D& mask, std::size_t min_area = kCcaMinArea) {
  const Grid2D closed = morphological_close(mask, kCcaClosingIterations);
  std::vector<Grid2D> kept;
  for (Grid2D& comp : connected_components(closed)) {
    for (std::size_t i = 0; i < comp.size(); ++i) comp[i] = (comp[i] > 0.5f && mask[i] > 0.5f) ? 1.0f : 0.0f;
    if (count_foreground(comp) > min_area) kept.push_back(std::move(comp));
  }
  return kept;
}

using Rgb8 = std::array<std::uint8_t, 3>;

/// One binary target per distinct non-black colour, in order of first
/// appearance (row-major).
inline std::vector<std::pair<Rgb8, Grid2D>> split_colour_coded(const MultiChannelGrid& rgb_mask) {
  detail::require(rgb_mask.channels() == 3, "split_colour_coded: expected 3 channels");
  auto byte = [](float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); };
  std::vector<std::pair<Rgb8, Grid2D>> targets;
  std::map<Rgb8, std::size_t> index;
  const std::size_t n = rgb_mask.height() * rgb_mask.width();
  for (std::size_t i = 0; i < n; ++i) {
    const Rgb8 c{byte(rgb_mask.channel(0)[i]), byte(rgb_mask.channel(1)[i]), byte(rgb_mask.channel(2)[i])};
    if (c == Rgb8{0, 0, 0}) continue;
    auto [it, inserted] = index.try_emplace(c, targets.size());
    if (inserted) targets.emplace_back(c, Grid2D(rgb_mask.height(), rgb_mask.width()));
    targets[it->second].second[i] = 1.0f;
  }
  return targets;
}

/// Linear-interpolated percentile (q in [0, 100]) between order statistics,
/// rank = q / 100 * (n - 1).
inline double percentile(std::vector<double> values, double q) {
  detail::require(!values.empty(), "percentile: empty input");
  std::sort(values.begin(), values.end());
  const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (rank - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline constexpr double kClipLowPercentile = 0.05;
inline constexpr double kClipHighPercentile = 99.95;

/// Z-scores the whole volume with mean and population std of its foreground
/// voxels, then clips to the [0.05, 99.95] percentile range of the result.
inline Volume3D normalize_volume(const Volume3D& vol, const Volume3D& labels) {
  detail::require(vol.same_shape(labels), "normalize_volume: shape mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < vol.size(); ++i) {
    if (labels.values()[i] > 0.5f) {
      sum += vol.values()[i];
      ++count;
    }
  }
  if (count == 0) throw ValidationError("normalize_volume: empty foreground");
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (std::size_t i = 0; i < vol.size(); ++i) {
    if (labels.values()[i] > 0.5f) {
      const double d = vol.values()[i] - mean;
      sq += d * d;
    }
  }
  const double sd = std::sqrt(sq / static_cast<double>(count));
  if (!(sd > 0.0)) throw ValidationError("normalize_volume: zero foreground variance");

  std::vector<double> z(vol.size());
  for (std::size_t i = 0; i < vol.size(); ++i) z[i] = (vol.values()[i] - mean) / sd;
  const double lo = percentile(z, kClipLowPercentile);
  const double hi = percentile(z, kClipHighPercentile);
  Volume3D out(vol.depth(), vol.height(), vol.width());
  for (std::size_t i = 0; i < z.size(); ++i) out.values()[i] = static_cast<float>(std::clamp(z[i], lo, hi));
  return out;
}

struct AxialSlice {
  std::size_t depth = 0;
  Grid2D image;
  Grid2D mask;
};

/// Axial (depth-index) slices that contain at least one foreground label.
inline std::vector<AxialSlice> slice_axial(const Volume3D& vol, const Volume3D& labels) {
  detail::require(vol.same_shape(labels), "slice_axial: shape mismatch");
  std::vector<AxialSlice> out;
  for (std::size_t z = 0; z < vol.depth(); ++z) {
    Grid2D m = labels.slice(z);
    if (count_foreground(m) == 0) continue;
    for (float& v : m) v = v > 0.5f ? 1.0f : 0.0f;
    out.push_back({z, vol.slice(z), std::move(m)});
  }
  return out;
}

}  // namespace uqseg
