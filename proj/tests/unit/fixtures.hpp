#pragma once

// Small in-memory models and samples shared by the test files.

#include <string>
#include <vector>

#include "uqseg/uqseg.hpp"

namespace fixture {

using namespace uqseg;

inline EncoderConfig tiny_encoder(std::uint64_t seed = 1, std::vector<std::size_t> widths = {8, 8}) {
  EncoderConfig c;
  c.widths = std::move(widths);
  c.seed = seed;
  return c;
}

/// Model with a random (non-trained) decoder so outputs are not constant.
inline RefNet tiny_model(std::uint64_t seed = 1, std::vector<std::size_t> widths = {8, 8}) {
  RefNet m(tiny_encoder(seed, std::move(widths)));
  Rng rng(seed + 100);
  for (double& w : m.decoder.w) w = rng.normal();
  m.decoder.b = -0.5;
  return m;
}

inline std::vector<Sample> samples(std::size_t n, std::size_t size = 16, std::uint64_t seed = 0,
                                   ChallengeKind kind = ChallengeKind::clean) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    SceneSpec spec;
    spec.height = spec.width = size;
    spec.max_radius = static_cast<double>(size) / 4.0;
    spec.min_radius = 0.75 * spec.max_radius;
    spec.kind = kind;
    spec.intensity = kind == ChallengeKind::clean ? 0.0 : 0.8;
    spec.texture_cells = 2;
    Rng rng(Rng(seed).fork("fixture/" + std::to_string(i)).next_u64());
    Scene s = generate_scene(spec, rng);
    out.push_back({zero_pad(i) + "_0", "fixture", std::move(s.image), std::move(s.mask)});
  }
  return out;
}

inline PromptSet box_prompt(const Grid2D& mask) {
  PromptSet p;
  p.bbox = bbox_from_mask(mask);
  return p;
}

}  // namespace fixture
