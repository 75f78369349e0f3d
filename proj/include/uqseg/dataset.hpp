#pragma once

// On-disk dataset layout:
//   <root>/images/NNNN.ppm
//   <root>/masks/NNNN_T.pgm        (T = target index within the image)
//   <root>/manifest.json           JSON array of
//       {"image": "images/NNNN.ppm", "mask": "masks/NNNN_T.pgm", "target": T,
//        "split": "fit"|"eval", "kind": "<challenge>", "seed": <u64>}
// Paths in the manifest are relative to <root>.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqseg/error.hpp"
#include "uqseg/grid.hpp"
#include "uqseg/image_io.hpp"
#include "uqseg/rng.hpp"
#include "uqseg/synthgen.hpp"

namespace uqseg {

struct ManifestRecord {
  std::string image;
  std::string mask;
  std::size_t target = 0;
  std::string split;
  std::string kind;
  std::uint64_t seed = 0;
  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
};

inline nlohmann::ordered_json to_json(const DatasetManifest& m) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : m.records) {
    arr.push_back({{"image", r.image},
                   {"mask", r.mask},
                   {"target", r.target},
                   {"split", r.split},
                   {"kind", r.kind},
                   {"seed", r.seed}});
  }
  return arr;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  write_text_file(path, to_json(m).dump(2) + "\n");
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw FormatError(path.string() + ": manifest must be a JSON array");
  DatasetManifest m;
  for (const auto& r : j) {
    try {
      m.records.push_back({r.at("image").get<std::string>(), r.at("mask").get<std::string>(),
                           r.value("target", std::size_t{0}), r.at("split").get<std::string>(),
                           r.at("kind").get<std::string>(), r.at("seed").get<std::uint64_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": bad manifest record: " + e.what());
    }
  }
  return m;
}

/// One (image, target mask) pair loaded into memory.
struct Sample {
  std::string id;       // e.g. "0007_0"
  std::string dataset;  // directory name, e.g. "eval_shadow"
  MultiChannelGrid image;
  Grid2D mask;
};

/// Loads every manifest record, checking that files exist and shapes match.
inline std::vector<Sample> load_dataset(const std::filesystem::path& root) {
  const auto manifest = read_manifest(root / "manifest.json");
  std::vector<Sample> samples;
  samples.reserve(manifest.records.size());
  const std::string name = root.filename().string();
  for (const auto& r : manifest.records) {
    Sample s;
    s.image = read_ppm(root / r.image);
    s.mask = read_pgm(root / r.mask, /*binary=*/true);
    if (s.image.height() != s.mask.height() || s.image.width() != s.mask.width()) {
      throw FormatError(r.mask + ": mask and image dimensions differ");
    }
    s.id = std::filesystem::path(r.mask).stem().string();
    s.dataset = name;
    samples.push_back(std::move(s));
  }
  return samples;
}

struct GenerateOptions {
  std::string split = "eval";
  ChallengeKind kind = ChallengeKind::clean;
  std::size_t count = 100;
  std::size_t height = 64;
  std::size_t width = 64;
  double intensity_min = 0.5;
  double intensity_max = 1.0;
  std::uint64_t seed = 0;
};

inline std::string zero_pad(std::size_t i, int width = 4) {
  std::string s = std::to_string(i);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

/// Writes `count` scenes (one target each) plus manifest under root. Scene i
/// uses the stream fork(seed, "<split>/<kind>/<i>"), so datasets can be
/// regenerated scene by scene.
inline DatasetManifest generate_dataset(const std::filesystem::path& root, const GenerateOptions& opt) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "masks");
  const Rng base(opt.seed);
  DatasetManifest manifest;
  constexpr std::array<ShapeFamily, 3> families{ShapeFamily::ellipse, ShapeFamily::polygon, ShapeFamily::blob};
  for (std::size_t i = 0; i < opt.count; ++i) {
    Rng rng = base.fork(opt.split + "/" + std::string(to_string(opt.kind)) + "/" + std::to_string(i));
    const std::uint64_t scene_seed = rng.next_u64();
    Rng scene_rng(scene_seed);
    SceneSpec spec;
    spec.height = opt.height;
    spec.width = opt.width;
    spec.shape = families[scene_rng.uniform_index(families.size())];
    spec.kind = opt.kind;
    spec.intensity = opt.kind == ChallengeKind::clean ? 0.0 : scene_rng.uniform(opt.intensity_min, opt.intensity_max);
    const double scale = static_cast<double>(std::min(opt.height, opt.width)) / 64.0;
    spec.min_radius = 8.0 * scale;
    spec.max_radius = 18.0 * scale;
    const Scene scene = generate_scene(spec, scene_rng);
    const std::string stem = zero_pad(i);
    const std::string image_rel = "images/" + stem + ".ppm";
    const std::string mask_rel = "masks/" + stem + "_0.pgm";
    write_ppm(scene.image, root / image_rel);
    write_pgm(scene.mask, root / mask_rel);
    manifest.records.push_back({image_rel, mask_rel, 0, opt.split, std::string(to_string(opt.kind)), scene_seed});
  }
  write_manifest(manifest, root / "manifest.json");
  return manifest;
}

}  // namespace uqseg
