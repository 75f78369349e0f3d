#pragma once

// Checkpoint container shared by every trained component.
//
//   "UCKP" | u32 version | u32 header_bytes | u32 block_count
//   header: UTF-8 JSON {"kind", "seed", "config", "blocks": [{"name","rows","cols"}...]}
//   block_count times:
//     "UMPD" | u32 rows | u32 cols | u32 reserved(0) | rows*cols f64, row-major
//
// All integers and floats are little-endian. Blocks appear in the order listed
// in the header. Weights are stored in 64-bit so a reload is exact.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqseg/error.hpp"
#include "uqseg/fusion.hpp"
#include "uqseg/image_io.hpp"
#include "uqseg/laplace.hpp"
#include "uqseg/refnet.hpp"
#include "uqseg/variance_head.hpp"

namespace uqseg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointBlock {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
};

struct Checkpoint {
  std::string kind;
  std::uint64_t seed = 0;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<CheckpointBlock> blocks;

  void add(std::string name, std::size_t rows, std::size_t cols, std::vector<double> data) {
    detail::require(data.size() == rows * cols, "Checkpoint::add: block size mismatch");
    blocks.push_back({std::move(name), rows, cols, std::move(data)});
  }

  [[nodiscard]] const CheckpointBlock& block(const std::string& name) const {
    for (const auto& b : blocks) {
      if (b.name == name) return b;
    }
    throw FormatError("checkpoint has no block '" + name + "'");
  }

  void expect_kind(const std::string& want) const {
    if (kind != want) throw FormatError("checkpoint kind is '" + kind + "', expected '" + want + "'");
  }
};

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck) {
  using namespace io_detail;
  nlohmann::ordered_json header;
  header["kind"] = ck.kind;
  header["seed"] = ck.seed;
  header["config"] = ck.config;
  header["blocks"] = nlohmann::ordered_json::array();
  for (const auto& b : ck.blocks) header["blocks"].push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  const std::string text = header.dump();

  std::vector<unsigned char> out{'U', 'C', 'K', 'P'};
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  put_u32(out, static_cast<std::uint32_t>(ck.blocks.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& b : ck.blocks) {
    out.insert(out.end(), {'U', 'M', 'P', 'D'});
    put_u32(out, static_cast<std::uint32_t>(b.rows));
    put_u32(out, static_cast<std::uint32_t>(b.cols));
    put_u32(out, 0);
    for (double v : b.data) put_f64(out, v);
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  using namespace io_detail;
  auto need = [&](std::size_t pos, std::size_t n) {
    if (pos + n > bytes.size()) throw FormatError("checkpoint: truncated");
  };
  need(0, 16);
  if (std::string(bytes.begin(), bytes.begin() + 4) != "UCKP") throw FormatError("checkpoint: bad magic");
  if (get_u32(&bytes[4]) != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
  const std::size_t header_len = get_u32(&bytes[8]);
  const std::size_t count = get_u32(&bytes[12]);
  std::size_t pos = 16;
  need(pos, header_len);
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                           bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  pos += header_len;

  Checkpoint ck;
  try {
    ck.kind = header.at("kind").get<std::string>();
    ck.seed = header.at("seed").get<std::uint64_t>();
    ck.config = header.at("config");
    const auto& listed = header.at("blocks");
    if (listed.size() != count) throw FormatError("checkpoint: block count disagrees with header");
    for (std::size_t i = 0; i < count; ++i) {
      need(pos, 16);
      if (std::string(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + 4)) != "UMPD") {
        throw FormatError("checkpoint: bad block magic");
      }
      CheckpointBlock b;
      b.name = listed[i].at("name").get<std::string>();
      b.rows = get_u32(&bytes[pos + 4]);
      b.cols = get_u32(&bytes[pos + 8]);
      if (b.rows != listed[i].at("rows").get<std::size_t>() || b.cols != listed[i].at("cols").get<std::size_t>()) {
        throw FormatError("checkpoint: block '" + b.name + "' shape disagrees with header");
      }
      pos += 16;
      need(pos, b.rows * b.cols * 8);
      b.data.resize(b.rows * b.cols);
      for (std::size_t k = 0; k < b.data.size(); ++k, pos += 8) b.data[k] = get_f64(&bytes[pos]);
      ck.blocks.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (pos != bytes.size()) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

inline void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  io_detail::write_bytes(path, encode_checkpoint(ck));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io_detail::read_bytes(path));
}

namespace checkpoint_detail {

inline void add_stack(Checkpoint& ck, const std::string& prefix, const ConvTanhStack& stack) {
  for (std::size_t l = 0; l < stack.layers().size(); ++l) {
    const Conv2D& c = stack.layers()[l];
    const std::string base = prefix + "/layer" + std::to_string(l);
    ck.add(base + "/weights", c.out_channels(), c.fan_in(), c.weights());
    ck.add(base + "/bias", c.out_channels(), 1, c.bias());
  }
}

/// Concatenates the named blocks in stack packing order.
inline std::vector<double> collect_stack(const Checkpoint& ck, const std::string& prefix, std::size_t layers) {
  std::vector<double> out;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string base = prefix + "/layer" + std::to_string(l);
    for (const char* part : {"/weights", "/bias"}) {
      const auto& b = ck.block(base + part);
      out.insert(out.end(), b.data.begin(), b.data.end());
    }
  }
  return out;
}

inline std::vector<double> sized(const Checkpoint& ck, const std::string& name, std::size_t n) {
  const auto& b = ck.block(name);
  if (b.data.size() != n) throw FormatError("checkpoint: block '" + name + "' has the wrong size");
  return b.data;
}

}  // namespace checkpoint_detail

inline nlohmann::ordered_json to_json(const EncoderConfig& c) {
  return {{"image_channels", c.image_channels},
          {"prompt_channels", c.prompt_channels},
          {"widths", c.widths},
          {"kernel", c.kernel},
          {"seed", c.seed}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::ordered_json& j) {
  EncoderConfig c;
  c.image_channels = j.at("image_channels").get<std::size_t>();
  c.prompt_channels = j.at("prompt_channels").get<std::size_t>();
  c.widths = j.at("widths").get<std::vector<std::size_t>>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// ---- model (encoder + decoder) ----

inline Checkpoint model_checkpoint(const RefNet& model, std::uint64_t seed) {
  Checkpoint ck;
  ck.kind = "refnet";
  ck.seed = seed;
  ck.config = {{"encoder", to_json(model.encoder.config())}};
  checkpoint_detail::add_stack(ck, "encoder", model.encoder.stack());
  ck.add("decoder/w", 1, model.decoder.dim(), model.decoder.w);
  ck.add("decoder/b", 1, 1, {model.decoder.b});
  return ck;
}

inline RefNet model_from_checkpoint(const Checkpoint& ck) {
  ck.expect_kind("refnet");
  try {
    const EncoderConfig cfg = encoder_config_from_json(ck.config.at("encoder"));
    RefNet model(cfg);
    const std::vector<double> enc = checkpoint_detail::collect_stack(ck, "encoder", cfg.widths.size());
    if (enc.size() != model.encoder.stack().parameter_count()) throw FormatError("checkpoint: encoder size mismatch");
    model.encoder = Encoder(cfg, enc);
    model.decoder.w = checkpoint_detail::sized(ck, "decoder/w", model.decoder.dim());
    model.decoder.b = checkpoint_detail::sized(ck, "decoder/b", 1)[0];
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad encoder config: ") + e.what());
  }
}

// ---- Laplace posterior ----

inline Checkpoint laplace_checkpoint(const LaplacePosterior& post, std::uint64_t seed) {
  Checkpoint ck;
  ck.kind = "laplace";
  ck.seed = seed;
  ck.config = {{"prior_precision", post.prior_precision}};
  ck.add("laplace/map", 1, post.dim(), post.map.pack());
  ck.add("laplace/hessian_diag", 1, post.dim(), post.hessian_diag);
  return ck;
}

inline LaplacePosterior laplace_from_checkpoint(const Checkpoint& ck) {
  ck.expect_kind("laplace");
  const auto& map = ck.block("laplace/map");
  LaplacePosterior post;
  post.map = LinearDecoder(map.data.size() - 1);
  post.map.unpack(map.data);
  post.hessian_diag = checkpoint_detail::sized(ck, "laplace/hessian_diag", map.data.size());
  post.prior_precision = ck.config.at("prior_precision").get<double>();
  return post;
}

// ---- variance head ----

inline Checkpoint variance_head_checkpoint(const VarianceHead& head, std::uint64_t seed) {
  Checkpoint ck;
  ck.kind = "varnet";
  ck.seed = seed;
  ck.config = {{"feature_dim", head.feature_dim()}};
  ck.add("varnet/v", 1, head.v.size(), head.v);
  ck.add("varnet/c", 1, 1, {head.c});
  return ck;
}

inline VarianceHead variance_head_from_checkpoint(const Checkpoint& ck) {
  ck.expect_kind("varnet");
  VarianceHead head(ck.config.at("feature_dim").get<std::size_t>());
  head.v = checkpoint_detail::sized(ck, "varnet/v", head.v.size());
  head.c = checkpoint_detail::sized(ck, "varnet/c", 1)[0];
  return head;
}

// ---- fusion layer ----

inline Checkpoint fusion_checkpoint(const FusionLayer& fusion, FusionVariant variant, std::uint64_t seed) {
  Checkpoint ck;
  ck.kind = "fusion";
  ck.seed = seed;
  ck.config = {{"variant", std::string(to_string(variant))}, {"prompt_channels", fusion.prompt_channels()}};
  checkpoint_detail::add_stack(ck, "fusion/uncertainty", fusion.uncertainty_encoder());
  ck.add("fusion/fuse/weights", fusion.fuse().out_channels(), fusion.fuse().fan_in(), fusion.fuse().weights());
  ck.add("fusion/fuse/bias", fusion.fuse().out_channels(), 1, fusion.fuse().bias());
  return ck;
}

inline FusionLayer fusion_from_checkpoint(const Checkpoint& ck) {
  ck.expect_kind("fusion");
  FusionLayer f = FusionLayer::identity(ck.config.at("prompt_channels").get<std::size_t>(), 0);
  std::vector<double> p =
      checkpoint_detail::collect_stack(ck, "fusion/uncertainty", f.uncertainty_encoder().layers().size());
  for (const char* name : {"fusion/fuse/weights", "fusion/fuse/bias"}) {
    const auto& b = ck.block(name);
    p.insert(p.end(), b.data.begin(), b.data.end());
  }
  if (p.size() != f.parameter_count()) throw FormatError("checkpoint: fusion size mismatch");
  f.unpack(p);
  return f;
}

}  // namespace uqseg
