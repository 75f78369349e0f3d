#pragma once

// Reference promptable segmentation model: a frozen conv/tanh encoder over
// [image ; dense prompt channels] followed by a per-pixel linear decoder
// logit(i, j) = w . phi(i, j) + b.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "uqseg/conv.hpp"
#include "uqseg/error.hpp"
#include "uqseg/grid.hpp"
#include "uqseg/prompt.hpp"
#include "uqseg/rng.hpp"

namespace uqseg {

inline double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct EncoderConfig {
  std::size_t image_channels = 3;
  std::size_t prompt_channels = kPromptChannels;
  std::vector<std::size_t> widths{16, 32, 32};
  std::size_t kernel = 3;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t input_channels() const noexcept { return image_channels + prompt_channels; }
  [[nodiscard]] std::size_t feature_dim() const noexcept { return widths.back(); }
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Frozen feature extractor. Weights are a pure function of the config; no
/// member function mutates them after construction.
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(EncoderConfig config) : config_(std::move(config)) {
    detail::require(!config_.widths.empty(), "EncoderConfig: at least one layer required");
    Rng rng(config_.seed);
    std::vector<Conv2D> layers;
    std::size_t in = config_.input_channels();
    for (std::size_t l = 0; l < config_.widths.size(); ++l) {
      Rng layer_rng = rng.fork("encoder/layer/" + std::to_string(l));
      const std::size_t fan_in = config_.kernel * config_.kernel * in;
      layers.push_back(Conv2D::random(in, config_.widths[l], config_.kernel, layer_rng,
                                      1.0 / std::sqrt(static_cast<double>(fan_in))));
      in = config_.widths[l];
    }
    stack_ = ConvTanhStack(std::move(layers));
  }

  /// Rebuilds from stored weights (checkpoint reload).
  Encoder(EncoderConfig config, std::span<const double> parameters) : Encoder(std::move(config)) {
    stack_.unpack_parameters(parameters);
  }

  [[nodiscard]] const EncoderConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t feature_dim() const noexcept { return config_.feature_dim(); }
  [[nodiscard]] const ConvTanhStack& stack() const noexcept { return stack_; }
  [[nodiscard]] std::vector<double> parameters() const { return stack_.pack_parameters(); }

  [[nodiscard]] Tensor3 forward(const Tensor3& input, ConvTanhStack::Trace* trace = nullptr) const {
    return stack_.forward(input, trace);
  }

  /// Gradient with respect to the encoder input only; weights stay frozen.
  [[nodiscard]] Tensor3 backward_input(const ConvTanhStack::Trace& trace, Tensor3 grad_features) const {
    return stack_.backward(trace, std::move(grad_features));
  }

 private:
  EncoderConfig config_;
  ConvTanhStack stack_;
};

struct LinearDecoder {
  std::vector<double> w;
  double b = 0.0;

  LinearDecoder() = default;
  explicit LinearDecoder(std::size_t dim) : w(dim, 0.0) {}
  LinearDecoder(std::vector<double> weights, double bias) : w(std::move(weights)), b(bias) {}

  [[nodiscard]] std::size_t dim() const noexcept { return w.size(); }
  [[nodiscard]] double logit(std::span<const double> phi) const noexcept {
    double z = b;
    for (std::size_t k = 0; k < w.size(); ++k) z += w[k] * phi[k];
    return z;
  }
  /// (w, b) flattened, bias last; the layout optimizers and the Laplace use.
  [[nodiscard]] std::vector<double> pack() const {
    std::vector<double> p = w;
    p.push_back(b);
    return p;
  }
  void unpack(std::span<const double> p) {
    detail::require(p.size() == w.size() + 1, "LinearDecoder::unpack: size mismatch");
    std::copy_n(p.begin(), w.size(), w.begin());
    b = p.back();
  }
  friend bool operator==(const LinearDecoder&, const LinearDecoder&) = default;
};

struct RefNet {
  Encoder encoder;
  LinearDecoder decoder;

  RefNet() = default;
  explicit RefNet(EncoderConfig config) : encoder(std::move(config)), decoder(encoder.feature_dim()) {}
  RefNet(Encoder enc, LinearDecoder dec) : encoder(std::move(enc)), decoder(std::move(dec)) {
    detail::require(decoder.dim() == encoder.feature_dim(), "RefNet: decoder/encoder dimension mismatch");
  }
};

struct ForwardResult {
  Grid<double> logits;
  Tensor3 features;
  Grid2D probmap;
};

inline Grid<double> decode_logits(const Tensor3& features, const LinearDecoder& decoder) {
  detail::require(features.channels == decoder.dim(), "decode_logits: feature dimension mismatch");
  Grid<double> z(features.height, features.width);
  for (std::size_t i = 0; i < features.pixels(); ++i) z[i] = decoder.logit(features.pixel(i));
  return z;
}

inline Grid2D probmap_from_logits(const Grid<double>& logits) {
  Grid2D p(logits.height(), logits.width());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = static_cast<float>(sigmoid(logits[i]));
  return p;
}

/// Encoder input [image ; prompt channels] in pixel-major layout.
inline Tensor3 model_input(const RefNet& model, const MultiChannelGrid& image, const Tensor3& prompt_channels) {
  const auto& cfg = model.encoder.config();
  detail::require(image.channels() == cfg.image_channels,
                  "forward: expected " + std::to_string(cfg.image_channels) + " image channels");
  detail::require(prompt_channels.channels == cfg.prompt_channels, "forward: prompt channel count mismatch");
  detail::require(prompt_channels.height == image.height() && prompt_channels.width == image.width(),
                  "forward: prompt/image dimension mismatch");
  const Tensor3 img = to_tensor(image);
  return concat_channels({&img, &prompt_channels});
}

/// Forward pass with caller-supplied dense prompt channels (the hook the fusion
/// refinement uses to substitute its fused embedding).
inline ForwardResult forward_with_prompt_channels(const RefNet& model, const MultiChannelGrid& image,
                                                  const Tensor3& prompt_channels,
                                                  ConvTanhStack::Trace* trace = nullptr) {
  ForwardResult r;
  r.features = model.encoder.forward(model_input(model, image, prompt_channels), trace);
  r.logits = decode_logits(r.features, model.decoder);
  r.probmap = probmap_from_logits(r.logits);
  return r;
}

inline ForwardResult forward(const RefNet& model, const MultiChannelGrid& image, const PromptSet& prompt) {
  detail::require(prompt.valid(), "forward: prompt has neither box nor points");
  const Tensor3 pc = to_tensor(encode_prompt(prompt, image.height(), image.width()));
  return forward_with_prompt_channels(model, image, pc);
}

/// Features only; the frozen encoder output phi.
inline Tensor3 encode_features(const RefNet& model, const MultiChannelGrid& image, const PromptSet& prompt) {
  const Tensor3 pc = to_tensor(encode_prompt(prompt, image.height(), image.width()));
  return model.encoder.forward(model_input(model, image, pc));
}

inline constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
template <typename P, typename M>
double bce_loss(const Grid<P>& probmap, const Grid<M>& mask) {
  require_same_shape(probmap, mask, "bce_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < probmap.size(); ++i) {
    const double p = std::clamp(static_cast<double>(probmap[i]), kProbClamp, 1.0 - kProbClamp);
    const double m = static_cast<double>(mask[i]);
    total -= m * std::log(p) + (1.0 - m) * std::log(1.0 - p);
  }
  return total / static_cast<double>(probmap.size());
}

/// BCE from logits in double precision; used wherever the loss feeds a
/// gradient check or training log.
inline double bce_loss_from_logits(const Grid<double>& logits, const Grid2D& mask) {
  Grid<double> p(logits.height(), logits.width());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = sigmoid(logits[i]);
  return bce_loss(p, mask);
}

/// d loss / d logit per pixel: (p - m) / HW.
inline Grid<double> bce_logit_grad(const Grid<double>& logits, const Grid2D& mask) {
  require_same_shape(logits, mask, "bce_logit_grad");
  Grid<double> g(logits.height(), logits.width());
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) g[i] = (sigmoid(logits[i]) - mask[i]) * inv_n;
  return g;
}

struct DecoderGrad {
  std::vector<double> w;
  double b = 0.0;
  [[nodiscard]] std::vector<double> pack() const {
    std::vector<double> p = w;
    p.push_back(b);
    return p;
  }
};

/// Closed-form BCE gradient with respect to (w, b):
/// dz = (p - m) / HW, dw = sum dz * phi, db = sum dz.
template <typename P>
DecoderGrad bce_grad(const Tensor3& features, const Grid<P>& probmap, const Grid2D& mask) {
  require_same_shape(probmap, mask, "bce_grad");
  detail::require(features.pixels() == probmap.size(), "bce_grad: feature/probmap size mismatch");
  DecoderGrad g{std::vector<double>(features.channels, 0.0), 0.0};
  const double inv_n = 1.0 / static_cast<double>(probmap.size());
  for (std::size_t i = 0; i < probmap.size(); ++i) {
    const double dz = (static_cast<double>(probmap[i]) - mask[i]) * inv_n;
    const auto phi = features.pixel(i);
    for (std::size_t k = 0; k < phi.size(); ++k) g.w[k] += dz * phi[k];
    g.b += dz;
  }
  return g;
}

}  // namespace uqseg
