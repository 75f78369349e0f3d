#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "uqseg/error.hpp"
#include "uqseg/grid.hpp"
#include "uqseg/rng.hpp"

namespace uqseg {

namespace conv_detail {
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using ColVecMap = Eigen::Map<Eigen::VectorXd>;
using ConstColVecMap = Eigen::Map<const Eigen::VectorXd>;
}  // namespace conv_detail

/// Square "same" convolution (zero padding, stride 1) on pixel-major tensors.
///
/// Weights are stored row-major as [out][ky][kx][in] so one output channel's
/// filter is a contiguous row matching the im2col patch layout.
class Conv2D {
 public:
  Conv2D() = default;
  Conv2D(std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
      : in_(in_channels), out_(out_channels), kernel_(kernel),
        weights_(out_channels * kernel * kernel * in_channels, 0.0), bias_(out_channels, 0.0) {
    detail::require(kernel % 2 == 1, "Conv2D: kernel size must be odd");
  }

  /// Gaussian weights scaled by 1/sqrt(fan_in); bias scaled by bias_scale.
  static Conv2D random(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Rng& rng,
                       double bias_scale = 0.0) {
    Conv2D c(in_channels, out_channels, kernel);
    const double scale = 1.0 / std::sqrt(static_cast<double>(c.fan_in()));
    for (double& w : c.weights_) w = rng.normal() * scale;
    for (double& b : c.bias_) b = rng.normal() * bias_scale;
    return c;
  }

  [[nodiscard]] std::size_t in_channels() const noexcept { return in_; }
  [[nodiscard]] std::size_t out_channels() const noexcept { return out_; }
  [[nodiscard]] std::size_t kernel() const noexcept { return kernel_; }
  [[nodiscard]] std::size_t fan_in() const noexcept { return kernel_ * kernel_ * in_; }

  std::vector<double>& weights() noexcept { return weights_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::vector<double>& bias() noexcept { return bias_; }
  const std::vector<double>& bias() const noexcept { return bias_; }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return weights_.size() + bias_.size(); }

  double& weight(std::size_t out, std::size_t ky, std::size_t kx, std::size_t in) {
    return weights_[((out * kernel_ + ky) * kernel_ + kx) * in_ + in];
  }

  /// Pre-activation output (no nonlinearity).
  [[nodiscard]] Tensor3 forward(const Tensor3& input) const {
    check_input(input);
    using namespace conv_detail;
    Tensor3 out(input.height, input.width, out_);
    RowMap y(out.data.data(), static_cast<Eigen::Index>(input.pixels()), static_cast<Eigen::Index>(out_));
    ConstRowMap w(weights_.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(fan_in()));
    if (kernel_ == 1) {
      ConstRowMap x(input.data.data(), static_cast<Eigen::Index>(input.pixels()), static_cast<Eigen::Index>(in_));
      y.noalias() = x * w.transpose();
    } else {
      const std::vector<double> patches = im2col(input);
      ConstRowMap p(patches.data(), static_cast<Eigen::Index>(input.pixels()), static_cast<Eigen::Index>(fan_in()));
      y.noalias() = p * w.transpose();
    }
    ConstColVecMap b(bias_.data(), static_cast<Eigen::Index>(out_));
    y.rowwise() += b.transpose();
    return out;
  }

  /// d loss / d input given d loss / d pre-activation output.
  [[nodiscard]] Tensor3 backward_input(const Tensor3& grad_out) const {
    using namespace conv_detail;
    detail::require(grad_out.channels == out_, "Conv2D::backward_input: channel mismatch");
    const auto n = static_cast<Eigen::Index>(grad_out.pixels());
    ConstRowMap g(grad_out.data.data(), n, static_cast<Eigen::Index>(out_));
    ConstRowMap w(weights_.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(fan_in()));
    Tensor3 grad_in(grad_out.height, grad_out.width, in_);
    if (kernel_ == 1) {
      RowMap gi(grad_in.data.data(), n, static_cast<Eigen::Index>(in_));
      gi.noalias() = g * w;
      return grad_in;
    }
    std::vector<double> grad_patches(grad_out.pixels() * fan_in());
    RowMap gp(grad_patches.data(), n, static_cast<Eigen::Index>(fan_in()));
    gp.noalias() = g * w;
    col2im_add(grad_patches, grad_in);
    return grad_in;
  }

  /// Accumulates d loss / d weights and d loss / d bias into the given spans.
  void accumulate_parameter_grad(const Tensor3& input, const Tensor3& grad_out, std::span<double> grad_weights,
                                 std::span<double> grad_bias) const {
    using namespace conv_detail;
    check_input(input);
    detail::require(grad_weights.size() == weights_.size() && grad_bias.size() == bias_.size(),
                    "Conv2D::accumulate_parameter_grad: span size mismatch");
    const auto n = static_cast<Eigen::Index>(grad_out.pixels());
    ConstRowMap g(grad_out.data.data(), n, static_cast<Eigen::Index>(out_));
    RowMap gw(grad_weights.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(fan_in()));
    if (kernel_ == 1) {
      ConstRowMap x(input.data.data(), n, static_cast<Eigen::Index>(in_));
      gw.noalias() += g.transpose() * x;
    } else {
      const std::vector<double> patches = im2col(input);
      ConstRowMap p(patches.data(), n, static_cast<Eigen::Index>(fan_in()));
      gw.noalias() += g.transpose() * p;
    }
    ColVecMap gb(grad_bias.data(), static_cast<Eigen::Index>(out_));
    gb += g.colwise().sum().transpose();
  }

 private:
  void check_input(const Tensor3& input) const {
    detail::require(input.channels == in_, "Conv2D: expected " + std::to_string(in_) + " input channels, got " +
                                               std::to_string(input.channels));
  }

  [[nodiscard]] std::vector<double> im2col(const Tensor3& input) const {
    const auto h = static_cast<std::ptrdiff_t>(input.height);
    const auto w = static_cast<std::ptrdiff_t>(input.width);
    const auto r = static_cast<std::ptrdiff_t>(kernel_ / 2);
    const std::size_t k = fan_in();
    std::vector<double> patches(input.pixels() * k, 0.0);
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double* row = patches.data() + static_cast<std::size_t>(y * w + x) * k;
        for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
          const std::ptrdiff_t sy = y + dy;
          for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
            const std::ptrdiff_t sx = x + dx;
            double* dst = row + static_cast<std::size_t>((dy + r) * static_cast<std::ptrdiff_t>(kernel_) + dx + r) * in_;
            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
            const double* src = input.data.data() + static_cast<std::size_t>(sy * w + sx) * in_;
            std::copy_n(src, in_, dst);
          }
        }
      }
    }
    return patches;
  }

  void col2im_add(const std::vector<double>& patches, Tensor3& grad_in) const {
    const auto h = static_cast<std::ptrdiff_t>(grad_in.height);
    const auto w = static_cast<std::ptrdiff_t>(grad_in.width);
    const auto r = static_cast<std::ptrdiff_t>(kernel_ / 2);
    const std::size_t k = fan_in();
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        const double* row = patches.data() + static_cast<std::size_t>(y * w + x) * k;
        for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
          const std::ptrdiff_t sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
            const std::ptrdiff_t sx = x + dx;
            if (sx < 0 || sx >= w) continue;
            const double* src = row + static_cast<std::size_t>((dy + r) * static_cast<std::ptrdiff_t>(kernel_) + dx + r) * in_;
            double* dst = grad_in.data.data() + static_cast<std::size_t>(sy * w + sx) * in_;
            for (std::size_t c = 0; c < in_; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }

  std::size_t in_ = 0;
  std::size_t out_ = 0;
  std::size_t kernel_ = 1;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

inline void tanh_inplace(Tensor3& t) {
  for (double& v : t.data) v = std::tanh(v);
}

/// grad *= (1 - act^2), the tanh derivative expressed through its output.
inline void tanh_backward_inplace(Tensor3& grad, const Tensor3& activation) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    grad.data[i] *= 1.0 - activation.data[i] * activation.data[i];
  }
}

/// A stack of conv + tanh layers whose forward pass can record the activations
/// needed to backpropagate to its input and parameters.
class ConvTanhStack {
 public:
  /// activations[0] is the input; activations[l + 1] the output of layer l.
  struct Trace {
    std::vector<Tensor3> activations;
  };

  ConvTanhStack() = default;
  explicit ConvTanhStack(std::vector<Conv2D> layers) : layers_(std::move(layers)) {}

  [[nodiscard]] const std::vector<Conv2D>& layers() const noexcept { return layers_; }
  std::vector<Conv2D>& layers() noexcept { return layers_; }
  [[nodiscard]] std::size_t out_channels() const { return layers_.back().out_channels(); }
  [[nodiscard]] std::size_t in_channels() const { return layers_.front().in_channels(); }

  [[nodiscard]] Tensor3 forward(const Tensor3& input, Trace* trace = nullptr) const {
    if (trace) {
      trace->activations.clear();
      trace->activations.push_back(input);
    }
    Tensor3 x = input;
    for (const auto& layer : layers_) {
      x = layer.forward(x);
      tanh_inplace(x);
      if (trace) trace->activations.push_back(x);
    }
    return x;
  }

  /// Backpropagates d loss / d output to d loss / d input. When param_grads is
  /// non-null it receives per-layer weight and bias gradients, laid out as in
  /// pack_parameters().
  Tensor3 backward(const Trace& trace, Tensor3 grad_out, std::vector<double>* param_grads = nullptr) const {
    detail::require(trace.activations.size() == layers_.size() + 1, "ConvTanhStack::backward: stale trace");
    if (param_grads) param_grads->assign(parameter_count(), 0.0);
    std::vector<std::size_t> offsets = parameter_offsets();
    for (std::size_t l = layers_.size(); l-- > 0;) {
      tanh_backward_inplace(grad_out, trace.activations[l + 1]);
      if (param_grads) {
        const auto& layer = layers_[l];
        std::span<double> all(*param_grads);
        layer.accumulate_parameter_grad(trace.activations[l], grad_out,
                                        all.subspan(offsets[l], layer.weights().size()),
                                        all.subspan(offsets[l] + layer.weights().size(), layer.bias().size()));
      }
      grad_out = layers_[l].backward_input(grad_out);
    }
    return grad_out;
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.parameter_count();
    return n;
  }

  [[nodiscard]] std::vector<double> pack_parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& l : layers_) {
      out.insert(out.end(), l.weights().begin(), l.weights().end());
      out.insert(out.end(), l.bias().begin(), l.bias().end());
    }
    return out;
  }

  void unpack_parameters(std::span<const double> params) {
    detail::require(params.size() == parameter_count(), "ConvTanhStack::unpack_parameters: size mismatch");
    std::size_t pos = 0;
    for (auto& l : layers_) {
      std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos), l.weights().size(), l.weights().begin());
      pos += l.weights().size();
      std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos), l.bias().size(), l.bias().begin());
      pos += l.bias().size();
    }
  }

 private:
  [[nodiscard]] std::vector<std::size_t> parameter_offsets() const {
    std::vector<std::size_t> offsets;
    std::size_t pos = 0;
    for (const auto& l : layers_) {
      offsets.push_back(pos);
      pos += l.parameter_count();
    }
    return offsets;
  }

  std::vector<Conv2D> layers_;
};

}  // namespace uqseg
