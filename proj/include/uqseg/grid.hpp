#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "uqseg/error.hpp"

namespace uqseg {

/// Dense row-major H x W scalar field. Element (y, x) lives at data[y * width + x].
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), data_(height * width, fill) {}
  Grid(std::size_t height, std::size_t width, std::vector<T> data)
      : height_(height), width_(width), data_(std::move(data)) {
    detail::require(data_.size() == height_ * width_,
                    "grid data length " + std::to_string(data_.size()) + " != " +
                        std::to_string(height_) + "x" + std::to_string(width_));
  }

  [[nodiscard]] std::size_t height() const noexcept { return height_; }
  [[nodiscard]] std::size_t width() const noexcept { return width_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t y, std::size_t x) noexcept { return data_[y * width_ + x]; }
  const T& operator()(std::size_t y, std::size_t x) const noexcept { return data_[y * width_ + x]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  template <typename U>
  [[nodiscard]] bool same_shape(const Grid<U>& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(static_cast<double>(v)); });
  }

  template <typename U>
  [[nodiscard]] Grid<U> cast() const {
    Grid<U> out(height_, width_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> data_;
};

using Grid2D = Grid<float>;

template <typename T, typename U>
void require_same_shape(const Grid<T>& a, const Grid<U>& b, const char* what) {
  detail::require(a.same_shape(b), std::string(what) + ": shape mismatch (" + std::to_string(a.height()) + "x" +
                                       std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                                       std::to_string(b.width()) + ")");
}

/// Counts pixels strictly above 0.5 (binary masks store 0/1).
template <typename T>
std::size_t count_foreground(const Grid<T>& mask) {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](T v) { return v > T(0.5); }));
}

/// H x W grid with C channels stored as one Grid2D per channel.
class MultiChannelGrid {
 public:
  MultiChannelGrid() = default;
  MultiChannelGrid(std::size_t channels, std::size_t height, std::size_t width, float fill = 0.0f)
      : channels_(channels, Grid2D(height, width, fill)) {}
  explicit MultiChannelGrid(std::vector<Grid2D> channels) : channels_(std::move(channels)) {
    for (const auto& c : channels_) {
      detail::require(c.same_shape(channels_.front()), "MultiChannelGrid: channels differ in shape");
    }
  }

  [[nodiscard]] std::size_t channels() const noexcept { return channels_.size(); }
  [[nodiscard]] std::size_t height() const noexcept { return channels_.empty() ? 0 : channels_[0].height(); }
  [[nodiscard]] std::size_t width() const noexcept { return channels_.empty() ? 0 : channels_[0].width(); }

  Grid2D& channel(std::size_t c) { return channels_.at(c); }
  const Grid2D& channel(std::size_t c) const { return channels_.at(c); }
  float& operator()(std::size_t c, std::size_t y, std::size_t x) { return channels_[c](y, x); }
  float operator()(std::size_t c, std::size_t y, std::size_t x) const { return channels_[c](y, x); }

  friend bool operator==(const MultiChannelGrid&, const MultiChannelGrid&) = default;

 private:
  std::vector<Grid2D> channels_;
};

/// Depth x height x width scalar volume, slice-major.
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(std::size_t depth, std::size_t height, std::size_t width, float fill = 0.0f)
      : depth_(depth), height_(height), width_(width), data_(depth * height * width, fill) {}
  Volume3D(std::size_t depth, std::size_t height, std::size_t width, std::vector<float> data)
      : depth_(depth), height_(height), width_(width), data_(std::move(data)) {
    detail::require(data_.size() == depth_ * height_ * width_, "Volume3D: data length mismatch");
  }

  [[nodiscard]] std::size_t depth() const noexcept { return depth_; }
  [[nodiscard]] std::size_t height() const noexcept { return height_; }
  [[nodiscard]] std::size_t width() const noexcept { return width_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

  float& operator()(std::size_t z, std::size_t y, std::size_t x) { return data_[(z * height_ + y) * width_ + x]; }
  float operator()(std::size_t z, std::size_t y, std::size_t x) const {
    return data_[(z * height_ + y) * width_ + x];
  }
  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  [[nodiscard]] bool same_shape(const Volume3D& o) const noexcept {
    return depth_ == o.depth_ && height_ == o.height_ && width_ == o.width_;
  }

  [[nodiscard]] Grid2D slice(std::size_t z) const {
    Grid2D out(height_, width_);
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(z * height_ * width_), height_ * width_, out.begin());
    return out;
  }

  friend bool operator==(const Volume3D&, const Volume3D&) = default;

 private:
  std::size_t depth_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> data_;
};

/// Pixel-major (H, W, C) dense tensor in double precision. Used for network
/// activations, where channels of one pixel are contiguous.
struct Tensor3 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  [[nodiscard]] std::size_t pixels() const noexcept { return height * width; }
  double& at(std::size_t y, std::size_t x, std::size_t c) noexcept { return data[(y * width + x) * channels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return data[(y * width + x) * channels + c];
  }
  std::span<double> pixel(std::size_t i) noexcept { return {data.data() + i * channels, channels}; }
  std::span<const double> pixel(std::size_t i) const noexcept { return {data.data() + i * channels, channels}; }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;
};

inline Tensor3 to_tensor(const MultiChannelGrid& g) {
  Tensor3 t(g.height(), g.width(), g.channels());
  const std::size_t n = t.pixels();
  for (std::size_t c = 0; c < g.channels(); ++c) {
    const auto& ch = g.channel(c);
    for (std::size_t i = 0; i < n; ++i) t.data[i * t.channels + c] = ch[i];
  }
  return t;
}

template <typename T>
Tensor3 to_tensor(const Grid<T>& g) {
  Tensor3 t(g.height(), g.width(), 1);
  for (std::size_t i = 0; i < g.size(); ++i) t.data[i] = static_cast<double>(g[i]);
  return t;
}

/// Channel-wise concatenation; all parts must share H x W.
inline Tensor3 concat_channels(std::initializer_list<const Tensor3*> parts) {
  const Tensor3& first = **parts.begin();
  std::size_t total = 0;
  for (const Tensor3* p : parts) {
    detail::require(p->height == first.height && p->width == first.width, "concat_channels: shape mismatch");
    total += p->channels;
  }
  Tensor3 out(first.height, first.width, total);
  const std::size_t n = out.pixels();
  for (std::size_t i = 0; i < n; ++i) {
    double* dst = out.data.data() + i * total;
    for (const Tensor3* p : parts) {
      std::copy_n(p->data.data() + i * p->channels, p->channels, dst);
      dst += p->channels;
    }
  }
  return out;
}

/// Copies channels [first, first + count) into a new tensor.
inline Tensor3 slice_channels(const Tensor3& t, std::size_t first, std::size_t count) {
  Tensor3 out(t.height, t.width, count);
  const std::size_t n = t.pixels();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(t.data.data() + i * t.channels + first, count, out.data.data() + i * count);
  }
  return out;
}

}  // namespace uqseg
