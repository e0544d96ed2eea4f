// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MAFNET_TENSOR_HPP
#define MAFNET_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mafnet/error.hpp"

namespace mafnet {

/// Dense channel-major (c, i, j) volume. Used both for feature maps inside
/// the network and for the voxel payload of a hyperspectral cube.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(int channels, int height, int width, T fill = T(0))
      : c_(channels), h_(height), w_(width) {
    if (channels < 0 || height < 0 || width < 0) {
      throw ShapeError("negative tensor dimension");
    }
    v_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  }

  int channels() const noexcept { return c_; }
  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  int plane() const noexcept { return h_ * w_; }
  std::size_t size() const noexcept { return v_.size(); }
  bool empty() const noexcept { return v_.empty(); }

  T* data() noexcept { return v_.data(); }
  const T* data() const noexcept { return v_.data(); }
  std::span<T> values() noexcept { return v_; }
  std::span<const T> values() const noexcept { return v_; }

  T* channel(int c) noexcept { return v_.data() + static_cast<std::size_t>(c) * plane(); }
  const T* channel(int c) const noexcept {
    return v_.data() + static_cast<std::size_t>(c) * plane();
  }

  T& operator()(int c, int i, int j) noexcept {
    return v_[(static_cast<std::size_t>(c) * h_ + i) * w_ + j];
  }
  const T& operator()(int c, int i, int j) const noexcept {
    return v_[(static_cast<std::size_t>(c) * h_ + i) * w_ + j];
  }

  bool same_shape(const Tensor& o) const noexcept {
    return c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  bool has_shape(int c, int h, int w) const noexcept { return c_ == c && h_ == h && w_ == w; }

  void fill(T value) { std::fill(v_.begin(), v_.end(), value); }
  void zero() { fill(T(0)); }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "tensor +=");
    for (std::size_t k = 0; k < v_.size(); ++k) v_[k] += o.v_[k];
    return *this;
  }

  bool all_finite() const {
    return std::all_of(v_.begin(), v_.end(), [](T x) { return std::isfinite(x); });
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(c_, h_, w_);
    for (std::size_t k = 0; k < v_.size(); ++k) out.data()[k] = static_cast<U>(v_[k]);
    return out;
  }

  std::string shape_string() const {
    return "(" + std::to_string(c_) + "," + std::to_string(h_) + "," + std::to_string(w_) + ")";
  }

  void require_same_shape(const Tensor& o, const char* where) const {
    if (!same_shape(o)) {
      throw ShapeError(std::string(where) + ": shape " + shape_string() + " vs " +
                       o.shape_string());
    }
  }

  void require_shape(int c, int h, int w, const char* where) const {
    if (!has_shape(c, h, w)) {
      throw ShapeError(std::string(where) + ": expected (" + std::to_string(c) + "," +
                       std::to_string(h) + "," + std::to_string(w) + "), got " +
                       shape_string());
    }
  }

  /// Channel slice [first, first + count).
  Tensor slice_channels(int first, int count) const {
    Tensor out(count, h_, w_);
    std::copy_n(channel(first), static_cast<std::size_t>(count) * plane(), out.data());
    return out;
  }

 private:
  int c_ = 0;
  int h_ = 0;
  int w_ = 0;
  std::vector<T> v_;
};

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("concat_channels: spatial mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
  Tensor<T> out(a.channels() + b.channels(), a.height(), a.width());
  std::copy_n(a.data(), a.size(), out.data());
  std::copy_n(b.data(), b.size(), out.data() + a.size());
  return out;
}

using FeatureMap = Tensor<float>;

}  // namespace mafnet

#endif  // MAFNET_TENSOR_HPP
