// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MAFNET_LAYERS_HPP
#define MAFNET_LAYERS_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mafnet/tensor.hpp"

namespace mafnet {

enum class InitKind { kFanInUniform, kOnes, kZeros };

/// A learnable tensor with its accumulated gradient.
template <typename T>
struct Param {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  int fan_in = 1;
  InitKind init = InitKind::kFanInUniform;

  Param() = default;
  Param(std::vector<int> dims, int fan_in_, InitKind kind = InitKind::kFanInUniform);
  std::size_t size() const noexcept { return value.size(); }
  void zero_grad();
};

template <typename T>
using ParamVisitor = std::function<void(const std::string& path, Param<T>& param)>;

/// Deterministic initialization: each tensor is seeded from (seed, path) so
/// the result never depends on visiting order.
template <typename T>
void initialize_param(Param<T>& param, const std::string& path, std::uint64_t seed);

enum class Padding { kZeros, kReflect };

/// Gather table for im2col: for every kernel tap and output pixel, the flat
/// source offset inside one input plane, or -1 for zero padding.
struct PatchIndex {
  int in_h = 0, in_w = 0, out_h = 0, out_w = 0, taps = 0;
  std::vector<std::int32_t> src;  // [tap][out pixel]

  static PatchIndex build(int in_h, int in_w, int kernel, int stride, int pad, Padding mode);
  int out_plane() const noexcept { return out_h * out_w; }
};

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  Padding mode = Padding::kZeros;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  explicit Conv2d(ConvSpec spec);

  Tensor<T> forward(const Tensor<T>& x);
  /// Accumulates parameter gradients; returns the input gradient.
  Tensor<T> backward(const Tensor<T>& dy);

  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
  Param<T>& weight() noexcept { return weight_; }
  Param<T>& bias() noexcept { return bias_; }
  const ConvSpec& spec() const noexcept { return spec_; }
  int out_size(int n) const noexcept { return (n + 2 * spec_.padding - spec_.kernel) / spec_.stride + 1; }

 private:
  const PatchIndex& index_for(int h, int w);

  ConvSpec spec_;
  Param<T> weight_;  // [out][in * k * k]
  Param<T> bias_;    // [out]
  Tensor<T> input_;
  PatchIndex index_;
  std::vector<T> col_;
};

/// Transposed convolution, kernel 4 / stride 2 / padding 1 by default, which
/// doubles both spatial dims exactly.
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(int in_channels, int out_channels, int kernel = 4, int stride = 2, int padding = 1);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
  Param<T>& weight() noexcept { return weight_; }
  Param<T>& bias() noexcept { return bias_; }

 private:
  int in_ = 0, out_ = 0, kernel_ = 4, stride_ = 2, padding_ = 1;
  Param<T> weight_;  // [in][out * k * k]
  Param<T> bias_;    // [out]
  Tensor<T> input_;
  PatchIndex index_;
  std::vector<T> col_;
};

// --- stateless ops ---------------------------------------------------------

inline constexpr double kLeakySlope = 0.2;

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x);
/// Gradient through leaky ReLU given the op's input.
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// Average pooling with window == stride == factor; partial border windows
/// average over their valid pixels.
template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int factor);
template <typename T>
Tensor<T> avg_pool_backward(const Tensor<T>& dy, int factor, int in_h, int in_w);

/// Nearest-neighbour upsampling to (out_h, out_w): output (i, j) reads input
/// (i / factor, j / factor).
template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor, int out_h, int out_w);
template <typename T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& dy, int factor, int in_h, int in_w);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

}  // namespace mafnet

#endif  // MAFNET_LAYERS_HPP
