// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MAFNET_BLOCKS_HPP
#define MAFNET_BLOCKS_HPP

#include <array>
#include <utility>
#include <vector>

#include "mafnet/layers.hpp"

namespace mafnet {

/// Per-channel spatial mean and population standard deviation.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> instance_stats(const Tensor<T>& h);

/// Channel count at pyramid scale `scale` for a network of base width C.
constexpr int scale_channels(int base_channels, int scale) { return base_channels << scale; }

/// Adaptive instance normalization module. The lower-resolution feature h'
/// (2C, H/2, W/2) is lifted to (C, H, W) by a transposed convolution; two
/// 3x3 heads turn it into pixel-wise scale (gamma) and shift (beta) maps that
/// modulate the instance-normalized h. The result goes through one more
/// convolution and is added back to h.
template <typename T>
class AinModule {
 public:
  AinModule() = default;
  explicit AinModule(int channels, double epsilon = 1e-5);

  Tensor<T> forward(const Tensor<T>& h, const Tensor<T>& h_coarse);
  /// Returns (dL/dh, dL/dh').
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& dy);

  void visit(const std::string& prefix, const ParamVisitor<T>& fn);

  ConvTranspose2d<T>& upsample() noexcept { return upsample_; }
  Conv2d<T>& gamma_head() noexcept { return gamma_head_; }
  Conv2d<T>& beta_head() noexcept { return beta_head_; }
  Conv2d<T>& out_conv() noexcept { return out_conv_; }
  int channels() const noexcept { return channels_; }
  double epsilon() const noexcept { return epsilon_; }

  /// (h - mu) / sqrt(sigma^2 + eps) from the last forward.
  const Tensor<T>& last_normalized() const noexcept { return normalized_; }
  const Tensor<T>& last_gamma() const noexcept { return gamma_; }
  const Tensor<T>& last_beta() const noexcept { return beta_; }
  const Tensor<T>& last_modulated() const noexcept { return modulated_; }

 private:
  int channels_ = 0;
  double epsilon_ = 1e-5;
  ConvTranspose2d<T> upsample_;
  Conv2d<T> gamma_head_;
  Conv2d<T> beta_head_;
  Conv2d<T> out_conv_;

  Tensor<T> lifted_pre_;  // transposed-conv output before activation
  Tensor<T> normalized_, gamma_, beta_, modulated_;
  std::vector<T> inv_std_;
};

/// Resolves a feature map from one pyramid scale to another: identity on the
/// diagonal, strided 3x3 convolutions going down, 1x1 convolution followed by
/// nearest-neighbour upsampling going up.
template <typename T>
class ScaleTransform {
 public:
  ScaleTransform() = default;
  ScaleTransform(int from_scale, int to_scale, int base_channels);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);

  int from_scale() const noexcept { return from_; }
  int to_scale() const noexcept { return to_; }
  bool is_identity() const noexcept { return from_ == to_; }
  /// Convolutions in application order (empty for identity).
  std::vector<Conv2d<T>*> convs();

 private:
  int from_ = 0, to_ = 0, base_ = 1;
  std::vector<Conv2d<T>> convs_;
  Tensor<T> mid_pre_;  // first strided conv output (4x down only)
  int in_h_ = 0, in_w_ = 0;
};

/// Self-calibrated convolution: channel half A is gated by a sigmoid of
/// itself plus an upsampled 4x-pooled latent; half B takes a plain conv.
template <typename T>
class SelfCalibratedConv {
 public:
  static constexpr int kPoolFactor = 4;

  SelfCalibratedConv() = default;
  explicit SelfCalibratedConv(int channels);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);

  Conv2d<T>& plain_conv() noexcept { return plain_; }
  Conv2d<T>& latent_conv() noexcept { return latent_; }
  Conv2d<T>& gated_conv() noexcept { return gated_; }
  Conv2d<T>& output_conv() noexcept { return output_; }
  const Tensor<T>& last_gate() const noexcept { return gate_; }

 private:
  int channels_ = 0;
  Conv2d<T> plain_;   // branch B
  Conv2d<T> latent_;  // on the pooled half
  Conv2d<T> gated_;   // multiplied by the gate
  Conv2d<T> output_;  // after gating
  Tensor<T> gate_, gated_out_;
  int latent_h_ = 0, latent_w_ = 0;
};

/// Co-attention fusion of three same-shape features: a pooled joint
/// descriptor is squeezed and re-expanded into three per-channel logits,
/// softmax across the three branches weights the inputs, and the weighted
/// sum is refined by a self-calibrated convolution.
template <typename T>
class CoAttentionFusion {
 public:
  CoAttentionFusion() = default;
  CoAttentionFusion(int channels, int reduction = 4);

  Tensor<T> forward(const Tensor<T>& y1, const Tensor<T>& y2, const Tensor<T>& y3);
  std::array<Tensor<T>, 3> backward(const Tensor<T>& dy);
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);

  int channels() const noexcept { return channels_; }
  int hidden() const noexcept { return hidden_; }
  Conv2d<T>& reduce() noexcept { return reduce_; }
  Conv2d<T>& head(int k) noexcept { return heads_[k]; }
  SelfCalibratedConv<T>& calibration() noexcept { return calibrate_; }

  /// alpha[k * C + c] from the last forward.
  const std::vector<T>& last_alpha() const noexcept { return alpha_; }
  const Tensor<T>& last_fused() const noexcept { return fused_; }

 private:
  int channels_ = 0, hidden_ = 0;
  Conv2d<T> reduce_;
  std::array<Conv2d<T>, 3> heads_;
  SelfCalibratedConv<T> calibrate_;
  std::array<Tensor<T>, 3> inputs_;
  Tensor<T> squeezed_pre_;
  std::vector<T> alpha_;
  Tensor<T> fused_;
};

}  // namespace mafnet

#endif  // MAFNET_BLOCKS_HPP
