// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include "mafnet/blocks.hpp"

#include <algorithm>
#include <cmath>

namespace mafnet {

namespace {

ConvSpec conv3(int in, int out, Padding mode = Padding::kReflect) {
  return ConvSpec{in, out, 3, 1, 1, mode};
}

template <typename T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> y(a.channels(), a.height(), a.width());
  for (std::size_t k = 0; k < a.size(); ++k) y.data()[k] = a.data()[k] * b.data()[k];
  return y;
}

}  // namespace

template <typename T>
std::pair<std::vector<T>, std::vector<T>> instance_stats(const Tensor<T>& h) {
  std::vector<T> mu(h.channels()), sigma(h.channels());
  const double n = h.plane();
  for (int c = 0; c < h.channels(); ++c) {
    const T* p = h.channel(c);
    double s = 0.0;
    for (int k = 0; k < h.plane(); ++k) s += p[k];
    const double m = s / n;
    double v = 0.0;
    for (int k = 0; k < h.plane(); ++k) v += (p[k] - m) * (p[k] - m);
    mu[c] = static_cast<T>(m);
    sigma[c] = static_cast<T>(std::sqrt(v / n));
  }
  return {std::move(mu), std::move(sigma)};
}

// --- AIN -------------------------------------------------------------------

template <typename T>
AinModule<T>::AinModule(int channels, double epsilon)
    : channels_(channels),
      epsilon_(epsilon),
      upsample_(2 * channels, channels),
      gamma_head_(conv3(channels, channels)),
      beta_head_(conv3(channels, channels)),
      out_conv_(conv3(channels, channels)) {
  if (!(epsilon > 0.0)) throw ParamError("AinModule: epsilon must be > 0");
  gamma_head_.bias().init = InitKind::kOnes;
  beta_head_.bias().init = InitKind::kZeros;
}

template <typename T>
Tensor<T> AinModule<T>::forward(const Tensor<T>& h, const Tensor<T>& h_coarse) {
  if (h.channels() != channels_ || h.height() % 2 != 0 || h.width() % 2 != 0) {
    throw ShapeError("AinModule: h has shape " + h.shape_string() + ", module width " +
                     std::to_string(channels_));
  }
  h_coarse.require_shape(2 * channels_, h.height() / 2, h.width() / 2, "AinModule h'");

  lifted_pre_ = upsample_.forward(h_coarse);
  const Tensor<T> lifted = leaky_relu(lifted_pre_);
  gamma_ = gamma_head_.forward(lifted);
  beta_ = beta_head_.forward(lifted);

  auto [mu, sigma] = instance_stats(h);
  inv_std_.resize(channels_);
  normalized_ = Tensor<T>(channels_, h.height(), h.width());
  modulated_ = Tensor<T>(channels_, h.height(), h.width());
  for (int c = 0; c < channels_; ++c) {
    const double var = static_cast<double>(sigma[c]) * sigma[c];
    inv_std_[c] = static_cast<T>(1.0 / std::sqrt(var + epsilon_));
    const T* hp = h.channel(c);
    T* np = normalized_.channel(c);
    T* mp = modulated_.channel(c);
    const T* gp = gamma_.channel(c);
    const T* bp = beta_.channel(c);
    for (int k = 0; k < h.plane(); ++k) {
      np[k] = (hp[k] - mu[c]) * inv_std_[c];
      mp[k] = gp[k] * np[k] + bp[k];
    }
  }
  Tensor<T> out = out_conv_.forward(modulated_);
  out += h;
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> AinModule<T>::backward(const Tensor<T>& dy) {
  const Tensor<T> dmod = out_conv_.backward(dy);
  Tensor<T> dgamma(channels_, dy.height(), dy.width());
  Tensor<T> dnorm(channels_, dy.height(), dy.width());
  for (std::size_t k = 0; k < dmod.size(); ++k) {
    dgamma.data()[k] = dmod.data()[k] * normalized_.data()[k];
    dnorm.data()[k] = dmod.data()[k] * gamma_.data()[k];
  }
  Tensor<T> dlifted = gamma_head_.backward(dgamma);
  dlifted += beta_head_.backward(dmod);
  Tensor<T> dcoarse = upsample_.backward(leaky_relu_backward(lifted_pre_, dlifted));

  // instance-norm backward, then the residual path
  Tensor<T> dh = dy;
  const int n = dy.plane();
  for (int c = 0; c < channels_; ++c) {
    const T* dn = dnorm.channel(c);
    const T* xn = normalized_.channel(c);
    double sum_dn = 0.0, sum_dn_xn = 0.0;
    for (int k = 0; k < n; ++k) {
      sum_dn += dn[k];
      sum_dn_xn += static_cast<double>(dn[k]) * xn[k];
    }
    const double scale = static_cast<double>(inv_std_[c]) / n;
    T* out = dh.channel(c);
    for (int k = 0; k < n; ++k) {
      out[k] += static_cast<T>(scale * (n * static_cast<double>(dn[k]) - sum_dn - xn[k] * sum_dn_xn));
    }
  }
  return {std::move(dh), std::move(dcoarse)};
}

template <typename T>
void AinModule<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  upsample_.visit(prefix + ".upsample", fn);
  gamma_head_.visit(prefix + ".gamma_head", fn);
  beta_head_.visit(prefix + ".beta_head", fn);
  out_conv_.visit(prefix + ".out_conv", fn);
}

// --- scale transform -------------------------------------------------------

template <typename T>
ScaleTransform<T>::ScaleTransform(int from_scale, int to_scale, int base_channels)
    : from_(from_scale), to_(to_scale), base_(base_channels) {
  if (from_ < 0 || from_ > 2 || to_ < 0 || to_ > 2) {
    throw ShapeError("ScaleTransform: scales must be in {0,1,2}");
  }
  const int cin = scale_channels(base_, from_);
  const int cout = scale_channels(base_, to_);
  if (to_ == from_ + 1) {
    convs_.emplace_back(ConvSpec{cin, cout, 3, 2, 1, Padding::kZeros});
  } else if (to_ == from_ + 2) {
    convs_.emplace_back(ConvSpec{cin, cin, 3, 2, 1, Padding::kZeros});
    convs_.emplace_back(ConvSpec{cin, cout, 3, 2, 1, Padding::kZeros});
  } else if (to_ < from_) {
    convs_.emplace_back(ConvSpec{cin, cout, 1, 1, 0, Padding::kZeros});
  }
}

template <typename T>
std::vector<Conv2d<T>*> ScaleTransform<T>::convs() {
  std::vector<Conv2d<T>*> out;
  for (auto& c : convs_) out.push_back(&c);
  return out;
}

template <typename T>
Tensor<T> ScaleTransform<T>::forward(const Tensor<T>& x) {
  if (x.channels() != scale_channels(base_, from_)) {
    throw ShapeError("ScaleTransform " + std::to_string(from_) + "->" + std::to_string(to_) +
                     ": input " + x.shape_string());
  }
  in_h_ = x.height();
  in_w_ = x.width();
  if (from_ == to_) return x;
  if (to_ == from_ + 1) return convs_[0].forward(x);
  if (to_ == from_ + 2) {
    mid_pre_ = convs_[0].forward(x);
    return convs_[1].forward(leaky_relu(mid_pre_));
  }
  const int factor = 1 << (from_ - to_);
  return upsample_nearest(convs_[0].forward(x), factor, x.height() * factor, x.width() * factor);
}

template <typename T>
Tensor<T> ScaleTransform<T>::backward(const Tensor<T>& dy) {
  if (from_ == to_) return dy;
  if (to_ == from_ + 1) return convs_[0].backward(dy);
  if (to_ == from_ + 2) {
    return convs_[0].backward(leaky_relu_backward(mid_pre_, convs_[1].backward(dy)));
  }
  const int factor = 1 << (from_ - to_);
  return convs_[0].backward(upsample_nearest_backward(dy, factor, in_h_, in_w_));
}

template <typename T>
void ScaleTransform<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  for (std::size_t k = 0; k < convs_.size(); ++k) {
    convs_[k].visit(prefix + ".conv" + std::to_string(k), fn);
  }
}

// --- self-calibrated convolution ------------------------------------------

template <typename T>
SelfCalibratedConv<T>::SelfCalibratedConv(int channels) : channels_(channels) {
  if (channels < 2 || channels % 2 != 0) {
    throw ShapeError("SelfCalibratedConv: channel count must be even, got " +
                     std::to_string(channels));
  }
  const int half = channels / 2;
  plain_ = Conv2d<T>(conv3(half, half));
  latent_ = Conv2d<T>(conv3(half, half));
  gated_ = Conv2d<T>(conv3(half, half));
  output_ = Conv2d<T>(conv3(half, half));
}

template <typename T>
Tensor<T> SelfCalibratedConv<T>::forward(const Tensor<T>& x) {
  if (x.channels() != channels_) {
    throw ShapeError("SelfCalibratedConv: expected " + std::to_string(channels_) +
                     " channels, got " + x.shape_string());
  }
  const int half = channels_ / 2;
  const Tensor<T> a = x.slice_channels(0, half);
  const Tensor<T> b = x.slice_channels(half, half);

  const Tensor<T> pooled = avg_pool(a, kPoolFactor);
  latent_h_ = pooled.height();
  latent_w_ = pooled.width();
  Tensor<T> z = upsample_nearest(latent_.forward(pooled), kPoolFactor, x.height(), x.width());
  z += a;
  gate_ = sigmoid(z);
  gated_out_ = gated_.forward(a);
  const Tensor<T> ya = output_.forward(multiply(gate_, gated_out_));
  const Tensor<T> yb = plain_.forward(b);
  return concat_channels(ya, yb);
}

template <typename T>
Tensor<T> SelfCalibratedConv<T>::backward(const Tensor<T>& dy) {
  const int half = channels_ / 2;
  const Tensor<T> dprod = output_.backward(dy.slice_channels(0, half));
  Tensor<T> dz(half, dy.height(), dy.width());
  Tensor<T> dgated(half, dy.height(), dy.width());
  for (std::size_t k = 0; k < dprod.size(); ++k) {
    const T g = gate_.data()[k];
    dgated.data()[k] = dprod.data()[k] * g;
    dz.data()[k] = dprod.data()[k] * gated_out_.data()[k] * g * (T(1) - g);
  }
  Tensor<T> da = gated_.backward(dgated);
  da += dz;
  const Tensor<T> dlatent = upsample_nearest_backward(dz, kPoolFactor, latent_h_, latent_w_);
  da += avg_pool_backward(latent_.backward(dlatent), kPoolFactor, dy.height(), dy.width());
  const Tensor<T> db = plain_.backward(dy.slice_channels(half, half));
  return concat_channels(da, db);
}

template <typename T>
void SelfCalibratedConv<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  plain_.visit(prefix + ".plain", fn);
  latent_.visit(prefix + ".latent", fn);
  gated_.visit(prefix + ".gated", fn);
  output_.visit(prefix + ".output", fn);
}

// --- co-attention fusion ---------------------------------------------------

template <typename T>
CoAttentionFusion<T>::CoAttentionFusion(int channels, int reduction)
    : channels_(channels), calibrate_(channels) {
  if (reduction < 1) throw ParamError("CoAttentionFusion: reduction must be >= 1");
  hidden_ = (3 * channels + reduction - 1) / reduction;
  reduce_ = Conv2d<T>(ConvSpec{3 * channels, hidden_, 1, 1, 0, Padding::kZeros});
  for (auto& h : heads_) h = Conv2d<T>(ConvSpec{hidden_, channels, 1, 1, 0, Padding::kZeros});
}

template <typename T>
Tensor<T> CoAttentionFusion<T>::forward(const Tensor<T>& y1, const Tensor<T>& y2,
                                        const Tensor<T>& y3) {
  if (y1.channels() != channels_) {
    throw ShapeError("CoAttentionFusion: expected " + std::to_string(channels_) +
                     " channels, got " + y1.shape_string());
  }
  y1.require_same_shape(y2, "CoAttentionFusion Y2");
  y1.require_same_shape(y3, "CoAttentionFusion Y3");
  inputs_ = {y1, y2, y3};

  Tensor<T> s(3 * channels_, 1, 1);
  for (int k = 0; k < 3; ++k) {
    const Tensor<T> pooled = global_avg_pool(inputs_[k]);
    std::copy_n(pooled.data(), channels_, s.data() + k * channels_);
  }
  squeezed_pre_ = reduce_.forward(s);
  const Tensor<T> squeezed = leaky_relu(squeezed_pre_);
  std::array<Tensor<T>, 3> logits;
  for (int k = 0; k < 3; ++k) logits[k] = heads_[k].forward(squeezed);

  alpha_.assign(3 * static_cast<std::size_t>(channels_), T(0));
  for (int c = 0; c < channels_; ++c) {
    const T m = std::max({logits[0].data()[c], logits[1].data()[c], logits[2].data()[c]});
    T e[3], sum = 0;
    for (int k = 0; k < 3; ++k) {
      e[k] = std::exp(logits[k].data()[c] - m);
      sum += e[k];
    }
    for (int k = 0; k < 3; ++k) alpha_[k * channels_ + c] = e[k] / sum;
  }

  fused_ = Tensor<T>(channels_, y1.height(), y1.width());
  for (int c = 0; c < channels_; ++c) {
    T* out = fused_.channel(c);
    const T a0 = alpha_[c], a1 = alpha_[channels_ + c], a2 = alpha_[2 * channels_ + c];
    const T* p0 = y1.channel(c);
    const T* p1 = y2.channel(c);
    const T* p2 = y3.channel(c);
    for (int k = 0; k < y1.plane(); ++k) out[k] = a0 * p0[k] + a1 * p1[k] + a2 * p2[k];
  }
  return calibrate_.forward(fused_);
}

template <typename T>
std::array<Tensor<T>, 3> CoAttentionFusion<T>::backward(const Tensor<T>& dy) {
  const Tensor<T> dfused = calibrate_.backward(dy);
  const int n = dfused.plane();
  std::array<Tensor<T>, 3> dys;
  std::vector<T> dalpha(3 * static_cast<std::size_t>(channels_));
  for (int k = 0; k < 3; ++k) {
    dys[k] = Tensor<T>(channels_, dfused.height(), dfused.width());
    for (int c = 0; c < channels_; ++c) {
      const T a = alpha_[k * channels_ + c];
      const T* df = dfused.channel(c);
      const T* yk = inputs_[k].channel(c);
      T* out = dys[k].channel(c);
      T acc = 0;
      for (int p = 0; p < n; ++p) {
        out[p] = a * df[p];
        acc += df[p] * yk[p];
      }
      dalpha[k * channels_ + c] = acc;
    }
  }
  Tensor<T> dsqueezed(hidden_, 1, 1);
  for (int k = 0; k < 3; ++k) {
    Tensor<T> dlogit(channels_, 1, 1);
    for (int c = 0; c < channels_; ++c) {
      T dot = 0;
      for (int j = 0; j < 3; ++j) dot += alpha_[j * channels_ + c] * dalpha[j * channels_ + c];
      dlogit.data()[c] = alpha_[k * channels_ + c] * (dalpha[k * channels_ + c] - dot);
    }
    dsqueezed += heads_[k].backward(dlogit);
  }
  const Tensor<T> ds = reduce_.backward(leaky_relu_backward(squeezed_pre_, dsqueezed));
  for (int k = 0; k < 3; ++k) {
    for (int c = 0; c < channels_; ++c) {
      const T g = ds.data()[k * channels_ + c] / static_cast<T>(n);
      T* out = dys[k].channel(c);
      for (int p = 0; p < n; ++p) out[p] += g;
    }
  }
  return dys;
}

template <typename T>
void CoAttentionFusion<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  reduce_.visit(prefix + ".reduce", fn);
  for (int k = 0; k < 3; ++k) heads_[k].visit(prefix + ".head" + std::to_string(k), fn);
  calibrate_.visit(prefix + ".calibrate", fn);
}

template std::pair<std::vector<float>, std::vector<float>> instance_stats(const Tensor<float>&);
template std::pair<std::vector<double>, std::vector<double>> instance_stats(const Tensor<double>&);
template class AinModule<float>;
template class AinModule<double>;
template class ScaleTransform<float>;
template class ScaleTransform<double>;
template class SelfCalibratedConv<float>;
template class SelfCalibratedConv<double>;
template class CoAttentionFusion<float>;
template class CoAttentionFusion<double>;

}  // namespace mafnet
