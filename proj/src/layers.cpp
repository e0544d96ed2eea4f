// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include "mafnet/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numeric>

#include "mafnet/cube.hpp"
#include "mafnet/rng.hpp"

namespace mafnet {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
std::vector<T>& scratch(int slot) {
  thread_local std::vector<T> buffers[2];
  return buffers[slot];
}

template <typename T>
void im2col(const Tensor<T>& x, const PatchIndex& idx, T* col) {
  const int p = idx.out_plane();
  for (int ci = 0; ci < x.channels(); ++ci) {
    const T* xc = x.channel(ci);
    for (int t = 0; t < idx.taps; ++t) {
      const std::int32_t* src = idx.src.data() + static_cast<std::size_t>(t) * p;
      T* dst = col + (static_cast<std::size_t>(ci) * idx.taps + t) * p;
      for (int k = 0; k < p; ++k) dst[k] = src[k] >= 0 ? xc[src[k]] : T(0);
    }
  }
}

template <typename T>
void col2im(const T* col, const PatchIndex& idx, Tensor<T>& dx) {
  const int p = idx.out_plane();
  for (int ci = 0; ci < dx.channels(); ++ci) {
    T* xc = dx.channel(ci);
    for (int t = 0; t < idx.taps; ++t) {
      const std::int32_t* src = idx.src.data() + static_cast<std::size_t>(t) * p;
      const T* c = col + (static_cast<std::size_t>(ci) * idx.taps + t) * p;
      for (int k = 0; k < p; ++k) {
        if (src[k] >= 0) xc[src[k]] += c[k];
      }
    }
  }
}

template <typename T>
void add_bias(Tensor<T>& y, const std::vector<T>& bias) {
  for (int c = 0; c < y.channels(); ++c) {
    T* yc = y.channel(c);
    for (int k = 0; k < y.plane(); ++k) yc[k] += bias[c];
  }
}

template <typename T>
void accumulate_bias_grad(const Tensor<T>& dy, std::vector<T>& grad) {
  for (int c = 0; c < dy.channels(); ++c) {
    const T* d = dy.channel(c);
    T s = 0;
    for (int k = 0; k < dy.plane(); ++k) s += d[k];
    grad[c] += s;
  }
}

}  // namespace

// --- Param -----------------------------------------------------------------

template <typename T>
Param<T>::Param(std::vector<int> dims, int fan_in_, InitKind kind)
    : shape(std::move(dims)), fan_in(fan_in_), init(kind) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                        [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
  value.assign(n, T(0));
  grad.assign(n, T(0));
}

template <typename T>
void Param<T>::zero_grad() {
  std::fill(grad.begin(), grad.end(), T(0));
}

template <typename T>
void initialize_param(Param<T>& param, const std::string& path, std::uint64_t seed) {
  switch (param.init) {
    case InitKind::kOnes: std::fill(param.value.begin(), param.value.end(), T(1)); return;
    case InitKind::kZeros: std::fill(param.value.begin(), param.value.end(), T(0)); return;
    case InitKind::kFanInUniform: break;
  }
  Rng rng(derive_seed(seed, hash_label(path)));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(param.fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : param.value) v = static_cast<T>(dist(rng));
}

// --- PatchIndex ------------------------------------------------------------

PatchIndex PatchIndex::build(int in_h, int in_w, int kernel, int stride, int pad, Padding mode) {
  PatchIndex idx;
  idx.in_h = in_h;
  idx.in_w = in_w;
  idx.out_h = (in_h + 2 * pad - kernel) / stride + 1;
  idx.out_w = (in_w + 2 * pad - kernel) / stride + 1;
  idx.taps = kernel * kernel;
  if (idx.out_h < 1 || idx.out_w < 1) {
    throw ShapeError("convolution input " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                     " too small for kernel " + std::to_string(kernel));
  }
  idx.src.resize(static_cast<std::size_t>(idx.taps) * idx.out_plane());
  for (int ky = 0; ky < kernel; ++ky) {
    for (int kx = 0; kx < kernel; ++kx) {
      std::int32_t* dst = idx.src.data() + static_cast<std::size_t>(ky * kernel + kx) * idx.out_plane();
      for (int oy = 0; oy < idx.out_h; ++oy) {
        for (int ox = 0; ox < idx.out_w; ++ox) {
          int y = oy * stride - pad + ky;
          int x = ox * stride - pad + kx;
          std::int32_t s = -1;
          if (mode == Padding::kReflect) {
            s = reflect_index(y, in_h) * in_w + reflect_index(x, in_w);
          } else if (y >= 0 && y < in_h && x >= 0 && x < in_w) {
            s = y * in_w + x;
          }
          dst[oy * idx.out_w + ox] = s;
        }
      }
    }
  }
  return idx;
}

// --- Conv2d ----------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(ConvSpec spec)
    : spec_(spec),
      weight_({spec.out_channels, spec.in_channels * spec.kernel * spec.kernel},
              spec.in_channels * spec.kernel * spec.kernel),
      bias_({spec.out_channels}, spec.in_channels * spec.kernel * spec.kernel) {}

template <typename T>
const PatchIndex& Conv2d<T>::index_for(int h, int w) {
  if (index_.in_h != h || index_.in_w != w || index_.src.empty()) {
    index_ = PatchIndex::build(h, w, spec_.kernel, spec_.stride, spec_.padding, spec_.mode);
  }
  return index_;
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  if (x.channels() != spec_.in_channels) {
    throw ShapeError("Conv2d: expected " + std::to_string(spec_.in_channels) +
                     " input channels, got " + x.shape_string());
  }
  input_ = x;
  const PatchIndex& idx = index_for(x.height(), x.width());
  const int k = spec_.in_channels * idx.taps;
  const int p = idx.out_plane();
  Tensor<T> y(spec_.out_channels, idx.out_h, idx.out_w);
  const T* col = x.data();
  const bool pointwise = spec_.kernel == 1 && spec_.stride == 1 && spec_.padding == 0;
  if (!pointwise) {
    auto& buf = scratch<T>(0);
    buf.resize(static_cast<std::size_t>(k) * p);
    im2col(x, idx, buf.data());
    col = buf.data();
  }
  MapMat<T>(y.data(), spec_.out_channels, p).noalias() =
      CMapMat<T>(weight_.value.data(), spec_.out_channels, k) * CMapMat<T>(col, k, p);
  add_bias(y, bias_.value);
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
  const PatchIndex& idx = index_for(input_.height(), input_.width());
  dy.require_shape(spec_.out_channels, idx.out_h, idx.out_w, "Conv2d::backward");
  const int k = spec_.in_channels * idx.taps;
  const int p = idx.out_plane();
  const bool pointwise = spec_.kernel == 1 && spec_.stride == 1 && spec_.padding == 0;
  const T* col = input_.data();
  if (!pointwise) {
    auto& buf = scratch<T>(0);
    buf.resize(static_cast<std::size_t>(k) * p);
    im2col(input_, idx, buf.data());
    col = buf.data();
  }
  CMapMat<T> dyv(dy.data(), spec_.out_channels, p);
  MapMat<T>(weight_.grad.data(), spec_.out_channels, k).noalias() +=
      dyv * CMapMat<T>(col, k, p).transpose();
  accumulate_bias_grad(dy, bias_.grad);

  Tensor<T> dx(input_.channels(), input_.height(), input_.width());
  if (pointwise) {
    MapMat<T>(dx.data(), k, p).noalias() =
        CMapMat<T>(weight_.value.data(), spec_.out_channels, k).transpose() * dyv;
  } else {
    auto& dcol = scratch<T>(1);
    dcol.resize(static_cast<std::size_t>(k) * p);
    MapMat<T>(dcol.data(), k, p).noalias() =
        CMapMat<T>(weight_.value.data(), spec_.out_channels, k).transpose() * dyv;
    col2im(dcol.data(), idx, dx);
  }
  return dx;
}

template <typename T>
void Conv2d<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  fn(prefix + ".weight", weight_);
  fn(prefix + ".bias", bias_);
}

// --- ConvTranspose2d -------------------------------------------------------

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride,
                                    int padding)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      weight_({in_channels, out_channels * kernel * kernel}, out_channels * kernel * kernel),
      bias_({out_channels}, out_channels * kernel * kernel) {}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x) {
  if (x.channels() != in_) {
    throw ShapeError("ConvTranspose2d: expected " + std::to_string(in_) +
                     " input channels, got " + x.shape_string());
  }
  input_ = x;
  const int oh = (x.height() - 1) * stride_ - 2 * padding_ + kernel_;
  const int ow = (x.width() - 1) * stride_ - 2 * padding_ + kernel_;
  if (index_.in_h != oh || index_.in_w != ow || index_.src.empty()) {
    index_ = PatchIndex::build(oh, ow, kernel_, stride_, padding_, Padding::kZeros);
  }
  const int rows = out_ * index_.taps;
  const int p = x.plane();
  auto& col = scratch<T>(0);
  col.resize(static_cast<std::size_t>(rows) * p);
  MapMat<T>(col.data(), rows, p).noalias() =
      CMapMat<T>(weight_.value.data(), in_, rows).transpose() * CMapMat<T>(x.data(), in_, p);
  Tensor<T> y(out_, oh, ow);
  col2im(col.data(), index_, y);
  add_bias(y, bias_.value);
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& dy) {
  dy.require_shape(out_, index_.in_h, index_.in_w, "ConvTranspose2d::backward");
  const int rows = out_ * index_.taps;
  const int p = input_.plane();
  auto& dcol = scratch<T>(1);
  dcol.resize(static_cast<std::size_t>(rows) * p);
  im2col(dy, index_, dcol.data());
  CMapMat<T> dcolv(dcol.data(), rows, p);
  MapMat<T>(weight_.grad.data(), in_, rows).noalias() +=
      CMapMat<T>(input_.data(), in_, p) * dcolv.transpose();
  accumulate_bias_grad(dy, bias_.grad);
  Tensor<T> dx(in_, input_.height(), input_.width());
  MapMat<T>(dx.data(), in_, p).noalias() = CMapMat<T>(weight_.value.data(), in_, rows) * dcolv;
  return dx;
}

template <typename T>
void ConvTranspose2d<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  fn(prefix + ".weight", weight_);
  fn(prefix + ".bias", bias_);
}

// --- stateless ops ---------------------------------------------------------

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x) {
  Tensor<T> y(x.channels(), x.height(), x.width());
  const T slope = static_cast<T>(kLeakySlope);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const T v = x.data()[k];
    y.data()[k] = v > T(0) ? v : slope * v;
  }
  return y;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  x.require_same_shape(dy, "leaky_relu_backward");
  Tensor<T> dx(x.channels(), x.height(), x.width());
  const T slope = static_cast<T>(kLeakySlope);
  for (std::size_t k = 0; k < x.size(); ++k) {
    dx.data()[k] = x.data()[k] > T(0) ? dy.data()[k] : slope * dy.data()[k];
  }
  return dx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.channels(), x.height(), x.width());
  for (std::size_t k = 0; k < x.size(); ++k) {
    y.data()[k] = T(1) / (T(1) + std::exp(-x.data()[k]));
  }
  return y;
}

template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int factor) {
  const int oh = (x.height() + factor - 1) / factor;
  const int ow = (x.width() + factor - 1) / factor;
  Tensor<T> y(x.channels(), oh, ow);
  for (int c = 0; c < x.channels(); ++c) {
    for (int oi = 0; oi < oh; ++oi) {
      const int i1 = std::min(x.height(), (oi + 1) * factor);
      for (int oj = 0; oj < ow; ++oj) {
        const int j1 = std::min(x.width(), (oj + 1) * factor);
        T s = 0;
        for (int i = oi * factor; i < i1; ++i) {
          for (int j = oj * factor; j < j1; ++j) s += x(c, i, j);
        }
        y(c, oi, oj) = s / static_cast<T>((i1 - oi * factor) * (j1 - oj * factor));
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> avg_pool_backward(const Tensor<T>& dy, int factor, int in_h, int in_w) {
  Tensor<T> dx(dy.channels(), in_h, in_w);
  for (int c = 0; c < dy.channels(); ++c) {
    for (int i = 0; i < in_h; ++i) {
      const int oi = i / factor;
      const int rows = std::min(in_h, (oi + 1) * factor) - oi * factor;
      for (int j = 0; j < in_w; ++j) {
        const int oj = j / factor;
        const int cols = std::min(in_w, (oj + 1) * factor) - oj * factor;
        dx(c, i, j) = dy(c, oi, oj) / static_cast<T>(rows * cols);
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor, int out_h, int out_w) {
  Tensor<T> y(x.channels(), out_h, out_w);
  for (int c = 0; c < x.channels(); ++c) {
    for (int i = 0; i < out_h; ++i) {
      for (int j = 0; j < out_w; ++j) y(c, i, j) = x(c, i / factor, j / factor);
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& dy, int factor, int in_h, int in_w) {
  Tensor<T> dx(dy.channels(), in_h, in_w);
  for (int c = 0; c < dy.channels(); ++c) {
    for (int i = 0; i < dy.height(); ++i) {
      for (int j = 0; j < dy.width(); ++j) dx(c, i / factor, j / factor) += dy(c, i, j);
    }
  }
  return dx;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  Tensor<T> s(x.channels(), 1, 1);
  for (int c = 0; c < x.channels(); ++c) {
    const T* xc = x.channel(c);
    T acc = 0;
    for (int k = 0; k < x.plane(); ++k) acc += xc[k];
    s(c, 0, 0) = acc / static_cast<T>(x.plane());
  }
  return s;
}

#define MAFNET_INSTANTIATE_LAYERS(T)                                                         \
  template struct Param<T>;                                                                  \
  template void initialize_param(Param<T>&, const std::string&, std::uint64_t);              \
  template class Conv2d<T>;                                                                  \
  template class ConvTranspose2d<T>;                                                         \
  template Tensor<T> leaky_relu(const Tensor<T>&);                                           \
  template Tensor<T> leaky_relu_backward(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> sigmoid(const Tensor<T>&);                                              \
  template Tensor<T> avg_pool(const Tensor<T>&, int);                                        \
  template Tensor<T> avg_pool_backward(const Tensor<T>&, int, int, int);                     \
  template Tensor<T> upsample_nearest(const Tensor<T>&, int, int, int);                      \
  template Tensor<T> upsample_nearest_backward(const Tensor<T>&, int, int, int);             \
  template Tensor<T> global_avg_pool(const Tensor<T>&);

MAFNET_INSTANTIATE_LAYERS(float)
MAFNET_INSTANTIATE_LAYERS(double)

}  // namespace mafnet
