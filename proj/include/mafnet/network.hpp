// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MAFNET_NETWORK_HPP
#define MAFNET_NETWORK_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mafnet/blocks.hpp"
#include "mafnet/cube.hpp"

namespace mafnet {

struct NetworkConfig {
  int bands = 31;
  int base_channels = 64;
  int coarse_blocks = 3;
  int fine_layers = 3;
  int reduction = 4;
  std::uint64_t seed = 0;

  /// 'S', 'B' or 'L': base widths 32, 64, 128.
  static NetworkConfig variant(char name, int bands = 31, std::uint64_t seed = 0);
  void validate() const;
  std::array<int, 3> channels_per_scale() const;
  bool operator==(const NetworkConfig&) const = default;
};

template <typename T>
using ScaleFeatures = std::array<Tensor<T>, 3>;

/// Low-to-high information flow: the 1/4-scale path is plain residual
/// convolutions; each finer scale is an AIN module fed by the coarser scale
/// just updated in the same stage.
template <typename T>
class CoarseFusion {
 public:
  struct Stage {
    Conv2d<T> plain;
    AinModule<T> middle;  // scale 1, guided by scale 2
    AinModule<T> top;     // scale 0, guided by scale 1
    Tensor<T> plain_pre;
  };

  CoarseFusion() = default;
  CoarseFusion(int base_channels, int blocks);

  ScaleFeatures<T> forward(const ScaleFeatures<T>& x);
  ScaleFeatures<T> backward(const ScaleFeatures<T>& dy);
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);

  std::vector<Stage>& stages() noexcept { return stages_; }

 private:
  int base_ = 0;
  std::vector<Stage> stages_;
};

/// One round of cross-scale exchange: every output scale fuses all three
/// inputs resolved to its shape.
template <typename T>
class FineFusionLayer {
 public:
  FineFusionLayer() = default;
  FineFusionLayer(int base_channels, int reduction);

  ScaleFeatures<T> forward(const ScaleFeatures<T>& x);
  ScaleFeatures<T> backward(const ScaleFeatures<T>& dy);
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);

  ScaleTransform<T>& transform(int from, int to) noexcept { return transforms_[from][to]; }
  CoAttentionFusion<T>& fusion(int scale) noexcept { return fusions_[scale]; }

 private:
  int base_ = 0;
  std::array<std::array<ScaleTransform<T>, 3>, 3> transforms_;
  std::array<CoAttentionFusion<T>, 3> fusions_;
};

/// Full denoiser: pyramid + initial convolutions, coarse fusion, fine fusion,
/// final co-attention at full resolution and a 3x3 reconstruction conv that
/// predicts the noise residual.
template <typename T>
class MafNet {
 public:
  MafNet() = default;
  explicit MafNet(const NetworkConfig& config);

  /// Returns the predicted residual for a (bands, H, W) input; H and W must be
  /// multiples of 4.
  Tensor<T> forward(const Tensor<T>& noisy);
  /// Backpropagates dL/d(residual) into every parameter gradient.
  void backward(const Tensor<T>& d_residual);
  void visit(const ParamVisitor<T>& fn);

  const NetworkConfig& config() const noexcept { return config_; }
  Conv2d<T>& initial(int scale) noexcept { return initial_[scale]; }
  CoarseFusion<T>& coarse() noexcept { return coarse_; }
  FineFusionLayer<T>& fine(int layer) noexcept { return fine_[layer]; }
  int fine_layers() const noexcept { return static_cast<int>(fine_.size()); }
  ScaleTransform<T>& final_transform(int scale) noexcept { return final_up_[scale]; }
  CoAttentionFusion<T>& final_fusion() noexcept { return final_fusion_; }
  Conv2d<T>& reconstruction() noexcept { return reconstruct_; }

 private:
  NetworkConfig config_;
  std::array<Conv2d<T>, 3> initial_;
  std::array<Tensor<T>, 3> initial_pre_;
  CoarseFusion<T> coarse_;
  std::vector<FineFusionLayer<T>> fine_;
  std::array<ScaleTransform<T>, 3> final_up_;  // index 0 is the identity
  CoAttentionFusion<T> final_fusion_;
  Conv2d<T> reconstruct_;
};

struct WeightTensor {
  std::vector<int> shape;
  std::vector<float> values;
  bool operator==(const WeightTensor&) const = default;
};
using WeightMap = std::map<std::string, WeightTensor>;

/// Instantiated, trainable float network with a stable path -> tensor view.
class Network {
 public:
  explicit Network(const NetworkConfig& config);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const NetworkConfig& config() const noexcept { return model_.config(); }
  std::size_t param_count() const noexcept { return param_count_; }
  /// Parameters sorted by path.
  const std::vector<std::pair<std::string, Param<float>*>>& params() const noexcept { return params_; }
  Param<float>& param(const std::string& path);
  MafNet<float>& model() noexcept { return model_; }

  /// (residual, denoised) with denoised = noisy - residual.
  std::pair<HSICube, HSICube> forward(const HSICube& noisy);
  void backward(const Tensor<float>& d_residual) { model_.backward(d_residual); }
  void zero_grad();

  WeightMap weights() const;
  void load_weights(const WeightMap& weights);
  std::vector<std::uint8_t> weight_bytes() const;

 private:
  MafNet<float> model_;
  std::vector<std::pair<std::string, Param<float>*>> params_;
  std::size_t param_count_ = 0;
};

// --- MAFW weight files -------------------------------------------------------

inline constexpr std::array<char, 4> kWeightsMagic = {'M', 'A', 'F', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

void append_weight_records(std::vector<std::uint8_t>& out, const WeightMap& records);
/// Reads a record block at `offset` and advances it.
WeightMap read_weight_records(std::span<const std::uint8_t> bytes, std::size_t& offset);

std::vector<std::uint8_t> encode_weights(const NetworkConfig& config, const WeightMap& weights);
/// Decodes the MAFW prefix. `end` receives the offset of any trailing section.
std::pair<NetworkConfig, WeightMap> decode_weights(std::span<const std::uint8_t> bytes,
                                                   std::size_t* end = nullptr);

void save_network(const Network& net, const std::filesystem::path& path);
/// Loads weights from a bare MAFW file or a training checkpoint.
std::unique_ptr<Network> load_network(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Denoises a cube of any band count >= 2 and any spatial size: reflection
/// padding to multiples of 4, overlapping band groups (stride bands/2,
/// triangular blending) when the cube has more bands than the network, and
/// spectral reflection when it has fewer.
HSICube denoise_cube(Network& net, const HSICube& noisy);

}  // namespace mafnet

#endif  // MAFNET_NETWORK_HPP
