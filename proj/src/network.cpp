// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include "mafnet/network.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mafnet {

// --- config ----------------------------------------------------------------

NetworkConfig NetworkConfig::variant(char name, int bands, std::uint64_t seed) {
  NetworkConfig c;
  c.bands = bands;
  c.seed = seed;
  switch (name) {
    case 'S': case 's': c.base_channels = 32; break;
    case 'B': case 'b': c.base_channels = 64; break;
    case 'L': case 'l': c.base_channels = 128; break;
    default: throw ConfigError(std::string("unknown network variant '") + name + "' (S, B or L)");
  }
  return c;
}

void NetworkConfig::validate() const {
  if (bands < 1) throw ConfigError("bands must be >= 1");
  if (base_channels < 2 || base_channels % 2 != 0) {
    throw ConfigError("base_channels must be a positive even number");
  }
  if (coarse_blocks < 1) throw ConfigError("coarse_blocks must be >= 1");
  if (fine_layers < 1) throw ConfigError("fine_layers must be >= 1");
  if (reduction < 1) throw ConfigError("reduction must be >= 1");
}

std::array<int, 3> NetworkConfig::channels_per_scale() const {
  return {scale_channels(base_channels, 0), scale_channels(base_channels, 1),
          scale_channels(base_channels, 2)};
}

// --- coarse fusion ---------------------------------------------------------

template <typename T>
CoarseFusion<T>::CoarseFusion(int base_channels, int blocks) : base_(base_channels) {
  const int c2 = scale_channels(base_channels, 2);
  for (int s = 0; s < blocks; ++s) {
    Stage stage;
    stage.plain = Conv2d<T>(ConvSpec{c2, c2, 3, 1, 1, Padding::kReflect});
    stage.middle = AinModule<T>(scale_channels(base_channels, 1));
    stage.top = AinModule<T>(base_channels);
    stages_.push_back(std::move(stage));
  }
}

template <typename T>
ScaleFeatures<T> CoarseFusion<T>::forward(const ScaleFeatures<T>& x) {
  for (int k = 0; k < 3; ++k) {
    if (x[k].channels() != scale_channels(base_, k)) {
      throw ShapeError("coarse_fusion: scale " + std::to_string(k) + " input " +
                       x[k].shape_string());
    }
  }
  if (x[1].height() * 2 != x[0].height() || x[2].height() * 2 != x[1].height() ||
      x[1].width() * 2 != x[0].width() || x[2].width() * 2 != x[1].width()) {
    throw ShapeError("coarse_fusion: inconsistent scale dims");
  }
  ScaleFeatures<T> y = x;
  for (auto& stage : stages_) {
    stage.plain_pre = stage.plain.forward(y[2]);
    y[2] += leaky_relu(stage.plain_pre);
    y[1] = stage.middle.forward(y[1], y[2]);
    y[0] = stage.top.forward(y[0], y[1]);
  }
  return y;
}

template <typename T>
ScaleFeatures<T> CoarseFusion<T>::backward(const ScaleFeatures<T>& dy) {
  ScaleFeatures<T> d = dy;
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
    auto [d0, d1_from_top] = it->top.backward(d[0]);
    d[0] = std::move(d0);
    d[1] += d1_from_top;
    auto [d1, d2_from_mid] = it->middle.backward(d[1]);
    d[1] = std::move(d1);
    d[2] += d2_from_mid;
    d[2] += it->plain.backward(leaky_relu_backward(it->plain_pre, d[2]));
  }
  return d;
}

template <typename T>
void CoarseFusion<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const std::string p = prefix + ".stage" + std::to_string(s);
    stages_[s].plain.visit(p + ".plain", fn);
    stages_[s].middle.visit(p + ".ain1", fn);
    stages_[s].top.visit(p + ".ain0", fn);
  }
}

// --- fine fusion -----------------------------------------------------------

template <typename T>
FineFusionLayer<T>::FineFusionLayer(int base_channels, int reduction) : base_(base_channels) {
  for (int from = 0; from < 3; ++from) {
    for (int to = 0; to < 3; ++to) transforms_[from][to] = ScaleTransform<T>(from, to, base_channels);
  }
  for (int s = 0; s < 3; ++s) fusions_[s] = CoAttentionFusion<T>(scale_channels(base_channels, s), reduction);
}

template <typename T>
ScaleFeatures<T> FineFusionLayer<T>::forward(const ScaleFeatures<T>& x) {
  ScaleFeatures<T> y;
  for (int to = 0; to < 3; ++to) {
    std::array<Tensor<T>, 3> resolved;
    for (int from = 0; from < 3; ++from) resolved[from] = transforms_[from][to].forward(x[from]);
    for (int from = 1; from < 3; ++from) {
      if (!resolved[from].same_shape(resolved[0])) {
        throw ShapeError("fine_fusion_layer: scale " + std::to_string(from) + " resolves to " +
                         resolved[from].shape_string() + " at target scale " +
                         std::to_string(to));
      }
    }
    y[to] = fusions_[to].forward(resolved[0], resolved[1], resolved[2]);
  }
  return y;
}

template <typename T>
ScaleFeatures<T> FineFusionLayer<T>::backward(const ScaleFeatures<T>& dy) {
  ScaleFeatures<T> dx;
  for (int to = 0; to < 3; ++to) {
    auto dresolved = fusions_[to].backward(dy[to]);
    for (int from = 0; from < 3; ++from) {
      Tensor<T> g = transforms_[from][to].backward(dresolved[from]);
      if (dx[from].empty()) {
        dx[from] = std::move(g);
      } else {
        dx[from] += g;
      }
    }
  }
  return dx;
}

template <typename T>
void FineFusionLayer<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  for (int from = 0; from < 3; ++from) {
    for (int to = 0; to < 3; ++to) {
      transforms_[from][to].visit(
          prefix + ".transform" + std::to_string(from) + std::to_string(to), fn);
    }
  }
  for (int s = 0; s < 3; ++s) fusions_[s].visit(prefix + ".fusion" + std::to_string(s), fn);
}

// --- full network ----------------------------------------------------------

template <typename T>
MafNet<T>::MafNet(const NetworkConfig& config) : config_(config) {
  config.validate();
  const int c = config.base_channels;
  for (int s = 0; s < 3; ++s) {
    initial_[s] = Conv2d<T>(ConvSpec{config.bands, scale_channels(c, s), 3, 1, 1, Padding::kReflect});
    final_up_[s] = ScaleTransform<T>(s, 0, c);
  }
  coarse_ = CoarseFusion<T>(c, config.coarse_blocks);
  for (int l = 0; l < config.fine_layers; ++l) fine_.emplace_back(c, config.reduction);
  final_fusion_ = CoAttentionFusion<T>(c, config.reduction);
  reconstruct_ = Conv2d<T>(ConvSpec{c, config.bands, 3, 1, 1, Padding::kReflect});
}

template <typename T>
Tensor<T> MafNet<T>::forward(const Tensor<T>& noisy) {
  if (noisy.channels() != config_.bands) {
    throw ShapeError("forward: network expects " + std::to_string(config_.bands) +
                     " bands, got " + noisy.shape_string());
  }
  if (noisy.height() % 4 != 0 || noisy.width() % 4 != 0 || noisy.height() < 4 ||
      noisy.width() < 4) {
    throw ShapeError("forward: spatial dims must be positive multiples of 4, got " +
                     noisy.shape_string());
  }
  const Tensor<T> half = gaussian_downsample(noisy);
  const Tensor<T> quarter = gaussian_downsample(half);
  const Tensor<T>* levels[3] = {&noisy, &half, &quarter};

  ScaleFeatures<T> x;
  for (int s = 0; s < 3; ++s) {
    initial_pre_[s] = initial_[s].forward(*levels[s]);
    x[s] = leaky_relu(initial_pre_[s]);
  }
  x = coarse_.forward(x);
  for (auto& layer : fine_) x = layer.forward(x);
  const Tensor<T> fused = final_fusion_.forward(final_up_[0].forward(x[0]),
                                                final_up_[1].forward(x[1]),
                                                final_up_[2].forward(x[2]));
  return reconstruct_.forward(fused);
}

template <typename T>
void MafNet<T>::backward(const Tensor<T>& d_residual) {
  const auto dres = final_fusion_.backward(reconstruct_.backward(d_residual));
  ScaleFeatures<T> d;
  for (int s = 0; s < 3; ++s) d[s] = final_up_[s].backward(dres[s]);
  for (auto it = fine_.rbegin(); it != fine_.rend(); ++it) d = it->backward(d);
  d = coarse_.backward(d);
  for (int s = 0; s < 3; ++s) initial_[s].backward(leaky_relu_backward(initial_pre_[s], d[s]));
}

template <typename T>
void MafNet<T>::visit(const ParamVisitor<T>& fn) {
  for (int s = 0; s < 3; ++s) initial_[s].visit("initial.scale" + std::to_string(s), fn);
  coarse_.visit("coarse", fn);
  for (std::size_t l = 0; l < fine_.size(); ++l) fine_[l].visit("fine.layer" + std::to_string(l), fn);
  for (int s = 1; s < 3; ++s) final_up_[s].visit("final.transform" + std::to_string(s), fn);
  final_fusion_.visit("final.fusion", fn);
  reconstruct_.visit("reconstruct", fn);
}

template class CoarseFusion<float>;
template class CoarseFusion<double>;
template class FineFusionLayer<float>;
template class FineFusionLayer<double>;
template class MafNet<float>;
template class MafNet<double>;

// --- Network handle --------------------------------------------------------

Network::Network(const NetworkConfig& config) : model_(config) {
  model_.visit([&](const std::string& path, Param<float>& p) {
    initialize_param(p, path, config.seed);
    params_.emplace_back(path, &p);
    param_count_ += p.size();
  });
  std::sort(params_.begin(), params_.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
}

Param<float>& Network::param(const std::string& path) {
  auto it = std::lower_bound(params_.begin(), params_.end(), path,
                             [](const auto& entry, const std::string& key) { return entry.first < key; });
  if (it == params_.end() || it->first != path) throw ConfigError("no parameter named " + path);
  return *it->second;
}

std::pair<HSICube, HSICube> Network::forward(const HSICube& noisy) {
  Tensor<float> residual = model_.forward(noisy.voxels());
  Tensor<float> denoised = noisy.voxels();
  for (std::size_t k = 0; k < denoised.size(); ++k) denoised.data()[k] -= residual.data()[k];
  HSICube res(std::move(residual), noisy.value_range());
  HSICube den(std::move(denoised), noisy.value_range());
  res.require_finite("forward residual");
  den.require_finite("forward denoised");
  return {std::move(res), std::move(den)};
}

void Network::zero_grad() {
  for (auto& [path, p] : params_) p->zero_grad();
}

WeightMap Network::weights() const {
  WeightMap out;
  for (const auto& [path, p] : params_) out[path] = WeightTensor{p->shape, p->value};
  return out;
}

void Network::load_weights(const WeightMap& weights) {
  if (weights.size() != params_.size()) {
    throw ConfigError("weight map has " + std::to_string(weights.size()) + " tensors, network has " +
                      std::to_string(params_.size()));
  }
  for (auto& [path, p] : params_) {
    auto it = weights.find(path);
    if (it == weights.end()) throw ConfigError("missing weight tensor " + path);
    if (it->second.shape != p->shape) throw ConfigError("shape mismatch for " + path);
    p->value = it->second.values;
  }
}

std::vector<std::uint8_t> Network::weight_bytes() const { return encode_weights(config(), weights()); }

// --- serialization ---------------------------------------------------------

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t& pos;

  void need(std::size_t n) const {
    if (bytes.size() - pos < n || pos > bytes.size()) throw FormatError("MAFW: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes[pos + k]) << (8 * k);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(bytes[pos + k]) << (8 * k);
    pos += 8;
    return v;
  }
};

}  // namespace

void append_weight_records(std::vector<std::uint8_t>& out, const WeightMap& records) {
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& [path, t] : records) {  // std::map keeps paths sorted
    put_u32(out, static_cast<std::uint32_t>(path.size()));
    out.insert(out.end(), path.begin(), path.end());
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
}

WeightMap read_weight_records(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  Reader r{bytes, offset};
  WeightMap out;
  const std::uint32_t count = r.u32();
  std::string previous;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = r.u32();
    r.need(len);
    std::string path(reinterpret_cast<const char*>(bytes.data() + offset), len);
    offset += len;
    if (k > 0 && !(previous < path)) throw FormatError("MAFW: records not sorted by path");
    previous = path;
    WeightTensor t;
    const std::uint32_t ndim = r.u32();
    if (ndim > 8) throw FormatError("MAFW: implausible tensor rank");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.shape.push_back(static_cast<int>(r.u32()));
      n *= static_cast<std::size_t>(t.shape.back());
    }
    r.need(n * 4);
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.values[i] = std::bit_cast<float>(r.u32());
    out.emplace(std::move(path), std::move(t));
  }
  return out;
}

std::vector<std::uint8_t> encode_weights(const NetworkConfig& config, const WeightMap& weights) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kWeightsMagic.begin(), kWeightsMagic.end());
  put_u32(out, kWeightsVersion);
  put_u32(out, static_cast<std::uint32_t>(config.bands));
  put_u32(out, static_cast<std::uint32_t>(config.base_channels));
  put_u32(out, static_cast<std::uint32_t>(config.coarse_blocks));
  put_u32(out, static_cast<std::uint32_t>(config.fine_layers));
  put_u32(out, static_cast<std::uint32_t>(config.reduction));
  put_u64(out, config.seed);
  append_weight_records(out, weights);
  return out;
}

std::pair<NetworkConfig, WeightMap> decode_weights(std::span<const std::uint8_t> bytes,
                                                   std::size_t* end) {
  if (bytes.size() < 4 || !std::equal(kWeightsMagic.begin(), kWeightsMagic.end(), bytes.begin())) {
    throw FormatError("MAFW: bad magic");
  }
  std::size_t pos = 4;
  Reader r{bytes, pos};
  if (r.u32() != kWeightsVersion) throw FormatError("MAFW: unsupported version");
  NetworkConfig config;
  config.bands = static_cast<int>(r.u32());
  config.base_channels = static_cast<int>(r.u32());
  config.coarse_blocks = static_cast<int>(r.u32());
  config.fine_layers = static_cast<int>(r.u32());
  config.reduction = static_cast<int>(r.u32());
  config.seed = r.u64();
  WeightMap weights = read_weight_records(bytes, pos);
  if (end) {
    *end = pos;
  } else if (pos != bytes.size()) {
    throw FormatError("MAFW: trailing bytes after weight records");
  }
  return {config, std::move(weights)};
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void save_network(const Network& net, const std::filesystem::path& path) {
  write_file_bytes(path, net.weight_bytes());
}

std::unique_ptr<Network> load_network(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t end = 0;
  auto [config, weights] = decode_weights(bytes, &end);
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("MAFW: invalid stored config: ") + e.what());
  }
  auto net = std::make_unique<Network>(config);
  net->load_weights(weights);
  return net;
}

// --- inference on arbitrary cubes -----------------------------------------

namespace {

Tensor<float> reflect_pad(const Tensor<float>& x, int bands, int h, int w) {
  Tensor<float> out(bands, h, w);
  for (int b = 0; b < bands; ++b) {
    const int sb = reflect_index(b, x.channels());
    for (int i = 0; i < h; ++i) {
      const int si = reflect_index(i, x.height());
      for (int j = 0; j < w; ++j) out(b, i, j) = x(sb, si, reflect_index(j, x.width()));
    }
  }
  return out;
}

}  // namespace

HSICube denoise_cube(Network& net, const HSICube& noisy) {
  const int net_bands = net.config().bands;
  const int bands = noisy.bands();
  if (bands < 2) throw DataError("denoise: need at least 2 bands, got " + std::to_string(bands));
  noisy.require_finite("denoise input");
  const int h = noisy.height(), w = noisy.width();
  const int ph = std::max(4, (h + 3) / 4 * 4);
  const int pw = std::max(4, (w + 3) / 4 * 4);

  auto run = [&](const Tensor<float>& group) {
    HSICube padded(reflect_pad(group, net_bands, ph, pw));
    return net.forward(padded).second;
  };

  Tensor<float> out(bands, h, w);
  if (bands <= net_bands) {
    const HSICube den = run(noisy.voxels());
    for (int b = 0; b < bands; ++b) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) out(b, i, j) = den.at(b, i, j);
      }
    }
  } else {
    std::vector<int> starts;
    const int stride = std::max(1, net_bands / 2);
    for (int s = 0; s + net_bands < bands; s += stride) starts.push_back(s);
    starts.push_back(bands - net_bands);
    std::vector<double> weight_sum(bands, 0.0);
    Tensor<double> acc(bands, h, w);
    for (int s : starts) {
      const HSICube den = run(noisy.voxels().slice_channels(s, net_bands));
      for (int k = 0; k < net_bands; ++k) {
        const double wk = std::min(k + 1, net_bands - k);
        weight_sum[s + k] += wk;
        for (int i = 0; i < h; ++i) {
          for (int j = 0; j < w; ++j) acc(s + k, i, j) += wk * den.at(k, i, j);
        }
      }
    }
    for (int b = 0; b < bands; ++b) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) out(b, i, j) = static_cast<float>(acc(b, i, j) / weight_sum[b]);
      }
    }
  }
  HSICube result(std::move(out), noisy.value_range());
  result.require_finite("denoise output");
  return result;
}

}  // namespace mafnet
