// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include "mafnet/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "mafnet/rng.hpp"

namespace mafnet {

namespace {

constexpr std::uint64_t kPatchStream = 0x5041'5443;   // "PATC"
constexpr std::uint64_t kShuffleStream = 0x5348'5546;
constexpr std::uint64_t kBatchStream = 0x4241'5443;
constexpr std::uint64_t kSplitStream = 0x5350'4C54;
constexpr std::uint64_t kCaseStream = 0x4341'5345;
constexpr std::uint64_t kValidStream = 0x5641'4C44;
constexpr std::uint64_t kSynthStream = 0x5359'4E54;

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view token, const char* what) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
    throw FormatError(std::string("training log: bad ") + what + " '" + std::string(token) + "'");
  }
  return v;
}

}  // namespace

// --- stage configuration -----------------------------------------------------

std::string stage_name(StageKind kind) {
  switch (kind) {
    case StageKind::kFixedSigma30: return "fixed_sigma_30";
    case StageKind::kFixedSigma50: return "fixed_sigma_50";
    case StageKind::kFixedSigma70: return "fixed_sigma_70";
    case StageKind::kBlindGaussian: return "blind_gaussian";
    case StageKind::kComplex: return "complex";
  }
  return "?";
}

StageKind parse_stage_kind(std::string_view name) {
  for (StageKind k : default_schedule()) {
    if (stage_name(k) == name) return k;
  }
  if (name == "g30") return StageKind::kFixedSigma30;
  if (name == "g50") return StageKind::kFixedSigma50;
  if (name == "g70") return StageKind::kFixedSigma70;
  if (name == "blind") return StageKind::kBlindGaussian;
  throw ConfigError("unknown stage '" + std::string(name) +
                    "' (fixed_sigma_30, fixed_sigma_50, fixed_sigma_70, blind_gaussian, complex)");
}

std::vector<StageKind> default_schedule() {
  return {StageKind::kFixedSigma30, StageKind::kFixedSigma50, StageKind::kFixedSigma70,
          StageKind::kBlindGaussian, StageKind::kComplex};
}

StageConfig StageConfig::desk(StageKind kind, std::uint64_t seed) {
  StageConfig c;
  c.kind = kind;
  c.epochs = kind == StageKind::kComplex ? 10 : 5;
  c.batch_size = 4;
  c.patch = {64, 64, 16};
  c.seed = seed;
  return c;
}

StageConfig StageConfig::full(StageKind kind, std::uint64_t seed) {
  StageConfig c;
  c.kind = kind;
  c.epochs = kind == StageKind::kComplex ? 150 : 25;
  c.batch_size = 16;
  c.patch = {128, 128, 31};
  c.seed = seed;
  return c;
}

void StageConfig::validate() const {
  if (epochs < 1) throw ConfigError("stage " + name() + ": epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("stage " + name() + ": batch_size must be >= 1");
  if (!(lr_init > 0.0) || !std::isfinite(lr_init)) {
    throw ConfigError("stage " + name() + ": lr_init must be positive");
  }
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
    throw ConfigError("stage " + name() + ": lr_decay must be in (0, 1]");
  }
  if (patch.height <= 0 || patch.width <= 0 || patch.height % 4 || patch.width % 4) {
    throw ConfigError("stage " + name() + ": patch height and width must be positive multiples of 4");
  }
  if (patch.bands < 2) throw ConfigError("stage " + name() + ": patch needs at least 2 bands");
  if (!(lambda >= 0.0)) throw ConfigError("stage " + name() + ": lambda must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("stage " + name() + ": validation_fraction must be in [0, 1)");
  }
}

// --- patches -----------------------------------------------------------------

namespace {

Tensor<float> crop(const Tensor<float>& src, int band, int row, int col, int bands, int h, int w) {
  Tensor<float> out(bands, h, w);
  for (int c = 0; c < bands; ++c) {
    for (int i = 0; i < h; ++i) {
      std::copy_n(&src(band + c, row + i, col), w, &out(c, i, 0));
    }
  }
  return out;
}

// Pixel-centre aligned bilinear resampling.
Tensor<float> resample(const Tensor<float>& src, int h, int w) {
  Tensor<float> out(src.channels(), h, w);
  const double sy = static_cast<double>(src.height()) / h;
  const double sx = static_cast<double>(src.width()) / w;
  for (int i = 0; i < h; ++i) {
    const double y = std::clamp((i + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(y);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double fy = y - y0;
    for (int j = 0; j < w; ++j) {
      const double x = std::clamp((j + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(x);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double fx = x - x0;
      for (int c = 0; c < src.channels(); ++c) {
        const double top = src(c, y0, x0) * (1 - fx) + src(c, y0, x1) * fx;
        const double bot = src(c, y1, x0) * (1 - fx) + src(c, y1, x1) * fx;
        out(c, i, j) = static_cast<float>(top * (1 - fy) + bot * fy);
      }
    }
  }
  return out;
}

// Counter-clockwise quarter turns.
Tensor<float> rotate(const Tensor<float>& x, int quarter_turns) {
  const int h = x.height(), w = x.width();
  const bool swap = quarter_turns % 2 == 1;
  Tensor<float> out(x.channels(), swap ? w : h, swap ? h : w);
  for (int c = 0; c < x.channels(); ++c) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        switch (quarter_turns) {
          case 1: out(c, w - 1 - j, i) = x(c, i, j); break;
          case 2: out(c, h - 1 - i, w - 1 - j) = x(c, i, j); break;
          case 3: out(c, j, h - 1 - i) = x(c, i, j); break;
          default: out(c, i, j) = x(c, i, j); break;
        }
      }
    }
  }
  return out;
}

Tensor<float> flip_horizontal(const Tensor<float>& x) {
  Tensor<float> out(x.channels(), x.height(), x.width());
  for (int c = 0; c < x.channels(); ++c) {
    for (int i = 0; i < x.height(); ++i) {
      for (int j = 0; j < x.width(); ++j) out(c, i, x.width() - 1 - j) = x(c, i, j);
    }
  }
  return out;
}

std::pair<int, int> window_for(Augment a, PatchDims patch) {
  if (a == Augment::kScaleDown) {
    return {static_cast<int>(std::lround(patch.height / kScaleDown)),
            static_cast<int>(std::lround(patch.width / kScaleDown))};
  }
  if (a == Augment::kScaleUp) {
    return {static_cast<int>(std::lround(patch.height / kScaleUp)),
            static_cast<int>(std::lround(patch.width / kScaleUp))};
  }
  return {patch.height, patch.width};
}

}  // namespace

std::vector<HSICube> sample_patches(const std::vector<HSICube>& cubes, PatchDims patch, int count,
                                    std::uint64_t seed, std::vector<PatchOrigin>* origins) {
  if (count < 0) throw ParamError("sample_patches: negative count");
  if (origins) origins->clear();
  if (count == 0) return {};
  if (cubes.empty()) throw ShapeError("sample_patches: no source cubes");
  if (patch.height <= 0 || patch.width <= 0 || patch.bands <= 0) {
    throw ShapeError("sample_patches: patch dims must be positive");
  }
  for (const HSICube& c : cubes) {
    if (c.height() < patch.height || c.width() < patch.width || c.bands() < patch.bands) {
      throw ShapeError("sample_patches: source cube (" + std::to_string(c.bands()) + "," +
                       std::to_string(c.height()) + "," + std::to_string(c.width()) +
                       ") smaller than patch (" + std::to_string(patch.bands) + "," +
                       std::to_string(patch.height) + "," + std::to_string(patch.width) + ")");
    }
  }
  std::vector<HSICube> out;
  out.reserve(count);
  for (int n = 0; n < count; ++n) {
    Rng rng(derive_seed(seed, kPatchStream, static_cast<std::uint64_t>(n)));
    PatchOrigin o;
    o.cube = uniform_int(rng, 0, static_cast<int>(cubes.size()) - 1);
    const HSICube& src = cubes[o.cube];
    std::vector<Augment> choices = {Augment::kIdentity, Augment::kRotate180, Augment::kFlip,
                                    Augment::kScaleUp};
    if (patch.height == patch.width) {
      choices.push_back(Augment::kRotate90);
      choices.push_back(Augment::kRotate270);
    }
    const auto [dh, dw] = window_for(Augment::kScaleDown, patch);
    if (dh <= src.height() && dw <= src.width()) choices.push_back(Augment::kScaleDown);
    std::sort(choices.begin(), choices.end());
    o.augment = choices[uniform_int(rng, 0, static_cast<int>(choices.size()) - 1)];
    const auto [wh, ww] = window_for(o.augment, patch);
    o.band = uniform_int(rng, 0, src.bands() - patch.bands);
    o.row = uniform_int(rng, 0, src.height() - wh);
    o.col = uniform_int(rng, 0, src.width() - ww);
    Tensor<float> t = crop(src.voxels(), o.band, o.row, o.col, patch.bands, wh, ww);
    switch (o.augment) {
      case Augment::kRotate90: t = rotate(t, 1); break;
      case Augment::kRotate180: t = rotate(t, 2); break;
      case Augment::kRotate270: t = rotate(t, 3); break;
      case Augment::kFlip: t = flip_horizontal(t); break;
      case Augment::kScaleDown:
      case Augment::kScaleUp: t = resample(t, patch.height, patch.width); break;
      case Augment::kIdentity: break;
    }
    out.emplace_back(std::move(t), src.value_range());
    if (origins) origins->push_back(o);
  }
  return out;
}

HSICube synthetic_cube(int bands, int height, int width, std::uint64_t seed) {
  if (bands < 1 || height < 1 || width < 1) throw ShapeError("synthetic_cube: dims must be positive");
  constexpr int kEndmembers = 4;
  constexpr int kFeatures = 24;
  Rng rng(derive_seed(seed, kSynthStream));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Smooth spectra: a baseline plus a few Gaussian bumps along the band axis.
  std::vector<std::vector<double>> spectra(kEndmembers, std::vector<double>(bands));
  for (auto& s : spectra) {
    const double base = 0.2 + 0.3 * unit(rng);
    const double slope = 0.4 * (unit(rng) - 0.5);
    for (int b = 0; b < bands; ++b) s[b] = base + slope * b / std::max(1, bands - 1);
    for (int bump = 0; bump < 3; ++bump) {
      const double centre = unit(rng) * bands;
      const double width_b = 0.1 * bands + unit(rng) * 0.3 * bands + 1.0;
      const double amp = 0.5 * (unit(rng) - 0.3);
      for (int b = 0; b < bands; ++b) {
        const double d = (b - centre) / width_b;
        s[b] += amp * std::exp(-0.5 * d * d);
      }
    }
  }

  // Abundances: softmax over random-Fourier approximations of GP draws.
  const double extent = std::max(height, width);
  std::vector<std::vector<double>> logits(kEndmembers,
                                          std::vector<double>(static_cast<std::size_t>(height) * width));
  for (auto& field : logits) {
    const double length = extent * (0.08 + 0.15 * unit(rng));
    std::vector<std::array<double, 3>> feats(kFeatures);
    for (auto& f : feats) {
      f = {normal(rng) / length, normal(rng) / length, 2.0 * std::numbers::pi * unit(rng)};
    }
    const double amp = 2.0 * std::sqrt(2.0 / kFeatures);
    for (int i = 0; i < height; ++i) {
      for (int j = 0; j < width; ++j) {
        double v = 0.0;
        for (const auto& f : feats) v += std::cos(f[0] * i + f[1] * j + f[2]);
        field[static_cast<std::size_t>(i) * width + j] = amp * v;
      }
    }
  }

  Tensor<float> t(bands, height, width);
  std::vector<double> values(t.size());
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (std::size_t p = 0; p < plane; ++p) {
    double w[kEndmembers];
    double mx = -1e300, z = 0.0;
    for (int k = 0; k < kEndmembers; ++k) mx = std::max(mx, logits[k][p]);
    for (int k = 0; k < kEndmembers; ++k) z += (w[k] = std::exp(logits[k][p] - mx));
    for (int b = 0; b < bands; ++b) {
      double v = 0.0;
      for (int k = 0; k < kEndmembers; ++k) v += w[k] / z * spectra[k][b];
      values[static_cast<std::size_t>(b) * plane + p] = v;
    }
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, span = std::max(*hi_it - lo, 1e-12);
  for (std::size_t k = 0; k < values.size(); ++k) {
    t.data()[k] = static_cast<float>(0.05 + 0.9 * (values[k] - lo) / span);
  }
  return HSICube(std::move(t));
}

DataSplit split_validation(int count, double fraction, std::uint64_t seed) {
  if (count < 0) throw ParamError("split_validation: negative count");
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ParamError("split_validation: fraction in [0, 1)");
  std::vector<int> order(count);
  for (int k = 0; k < count; ++k) order[k] = k;
  Rng rng(derive_seed(seed, kSplitStream, static_cast<std::uint64_t>(count)));
  std::shuffle(order.begin(), order.end(), rng);
  int held = static_cast<int>(std::floor(count * fraction));
  if (held >= count) held = 0;
  DataSplit s;
  s.validation.assign(order.begin(), order.begin() + held);
  s.train.assign(order.begin() + held, order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

// --- optimizer ---------------------------------------------------------------

void adam_step(Network& net, AdamState& state, double lr) {
  if (state.first.empty()) {
    for (const auto& [path, p] : net.params()) {
      state.first[path] = WeightTensor{p->shape, std::vector<float>(p->size(), 0.0f)};
      state.second[path] = WeightTensor{p->shape, std::vector<float>(p->size(), 0.0f)};
    }
  }
  if (state.first.size() != net.params().size()) {
    throw ConfigError("optimizer state does not match the network");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (const auto& [path, p] : net.params()) {
    auto m_it = state.first.find(path);
    auto v_it = state.second.find(path);
    if (m_it == state.first.end() || v_it == state.second.end() ||
        m_it->second.values.size() != p->size()) {
      throw ConfigError("optimizer state does not match parameter " + path);
    }
    float* m = m_it->second.values.data();
    float* v = v_it->second.values.data();
    for (std::size_t k = 0; k < p->size(); ++k) {
      const double g = p->grad[k];
      const double mk = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * g;
      const double vk = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * g * g;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = lr * (mk / c1) / (std::sqrt(vk / c2) + kAdamEps);
      p->value[k] = static_cast<float>(p->value[k] - update);
    }
  }
}

// --- logs --------------------------------------------------------------------

std::string EpochLog::to_line() const {
  return stage + ' ' + std::to_string(epoch) + ' ' + format_double(lr) + ' ' + format_double(rec) +
         ' ' + format_double(grad) + ' ' + format_double(total);
}

EpochLog EpochLog::parse_line(std::string_view line) {
  std::vector<std::string_view> tok;
  while (!line.empty()) {
    const auto sp = line.find(' ');
    if (sp != 0) tok.push_back(line.substr(0, sp));
    if (sp == std::string_view::npos) break;
    line.remove_prefix(sp + 1);
  }
  if (tok.size() != 6) throw FormatError("training log: expected 6 fields per line");
  EpochLog e;
  e.stage = std::string(tok[0]);
  e.epoch = static_cast<int>(parse_number(tok[1], "epoch"));
  e.lr = parse_number(tok[2], "lr");
  e.rec = parse_number(tok[3], "loss_rec");
  e.grad = parse_number(tok[4], "loss_grad");
  e.total = parse_number(tok[5], "loss_total");
  return e;
}

std::vector<EpochLog> parse_training_log(std::string_view text) {
  std::vector<EpochLog> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(EpochLog::parse_line(line));
  }
  return out;
}

// --- checkpoints -------------------------------------------------------------

namespace {

using nlohmann::json;

json epoch_json(const EpochLog& e) {
  return {{"stage", e.stage}, {"epoch", e.epoch}, {"lr", e.lr},
          {"rec", e.rec},     {"grad", e.grad},   {"total", e.total}};
}

EpochLog epoch_from(const json& j) {
  EpochLog e;
  e.stage = j.at("stage").get<std::string>();
  e.epoch = j.at("epoch").get<int>();
  e.lr = j.at("lr").get<double>();
  e.rec = j.at("rec").get<double>();
  e.grad = j.at("grad").get<double>();
  e.total = j.at("total").get<double>();
  return e;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json epochs_json(const std::vector<EpochLog>& xs) {
  json a = json::array();
  for (const auto& e : xs) a.push_back(epoch_json(e));
  return a;
}

std::vector<EpochLog> epochs_from(const json& j) {
  std::vector<EpochLog> out;
  for (const auto& e : j) out.push_back(epoch_from(e));
  return out;
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

}  // namespace

std::vector<std::uint8_t> Checkpoint::encode() const {
  std::vector<std::uint8_t> out = encode_weights(config, weights);
  json meta;
  meta["version"] = 1;
  json hist = json::array();
  for (const auto& s : history) {
    hist.push_back({{"name", s.name},
                    {"final_loss", s.final_loss},
                    {"epochs", epochs_json(s.epochs)},
                    {"validation_psnr", optional_json(s.validation_psnr)},
                    {"validation_noisy_psnr", optional_json(s.validation_noisy_psnr)}});
  }
  meta["history"] = hist;
  meta["cursor"] = {{"stage", cursor.stage},
                    {"stage_name", cursor.stage_name},
                    {"epoch", cursor.epoch},
                    {"batch", cursor.batch},
                    {"lr", cursor.lr},
                    {"rec_sum", cursor.rec_sum},
                    {"grad_sum", cursor.grad_sum},
                    {"total_sum", cursor.total_sum},
                    {"batches_done", cursor.batches_done},
                    {"stage_complete", cursor.stage_complete},
                    {"global_step", cursor.global_step},
                    {"epochs", epochs_json(cursor.epochs)}};
  meta["rng"] = {{"stage_seed", cursor.stage_seed}, {"split_seed", cursor.split_seed}};
  meta["optimizer"] = {{"step", optimizer.step}};
  const std::string text = meta.dump();
  out.insert(out.end(), kTrailerMagic.begin(), kTrailerMagic.end());
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  append_weight_records(out, optimizer.first);
  append_weight_records(out, optimizer.second);
  return out;
}

Checkpoint Checkpoint::decode(std::span<const std::uint8_t> bytes) {
  Checkpoint ck;
  std::size_t pos = 0;
  auto [config, weights] = decode_weights(bytes, &pos);
  ck.config = config;
  ck.weights = std::move(weights);
  if (pos == bytes.size()) return ck;  // bare weights: a finished, stateless run
  if (bytes.size() - pos < 12 ||
      !std::equal(kTrailerMagic.begin(), kTrailerMagic.end(), bytes.begin() + pos)) {
    throw FormatError("checkpoint: bad trailer magic");
  }
  pos += 4;
  std::uint64_t len = 0;
  for (int k = 0; k < 8; ++k) len |= static_cast<std::uint64_t>(bytes[pos + k]) << (8 * k);
  pos += 8;
  if (bytes.size() - pos < len) throw FormatError("checkpoint: truncated metadata");
  json meta;
  try {
    meta = json::parse(bytes.begin() + pos, bytes.begin() + pos + len);
    pos += len;
    if (meta.at("version").get<int>() != 1) throw FormatError("checkpoint: unsupported version");
    for (const auto& s : meta.at("history")) {
      StageRecord r;
      r.name = s.at("name").get<std::string>();
      r.final_loss = s.at("final_loss").get<double>();
      r.epochs = epochs_from(s.at("epochs"));
      r.validation_psnr = optional_from(s.at("validation_psnr"));
      r.validation_noisy_psnr = optional_from(s.at("validation_noisy_psnr"));
      ck.history.push_back(std::move(r));
    }
    const json& c = meta.at("cursor");
    ck.cursor.stage = c.at("stage").get<int>();
    ck.cursor.stage_name = c.at("stage_name").get<std::string>();
    ck.cursor.epoch = c.at("epoch").get<int>();
    ck.cursor.batch = c.at("batch").get<int>();
    ck.cursor.lr = c.at("lr").get<double>();
    ck.cursor.rec_sum = c.at("rec_sum").get<double>();
    ck.cursor.grad_sum = c.at("grad_sum").get<double>();
    ck.cursor.total_sum = c.at("total_sum").get<double>();
    ck.cursor.batches_done = c.at("batches_done").get<int>();
    ck.cursor.stage_complete = c.at("stage_complete").get<bool>();
    ck.cursor.global_step = c.at("global_step").get<std::uint64_t>();
    ck.cursor.epochs = epochs_from(c.at("epochs"));
    ck.cursor.stage_seed = meta.at("rng").at("stage_seed").get<std::uint64_t>();
    ck.cursor.split_seed = meta.at("rng").at("split_seed").get<std::uint64_t>();
    ck.optimizer.step = meta.at("optimizer").at("step").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  ck.optimizer.first = read_weight_records(bytes, pos);
  ck.optimizer.second = read_weight_records(bytes, pos);
  if (pos != bytes.size()) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file_bytes(path, encode()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return decode(read_file_bytes(path)); }

// --- training ----------------------------------------------------------------

NoiseSpec stage_noise(StageKind kind, std::uint64_t batch, std::uint64_t sample_seed) {
  switch (kind) {
    case StageKind::kFixedSigma30: return NoiseSpec::fixed(30.0, sample_seed);
    case StageKind::kFixedSigma50: return NoiseSpec::fixed(50.0, sample_seed);
    case StageKind::kFixedSigma70: return NoiseSpec::fixed(70.0, sample_seed);
    case StageKind::kBlindGaussian: return NoiseSpec::blind(sample_seed);
    case StageKind::kComplex: {
      Rng rng(derive_seed(batch, kCaseStream));
      return NoiseSpec::complex_case(uniform_int(rng, 1, 5), sample_seed);
    }
  }
  return NoiseSpec::fixed(30.0, sample_seed);
}

std::uint64_t batch_seed(const StageConfig& stage, int epoch, int batch) {
  return derive_seed(derive_seed(stage.seed, kBatchStream, static_cast<std::uint64_t>(epoch)),
                     kBatchStream, static_cast<std::uint64_t>(batch));
}

namespace {

void require_patch_set(const Network& net, const std::vector<HSICube>& patches) {
  if (patches.empty()) throw DataError("training needs at least one patch");
  const HSICube& first = patches.front();
  for (const HSICube& p : patches) {
    if (p.bands() != net.config().bands) {
      throw ConfigError("patch has " + std::to_string(p.bands()) + " bands, network expects " +
                        std::to_string(net.config().bands));
    }
    if (!p.same_shape(first)) throw ShapeError("training patches differ in shape");
  }
  if (first.height() % 4 || first.width() % 4) {
    throw ShapeError("training patch height and width must be multiples of 4");
  }
}

ValidationScore score_validation(Network& net, const std::vector<HSICube>& patches,
                                 const std::vector<int>& indices, StageKind kind,
                                 std::uint64_t seed) {
  std::vector<HSICube> subset;
  for (int k : indices) subset.push_back(patches[k]);
  return validate_patches(net, subset, kind, seed);
}

}  // namespace

ValidationScore validate_patches(Network& net, const std::vector<HSICube>& patches, StageKind kind,
                                 std::uint64_t seed) {
  ValidationScore s;
  if (patches.empty()) return s;
  for (std::size_t k = 0; k < patches.size(); ++k) {
    const std::uint64_t sample = derive_seed(seed, kValidStream, k);
    NoiseSpec spec;
    switch (kind) {
      case StageKind::kBlindGaussian:
        spec = NoiseSpec::fixed(kBlindSigmas[k % 3], sample);
        break;
      case StageKind::kComplex:
        spec = NoiseSpec::complex_case(static_cast<int>(k % 5) + 1, sample);
        break;
      default:
        spec = stage_noise(kind, 0, sample);
        break;
    }
    const HSICube noisy = synthesize_case(patches[k], spec).first;
    const HSICube denoised = net.forward(noisy).second;
    s.denoised_psnr += psnr(denoised, patches[k]).mean;
    s.noisy_psnr += psnr(noisy, patches[k]).mean;
  }
  s.denoised_psnr /= static_cast<double>(patches.size());
  s.noisy_psnr /= static_cast<double>(patches.size());
  return s;
}

Checkpoint run_stage(Network& net, const std::vector<HSICube>& patches, const StageConfig& stage,
                     const TrainOptions& options, const Checkpoint* resume) {
  stage.validate();
  require_patch_set(net, patches);

  Checkpoint ck;
  ck.config = net.config();
  TrainCursor& cur = ck.cursor;
  bool fresh = true;
  if (resume) {
    if (!(resume->config == net.config())) throw ConfigError("checkpoint network config differs");
    net.load_weights(resume->weights);
    ck.history = resume->history;
    cur.global_step = resume->cursor.global_step;
    if (!resume->cursor.stage_complete) {
      if (resume->cursor.stage_name != stage.name() || resume->cursor.stage_seed != stage.seed ||
          resume->cursor.split_seed != stage.split_seed) {
        throw ConfigError("checkpoint was interrupted in a different stage (" +
                          resume->cursor.stage_name + ")");
      }
      cur = resume->cursor;
      ck.optimizer = resume->optimizer;
      fresh = false;
    }
  }
  if (fresh) {
    cur.stage = static_cast<int>(ck.history.size());
    cur.stage_name = stage.name();
    cur.stage_seed = stage.seed;
    cur.split_seed = stage.split_seed;
    cur.lr = stage.lr_init;
    cur.stage_complete = false;
    if (options.on_stage_begin) options.on_stage_begin(cur.stage, net);
  }

  const DataSplit split =
      split_validation(static_cast<int>(patches.size()), stage.validation_fraction, stage.split_seed);
  const int n_train = static_cast<int>(split.train.size());
  const int n_batches = (n_train + stage.batch_size - 1) / stage.batch_size;
  std::uint64_t steps = 0;

  auto snapshot = [&]() {
    ck.weights = net.weights();
    return ck;
  };

  Tensor<float> grad;
  while (cur.epoch < stage.epochs) {
    std::vector<int> order = split.train;
    Rng shuffle_rng(derive_seed(stage.seed, kShuffleStream, static_cast<std::uint64_t>(cur.epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (; cur.batch < n_batches; ++cur.batch) {
      if (options.max_steps && steps >= options.max_steps) return snapshot();
      const std::uint64_t bseed = batch_seed(stage, cur.epoch, cur.batch);
      const int first = cur.batch * stage.batch_size;
      const int count = std::min(stage.batch_size, n_train - first);
      net.zero_grad();
      double rec = 0.0, grd = 0.0, tot = 0.0;
      for (int s = 0; s < count; ++s) {
        const HSICube& clean = patches[order[first + s]];
        const NoiseSpec spec = stage_noise(stage.kind, bseed, derive_seed(bseed, kBatchStream, s));
        const HSICube noisy = synthesize_case(clean, spec).first;
        auto diverged = [&](const std::string& what) {
          return DivergenceError(what + " in stage " + stage.name() + " epoch " +
                                 std::to_string(cur.epoch + 1) + " batch " +
                                 std::to_string(cur.batch) + " (batch seed " +
                                 std::to_string(bseed) + ")");
        };
        std::pair<HSICube, HSICube> out;
        try {
          out = net.forward(noisy);
        } catch (const DataError&) {
          throw diverged("non-finite network output");
        }
        const HSICube& denoised = out.second;
        const LossBreakdown loss =
            total_loss<float>(denoised.voxels(), clean.voxels(), stage.lambda, &grad);
        if (!std::isfinite(loss.total)) throw diverged("non-finite loss");
        // denoised = noisy - residual
        const float scale = -1.0f / static_cast<float>(count);
        for (float& g : grad.values()) g *= scale;
        net.backward(grad);
        rec += loss.rec;
        grd += loss.grad;
        tot += loss.total;
      }
      adam_step(net, ck.optimizer, cur.lr);
      ++steps;
      ++cur.global_step;
      cur.rec_sum += rec / count;
      cur.grad_sum += grd / count;
      cur.total_sum += tot / count;
      ++cur.batches_done;
    }
    EpochLog log{stage.name(), cur.epoch + 1, cur.lr,
                 cur.rec_sum / cur.batches_done, cur.grad_sum / cur.batches_done,
                 cur.total_sum / cur.batches_done};
    cur.epochs.push_back(log);
    if (options.on_epoch) options.on_epoch(log);
    ++cur.epoch;
    cur.batch = 0;
    cur.batches_done = 0;
    cur.rec_sum = cur.grad_sum = cur.total_sum = 0.0;
    cur.lr *= stage.lr_decay;
  }

  StageRecord record;
  record.name = stage.name();
  record.epochs = cur.epochs;
  record.final_loss = cur.epochs.back().total;
  if (!options.skip_validation && !split.validation.empty()) {
    const ValidationScore v =
        score_validation(net, patches, split.validation, stage.kind, stage.split_seed);
    record.validation_psnr = v.denoised_psnr;
    record.validation_noisy_psnr = v.noisy_psnr;
  }
  ck.history.push_back(std::move(record));
  cur.stage_complete = true;
  cur.epochs.clear();
  snapshot();
  if (options.on_stage_end) options.on_stage_end(cur.stage, ck);
  return ck;
}

Checkpoint run_incremental_schedule(const NetworkConfig& config, const std::vector<HSICube>& patches,
                                    const std::vector<StageConfig>& stages,
                                    const TrainOptions& options, const Checkpoint* resume) {
  if (stages.empty()) throw ConfigError("incremental schedule needs at least one stage");
  config.validate();
  for (const auto& s : stages) s.validate();
  Network net(config);
  for (const HSICube& p : patches) {
    if (p.bands() != config.bands) {
      throw ConfigError("patch bands " + std::to_string(p.bands()) + " differ from network bands " +
                        std::to_string(config.bands));
    }
  }
  Checkpoint current;
  bool have = false;
  std::size_t start = 0;
  if (resume) {
    if (!(resume->config == config)) throw ConfigError("checkpoint network config differs");
    current = *resume;
    have = true;
    start = resume->history.size();
    if (start > stages.size()) throw ConfigError("checkpoint has more stages than the schedule");
    if (start == stages.size()) return current;
  }
  const std::uint64_t step_limit =
      options.max_steps ? (have ? current.cursor.global_step : 0) + options.max_steps : 0;
  for (std::size_t k = start; k < stages.size(); ++k) {
    TrainOptions opts = options;
    if (step_limit) {
      const std::uint64_t done = have ? current.cursor.global_step : 0;
      opts.max_steps = step_limit > done ? step_limit - done : 0;
      if (opts.max_steps == 0) return current;
    }
    current = run_stage(net, patches, stages[k], opts, have ? &current : nullptr);
    have = true;
    if (!current.cursor.stage_complete) return current;
  }
  return current;
}

// --- evaluation --------------------------------------------------------------

MetricsTable average_tables(const std::vector<MetricsTable>& tables) {
  MetricsTable out;
  if (tables.empty()) return out;
  const std::size_t bands = tables.front().per_band_psnr.size();
  out.per_band_psnr.assign(bands, 0.0);
  out.per_band_ssim.assign(bands, 0.0);
  for (const auto& t : tables) {
    if (t.per_band_psnr.size() != bands) throw ShapeError("average_tables: band counts differ");
    for (std::size_t b = 0; b < bands; ++b) {
      out.per_band_psnr[b] += t.per_band_psnr[b];
      out.per_band_ssim[b] += t.per_band_ssim[b];
    }
    out.psnr_mean += t.psnr_mean;
    out.ssim_mean += t.ssim_mean;
    out.sam_mean += t.sam_mean;
  }
  const double n = static_cast<double>(tables.size());
  for (std::size_t b = 0; b < bands; ++b) {
    out.per_band_psnr[b] /= n;
    out.per_band_ssim[b] /= n;
    if (std::isinf(out.per_band_psnr[b])) ++out.infinite_bands;
  }
  out.psnr_mean /= n;
  out.ssim_mean /= n;
  out.sam_mean /= n;
  return out;
}

std::vector<CaseEvaluation> evaluate(Network& net, const std::vector<HSICube>& cubes,
                                     const std::vector<NoiseSpec>& cases) {
  std::vector<CaseEvaluation> out;
  for (const NoiseSpec& base : cases) {
    base.validate();
    CaseEvaluation ev;
    ev.case_name = base.name();
    std::vector<MetricsTable> noisy_tables;
    for (std::size_t i = 0; i < cubes.size(); ++i) {
      NoiseSpec spec = base;
      spec.seed = derive_seed(base.seed, kValidStream, i);
      const HSICube noisy = synthesize_case(cubes[i], spec).first;
      const HSICube denoised = denoise_cube(net, noisy);
      ev.per_cube.push_back(compute_metrics(denoised, cubes[i]));
      noisy_tables.push_back(compute_metrics(noisy, cubes[i]));
    }
    ev.denoised = average_tables(ev.per_cube);
    ev.noisy = average_tables(noisy_tables);
    out.push_back(std::move(ev));
  }
  return out;
}

}  // namespace mafnet
