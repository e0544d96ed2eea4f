// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include "mafnet/mafnet.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "mafnet/metrics.hpp"
#include "mafnet/network.hpp"
#include "mafnet/noise.hpp"
#include "mafnet/plot.hpp"
#include "mafnet/rng.hpp"
#include "mafnet/trainer.hpp"

struct mafnet_cube {
  mafnet::HSICube cube;
};

struct mafnet_network {
  std::unique_ptr<mafnet::Network> net;
};

namespace {

thread_local std::string g_last_error;

mafnet_status fail(mafnet_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename Fn>
mafnet_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return MAFNET_OK;
  } catch (const mafnet::Error& e) {
    return fail(static_cast<mafnet_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(MAFNET_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MAFNET_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

mafnet::NetworkConfig to_config(const mafnet_network_config& c) {
  mafnet::NetworkConfig out;
  out.bands = c.bands;
  out.base_channels = c.base_channels;
  out.coarse_blocks = c.coarse_blocks;
  out.fine_layers = c.fine_layers;
  out.reduction = c.reduction;
  out.seed = c.seed;
  return out;
}

mafnet_network_config from_config(const mafnet::NetworkConfig& c) {
  return {c.bands, c.base_channels, c.coarse_blocks, c.fine_layers, c.reduction, c.seed};
}

#define MAFNET_REQUIRE(cond, what) \
  if (!(cond)) return fail(MAFNET_ERR_INVALID_ARGUMENT, what)

#define MAFNET_THROW_IF_NULL(ptr) \
  if (!(ptr)) throw mafnet::ParamError(#ptr " is null")

}  // namespace

extern "C" {

const char* mafnet_version(void) { return "1.0.0"; }

const char* mafnet_last_error(void) { return g_last_error.c_str(); }

const char* mafnet_status_name(mafnet_status status) {
  switch (status) {
    case MAFNET_OK: return "ok";
    case MAFNET_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MAFNET_ERR_INTERNAL: return "internal";
    default: break;
  }
  if (status >= MAFNET_ERR_FORMAT && status <= MAFNET_ERR_DIVERGENCE) {
    return mafnet::error_code_name(static_cast<mafnet::ErrorCode>(status));
  }
  return "unknown";
}

void mafnet_string_free(char* text) { std::free(text); }

mafnet_status mafnet_cube_create(int bands, int height, int width, const float* data,
                                 mafnet_cube** out) {
  MAFNET_REQUIRE(out, "out is null");
  return guarded([&] {
    auto c = std::make_unique<mafnet_cube>();
    c->cube = mafnet::HSICube(bands, height, width);
    if (data) std::memcpy(c->cube.data().data(), data, c->cube.size() * sizeof(float));
    *out = c.release();
  });
}

mafnet_status mafnet_cube_load(const char* path, mafnet_cube** out) {
  MAFNET_REQUIRE(path && out, "null argument");
  return guarded([&] { *out = new mafnet_cube{mafnet::load_cube(path)}; });
}

mafnet_status mafnet_cube_save(const mafnet_cube* cube, const char* path) {
  MAFNET_REQUIRE(cube && path, "null argument");
  return guarded([&] { mafnet::save_cube(cube->cube, path); });
}

mafnet_status mafnet_cube_dims(const mafnet_cube* cube, int* bands, int* height, int* width) {
  MAFNET_REQUIRE(cube, "cube is null");
  if (bands) *bands = cube->cube.bands();
  if (height) *height = cube->cube.height();
  if (width) *width = cube->cube.width();
  return MAFNET_OK;
}

float* mafnet_cube_data(mafnet_cube* cube) { return cube ? cube->cube.data().data() : nullptr; }

void mafnet_cube_free(mafnet_cube* cube) { delete cube; }

mafnet_status mafnet_cube_synthetic(int bands, int height, int width, uint64_t seed,
                                    mafnet_cube** out) {
  MAFNET_REQUIRE(out, "out is null");
  return guarded([&] { *out = new mafnet_cube{mafnet::synthetic_cube(bands, height, width, seed)}; });
}

mafnet_status mafnet_cube_normalize(const mafnet_cube* cube, mafnet_cube** out) {
  MAFNET_REQUIRE(cube && out, "null argument");
  return guarded([&] {
    *out = new mafnet_cube{mafnet::normalize(cube->cube, mafnet::NormalizationMode::kGlobalMinMax).first};
  });
}

mafnet_status mafnet_noise_apply(const mafnet_cube* clean, const char* noise_case, uint64_t seed,
                                 mafnet_cube** noisy, char** report_text) {
  MAFNET_REQUIRE(clean && noise_case && noisy, "null argument");
  return guarded([&] {
    const mafnet::NoiseSpec spec = mafnet::parse_noise_case(noise_case, seed);
    auto [cube, report] = mafnet::synthesize_case(clean->cube, spec);
    auto handle = std::make_unique<mafnet_cube>(mafnet_cube{std::move(cube)});
    if (report_text) *report_text = dup_string(report.to_text());
    *noisy = handle.release();
  });
}

mafnet_status mafnet_network_config_variant(char variant, int bands, uint64_t seed,
                                            mafnet_network_config* out) {
  MAFNET_REQUIRE(out, "out is null");
  return guarded([&] {
    const auto c = mafnet::NetworkConfig::variant(variant, bands, seed);
    c.validate();
    *out = from_config(c);
  });
}

mafnet_status mafnet_network_create(const mafnet_network_config* config, mafnet_network** out) {
  MAFNET_REQUIRE(config && out, "null argument");
  return guarded([&] {
    const auto c = to_config(*config);
    c.validate();
    *out = new mafnet_network{std::make_unique<mafnet::Network>(c)};
  });
}

mafnet_status mafnet_network_load(const char* path, mafnet_network** out) {
  MAFNET_REQUIRE(path && out, "null argument");
  return guarded([&] { *out = new mafnet_network{mafnet::load_network(path)}; });
}

mafnet_status mafnet_network_save(const mafnet_network* net, const char* path) {
  MAFNET_REQUIRE(net && path, "null argument");
  return guarded([&] { mafnet::save_network(*net->net, path); });
}

mafnet_status mafnet_network_config_get(const mafnet_network* net, mafnet_network_config* out) {
  MAFNET_REQUIRE(net && out, "null argument");
  *out = from_config(net->net->config());
  return MAFNET_OK;
}

mafnet_status mafnet_network_param_count(const mafnet_network* net, size_t* out) {
  MAFNET_REQUIRE(net && out, "null argument");
  *out = net->net->param_count();
  return MAFNET_OK;
}

void mafnet_network_free(mafnet_network* net) { delete net; }

mafnet_status mafnet_denoise(mafnet_network* net, const mafnet_cube* noisy, mafnet_cube** out) {
  MAFNET_REQUIRE(net && noisy && out, "null argument");
  return guarded([&] { *out = new mafnet_cube{mafnet::denoise_cube(*net->net, noisy->cube)}; });
}

mafnet_status mafnet_metrics_compute(const mafnet_cube* estimate, const mafnet_cube* reference,
                                     double data_range, mafnet_metrics* out, char** table_text) {
  MAFNET_REQUIRE(estimate && reference && out, "null argument");
  return guarded([&] {
    const auto t = mafnet::compute_metrics(estimate->cube, reference->cube, data_range);
    if (table_text) *table_text = dup_string(t.to_text());
    *out = {t.psnr_mean, t.ssim_mean, t.sam_mean, t.infinite_bands};
  });
}

void mafnet_train_options_default(int desk_scale, mafnet_train_options* out) {
  if (!out) return;
  const auto kind = mafnet::StageKind::kFixedSigma30;
  const auto g = desk_scale ? mafnet::StageConfig::desk(kind) : mafnet::StageConfig::full(kind);
  const auto c = desk_scale ? mafnet::StageConfig::desk(mafnet::StageKind::kComplex)
                            : mafnet::StageConfig::full(mafnet::StageKind::kComplex);
  *out = mafnet_train_options{};
  out->epochs_gaussian = g.epochs;
  out->epochs_complex = c.epochs;
  out->batch_size = g.batch_size;
  out->patch_height = g.patch.height;
  out->patch_width = g.patch.width;
  out->patch_count = desk_scale ? 200 : 2000;
  out->lr_init = g.lr_init;
  out->lr_decay = g.lr_decay;
  out->lambda = g.lambda;
  out->validation_fraction = g.validation_fraction;
}

mafnet_status mafnet_train(const mafnet_network_config* config, const mafnet_cube* const* cubes,
                           size_t cube_count, const mafnet_train_options* options,
                           mafnet_network** out) {
  MAFNET_REQUIRE(config && options && out, "null argument");
  MAFNET_REQUIRE(cubes || cube_count == 0, "cubes is null");
  return guarded([&] {
    namespace fs = std::filesystem;
    const auto net_config = to_config(*config);
    net_config.validate();
    if (cube_count == 0) throw mafnet::DataError("training needs at least one cube");

    std::vector<mafnet::StageKind> kinds;
    if (options->stages && options->stage_count) {
      for (size_t k = 0; k < options->stage_count; ++k) {
        kinds.push_back(mafnet::parse_stage_kind(options->stages[k]));
      }
    } else {
      kinds = mafnet::default_schedule();
    }
    std::vector<mafnet::StageConfig> stages;
    for (size_t k = 0; k < kinds.size(); ++k) {
      mafnet::StageConfig s;
      s.kind = kinds[k];
      s.epochs = kinds[k] == mafnet::StageKind::kComplex ? options->epochs_complex
                                                         : options->epochs_gaussian;
      s.lr_init = options->lr_init;
      s.lr_decay = options->lr_decay;
      s.batch_size = options->batch_size;
      s.patch = {options->patch_height, options->patch_width, net_config.bands};
      s.lambda = options->lambda;
      s.validation_fraction = options->validation_fraction;
      s.seed = mafnet::derive_seed(options->seed, 0x5354'4147, k);
      s.split_seed = options->seed;
      s.validate();
      stages.push_back(s);
    }

    std::vector<mafnet::HSICube> sources;
    for (size_t k = 0; k < cube_count; ++k) {
      if (!cubes[k]) throw mafnet::ParamError("cube handle is null");
      cubes[k]->cube.require_finite("training cube");
      sources.push_back(cubes[k]->cube);
    }
    const auto patches = mafnet::sample_patches(sources, stages.front().patch,
                                                options->patch_count, options->seed);

    std::unique_ptr<std::ofstream> log;
    fs::path dir;
    if (options->output_dir) {
      dir = options->output_dir;
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) throw mafnet::IoError("cannot create " + dir.string() + ": " + ec.message());
      log = std::make_unique<std::ofstream>(
          dir / "train.log", options->resume_path ? std::ios::app : std::ios::trunc);
      if (!*log) throw mafnet::IoError("cannot write " + (dir / "train.log").string());
    }

    mafnet::TrainOptions topts;
    topts.max_steps = options->max_steps;
    topts.on_epoch = [&](const mafnet::EpochLog& e) {
      const std::string line = e.to_line();
      if (log) {
        *log << line << '\n';
        log->flush();
      }
      if (options->on_epoch) options->on_epoch(line.c_str(), options->user);
    };
    topts.on_stage_end = [&](int stage, const mafnet::Checkpoint& ck) {
      std::string path;
      if (!dir.empty()) {
        const fs::path p = dir / ("stage" + std::to_string(stage + 1) + "_" +
                                  ck.history.back().name + ".ckpt");
        ck.save(p);
        path = p.string();
      }
      if (options->on_stage) options->on_stage(stage, path.c_str(), options->user);
    };

    std::unique_ptr<mafnet::Checkpoint> resume;
    if (options->resume_path) {
      resume = std::make_unique<mafnet::Checkpoint>(mafnet::Checkpoint::load(options->resume_path));
    }
    const mafnet::Checkpoint ck =
        mafnet::run_incremental_schedule(net_config, patches, stages, topts, resume.get());
    if (!ck.cursor.stage_complete && !dir.empty()) ck.save(dir / "interrupted.ckpt");
    auto net = std::make_unique<mafnet::Network>(ck.config);
    net->load_weights(ck.weights);
    *out = new mafnet_network{std::move(net)};
  });
}

mafnet_status mafnet_plot_metrics(const char* table_text, const char* dir, const char* stem) {
  MAFNET_REQUIRE(table_text && dir, "null argument");
  return guarded([&] {
    mafnet::plot_metrics(mafnet::MetricsTable::parse(table_text), dir, stem ? stem : "");
  });
}

mafnet_status mafnet_plot_loss_curves(const char* const* labels, const char* const* log_texts,
                                      size_t count, const char* dir) {
  MAFNET_REQUIRE(log_texts && dir, "null argument");
  MAFNET_REQUIRE(count > 0, "no training logs");
  return guarded([&] {
    std::vector<std::pair<std::string, std::vector<mafnet::EpochLog>>> logs;
    for (size_t k = 0; k < count; ++k) {
      MAFNET_THROW_IF_NULL(log_texts[k]);
      const std::string label =
          labels && labels[k] ? labels[k] : "run " + std::to_string(k + 1);
      logs.emplace_back(label, mafnet::parse_training_log(log_texts[k]));
      if (logs.back().second.empty()) throw mafnet::DataError("training log " + label + " is empty");
    }
    mafnet::plot_loss_curves(logs, dir);
  });
}

}  // extern "C"
