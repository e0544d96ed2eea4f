// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MAFNET_TRAINER_HPP
#define MAFNET_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mafnet/metrics.hpp"
#include "mafnet/network.hpp"
#include "mafnet/noise.hpp"
#include "mafnet/objective.hpp"

namespace mafnet {

enum class StageKind { kFixedSigma30, kFixedSigma50, kFixedSigma70, kBlindGaussian, kComplex };

std::string stage_name(StageKind kind);
StageKind parse_stage_kind(std::string_view name);
/// sigma 30 -> 50 -> 70 -> blind -> complex.
std::vector<StageKind> default_schedule();

struct PatchDims {
  int height = 64;
  int width = 64;
  int bands = 16;
  bool operator==(const PatchDims&) const = default;
};

struct StageConfig {
  StageKind kind = StageKind::kFixedSigma30;
  int epochs = 5;
  double lr_init = 1e-4;
  double lr_decay = 0.97;
  int batch_size = 4;
  PatchDims patch;
  double lambda = kDefaultGradientWeight;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  /// Seeds the train/validation split; keep it fixed across stages so no
  /// stage trains on another stage's validation patches.
  std::uint64_t split_seed = 0;

  /// Small-budget defaults: (64,64,16) patches, batch 4, 5 epochs for the
  /// Gaussian stages and 10 for the complex one.
  static StageConfig desk(StageKind kind, std::uint64_t seed = 0);
  /// (128,128,31) patches, 100 Gaussian epochs split over four stages and
  /// 150 complex epochs.
  static StageConfig full(StageKind kind, std::uint64_t seed = 0);
  void validate() const;
  std::string name() const { return stage_name(kind); }
};

// --- patches -----------------------------------------------------------------

enum class Augment { kIdentity, kRotate90, kRotate180, kRotate270, kFlip, kScaleDown, kScaleUp };
inline constexpr double kScaleDown = 0.75;
inline constexpr double kScaleUp = 1.25;

struct PatchOrigin {
  int cube = 0;
  int band = 0;
  int row = 0;
  int col = 0;
  Augment augment = Augment::kIdentity;
  bool operator==(const PatchOrigin&) const = default;
};

/// Random crops with one augmentation each. Rotations by 90/270 degrees are
/// only drawn for square patches; scale augmentations crop a window of
/// patch/scale pixels and resample it bilinearly, and are skipped when that
/// window does not fit the source.
std::vector<HSICube> sample_patches(const std::vector<HSICube>& cubes, PatchDims patch, int count,
                                    std::uint64_t seed, std::vector<PatchOrigin>* origins = nullptr);

/// Smooth random test cube: a few endmember spectra mixed by random-Fourier
/// Gaussian-process abundance maps, scaled into [0.05, 0.95].
HSICube synthetic_cube(int bands, int height, int width, std::uint64_t seed);

struct DataSplit {
  std::vector<int> train;
  std::vector<int> validation;
};
/// floor(n * fraction) held out, none when that would leave nothing to train.
DataSplit split_validation(int count, double fraction, std::uint64_t seed);

// --- optimizer ---------------------------------------------------------------

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct AdamState {
  std::uint64_t step = 0;
  WeightMap first;
  WeightMap second;
  bool operator==(const AdamState&) const = default;
};

/// Bias-corrected adaptive-moment update from the accumulated gradients.
void adam_step(Network& net, AdamState& state, double lr);

// --- checkpoints -------------------------------------------------------------

struct EpochLog {
  std::string stage;
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double rec = 0.0;
  double grad = 0.0;
  double total = 0.0;

  /// `stage epoch lr loss_rec loss_grad loss_total`
  std::string to_line() const;
  static EpochLog parse_line(std::string_view line);
  bool operator==(const EpochLog&) const = default;
};

std::vector<EpochLog> parse_training_log(std::string_view text);

struct StageRecord {
  std::string name;
  double final_loss = 0.0;
  std::vector<EpochLog> epochs;
  std::optional<double> validation_psnr;
  std::optional<double> validation_noisy_psnr;
  bool operator==(const StageRecord&) const = default;
};

/// Where an interrupted run continues from.
struct TrainCursor {
  int stage = 0;     // index into the schedule
  std::string stage_name;
  std::uint64_t stage_seed = 0;
  std::uint64_t split_seed = 0;
  std::uint64_t global_step = 0;  // optimizer steps over all stages
  int epoch = 0;     // 0-based epoch in progress
  int batch = 0;     // next batch in that epoch
  double lr = 0.0;   // lr of the epoch in progress
  double rec_sum = 0.0;
  double grad_sum = 0.0;
  double total_sum = 0.0;
  int batches_done = 0;
  bool stage_complete = true;
  std::vector<EpochLog> epochs;  // completed epochs of the current stage
  bool operator==(const TrainCursor&) const = default;
};

struct Checkpoint {
  NetworkConfig config;
  WeightMap weights;
  std::vector<StageRecord> history;
  AdamState optimizer;
  TrainCursor cursor;

  std::vector<std::uint8_t> encode() const;
  static Checkpoint decode(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
  bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::array<char, 4> kTrailerMagic = {'M', 'A', 'F', 'T'};

// --- training ----------------------------------------------------------------

struct TrainOptions {
  std::function<void(const EpochLog&)> on_epoch;
  /// Called after each finished stage with its checkpoint.
  std::function<void(int stage, const Checkpoint&)> on_stage_end;
  /// Called before a stage trains its first batch.
  std::function<void(int stage, const Network&)> on_stage_begin;
  /// Stop after this many optimizer steps in this call (0 = no limit).
  std::uint64_t max_steps = 0;
  /// Skip the end-of-stage validation pass.
  bool skip_validation = false;
};

/// The noise the stage trains on for one batch.
NoiseSpec stage_noise(StageKind kind, std::uint64_t batch_seed, std::uint64_t sample_seed);
/// Seed of batch `batch` in epoch `epoch` (0-based).
std::uint64_t batch_seed(const StageConfig& stage, int epoch, int batch);

/// Trains one stage. With `resume`, its weights, optimizer state and cursor
/// are restored first; the cursor must point into this stage.
Checkpoint run_stage(Network& net, const std::vector<HSICube>& patches, const StageConfig& stage,
                     const TrainOptions& options = {}, const Checkpoint* resume = nullptr);

/// Runs the stages in order, each warm-started from the previous one. With
/// `resume`, finished stages are skipped and the interrupted one continues.
Checkpoint run_incremental_schedule(const NetworkConfig& config,
                                    const std::vector<HSICube>& patches,
                                    const std::vector<StageConfig>& stages,
                                    const TrainOptions& options = {},
                                    const Checkpoint* resume = nullptr);

struct ValidationScore {
  double denoised_psnr = 0.0;
  double noisy_psnr = 0.0;
};
/// Mean PSNR over patches with fixed evaluation noise for the stage kind.
ValidationScore validate_patches(Network& net, const std::vector<HSICube>& patches,
                                 StageKind kind, std::uint64_t seed);

struct CaseEvaluation {
  std::string case_name;
  MetricsTable denoised;  // averaged over cubes
  MetricsTable noisy;
  std::vector<MetricsTable> per_cube;
};

/// Synthesizes each case on every cube (seed derived from the case seed and
/// cube index), denoises and scores against the clean cube.
std::vector<CaseEvaluation> evaluate(Network& net, const std::vector<HSICube>& cubes,
                                     const std::vector<NoiseSpec>& cases);

MetricsTable average_tables(const std::vector<MetricsTable>& tables);

}  // namespace mafnet

#endif  // MAFNET_TRAINER_HPP
