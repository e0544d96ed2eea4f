/* Copyright (c) 2026 The MAFNet-HSI Authors
 * SPDX-License-Identifier: Apache-2.0 */

/* C interface to the multiscale hyperspectral denoiser. Every function
 * returns a status; on failure mafnet_last_error() describes the cause for
 * the calling thread. Handles are opaque and owned by the caller. */

#ifndef MAFNET_MAFNET_H
#define MAFNET_MAFNET_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MAFNET_API
#else
#define MAFNET_API __attribute__((visibility("default")))
#endif

typedef enum mafnet_status {
  MAFNET_OK = 0,
  MAFNET_ERR_FORMAT = 1,
  MAFNET_ERR_DATA = 2,
  MAFNET_ERR_IO = 3,
  MAFNET_ERR_SHAPE = 4,
  MAFNET_ERR_PARAM = 5,
  MAFNET_ERR_DEGENERATE_RANGE = 6,
  MAFNET_ERR_CONFIG = 7,
  MAFNET_ERR_DIVERGENCE = 8,
  MAFNET_ERR_INVALID_ARGUMENT = 9,
  MAFNET_ERR_INTERNAL = 10
} mafnet_status;

typedef struct mafnet_cube mafnet_cube;
typedef struct mafnet_network mafnet_network;

MAFNET_API const char* mafnet_version(void);
MAFNET_API const char* mafnet_last_error(void);
MAFNET_API const char* mafnet_status_name(mafnet_status status);
/* Frees strings returned through char** out-parameters. */
MAFNET_API void mafnet_string_free(char* text);

/* ---- cubes: (bands, height, width), band-major float32 ---- */

/* `data` may be NULL for a zero cube; otherwise bands*height*width floats. */
MAFNET_API mafnet_status mafnet_cube_create(int bands, int height, int width, const float* data,
                                            mafnet_cube** out);
MAFNET_API mafnet_status mafnet_cube_load(const char* path, mafnet_cube** out);
MAFNET_API mafnet_status mafnet_cube_save(const mafnet_cube* cube, const char* path);
MAFNET_API mafnet_status mafnet_cube_dims(const mafnet_cube* cube, int* bands, int* height,
                                          int* width);
MAFNET_API float* mafnet_cube_data(mafnet_cube* cube);
MAFNET_API void mafnet_cube_free(mafnet_cube* cube);
/* Smooth random cube with values in [0.05, 0.95]. */
MAFNET_API mafnet_status mafnet_cube_synthetic(int bands, int height, int width, uint64_t seed,
                                               mafnet_cube** out);
/* Global min-max scaling into [0, 1]. */
MAFNET_API mafnet_status mafnet_cube_normalize(const mafnet_cube* cube, mafnet_cube** out);

/* ---- noise ---- */

/* `noise_case` is one of g<sigma> (e.g. g30), blind, 1, 2, 3, 4, 5. The
 * report text is optional (pass NULL to skip it). */
MAFNET_API mafnet_status mafnet_noise_apply(const mafnet_cube* clean, const char* noise_case,
                                            uint64_t seed, mafnet_cube** noisy,
                                            char** report_text);

/* ---- network ---- */

typedef struct mafnet_network_config {
  int bands;
  int base_channels;
  int coarse_blocks;
  int fine_layers;
  int reduction;
  uint64_t seed;
} mafnet_network_config;

/* variant: 'S', 'B' or 'L'. */
MAFNET_API mafnet_status mafnet_network_config_variant(char variant, int bands, uint64_t seed,
                                                       mafnet_network_config* out);
MAFNET_API mafnet_status mafnet_network_create(const mafnet_network_config* config,
                                               mafnet_network** out);
/* Accepts bare weight files and training checkpoints. */
MAFNET_API mafnet_status mafnet_network_load(const char* path, mafnet_network** out);
MAFNET_API mafnet_status mafnet_network_save(const mafnet_network* net, const char* path);
MAFNET_API mafnet_status mafnet_network_config_get(const mafnet_network* net,
                                                   mafnet_network_config* out);
MAFNET_API mafnet_status mafnet_network_param_count(const mafnet_network* net, size_t* out);
MAFNET_API void mafnet_network_free(mafnet_network* net);

/* Any band count >= 2 and any spatial size. */
MAFNET_API mafnet_status mafnet_denoise(mafnet_network* net, const mafnet_cube* noisy,
                                        mafnet_cube** out);

/* ---- metrics ---- */

typedef struct mafnet_metrics {
  double psnr;  /* +inf when every band matches exactly */
  double ssim;
  double sam;   /* radians */
  int infinite_bands;
} mafnet_metrics;

/* `table_text` (optional) receives the tab-separated per-band table. */
MAFNET_API mafnet_status mafnet_metrics_compute(const mafnet_cube* estimate,
                                                const mafnet_cube* reference, double data_range,
                                                mafnet_metrics* out, char** table_text);

/* ---- training ---- */

typedef void (*mafnet_log_fn)(const char* line, void* user);
typedef void (*mafnet_stage_fn)(int stage, const char* checkpoint_path, void* user);

typedef struct mafnet_train_options {
  /* Stage names in order; NULL/0 selects the full five-stage schedule. */
  const char* const* stages;
  size_t stage_count;
  int epochs_gaussian;
  int epochs_complex;
  int batch_size;
  int patch_height;
  int patch_width;
  int patch_count;
  double lr_init;
  double lr_decay;
  double lambda;
  double validation_fraction;
  uint64_t seed;
  /* Directory for per-stage checkpoints and train.log; NULL skips files. */
  const char* output_dir;
  /* Optional checkpoint to continue from. */
  const char* resume_path;
  /* Stop after this many optimizer steps (0 = run to completion). */
  uint64_t max_steps;
  mafnet_log_fn on_epoch;
  mafnet_stage_fn on_stage;
  void* user;
} mafnet_train_options;

/* Fills defaults: desk_scale != 0 gives (64x64) patches, batch 4, 5/10
 * epochs; otherwise (128x128), batch 16, 25/150 epochs. */
MAFNET_API void mafnet_train_options_default(int desk_scale, mafnet_train_options* out);

/* Samples patches from `cubes`, runs the schedule and returns the trained
 * network. Each patch is a random window of config->bands contiguous bands. */
MAFNET_API mafnet_status mafnet_train(const mafnet_network_config* config,
                                      const mafnet_cube* const* cubes, size_t cube_count,
                                      const mafnet_train_options* options, mafnet_network** out);

/* ---- plots (SVG) ---- */

/* Per-band PSNR and SSIM curves from a metrics table; writes
 * <stem>psnr_per_band.svg and <stem>ssim_per_band.svg into `dir`. */
MAFNET_API mafnet_status mafnet_plot_metrics(const char* table_text, const char* dir,
                                             const char* stem);
/* Overlays the total-loss curves of `count` training logs in
 * <dir>/loss_curves.svg. */
MAFNET_API mafnet_status mafnet_plot_loss_curves(const char* const* labels,
                                                 const char* const* log_texts, size_t count,
                                                 const char* dir);

#ifdef __cplusplus
}
#endif

#endif /* MAFNET_MAFNET_H */
