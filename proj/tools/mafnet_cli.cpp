// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

// mafnet: synthesize noise, train, denoise, evaluate and plot.
//
// Exit codes: 0 ok, 1 internal error, 2 bad flags or config, 3 I/O,
// 4 data/format/shape errors, 5 training divergence.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mafnet/mafnet.h"

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kIo = 3, kData = 4, kDivergence = 5 };

struct Failure {
  int code;
  std::string message;
};

int exit_for(mafnet_status s) {
  switch (s) {
    case MAFNET_OK: return kOk;
    case MAFNET_ERR_IO: return kIo;
    case MAFNET_ERR_FORMAT:
    case MAFNET_ERR_DATA:
    case MAFNET_ERR_SHAPE:
    case MAFNET_ERR_DEGENERATE_RANGE: return kData;
    case MAFNET_ERR_DIVERGENCE: return kDivergence;
    case MAFNET_ERR_PARAM:
    case MAFNET_ERR_CONFIG:
    case MAFNET_ERR_INVALID_ARGUMENT: return kUsage;
    default: return kInternal;
  }
}

void check(mafnet_status s, const std::string& what) {
  if (s != MAFNET_OK) {
    throw Failure{exit_for(s), what + ": " + mafnet_status_name(s) + ": " + mafnet_last_error()};
  }
}

struct CubeHandle {
  mafnet_cube* p = nullptr;
  CubeHandle() = default;
  CubeHandle(const CubeHandle&) = delete;
  CubeHandle(CubeHandle&& o) noexcept : p(o.p) { o.p = nullptr; }
  ~CubeHandle() { mafnet_cube_free(p); }
};

struct NetHandle {
  mafnet_network* p = nullptr;
  ~NetHandle() { mafnet_network_free(p); }
};

struct CString {
  char* p = nullptr;
  ~CString() { mafnet_string_free(p); }
};

CubeHandle load_cube(const std::string& path) {
  CubeHandle c;
  check(mafnet_cube_load(path.c_str(), &c.p), "loading " + path);
  return c;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kIo, "cannot open " + path.string()};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure{kIo, "cannot write " + path.string()};
  out << text;
  if (!out) throw Failure{kIo, "short write to " + path.string()};
}

std::string noise_report_path(const std::string& out) {
  fs::path p(out);
  if (p.extension() == ".hsd") p.replace_extension();
  return p.string() + ".noise.txt";
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string summary_line(const mafnet_metrics& m) {
  char buf[32];
  std::string psnr = "inf";
  if (std::isfinite(m.psnr)) {
    std::snprintf(buf, sizeof(buf), "%.2f", m.psnr);
    psnr = buf;
  }
  return "PSNR=" + psnr + " SSIM=" + fixed4(m.ssim) + " SAM=" + fixed4(m.sam);
}

// --- options ------------------------------------------------------------------

struct SynthArgs {
  std::string noise_case;
  std::string input, output;
};

struct TrainArgs {
  std::string variant = "S";
  std::vector<std::string> stages;
  bool desk_scale = false;
  int bands = 0;
  int epochs_gaussian = 0, epochs_complex = 0;
  int batch_size = 0, patch_size = 0, patch_count = 0;
  double lr = 0.0, lr_decay = 0.0;
  std::uint64_t max_steps = 0;
  std::string resume;
  std::string data_dir, out_dir;
};

struct DenoiseArgs {
  std::string checkpoint, input, output;
};

struct EvalArgs {
  std::string denoised, reference;
  std::string table;
};

struct PlotArgs {
  std::vector<std::string> metrics;
  std::vector<std::string> logs;
  std::vector<std::string> labels;
  std::string out_dir;
};

struct SynthDataArgs {
  int count = 4;
  int bands = 31;
  int height = 128;
  int width = 128;
  std::string out_dir;
};

// --- commands -----------------------------------------------------------------

int cmd_synth(const SynthArgs& a, std::uint64_t seed) {
  CubeHandle in = load_cube(a.input);
  CubeHandle out;
  CString report;
  check(mafnet_noise_apply(in.p, a.noise_case.c_str(), seed, &out.p, &report.p), "synth");
  check(mafnet_cube_save(out.p, a.output.c_str()), "writing " + a.output);
  write_text(noise_report_path(a.output), report.p);
  return kOk;
}

int cmd_synth_data(const SynthDataArgs& a, std::uint64_t seed) {
  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw Failure{kIo, "cannot create " + a.out_dir + ": " + ec.message()};
  for (int k = 0; k < a.count; ++k) {
    CubeHandle c;
    check(mafnet_cube_synthetic(a.bands, a.height, a.width, seed + static_cast<std::uint64_t>(k), &c.p),
          "synth-data");
    char name[32];
    std::snprintf(name, sizeof(name), "cube_%03d.hsd", k);
    const std::string path = (fs::path(a.out_dir) / name).string();
    check(mafnet_cube_save(c.p, path.c_str()), "writing " + path);
  }
  return kOk;
}

int cmd_train(const TrainArgs& a, std::uint64_t seed) {
  if (!fs::is_directory(a.data_dir)) throw Failure{kIo, "not a directory: " + a.data_dir};
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(a.data_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".hsd") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Failure{kData, "no .hsd cubes in " + a.data_dir};
  std::vector<CubeHandle> cubes;
  int min_bands = 1 << 30;
  for (const auto& f : files) {
    cubes.push_back(load_cube(f));
    int b = 0;
    mafnet_cube_dims(cubes.back().p, &b, nullptr, nullptr);
    min_bands = std::min(min_bands, b);
  }

  mafnet_train_options opts;
  mafnet_train_options_default(a.desk_scale ? 1 : 0, &opts);
  const int bands = a.bands ? a.bands : std::min(a.desk_scale ? 16 : 31, min_bands);
  if (a.epochs_gaussian) opts.epochs_gaussian = a.epochs_gaussian;
  if (a.epochs_complex) opts.epochs_complex = a.epochs_complex;
  if (a.batch_size) opts.batch_size = a.batch_size;
  if (a.patch_size) opts.patch_height = opts.patch_width = a.patch_size;
  if (a.patch_count) opts.patch_count = a.patch_count;
  if (a.lr > 0) opts.lr_init = a.lr;
  if (a.lr_decay > 0) opts.lr_decay = a.lr_decay;
  opts.seed = seed;
  opts.max_steps = a.max_steps;
  opts.output_dir = a.out_dir.c_str();
  opts.resume_path = a.resume.empty() ? nullptr : a.resume.c_str();
  std::vector<const char*> stage_names;
  for (const auto& s : a.stages) stage_names.push_back(s.c_str());
  opts.stages = stage_names.empty() ? nullptr : stage_names.data();
  opts.stage_count = stage_names.size();
  opts.on_epoch = [](const char* line, void*) { std::cerr << line << '\n'; };
  opts.on_stage = [](int stage, const char* path, void*) {
    std::cout << "stage " << stage + 1 << " checkpoint " << path << '\n';
  };

  if (a.variant.size() != 1) throw Failure{kUsage, "--variant must be S, B or L"};
  mafnet_network_config config;
  check(mafnet_network_config_variant(a.variant[0], bands, seed, &config), "network config");
  std::vector<const mafnet_cube*> ptrs;
  for (const auto& c : cubes) ptrs.push_back(c.p);
  NetHandle net;
  check(mafnet_train(&config, ptrs.data(), ptrs.size(), &opts, &net.p), "train");
  const std::string final_path = (fs::path(a.out_dir) / "final.mafw").string();
  check(mafnet_network_save(net.p, final_path.c_str()), "writing " + final_path);
  return kOk;
}

int cmd_denoise(const DenoiseArgs& a) {
  NetHandle net;
  check(mafnet_network_load(a.checkpoint.c_str(), &net.p), "loading " + a.checkpoint);
  CubeHandle in = load_cube(a.input);
  CubeHandle out;
  check(mafnet_denoise(net.p, in.p, &out.p), "denoise");
  check(mafnet_cube_save(out.p, a.output.c_str()), "writing " + a.output);
  return kOk;
}

int cmd_eval(const EvalArgs& a) {
  CubeHandle est = load_cube(a.denoised);
  CubeHandle ref = load_cube(a.reference);
  mafnet_metrics m;
  CString table;
  check(mafnet_metrics_compute(est.p, ref.p, 1.0, &m, &table.p), "eval");
  if (!a.table.empty()) write_text(a.table, table.p);
  std::cout << summary_line(m) << '\n';
  return kOk;
}

int cmd_plot(const PlotArgs& a) {
  if (a.metrics.empty() && a.logs.empty()) {
    throw Failure{kUsage, "plot needs at least one --metrics table or --log"};
  }
  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw Failure{kIo, "cannot create " + a.out_dir + ": " + ec.message()};
  for (std::size_t k = 0; k < a.metrics.size(); ++k) {
    const std::string text = read_text(a.metrics[k]);
    const std::string stem =
        a.metrics.size() > 1 ? fs::path(a.metrics[k]).stem().string() + "_" : std::string();
    check(mafnet_plot_metrics(text.c_str(), a.out_dir.c_str(), stem.c_str()), "plot " + a.metrics[k]);
  }
  if (!a.logs.empty()) {
    std::vector<std::string> texts, labels;
    for (std::size_t k = 0; k < a.logs.size(); ++k) {
      texts.push_back(read_text(a.logs[k]));
      labels.push_back(k < a.labels.size() ? a.labels[k] : fs::path(a.logs[k]).parent_path().filename().string());
      if (labels.back().empty()) labels.back() = fs::path(a.logs[k]).stem().string();
    }
    std::vector<const char*> tp, lp;
    for (const auto& t : texts) tp.push_back(t.c_str());
    for (const auto& l : labels) lp.push_back(l.c_str());
    check(mafnet_plot_loss_curves(lp.data(), tp.data(), tp.size(), a.out_dir.c_str()), "plot logs");
  }
  return kOk;
}

std::optional<int> threads_from_env() {
  const char* v = std::getenv("MAFNET_THREADS");
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 0) throw Failure{kUsage, std::string("MAFNET_THREADS must be a count >= 0, got '") + v + "'"};
  return static_cast<int>(n);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale adaptive-fusion hyperspectral denoiser"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value file of defaults (flags override it)");
  std::uint64_t seed = 0;
  bool print_config = false;
  app.add_option("--seed", seed, "master seed")->capture_default_str();
  app.add_flag("--print-config", print_config, "print the resolved configuration and exit");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "add a noise case to a clean cube");
  s->add_option("--case", synth.noise_case, "g30, g50, g70, g<sigma>, blind, 1..5")->required();
  s->add_option("input", synth.input, "clean .hsd cube")->required();
  s->add_option("output", synth.output, "noisy .hsd cube (report goes to <output>.noise.txt)")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train with the incremental stage schedule");
  t->add_option("--variant", train.variant, "S, B or L")->capture_default_str();
  t->add_option("--stages", train.stages, "comma-separated stage names")->delimiter(',');
  t->add_flag("--desk-scale", train.desk_scale, "small patches and epoch counts");
  t->add_option("--bands", train.bands, "network band count (default 16 desk-scale, 31 otherwise)");
  t->add_option("--epochs-gaussian", train.epochs_gaussian, "epochs per Gaussian stage");
  t->add_option("--epochs-complex", train.epochs_complex, "epochs of the complex stage");
  t->add_option("--batch-size", train.batch_size, "patches per batch");
  t->add_option("--patch-size", train.patch_size, "square patch side (multiple of 4)");
  t->add_option("--patch-count", train.patch_count, "patches sampled from the cubes");
  t->add_option("--lr", train.lr, "initial learning rate");
  t->add_option("--lr-decay", train.lr_decay, "per-epoch learning-rate factor");
  t->add_option("--max-steps", train.max_steps, "stop after this many optimizer steps");
  t->add_option("--resume", train.resume, "checkpoint to continue from");
  t->add_option("data", train.data_dir, "directory of clean .hsd cubes")->required();
  t->add_option("out", train.out_dir, "output directory")->required();

  DenoiseArgs den;
  auto* d = app.add_subcommand("denoise", "denoise a cube with a trained network");
  d->add_option("checkpoint", den.checkpoint, "weights or checkpoint file")->required();
  d->add_option("input", den.input, "noisy .hsd cube")->required();
  d->add_option("output", den.output, "denoised .hsd cube")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score a cube against a reference");
  e->add_option("denoised", ev.denoised, "estimate .hsd")->required();
  e->add_option("reference", ev.reference, "reference .hsd")->required();
  e->add_option("--table", ev.table, "write the per-band metrics table here");

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "emit SVG curves from metrics tables and training logs");
  p->add_option("--metrics", pl.metrics, "metrics table file");
  p->add_option("--log", pl.logs, "training log file");
  p->add_option("--label", pl.labels, "legend label per --log");
  p->add_option("out", pl.out_dir, "output directory")->required();

  SynthDataArgs sd;
  auto* g = app.add_subcommand("synth-data", "write smooth random test cubes");
  g->add_option("--count", sd.count, "number of cubes")->capture_default_str();
  g->add_option("--bands", sd.bands, "bands per cube")->capture_default_str();
  g->add_option("--height", sd.height, "rows")->capture_default_str();
  g->add_option("--width", sd.width, "columns")->capture_default_str();
  g->add_option("out", sd.out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::cerr << "error: " << err.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    const auto threads = threads_from_env();
    if (print_config) {
      const std::string prefix = app.get_subcommands().front()->get_name() + ".";
      std::istringstream all(app.config_to_str(true, false));
      std::string line;
      while (std::getline(all, line)) {
        const auto eq = line.find('=');
        const std::string key = line.substr(0, eq);
        if (key == "print-config") continue;
        if (key.find('.') == std::string::npos || key.rfind(prefix, 0) == 0) std::cout << line << '\n';
      }
      std::cout << "# MAFNET_THREADS=" << (threads ? *threads : 0) << '\n';
      return kOk;
    }
    if (s->parsed()) return cmd_synth(synth, seed);
    if (t->parsed()) return cmd_train(train, seed);
    if (d->parsed()) return cmd_denoise(den);
    if (e->parsed()) return cmd_eval(ev);
    if (p->parsed()) return cmd_plot(pl);
    if (g->parsed()) return cmd_synth_data(sd, seed);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kInternal;
  }
  return kInternal;
}
