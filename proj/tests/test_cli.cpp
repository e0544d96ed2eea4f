// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mafnet/metrics.hpp"
#include "mafnet/network.hpp"
#include "mafnet/plot.hpp"
#include "mafnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace mafnet;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "mafnet_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

Run run(const std::string& args, const std::string& env = "") {
  const fs::path out = workdir() / "stdout.txt", err = workdir() / "stderr.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + quote(MAFNET_CLI_PATH) + " " + args + " >" +
                          quote(out.string()) + " 2>" + quote(err.string());
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string p(const fs::path& path) { return quote(path.string()); }

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

fs::path make_cube(const std::string& name, int bands, int h, int w, std::uint64_t seed) {
  const fs::path path = workdir() / name;
  save_cube(synthetic_cube(bands, h, w, seed), path);
  return path;
}

std::string summary_of(const MetricsTable& t) {
  char buf[96];
  if (std::isfinite(t.psnr_mean))
    std::snprintf(buf, sizeof(buf), "PSNR=%.2f SSIM=%.4f SAM=%.4f", t.psnr_mean, t.ssim_mean, t.sam_mean);
  else
    std::snprintf(buf, sizeof(buf), "PSNR=inf SSIM=%.4f SAM=%.4f", t.ssim_mean, t.sam_mean);
  return buf;
}

const std::string kSmallTrain =
    "--epochs-gaussian 1 --epochs-complex 2 --patch-size 20 --patch-count 4 --batch-size 2 --bands 4";

}  // namespace

TEST_CASE("usage errors exit 2") {
  const fs::path in = make_cube("usage.hsd", 4, 24, 24, 1);
  const Run missing_case = run("synth " + p(in) + " " + p(workdir() / "x.hsd"));
  CHECK(missing_case.code == 2);
  CHECK(missing_case.err.find("--case") != std::string::npos);
  CHECK(missing_case.out.empty());
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("synth --case 9 " + p(in) + " " + p(workdir() / "x.hsd")).code == 2);
  CHECK(run("plot " + p(workdir() / "plots_empty")).code == 2);
  CHECK(run("synth --case 1 " + p(in) + " " + p(workdir() / "x.hsd"), "MAFNET_THREADS=abc").code == 2);
  CHECK(run("train --variant Q " + kSmallTrain + " " + p(workdir()) + " " + p(workdir() / "bad_variant")).code != 0);
}

TEST_CASE("io and data errors") {
  CHECK(run("synth --case 1 " + p(workdir() / "nope.hsd") + " " + p(workdir() / "x.hsd")).code == 3);
  const fs::path garbage = workdir() / "garbage.hsd";
  std::ofstream(garbage) << "not a cube";
  CHECK(run("synth --case 1 " + p(garbage) + " " + p(workdir() / "x.hsd")).code == 4);
  const fs::path a = make_cube("shape_a.hsd", 4, 24, 24, 2);
  const fs::path b = make_cube("shape_b.hsd", 4, 24, 20, 3);
  const Run mismatch = run("eval " + p(a) + " " + p(b));
  CHECK(mismatch.code == 4);
  CHECK(mismatch.out.empty());
  const fs::path narrow = make_cube("narrow.hsd", 4, 24, 16, 4);
  CHECK(run("synth --case 2 " + p(narrow) + " " + p(workdir() / "x.hsd")).code == 4);
}

TEST_CASE("synth writes a cube and a report, reproducibly") {
  const fs::path in = make_cube("clean.hsd", 6, 32, 32, 5);
  const fs::path out1 = workdir() / "noisy1.hsd", out2 = workdir() / "noisy2.hsd";
  REQUIRE(run("--seed 7 synth --case 1 " + p(in) + " " + p(out1)).code == 0);
  REQUIRE(run("--seed 7 synth --case 1 " + p(in) + " " + p(out2)).code == 0);
  CHECK(fs::exists(workdir() / "noisy1.noise.txt"));
  CHECK(slurp(out1) == slurp(out2));
  CHECK(slurp(workdir() / "noisy1.noise.txt") == slurp(workdir() / "noisy2.noise.txt"));
  const fs::path out3 = workdir() / "noisy3.hsd";
  REQUIRE(run("--seed 8 synth --case 1 " + p(in) + " " + p(out3)).code == 0);
  CHECK(slurp(out1) != slurp(out3));

  for (const char* c : {"g30", "g50", "g70", "g12", "blind", "2", "3", "4", "5"}) {
    const fs::path o = workdir() / (std::string("case_") + c + ".hsd");
    CHECK(run("--seed 3 synth --case " + std::string(c) + " " + p(in) + " " + p(o)).code == 0);
    CHECK(load_cube(o).voxels().has_shape(6, 32, 32));
  }
}

TEST_CASE("synth-data is reproducible") {
  REQUIRE(run("--seed 4 synth-data --count 2 --bands 5 --height 16 --width 12 " + p(workdir() / "sd1")).code == 0);
  REQUIRE(run("--seed 4 synth-data --count 2 --bands 5 --height 16 --width 12 " + p(workdir() / "sd2")).code == 0);
  for (const char* f : {"cube_000.hsd", "cube_001.hsd"}) {
    CHECK(slurp(workdir() / "sd1" / f) == slurp(workdir() / "sd2" / f));
    CHECK(load_cube(workdir() / "sd1" / f).voxels().has_shape(5, 16, 12));
  }
  CHECK(slurp(workdir() / "sd1/cube_000.hsd") != slurp(workdir() / "sd1/cube_001.hsd"));
}

TEST_CASE("print-config echoes what a config file reproduces") {
  const fs::path in = make_cube("cfg.hsd", 4, 24, 24, 6);
  const std::string args = "synth --case 3 " + p(in) + " " + p(workdir() / "cfg_out.hsd");
  const Run first = run("--seed 11 --print-config " + args);
  REQUIRE(first.code == 0);
  CHECK(first.out.find("seed=11") != std::string::npos);
  CHECK(first.out.find("case") != std::string::npos);
  CHECK(!fs::exists(workdir() / "cfg_out.hsd"));

  const fs::path cfg = workdir() / "run.ini";
  std::ofstream(cfg) << first.out;
  const Run second = run("--config " + p(cfg) + " --print-config " + args);
  REQUIRE(second.code == 0);
  CHECK(second.out == first.out);

  // file supplies the seed, flags override it
  std::ofstream(cfg) << "seed=21\n";
  CHECK(run("--config " + p(cfg) + " --print-config " + args).out.find("seed=21") != std::string::npos);
  CHECK(run("--config " + p(cfg) + " --seed 5 --print-config " + args).out.find("seed=5") != std::string::npos);
}

TEST_CASE("denoise") {
  NetworkConfig cfg = NetworkConfig::variant('S', 6, 1);
  cfg.base_channels = 4;
  cfg.coarse_blocks = 1;
  cfg.fine_layers = 1;
  Network net(cfg);
  for (auto& [path, param] : net.params()) std::fill(param->value.begin(), param->value.end(), 0.0f);
  const fs::path zero = workdir() / "zero.mafw";
  save_network(net, zero);

  SUBCASE("zero weights pass the input through") {
    const fs::path in = make_cube("den_in.hsd", 6, 18, 22, 7);
    const fs::path out = workdir() / "den_out.hsd";
    REQUIRE(run("denoise " + p(zero) + " " + p(in) + " " + p(out)).code == 0);
    CHECK(slurp(out) == slurp(in));
  }
  SUBCASE("more bands than the network") {
    NetworkConfig wide = cfg;
    wide.bands = 31;
    Network wnet(wide);
    const fs::path weights = workdir() / "b31.mafw";
    save_network(wnet, weights);
    const fs::path in = make_cube("den103.hsd", 103, 12, 12, 8);
    const fs::path out = workdir() / "den103_out.hsd";
    REQUIRE(run("denoise " + p(weights) + " " + p(in) + " " + p(out)).code == 0);
    const HSICube got = load_cube(out);
    CHECK(got.voxels().has_shape(103, 12, 12));
    CHECK(got.all_finite());
  }
  SUBCASE("single band and bad checkpoints") {
    const fs::path one = make_cube("one.hsd", 1, 8, 8, 9);
    CHECK(run("denoise " + p(zero) + " " + p(one) + " " + p(workdir() / "o.hsd")).code == 4);
    CHECK(run("denoise " + p(workdir() / "nope.mafw") + " " + p(one) + " " + p(workdir() / "o.hsd")).code == 3);
    const fs::path garbage = workdir() / "garbage.mafw";
    std::ofstream(garbage) << "MAFW-ish";
    CHECK(run("denoise " + p(garbage) + " " + p(one) + " " + p(workdir() / "o.hsd")).code == 4);
  }
}

TEST_CASE("eval") {
  const fs::path ref = make_cube("ev_ref.hsd", 5, 24, 24, 10);
  const Run same = run("eval --table " + p(workdir() / "same.tsv") + " " + p(ref) + " " + p(ref));
  REQUIRE(same.code == 0);
  CHECK(same.out == "PSNR=inf SSIM=1.0000 SAM=0.0000\n");
  CHECK(count_lines(slurp(workdir() / "same.tsv")) == 1 + 5 + 1);

  const fs::path noisy = workdir() / "ev_noisy.hsd";
  REQUIRE(run("--seed 2 synth --case g30 " + p(ref) + " " + p(noisy)).code == 0);
  const fs::path table = workdir() / "noisy.tsv";
  const Run r = run("eval --table " + p(table) + " " + p(noisy) + " " + p(ref));
  REQUIRE(r.code == 0);
  const MetricsTable lib = compute_metrics(load_cube(noisy), load_cube(ref));
  CHECK(r.out == summary_of(lib) + "\n");
  CHECK(MetricsTable::parse(slurp(table)) == lib);
}

TEST_CASE("plot") {
  const fs::path ref = make_cube("pl_ref.hsd", 5, 24, 24, 12);
  const fs::path noisy = workdir() / "pl_noisy.hsd";
  REQUIRE(run("--seed 2 synth --case g50 " + p(ref) + " " + p(noisy)).code == 0);
  const fs::path table = workdir() / "pl.tsv";
  REQUIRE(run("eval --table " + p(table) + " " + p(noisy) + " " + p(ref)).code == 0);
  const fs::path dir = workdir() / "plots";
  REQUIRE(run("plot --metrics " + p(table) + " " + p(dir)).code == 0);
  const MetricsTable t = MetricsTable::parse(slurp(table));
  const auto pa = parse_svg_axes(slurp(dir / "psnr_per_band.svg"));
  const auto sa = parse_svg_axes(slurp(dir / "ssim_per_band.svg"));
  for (int b = 0; b < 5; ++b) {
    CHECK(pa.ymin <= t.per_band_psnr[b]);
    CHECK(pa.ymax >= t.per_band_psnr[b]);
    CHECK(sa.ymin <= t.per_band_ssim[b]);
    CHECK(sa.ymax >= t.per_band_ssim[b]);
  }

  const fs::path log_a = workdir() / "a.log", log_b = workdir() / "b.log";
  std::ofstream(log_a) << EpochLog{"fixed_sigma_30", 1, 1e-4, 0.2, 1.0, 0.21}.to_line() << '\n'
                       << EpochLog{"complex", 1, 1e-4, 0.1, 0.5, 0.105}.to_line() << '\n';
  std::ofstream(log_b) << EpochLog{"complex", 1, 1e-4, 0.3, 2.0, 0.32}.to_line() << '\n';
  REQUIRE(run("plot --log " + p(log_a) + " --label incremental --log " + p(log_b) + " --label complex " +
              p(dir)).code == 0);
  const auto la = parse_svg_axes(slurp(dir / "loss_curves.svg"));
  CHECK(la.series == 2);
  CHECK(la.ymin <= 0.105);
  CHECK(la.ymax >= 0.32);
  CHECK(run("plot --metrics " + p(workdir() / "missing.tsv") + " " + p(dir)).code == 3);
}

TEST_CASE("train") {
  const fs::path data = workdir() / "train_data";
  REQUIRE(run("--seed 1 synth-data --count 2 --bands 4 --height 32 --width 32 " + p(data)).code == 0);

  SUBCASE("incremental schedule") {
    const fs::path out1 = workdir() / "run1", out2 = workdir() / "run2";
    const Run r = run("--seed 3 train --variant S --desk-scale " + kSmallTrain + " " + p(data) + " " + p(out1));
    REQUIRE(r.code == 0);
    int checkpoints = 0;
    for (const auto& e : fs::directory_iterator(out1)) checkpoints += e.path().extension() == ".ckpt";
    CHECK(checkpoints == 5);
    CHECK(count_lines(slurp(out1 / "train.log")) == 4 * 1 + 2);
    CHECK(count_lines(r.out) == 5);
    CHECK(fs::exists(out1 / "final.mafw"));

    REQUIRE(run("--seed 3 train --variant S --desk-scale " + kSmallTrain + " " + p(data) + " " + p(out2)).code == 0);
    CHECK(slurp(out1 / "final.mafw") == slurp(out2 / "final.mafw"));
    CHECK(slurp(out1 / "train.log") == slurp(out2 / "train.log"));

    const fs::path noisy = workdir() / "tr_noisy.hsd", den = workdir() / "tr_den.hsd";
    REQUIRE(run("--seed 9 synth --case 1 " + p(data / "cube_000.hsd") + " " + p(noisy)).code == 0);
    CHECK(run("denoise " + p(out1 / "stage5_complex.ckpt") + " " + p(noisy) + " " + p(den)).code == 0);
  }
  SUBCASE("single stage") {
    const fs::path out = workdir() / "run_complex";
    REQUIRE(run("--seed 3 train --stages complex --desk-scale " + kSmallTrain + " " + p(data) + " " + p(out)).code ==
            0);
    int checkpoints = 0;
    for (const auto& e : fs::directory_iterator(out)) checkpoints += e.path().extension() == ".ckpt";
    CHECK(checkpoints == 1);
    CHECK(count_lines(slurp(out / "train.log")) == 2);
  }
  SUBCASE("divergence exits 5 with diagnostics") {
    const Run r = run("--seed 3 train --desk-scale " + kSmallTrain + " --lr 1e30 " + p(data) + " " +
                      p(workdir() / "run_div"));
    CHECK(r.code == 5);
    CHECK(r.err.find("stage") != std::string::npos);
    CHECK(r.err.find("batch") != std::string::npos);
  }
  SUBCASE("bad inputs") {
    CHECK(run("train " + p(workdir() / "no_such_dir") + " " + p(workdir() / "r")).code == 3);
    const fs::path empty = workdir() / "empty_data";
    fs::create_directories(empty);
    CHECK(run("train " + p(empty) + " " + p(workdir() / "r")).code == 4);
    CHECK(run("train --stages bogus " + kSmallTrain + " " + p(data) + " " + p(workdir() / "r")).code == 2);
  }
}
