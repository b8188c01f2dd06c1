// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "nerfbooth/pipeline.hpp"

using namespace nerfbooth;

namespace {

struct CliArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string precision;
  int workers = -1;

  std::string checkpoint;  // turntable
  int views = 8;
  std::string gt_dir;
  std::string dir_a, dir_b;   // eval
  std::string baseline;       // bench
  bool write_baseline = false;
};

RunConfig resolve_config(const CliArgs& args) {
  RunConfig cfg = args.config_path.empty() ? default_run_config() : load_run_config(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  if (!args.precision.empty()) {
    if (args.precision != "f32" && args.precision != "f64") throw ConfigError("--precision must be f32 or f64");
    cfg.precision = args.precision;
  }
  if (args.workers >= 0) cfg.workers = args.workers;
  return cfg;
}

template <typename Fn>
int with_precision(const RunConfig& cfg, Fn&& fn) {
  if (cfg.precision == "f32") return fn.template operator()<float>();
  return fn.template operator()<double>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nerfbooth: few-shot pose-conditioned personalization + radiance-field distillation"};
  app.require_subcommand(1);

  CliArgs args;
  auto add_common = [&args](CLI::App* cmd) {
    cmd->add_option("--config", args.config_path, "run configuration (JSON)");
    cmd->add_option("--seed", args.seed, "override the config seed")->each([&args](const std::string&) {
      args.seed_set = true;
    });
    cmd->add_option("--precision", args.precision, "f32 or f64");
    cmd->add_option("--workers", args.workers, "worker thread count (0 = physical cores)");
  };

  CLI::App* synth = app.add_subcommand("synth-data", "generate the sprite few-shot dataset");
  CLI::App* pretrain = app.add_subcommand("pretrain", "train the toy base denoiser on the class distribution");
  CLI::App* booth = app.add_subcommand("booth", "few-shot personalization with prior preservation");
  CLI::App* distill = app.add_subcommand("distill", "distill the radiance-field avatar from the tuned denoiser");
  CLI::App* turntable = app.add_subcommand("turntable", "render an azimuth sweep from a field checkpoint");
  CLI::App* bench = app.add_subcommand("bench", "throughput report with an optional baseline gate");
  CLI::App* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM between two image directories");
  for (CLI::App* c : {synth, pretrain, booth, distill, turntable, bench, eval_cmd}) add_common(c);

  turntable->add_option("--checkpoint", args.checkpoint, "field checkpoint (default: checkpoint_dir/field_final.ckpt)");
  turntable->add_option("--views", args.views, "number of azimuth-uniform views");
  turntable->add_option("--gt-dir", args.gt_dir, "ground-truth renders for PSNR/SSIM");
  bench->add_option("--baseline", args.baseline, "baseline JSON path (default: output_dir/bench_baseline.json)");
  bench->add_flag("--write-baseline", args.write_baseline, "record the current numbers as the baseline");
  eval_cmd->add_option("--dir-a", args.dir_a, "first image directory")->required();
  eval_cmd->add_option("--dir-b", args.dir_b, "second image directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = resolve_config(args);
    if (synth->parsed())
      return with_precision(cfg, [&]<typename T>() { return cmd_synth_data<T>(cfg); });
    if (pretrain->parsed())
      return with_precision(cfg, [&]<typename T>() { return cmd_pretrain<T>(cfg); });
    if (booth->parsed())
      return with_precision(cfg, [&]<typename T>() { return cmd_booth<T>(cfg); });
    if (distill->parsed())
      return with_precision(cfg, [&]<typename T>() { return cmd_distill<T>(cfg); });
    if (turntable->parsed())
      return with_precision(cfg, [&]<typename T>() { return cmd_turntable<T>(cfg, args.checkpoint, args.views, args.gt_dir); });
    if (bench->parsed()) {
      std::string baseline = args.baseline.empty() ? cfg.paths.output_dir + "/bench_baseline.json" : args.baseline;
      return with_precision(cfg, [&]<typename T>() { return cmd_bench<T>(cfg, baseline, args.write_baseline); });
    }
    if (eval_cmd->parsed())
      return with_precision(cfg, [&]<typename T>() { return cmd_eval<T>(cfg, args.dir_a, args.dir_b); });
    std::fputs("no subcommand\n", stderr);
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  }
}
