// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "nerfbooth/config.hpp"
#include "nerfbooth/image_io.hpp"
#include "nerfbooth/metrics.hpp"
#include "nerfbooth/parallel.hpp"

namespace nerfbooth {

// Command implementations behind the CLI, templated on the compute scalar
// (f32/f64 per the precision flag). Each returns the process exit code.

namespace detail {

inline int effective_workers(const RunConfig& cfg) { return cfg.workers > 0 ? cfg.workers : default_workers(); }

inline std::string base_ckpt_path(const RunConfig& cfg) { return cfg.paths.checkpoint_dir + "/base_denoiser.ckpt"; }
inline std::string tuned_ckpt_path(const RunConfig& cfg) {
  return cfg.paths.checkpoint_dir + "/personalized_denoiser.ckpt";
}
inline std::string field_ckpt_path(const RunConfig& cfg) { return cfg.paths.checkpoint_dir + "/field_final.ckpt"; }

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

template <typename T>
int cmd_synth_data(const RunConfig& cfg) {
  write_fewshot_dataset(cfg.paths.dataset_dir, cfg.synth.examples, cfg.synth.image_size, cfg.seed);
  std::printf("synth-data: wrote %d examples (%dx%d) under %s\n", cfg.synth.examples, cfg.synth.image_size,
              cfg.synth.image_size, cfg.paths.dataset_dir.c_str());
  return 0;
}

template <typename T>
int cmd_pretrain(const RunConfig& cfg) {
  detail::ensure_dir(cfg.paths.checkpoint_dir);
  detail::ensure_dir(cfg.paths.output_dir);
  Vocabulary vocab(dataset_vocabulary());
  ToyDenoiserConfig dcfg = cfg.diffusion;
  dcfg.vocab_size = vocab.size();
  dcfg.image_size = cfg.synth.image_size;
  NoiseSchedule sched(dcfg.t_max);
  ToyConditionalDenoiser<T> den(dcfg);
  den.init_params(cfg.seed);
  PretrainConfig pcfg = cfg.pretrain;
  pcfg.seed = cfg.seed;
  auto t0 = std::chrono::steady_clock::now();
  std::vector<double> history = pretrain_base(den, vocab, pcfg, sched);
  den.save_checkpoint(detail::base_ckpt_path(cfg));
  std::ofstream hist(cfg.paths.output_dir + "/pretrain_history.json");
  hist << "[";
  for (std::size_t i = 0; i < history.size(); ++i) hist << (i ? "," : "") << history[i];
  hist << "]\n";
  std::printf("pretrain: %zu steps in %.1fs, final loss %.5f -> %s\n", history.size(), detail::seconds_since(t0),
              history.empty() ? 0.0 : history.back(), detail::base_ckpt_path(cfg).c_str());
  return 0;
}

template <typename T>
int cmd_booth(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  if (!fs::exists(detail::base_ckpt_path(cfg)))
    throw IoError("booth: missing base denoiser checkpoint " + detail::base_ckpt_path(cfg) + " (run pretrain first)");
  detail::ensure_dir(cfg.paths.output_dir);
  Vocabulary vocab = Vocabulary::load(cfg.paths.dataset_dir + "/vocab.txt");
  ToyConditionalDenoiser<T> base = ToyConditionalDenoiser<T>::load_checkpoint(detail::base_ckpt_path(cfg));
  NoiseSchedule sched(base.config().t_max);

  auto fewshot = load_fewshot_dataset<T>(cfg.paths.dataset_dir, vocab);
  if (fewshot.front().image.h != base.config().image_size)
    throw ConfigError("booth: dataset resolution does not match the denoiser");

  std::vector<Pose2d> pool;
  for (const auto& ex : fewshot) pool.push_back(ex.pose);
  std::uint64_t base_hash = hash_params(base.params());

  auto t0 = std::chrono::steady_clock::now();
  auto prior = generate_prior_set<T>(base, vocab.encode("a photo of figure"), pool, cfg.booth.prior_count,
                                     cfg.booth.sampler_steps, sched, base.config().image_size, Rng(cfg.seed, 0x80));

  ToyConditionalDenoiser<T> tuned = base;
  BoothConfig bcfg = cfg.booth;
  bcfg.seed = cfg.seed;
  auto history = finetune(tuned, fewshot, prior, bcfg, sched, vocab);
  if (hash_params(base.params()) != base_hash) throw ContractError("booth: frozen base mutated during fine-tuning");

  tuned.save_checkpoint(detail::tuned_ckpt_path(cfg));
  {
    std::ofstream hist(cfg.paths.output_dir + "/booth_history.json");
    hist << "[";
    for (std::size_t i = 0; i < history.size(); ++i)
      hist << (i ? ",\n" : "\n") << "  {\"step\":" << history[i].step << ",\"rec\":" << history[i].rec
           << ",\"cppl\":" << history[i].cppl << "}";
    hist << "\n]\n";
  }
  {
    std::ofstream man(cfg.paths.output_dir + "/prior_manifest.json");
    man << "[";
    for (std::size_t i = 0; i < prior.size(); ++i)
      man << (i ? ",\n" : "\n") << "  {\"index\":" << i << ",\"pose_index\":" << prior[i].pose_index
          << ",\"seed_key\":" << prior[i].seed_key << "}";
    man << "\n]\n";
  }
  std::printf("booth: %d prior samples, %zu steps in %.1fs -> %s\n", int(prior.size()), history.size(),
              detail::seconds_since(t0), detail::tuned_ckpt_path(cfg).c_str());
  return 0;
}

template <typename T>
int cmd_distill(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  if (!fs::exists(detail::tuned_ckpt_path(cfg)))
    throw IoError("distill: missing personalized checkpoint " + detail::tuned_ckpt_path(cfg) + " (run booth first)");
  detail::ensure_dir(cfg.paths.output_dir);
  detail::ensure_dir(cfg.paths.checkpoint_dir);

  Vocabulary vocab = Vocabulary::load(cfg.paths.dataset_dir + "/vocab.txt");
  ToyConditionalDenoiser<T> tuned = ToyConditionalDenoiser<T>::load_checkpoint(detail::tuned_ckpt_path(cfg));
  NoiseSchedule sched(tuned.config().t_max);
  std::uint64_t tuned_hash = hash_params(tuned.params());

  RadianceField<T> field(cfg.field);
  field.init_params(cfg.seed);

  ArticulatedSkeleton skeleton = canonical_skeleton();
  std::vector<PartMesh> parts{make_hand_mesh(skeleton, true), make_hand_mesh(skeleton, false),
                              make_face_mesh(skeleton)};

  DistillConfig dcfg = cfg.distill;
  dcfg.seed = cfg.seed;
  dcfg.workers = detail::effective_workers(cfg);
  dcfg.n_samples_per_ray = cfg.render.samples_per_ray;
  dcfg.random_background = cfg.render.random_background;
  dcfg.background = cfg.render.background;
  dcfg.checkpoint_dir = cfg.paths.checkpoint_dir;
  dcfg.metrics_path = cfg.paths.output_dir + "/metrics.ndjson";

  DenoiserScore<T> score(tuned, cfg.distill.guidance_weight);
  Distiller<T> distiller(field, score, skeleton, parts, ResolutionSchedule(cfg.schedule_stages), cfg.camera, cfg.geo,
                         dcfg, sched, vocab);
  auto t0 = std::chrono::steady_clock::now();
  auto log = distiller.run();
  if (hash_params(tuned.params()) != tuned_hash) throw ContractError("distill: score network parameters changed");

  field.save_checkpoint(detail::field_ckpt_path(cfg));
  std::printf("distill: %zu steps in %.1fs -> %s (metrics: %s)\n", log.size(), detail::seconds_since(t0),
              detail::field_ckpt_path(cfg).c_str(), dcfg.metrics_path.c_str());
  return 0;
}

template <typename T>
int cmd_turntable(const RunConfig& cfg, const std::string& checkpoint, int n_views, const std::string& gt_dir) {
  if (n_views < 1) throw ConfigError("turntable: need at least one view");
  std::string ckpt = checkpoint.empty() ? detail::field_ckpt_path(cfg) : checkpoint;
  RadianceField<T> field = RadianceField<T>::load_checkpoint(ckpt);
  std::string out_dir = cfg.paths.output_dir + "/turntable";
  detail::ensure_dir(out_dir);

  const int res = cfg.render.turntable_resolution;
  Vec3<T> bg = cfg.render.background.cast<T>();
  MetricReport report;
  bool have_gt = !gt_dir.empty();
  for (int k = 0; k < n_views; ++k) {
    double azimuth = 2.0 * kPi * double(k) / double(n_views);
    CameraPose cam = orbit_camera(field.bbox(), azimuth, deg_to_rad(cfg.render.turntable_elev_deg),
                                  cfg.render.turntable_radius, deg_to_rad(cfg.render.turntable_fov_deg));
    auto out = render_image(field, cam, res, res, bg, cfg.render.samples_per_ray, Rng(cfg.seed, 0xA0).child(k),
                            detail::effective_workers(cfg));
    char name[32];
    std::snprintf(name, sizeof(name), "view%03d", k);
    write_png(out_dir + "/" + name + ".png", out.color);
    write_raw_image(out_dir + "/" + name + ".raw", out.color);
    if (have_gt) {
      Image<T> gt = read_png<T>(gt_dir + "/" + name + ".png");
      if (gt.h != res || gt.w != res || gt.c != 3)
        throw ConfigError("turntable: ground-truth resolution mismatch for view " + std::to_string(k));
      // compare on the same 8-bit quantization the PNGs carry
      Image<T> quantized = read_png<T>(out_dir + "/" + name + ".png");
      report.add(psnr(quantized, gt), ssim(quantized, gt));
    }
  }
  if (have_gt) {
    std::ofstream rep(cfg.paths.output_dir + "/turntable_report.json");
    rep << report.to_json() << "\n";
    std::fputs(report.to_table().c_str(), stdout);
  }
  std::printf("turntable: %d views at %d^2 -> %s\n", n_views, res, out_dir.c_str());
  return 0;
}

template <typename T>
int cmd_eval(const RunConfig& cfg, const std::string& dir_a, const std::string& dir_b) {
  namespace fs = std::filesystem;
  auto list_pngs = [](const std::string& dir) {
    std::vector<std::string> out;
    if (!fs::exists(dir)) throw IoError("eval: missing directory " + dir);
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".png") out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
  };
  auto names_a = list_pngs(dir_a);
  auto names_b = list_pngs(dir_b);
  if (names_a.empty() || names_a != names_b) throw ConfigError("eval: directories must contain the same image names");
  MetricReport report;
  for (const auto& name : names_a) {
    Image<T> a = read_png<T>(dir_a + "/" + name);
    Image<T> b = read_png<T>(dir_b + "/" + name);
    report.add(psnr(a, b), ssim(a, b));
  }
  detail::ensure_dir(cfg.paths.output_dir);
  std::ofstream rep(cfg.paths.output_dir + "/eval_report.json");
  rep << report.to_json() << "\n";
  std::fputs(report.to_table().c_str(), stdout);
  return 0;
}

template <typename T>
int cmd_bench(const RunConfig& cfg, const std::string& baseline_path, bool write_baseline) {
  namespace fs = std::filesystem;
  detail::ensure_dir(cfg.paths.output_dir);
  int workers = detail::effective_workers(cfg);

  // hash-encode throughput
  RadianceField<T> field(cfg.field);
  field.init_params(cfg.seed);
  auto scratch = field.make_scratch();
  std::vector<T> enc(std::size_t(field.grid().output_dim()));
  Rng r(cfg.seed, 0xB0);
  const int n_enc = 400000;
  auto t0 = std::chrono::steady_clock::now();
  double sink = 0;
  for (int i = 0; i < n_enc; ++i) {
    Vec3<T> p{T(r.uniform()), T(r.uniform()), T(r.uniform())};
    field.grid().encode(p, field.params().data(), enc.data());
    sink += double(enc[0]);
  }
  double hash_qps = n_enc / detail::seconds_since(t0);

  // renderer throughput (warm up once, then time several frames)
  CameraPose cam = orbit_camera(field.bbox(), 0.3, 0.1, cfg.render.turntable_radius,
                                deg_to_rad(cfg.render.turntable_fov_deg));
  auto warm = render_image(field, cam, 64, 64, Vec3<T>{}, 64, Rng(cfg.seed), workers);
  sink += double(warm.color.data[0]);
  const int n_frames = 6;
  t0 = std::chrono::steady_clock::now();
  for (int f = 0; f < n_frames; ++f) {
    auto out = render_image(field, cam, 64, 64, Vec3<T>{}, 64, Rng(cfg.seed).child(f), workers);
    sink += double(out.color.data[0]);
  }
  double rays_per_sec = n_frames * 64.0 * 64.0 / detail::seconds_since(t0);

  // denoiser training-step throughput
  Vocabulary vocab(dataset_vocabulary());
  ToyDenoiserConfig dcfg = cfg.diffusion;
  dcfg.vocab_size = vocab.size();
  dcfg.image_size = cfg.synth.image_size;
  ToyConditionalDenoiser<T> den(dcfg);
  den.init_params(cfg.seed);
  NoiseSchedule sched(dcfg.t_max);
  ClassSample sample = make_class_sample(Rng(cfg.seed, 0xB1), dcfg.image_size);
  Image<T> img = sample.image.template cast<T>();
  Image<T> pose = rasterize_pose2d(sample.pose, dcfg.image_size, dcfg.image_size).template cast<T>();
  std::vector<int> tokens = vocab.encode("a photo of figure");
  std::vector<TrainTuple<T>> batch{{&img, &pose, &tokens}};
  std::vector<T> grad(den.param_count());
  for (int i = 0; i < 5; ++i) {
    std::fill(grad.begin(), grad.end(), T(0));
    sink += double(denoise_loss<T>(den, batch, sched, Rng(i), &grad));
  }
  const int n_steps = 30;
  t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < n_steps; ++i) {
    std::fill(grad.begin(), grad.end(), T(0));
    sink += double(denoise_loss<T>(den, batch, sched, Rng(i), &grad));
  }
  double den_steps_per_sec = n_steps / detail::seconds_since(t0);

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\"hash_encode_qps\":%.1f,\"rays_per_sec\":%.1f,\"denoiser_steps_per_sec\":%.3f}", hash_qps,
                rays_per_sec, den_steps_per_sec);
  std::printf("bench: %s (sink %.3g)\n", buf, sink);
  {
    std::ofstream repf(cfg.paths.output_dir + "/bench_report.json");
    repf << buf << "\n";
  }
  if (write_baseline) {
    std::ofstream basef(baseline_path);
    if (!basef) throw IoError("bench: cannot write baseline " + baseline_path);
    basef << buf << "\n";
    std::printf("bench: wrote baseline %s\n", baseline_path.c_str());
    return 0;
  }
  if (!fs::exists(baseline_path)) {
    std::printf("bench: no baseline at %s, report-only mode\n", baseline_path.c_str());
    return 0;
  }
  std::ifstream basef(baseline_path);
  std::string text((std::istreambuf_iterator<char>(basef)), std::istreambuf_iterator<char>());
  auto get_key = [&text](const char* key) {
    auto pos = text.find(key);
    if (pos == std::string::npos) throw IoError("bench: baseline missing key " + std::string(key));
    return std::stod(text.substr(text.find(':', pos) + 1));
  };
  struct {
    const char* key;
    double value;
  } metrics[3] = {{"hash_encode_qps", hash_qps}, {"rays_per_sec", rays_per_sec},
                  {"denoiser_steps_per_sec", den_steps_per_sec}};
  bool fail = false;
  for (const auto& m : metrics) {
    double base = get_key(m.key);
    double ratio = m.value / base;
    std::printf("bench: %-24s %12.2f vs baseline %12.2f (x%.2f)\n", m.key, m.value, base, ratio);
    if (ratio < 0.8) {
      std::printf("bench: REGRESSION on %s (more than 20%% below baseline)\n", m.key);
      fail = true;
    }
  }
  return fail ? 1 : 0;
}

}  // namespace nerfbooth
