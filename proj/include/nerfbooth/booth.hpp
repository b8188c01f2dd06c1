// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "nerfbooth/adam.hpp"
#include "nerfbooth/denoiser_net.hpp"
#include "nerfbooth/diffusion.hpp"
#include "nerfbooth/geometry.hpp"
#include "nerfbooth/image_io.hpp"
#include "nerfbooth/synth.hpp"

namespace nerfbooth {

// Few-shot personalization: fine-tune a pose-conditioned denoiser on a handful
// of masked subject images, regularized by denoising the frozen base model's
// own samples under class prompts (prior preservation on both the text and
// pose conditions).

template <typename T>
struct FewShotExample {
  Image<T> image;       // 3 x S x S in [0,1], background masked to black
  Image<T> mask;        // 1 x S x S
  Pose2d pose;          // named normalized joints
  Image<T> pose_image;  // raster of `pose` at S x S
  std::vector<int> tokens;
};

template <typename T>
struct PriorExample {
  Image<T> image;  // [0,1], generated by the frozen base model
  Image<T> pose_image;
  std::vector<int> tokens;
  int pose_index = -1;        // which pool pose conditioned the sample
  std::uint64_t seed_key = 0; // rng child key used for the chain
};

struct BoothConfig {
  double lambda_cppl = 1.0;
  int prior_count = 100;
  int steps = 1500;
  double lr = 1e-3;
  double lr_text = 1e-3;
  int batch_fewshot = 2;
  int batch_prior = 2;
  int sampler_steps = 30;
  std::uint64_t seed = 0;
  std::string subject_token = "sks";

  void validate() const {
    if (lambda_cppl < 0) throw ConfigError("booth: lambda_cppl must be >= 0");
    if (prior_count < 0) throw ConfigError("booth: prior_count must be >= 0");
    if (steps < 0 || batch_fewshot < 1) throw ConfigError("booth: bad steps/batch");
  }
};

// Uniform view over few-shot and prior examples: the two losses share one
// functional form and differ only in the data they see.
template <typename T>
struct TrainTuple {
  const Image<T>* image01;
  const Image<T>* pose_image;
  const std::vector<int>* tokens;
};

template <typename T>
std::vector<TrainTuple<T>> as_tuples(const std::vector<FewShotExample<T>>& v) {
  std::vector<TrainTuple<T>> out;
  for (const auto& e : v) out.push_back({&e.image, &e.pose_image, &e.tokens});
  return out;
}

template <typename T>
std::vector<TrainTuple<T>> as_tuples(const std::vector<PriorExample<T>>& v) {
  std::vector<TrainTuple<T>> out;
  for (const auto& e : v) out.push_back({&e.image, &e.pose_image, &e.tokens});
  return out;
}

// Loads the documented dataset layout (images/, masks/, poses/, captions/),
// pairing files by stem. Masks must already be applied to the images.
template <typename T>
std::vector<FewShotExample<T>> load_fewshot_dataset(const std::string& dir, const Vocabulary& vocab) {
  namespace fs = std::filesystem;
  fs::path root(dir);
  if (!fs::exists(root / "images")) throw IoError("dataset: missing images/ under " + dir);
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(root / "images"))
    if (entry.path().extension() == ".png") stems.push_back(entry.path().stem().string());
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) throw IoError("dataset: no images in " + dir);

  std::vector<FewShotExample<T>> out;
  for (const auto& stem : stems) {
    FewShotExample<T> ex;
    ex.image = read_png<T>((root / "images" / (stem + ".png")).string());
    ex.mask = read_png<T>((root / "masks" / (stem + ".png")).string());
    if (ex.mask.c != 1 || ex.mask.h != ex.image.h || ex.mask.w != ex.image.w)
      throw IoError("dataset: mask shape mismatch for " + stem);
    // masked invariant: background pixels are the declared constant (black)
    for (int y = 0; y < ex.image.h; ++y)
      for (int x = 0; x < ex.image.w; ++x)
        if (ex.mask.at(0, y, x) < 0.5)
          for (int c = 0; c < 3; ++c)
            if (std::abs(double(ex.image.at(c, y, x))) > 2.5 / 255.0)
              throw IoError("dataset: unmasked background pixel in " + stem);
    ex.pose = load_pose2d_json((root / "poses" / (stem + ".json")).string());
    ex.pose_image = rasterize_pose2d(ex.pose, ex.image.h, ex.image.w).template cast<T>();
    std::ifstream cap((root / "captions" / (stem + ".txt")).string());
    if (!cap) throw IoError("dataset: missing caption for " + stem);
    std::string line((std::istreambuf_iterator<char>(cap)), std::istreambuf_iterator<char>());
    ex.tokens = vocab.encode(line);
    if (ex.tokens.empty()) throw IoError("dataset: empty caption for " + stem);
    out.push_back(std::move(ex));
  }
  return out;
}

// Samples N_pr prior tuples from the frozen base model with class prompts and
// pool poses. The (tokens, pose, seed) triple per example is recorded.
template <typename T>
std::vector<PriorExample<T>> generate_prior_set(const Denoiser<T>& frozen_base, const std::vector<int>& class_tokens,
                                                const std::vector<Pose2d>& pose_pool, int n_prior, int sampler_steps,
                                                const NoiseSchedule& sched, int image_size, Rng rng) {
  if (n_prior > 0 && pose_pool.empty()) throw ContractError("prior set: empty pose pool");
  std::vector<PriorExample<T>> out;
  for (int i = 0; i < n_prior; ++i) {
    Rng r = rng.child(std::uint64_t(i));
    PriorExample<T> ex;
    ex.seed_key = std::uint64_t(i);
    ex.pose_index = int(r.uniform_index(pose_pool.size()));
    ex.tokens = class_tokens;
    ex.pose_image = rasterize_pose2d(pose_pool[std::size_t(ex.pose_index)], image_size, image_size).template cast<T>();
    ConditioningBundle<T> cond;
    cond.tokens = ex.tokens;
    cond.pose_image = ex.pose_image;
    Image<T> xpm1 = ancestral_sample(frozen_base, cond, sampler_steps, sched, image_size, image_size, 3, r.child(1));
    for (T& v : xpm1.data) v = std::clamp(v, T(-1), T(1));
    ex.image = from_diffusion_domain(xpm1);
    out.push_back(std::move(ex));
  }
  return out;
}

// Mean squared denoising error in epsilon parameterization over one batch:
// per tuple, draw (t, eps), noise the image, and score |eps_hat - eps|^2.
// When grad is non-null the parameter gradient accumulates there.
template <typename T, typename DenT>
T denoise_loss(const DenT& den, std::span<const TrainTuple<T>> batch, const NoiseSchedule& sched, Rng rng,
               std::vector<T>* grad = nullptr, double null_dropout = 0.0) {
  if (batch.empty()) throw ContractError("denoise loss: empty batch");
  constexpr bool kTrainable = requires(const DenT& d) { typename DenT::Trace; };
  if (grad && !kTrainable) throw ContractError("denoise loss: gradients need a trainable denoiser");
  double total = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Rng r = rng.child(i);
    int t = 1 + int(r.uniform_index(std::uint64_t(sched.t_max())));
    Rng noise_rng = r.child(1);
    Image<T> x0 = to_diffusion_domain(*batch[i].image01);
    Image<T> eps = sample_noise<T>(x0.h, x0.w, x0.c, noise_rng);
    Image<T> x_t = add_noise(x0, t, eps, sched);
    ConditioningBundle<T> cond;
    cond.tokens = *batch[i].tokens;
    cond.pose_image = *batch[i].pose_image;
    if (null_dropout > 0.0) {
      Rng coin = r.child(2);
      if (coin.uniform() < null_dropout) {
        cond.null_text = true;
        cond.null_pose = true;
      }
    }
    Image<T> pred;
    if constexpr (kTrainable) {
      typename DenT::Trace tr;
      pred = den.forward_trace(x_t, t, cond, tr);
      if (grad) {
        Image<T> d_out = pred;
        T scale = T(2.0 / (double(pred.data.size()) * double(batch.size())));
        for (std::size_t k = 0; k < d_out.data.size(); ++k) d_out.data[k] = scale * (pred.data[k] - eps.data[k]);
        den.backward(d_out, tr, *grad);
      }
    } else {
      pred = den.predict_epsilon(x_t, t, cond);
    }
    double loss_i = 0;
    for (std::size_t k = 0; k < pred.data.size(); ++k) {
      double d = double(pred.data[k]) - double(eps.data[k]);
      loss_i += d * d;
    }
    loss_i /= double(pred.data.size());
    total += loss_i / double(batch.size());
  }
  return T(total);
}

// Deterministic evaluation protocol: a stratified grid of timesteps with
// seeded noise per (tuple, draw). Low variance, identical across models, so
// paired comparisons are meaningful.
template <typename T>
T eval_denoise_loss(const ToyConditionalDenoiser<T>& den, std::span<const TrainTuple<T>> tuples, int draws_per_tuple,
                    const NoiseSchedule& sched, std::uint64_t eval_seed) {
  if (tuples.empty()) throw ContractError("eval loss: empty tuple set");
  double total = 0;
  Rng root(eval_seed, 0x41);
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    for (int k = 0; k < draws_per_tuple; ++k) {
      int t = 1 + int((std::uint64_t(sched.t_max()) * (2 * k + 1)) / (2 * std::uint64_t(draws_per_tuple)));
      t = std::min(t, sched.t_max());
      Rng nr = root.child(i * 1000 + std::uint64_t(k));
      Image<T> x0 = to_diffusion_domain(*tuples[i].image01);
      Image<T> eps = sample_noise<T>(x0.h, x0.w, x0.c, nr);
      Image<T> x_t = add_noise(x0, t, eps, sched);
      ConditioningBundle<T> cond;
      cond.tokens = *tuples[i].tokens;
      cond.pose_image = *tuples[i].pose_image;
      Image<T> pred = den.predict_epsilon(x_t, t, cond);
      double loss_i = 0;
      for (std::size_t j = 0; j < pred.data.size(); ++j) {
        double d = double(pred.data[j]) - double(eps.data[j]);
        loss_i += d * d;
      }
      total += loss_i / double(pred.data.size());
    }
  }
  return T(total / (double(tuples.size()) * draws_per_tuple));
}

// The two stage-one losses share the denoise_loss functional form and differ
// only in their data.
template <typename T, typename DenT>
T rec_loss(const DenT& den, const std::vector<FewShotExample<T>>& batch, const NoiseSchedule& sched, Rng rng,
           std::vector<T>* grad = nullptr) {
  auto tuples = as_tuples(batch);
  return denoise_loss<T>(den, std::span<const TrainTuple<T>>(tuples), sched, rng, grad);
}

template <typename T, typename DenT>
T cppl_loss(const DenT& den, const std::vector<PriorExample<T>>& batch, const NoiseSchedule& sched, Rng rng,
            std::vector<T>* grad = nullptr) {
  auto tuples = as_tuples(batch);
  return denoise_loss<T>(den, std::span<const TrainTuple<T>>(tuples), sched, rng, grad);
}

struct BoothStepLoss {
  int step;
  double rec;
  double cppl;
};

struct PretrainConfig {
  int steps = 800;
  double lr = 2e-3;
  int batch = 4;
  double null_dropout = 0.1;  // classifier-free condition dropout
  std::uint64_t seed = 0;
};

// Trains the toy base model on the procedural class distribution (random
// sprite styles and poses, fresh samples every step). This manufactures the
// "pretrained" denoiser that personalization starts from.
template <typename T>
std::vector<double> pretrain_base(ToyConditionalDenoiser<T>& den, const Vocabulary& vocab, const PretrainConfig& cfg,
                                  const NoiseSchedule& sched) {
  int S = den.config().image_size;
  std::vector<int> class_tokens = vocab.encode("a photo of figure");
  Adam<T> opt(den.param_count(), {{den.param_count(), cfg.lr}});
  std::vector<T> grad(den.param_count());
  std::vector<double> history;
  Rng root(cfg.seed, 0x70);
  for (int step = 0; step < cfg.steps; ++step) {
    Rng r = root.child(std::uint64_t(step));
    std::vector<ClassSample> samples;
    std::vector<Image<T>> imgs, poses;
    for (int b = 0; b < cfg.batch; ++b) {
      samples.push_back(make_class_sample(r.child(100 + std::uint64_t(b)), S));
      imgs.push_back(samples.back().image.template cast<T>());
      poses.push_back(rasterize_pose2d(samples.back().pose, S, S).template cast<T>());
    }
    std::vector<TrainTuple<T>> batch;
    for (int b = 0; b < cfg.batch; ++b) batch.push_back({&imgs[std::size_t(b)], &poses[std::size_t(b)], &class_tokens});
    std::fill(grad.begin(), grad.end(), T(0));
    double loss = double(denoise_loss<T>(den, batch, sched, r.child(1), &grad, cfg.null_dropout));
    if (!std::isfinite(loss)) throw NumericError("pretrain: non-finite loss at step " + std::to_string(step));
    opt.step(den.params(), grad);
    history.push_back(loss);
  }
  return history;
}

// L_total = L_rec + lambda_cppl * L_cppl, Adam over the denoiser with the
// pose block frozen and a separate rate for the token embedding table.
// Deterministic under cfg.seed; step batches are drawn by per-step child rng.
template <typename T>
std::vector<BoothStepLoss> finetune(ToyConditionalDenoiser<T>& den, const std::vector<FewShotExample<T>>& fewshot,
                                    const std::vector<PriorExample<T>>& prior, const BoothConfig& cfg,
                                    const NoiseSchedule& sched, const Vocabulary& vocab) {
  cfg.validate();
  if (fewshot.empty()) throw ContractError("finetune: empty few-shot set");
  int subject_id = vocab.id(cfg.subject_token);
  for (const auto& ex : fewshot)
    if (std::find(ex.tokens.begin(), ex.tokens.end(), subject_id) == ex.tokens.end())
      throw ContractError("finetune: subject token missing from a few-shot caption");

  auto few_tuples = as_tuples(fewshot);
  auto prior_tuples = as_tuples(prior);

  Adam<T> opt(den.param_count(), {{den.emb_end(), cfg.lr_text},
                                  {den.pose_begin(), cfg.lr},
                                  {den.pose_end(), 0.0},
                                  {den.param_count(), cfg.lr}});
  std::vector<BoothStepLoss> history;
  std::vector<T> grad(den.param_count());
  Rng root(cfg.seed, 0x60);
  double initial_total = -1;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng r = root.child(std::uint64_t(step));
    std::fill(grad.begin(), grad.end(), T(0));

    std::vector<TrainTuple<T>> rec_batch;
    Rng pick = r.child(1);
    for (int b = 0; b < cfg.batch_fewshot; ++b)
      rec_batch.push_back(few_tuples[pick.uniform_index(few_tuples.size())]);
    double rec = double(denoise_loss<T>(den, rec_batch, sched, r.child(2), &grad));

    double cppl = 0;
    if (cfg.lambda_cppl > 0 && !prior_tuples.empty() && cfg.batch_prior > 0) {
      std::vector<TrainTuple<T>> cppl_batch;
      Rng pick2 = r.child(3);
      for (int b = 0; b < cfg.batch_prior; ++b)
        cppl_batch.push_back(prior_tuples[pick2.uniform_index(prior_tuples.size())]);
      std::vector<T> cppl_grad(den.param_count(), T(0));
      cppl = double(denoise_loss<T>(den, cppl_batch, sched, r.child(4), &cppl_grad));
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += T(cfg.lambda_cppl) * cppl_grad[k];
    }

    double total = rec + cfg.lambda_cppl * cppl;
    if (initial_total < 0) initial_total = total;
    if (!std::isfinite(total) || total > 1e3 * initial_total)
      throw NumericError("finetune: diverged at step " + std::to_string(step) + " (loss " + std::to_string(total) +
                         ", initial " + std::to_string(initial_total) + ")");
    opt.step(den.params(), grad);
    history.push_back({step, rec, cppl});
  }
  return history;
}

}  // namespace nerfbooth
