// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "nerfbooth/core.hpp"
#include "nerfbooth/image.hpp"
#include "nerfbooth/rng.hpp"

namespace nerfbooth {

// Variance-preserving cosine schedule over integer steps 0..t_max. Per-step
// betas come from the cosine alpha-bar ratio clipped at 0.999 (the usual
// guard that keeps the terminal alpha numerically workable), and alpha-bar is
// rebuilt from the clipped betas. alpha(t)^2 + sigma(t)^2 = 1 by construction;
// alpha(0) = 1 exactly.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(int t_max = 1000, double offset = 0.008) : t_max_(t_max) {
    if (t_max < 1) throw ConfigError("noise schedule: t_max must be >= 1");
    alpha_.resize(t_max + 1);
    sigma_.resize(t_max + 1);
    auto f = [&](int t) {
      double c = std::cos((double(t) / t_max + offset) / (1.0 + offset) * kPi / 2.0);
      return c * c;
    };
    double f0 = f(0);
    double abar = 1.0, abar_raw_prev = 1.0;
    alpha_[0] = 1.0;
    sigma_[0] = 0.0;
    for (int t = 1; t <= t_max; ++t) {
      double abar_raw = f(t) / f0;
      double beta = std::min(1.0 - abar_raw / abar_raw_prev, 0.999);
      abar_raw_prev = abar_raw;
      abar *= 1.0 - beta;
      alpha_[t] = std::sqrt(abar);
      sigma_[t] = std::sqrt(std::max(0.0, 1.0 - abar));
      if (!(alpha_[t] < alpha_[t - 1])) throw NumericError("noise schedule: alpha must be strictly decreasing");
    }
  }

  int t_max() const { return t_max_; }
  double alpha(int t) const {
    check(t);
    return alpha_[t];
  }
  double sigma(int t) const {
    check(t);
    return sigma_[t];
  }
  double alpha_bar(int t) const {
    check(t);
    return alpha_[t] * alpha_[t];
  }

 private:
  static double sq(double x) { return x * x; }
  void check(int t) const {
    if (t < 0 || t > t_max_) throw ContractError("noise schedule: step " + std::to_string(t) + " out of range");
  }
  int t_max_;
  std::vector<double> alpha_, sigma_;
};

// Conditioning inputs as consumed by a denoiser. Token ids and the pose
// raster are carried raw; trainable encoders embed them inside the forward
// pass so embedding gradients flow during fine-tuning. Null flags select the
// learned unconditional branches (classifier-free guidance).
template <typename T>
struct ConditioningBundle {
  std::vector<int> tokens;
  Image<T> pose_image;  // 3 x S x S raster
  bool null_text = false;
  bool null_pose = false;

  ConditioningBundle with_null() const {
    ConditioningBundle b = *this;
    b.null_text = true;
    b.null_pose = true;
    return b;
  }
};

// Conditional epsilon-predictor over images in the [-1,1] diffusion domain.
template <typename T>
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Image<T> predict_epsilon(const Image<T>& x_t, int t, const ConditioningBundle<T>& cond) const = 0;
  virtual std::size_t param_count() const { return 0; }
};

// x_t = alpha_t x0 + sigma_t eps
template <typename T>
Image<T> add_noise(const Image<T>& x0, int t, const Image<T>& eps, const NoiseSchedule& sched) {
  if (!x0.same_shape(eps)) throw ContractError("add_noise: shape mismatch");
  double a = sched.alpha(t), s = sched.sigma(t);
  Image<T> out = x0;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = T(a) * x0.data[i] + T(s) * eps.data[i];
  return out;
}

template <typename T>
Image<T> sample_noise(int h, int w, int c, Rng& rng) {
  Image<T> out(h, w, c);
  for (T& v : out.data) v = T(rng.normal());
  return out;
}

// Exact posterior denoiser for a Gaussian image prior N(mu, s^2 I):
//   E[x0|x_t] = (alpha_t s^2 x_t + sigma_t^2 mu) / (alpha_t^2 s^2 + sigma_t^2)
//   eps_hat   = (x_t - alpha_t E[x0|x_t]) / sigma_t
// Conditioning is ignored. Serves as the test oracle for sampling and SDS.
template <typename T>
class AnalyticGaussianDenoiser : public Denoiser<T> {
 public:
  AnalyticGaussianDenoiser(Image<T> mu, double stddev, const NoiseSchedule& sched)
      : mu_(std::move(mu)), s_(stddev), sched_(&sched) {}

  Image<T> posterior_mean(const Image<T>& x_t, int t) const {
    double a = sched_->alpha(t), sg = sched_->sigma(t);
    double denom = a * a * s_ * s_ + sg * sg;
    Image<T> out = x_t;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = T((a * s_ * s_ * double(x_t.data[i]) + sg * sg * double(mu_.data[i])) / denom);
    return out;
  }

  Image<T> predict_epsilon(const Image<T>& x_t, int t, const ConditioningBundle<T>&) const override {
    if (!x_t.same_shape(mu_)) throw ContractError("analytic denoiser: shape mismatch");
    double a = sched_->alpha(t), sg = sched_->sigma(t);
    Image<T> e(x_t.h, x_t.w, x_t.c);
    if (sg < 1e-12) return e;  // eps is unidentifiable at t = 0
    Image<T> post = posterior_mean(x_t, t);
    for (std::size_t i = 0; i < e.data.size(); ++i) e.data[i] = T((double(x_t.data[i]) - a * double(post.data[i])) / sg);
    return e;
  }

  const Image<T>& mu() const { return mu_; }

 private:
  Image<T> mu_;
  double s_;
  const NoiseSchedule* sched_;
};

// eps_hat = eps_null + w (eps_cond - eps_null)
template <typename T>
Image<T> cfg_epsilon(const Denoiser<T>& denoiser, const Image<T>& x_t, int t, const ConditioningBundle<T>& cond,
                     double guidance_weight) {
  if (guidance_weight == 1.0) return denoiser.predict_epsilon(x_t, t, cond);
  Image<T> e_cond = denoiser.predict_epsilon(x_t, t, cond);
  Image<T> e_null = denoiser.predict_epsilon(x_t, t, cond.with_null());
  Image<T> out = e_null;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = e_null.data[i] + T(guidance_weight) * (e_cond.data[i] - e_null.data[i]);
  return out;
}

// Standard DDPM ancestral chain from pure noise, run over an evenly strided
// subsequence of the schedule (steps == t_max gives the full chain). The last
// transition adds no noise. Deterministic under the supplied rng.
template <typename T>
Image<T> ancestral_sample(const Denoiser<T>& denoiser, const ConditioningBundle<T>& cond, int steps,
                          const NoiseSchedule& sched, int h, int w, int c, Rng rng) {
  if (steps < 1 || steps > sched.t_max()) throw ContractError("ancestral_sample: steps out of range");
  std::vector<int> ts(steps + 1);
  for (int j = 0; j <= steps; ++j) ts[j] = int(std::llround(double(sched.t_max()) * double(j) / double(steps)));

  Rng init_rng = rng.child(0);
  Image<T> x = sample_noise<T>(h, w, c, init_rng);
  for (int j = steps; j >= 1; --j) {
    int t_cur = ts[j], t_prev = ts[j - 1];
    Image<T> eps = denoiser.predict_epsilon(x, t_cur, cond);
    double abar_cur = sched.alpha_bar(t_cur), abar_prev = sched.alpha_bar(t_prev);
    double a_step = abar_cur / abar_prev;
    double beta = 1.0 - a_step;
    double inv_sqrt_a = 1.0 / std::sqrt(a_step);
    double eps_coef = beta / sched.sigma(t_cur);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      x.data[i] = T(inv_sqrt_a * (double(x.data[i]) - eps_coef * double(eps.data[i])));
    if (t_prev > 0) {
      double var = beta * (1.0 - abar_prev) / (1.0 - abar_cur);
      double sd = std::sqrt(var);
      Rng step_rng = rng.child(std::uint64_t(j));
      for (T& v : x.data) v = T(double(v) + sd * step_rng.normal());
    }
    if (!x.finite()) throw NumericError("ancestral_sample: non-finite state at chain step " + std::to_string(j));
  }
  return x;
}

}  // namespace nerfbooth
