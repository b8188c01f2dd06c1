// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nerfbooth/denoiser_net.hpp"
#include "nerfbooth/diffusion.hpp"

using namespace nerfbooth;

namespace {

ToyDenoiserConfig tiny_denoiser_config(int vocab = 12) {
  ToyDenoiserConfig cfg;
  cfg.image_size = 8;
  cfg.channels = 6;
  cfg.pose_channels = 4;
  cfg.emb_dim = 6;
  cfg.cond_dim = 4;
  cfg.t_channels = 4;
  cfg.vocab_size = vocab;
  cfg.t_max = 100;
  return cfg;
}

ConditioningBundle<double> tiny_bundle(int image_size, std::vector<int> tokens = {1, 2, 3}) {
  ConditioningBundle<double> cond;
  cond.tokens = std::move(tokens);
  cond.pose_image = Image<double>(image_size, image_size, 3, 0.0);
  // a couple of bright strokes standing in for a pose raster
  for (int y = 1; y + 1 < image_size; ++y) {
    cond.pose_image.at(0, y, image_size / 2) = 1.0;
    cond.pose_image.at(1, y, y) = 0.8;
  }
  return cond;
}

// Self-normalized importance estimate of E[x0 | x_t] for the scalar Gaussian
// model x0 ~ N(mu, s^2), x_t = a x0 + sg eps.
double mc_posterior_mean(double x_t, double a, double sg, double mu, double s, Rng& rng, int draws = 400000) {
  double num = 0, den = 0;
  for (int i = 0; i < draws; ++i) {
    double x0 = mu + s * rng.normal();
    double r = (x_t - a * x0) / sg;
    double w = std::exp(-0.5 * r * r);
    num += w * x0;
    den += w;
  }
  return num / den;
}

}  // namespace

TEST_CASE("schedule: variance-preserving identity at every step") {
  NoiseSchedule sched(1000);
  CHECK(sched.alpha(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sched.sigma(0) == doctest::Approx(0.0).epsilon(1e-9));
  double prev_a = 2.0, prev_s = -1.0;
  for (int t = 0; t <= 1000; ++t) {
    double a = sched.alpha(t), s = sched.sigma(t);
    CHECK(std::abs(a * a + s * s - 1.0) <= 1e-9);
    CHECK(a < prev_a);
    CHECK(s > prev_s);
    prev_a = a;
    prev_s = s;
  }
  CHECK(sched.alpha(1000) < 1e-4);
  CHECK(sched.sigma(1000) > 0.9999);
  CHECK_THROWS_AS(sched.alpha(1001), ContractError);
}

TEST_CASE("add_noise: endpoint behavior") {
  NoiseSchedule sched(100);
  Image<double> x0(4, 4, 3);
  Image<double> eps(4, 4, 3);
  Rng r(1);
  for (auto& v : x0.data) v = r.uniform(-1, 1);
  for (auto& v : eps.data) v = r.normal();

  Image<double> at0 = add_noise(x0, 0, eps, sched);
  for (std::size_t i = 0; i < x0.data.size(); ++i) CHECK(at0.data[i] == doctest::Approx(x0.data[i]).epsilon(1e-12));

  Image<double> atT = add_noise(x0, 100, eps, sched);
  for (std::size_t i = 0; i < x0.data.size(); ++i) CHECK(std::abs(atT.data[i] - eps.data[i]) < 1e-3);

  CHECK_THROWS_AS(add_noise(x0, 101, eps, sched), ContractError);
}

TEST_CASE("add_noise: second moment matches the schedule (Monte Carlo)") {
  NoiseSchedule sched(100);
  const int t = 60;
  Image<double> x0(4, 4, 3);
  Rng r(2);
  for (auto& v : x0.data) v = r.uniform(-1, 1);
  double x0_sq = 0;
  for (double v : x0.data) x0_sq += v * v;
  double dim = double(x0.data.size());

  double acc = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    Image<double> eps = sample_noise<double>(4, 4, 3, r);
    Image<double> xt = add_noise(x0, t, eps, sched);
    for (double v : xt.data) acc += v * v;
  }
  double got = acc / draws;
  double expect = sched.alpha(t) * sched.alpha(t) * x0_sq + sched.sigma(t) * sched.sigma(t) * dim;
  CHECK(std::abs(got - expect) / expect < 0.02);
}

TEST_CASE("analytic denoiser: posterior mean re-derivation vs Monte Carlo") {
  NoiseSchedule sched(100);
  const double mu = 0.3, s = 0.4;
  Image<double> mu_img(1, 1, 1, mu);
  AnalyticGaussianDenoiser<double> oracle(mu_img, s, sched);

  Rng r(33);
  for (int trial = 0; trial < 20; ++trial) {
    int t = 10 + int(r.uniform_index(85));
    double a = sched.alpha(t), sg = sched.sigma(t);
    double x_t = a * (mu + s * r.normal()) + sg * r.normal();
    Image<double> xt_img(1, 1, 1, x_t);
    double closed = oracle.posterior_mean(xt_img, t).data[0];
    Rng mc(100 + trial);
    double est = mc_posterior_mean(x_t, a, sg, mu, s, mc);
    CHECK(std::abs(closed - est) / std::max(0.05, std::abs(est)) < 0.01);
  }
}

TEST_CASE("analytic denoiser: posterior mean collapses to mu as s -> 0") {
  NoiseSchedule sched(100);
  Image<double> mu_img(2, 2, 3);
  Rng r(4);
  for (auto& v : mu_img.data) v = r.uniform(-1, 1);
  AnalyticGaussianDenoiser<double> oracle(mu_img, 1e-6, sched);
  Image<double> x_t(2, 2, 3);
  for (auto& v : x_t.data) v = r.normal();
  Image<double> post = oracle.posterior_mean(x_t, 50);
  for (std::size_t i = 0; i < post.data.size(); ++i)
    CHECK(post.data[i] == doctest::Approx(mu_img.data[i]).epsilon(1e-6));
}

TEST_CASE("ancestral sampler: recovers a tight analytic target mean") {
  NoiseSchedule sched(100);
  Image<double> mu(2, 2, 3);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i) mu.plane_ptr(c)[i] = 0.2 * (c + 1);
  AnalyticGaussianDenoiser<double> oracle(mu, 0.01, sched);
  ConditioningBundle<double> cond;

  Image<double> mean(2, 2, 3, 0.0);
  const int runs = 256;
  Rng root(7);
  for (int k = 0; k < runs; ++k) {
    Image<double> s = ancestral_sample(oracle, cond, 32, sched, 2, 2, 3, root.child(k));
    for (std::size_t i = 0; i < s.data.size(); ++i) mean.data[i] += s.data[i] / runs;
  }
  for (int c = 0; c < 3; ++c) {
    double avg = 0;
    for (int i = 0; i < 4; ++i) avg += mean.plane_ptr(c)[i] / 4.0;
    CHECK(std::abs(avg - 0.2 * (c + 1)) < 0.05);
  }
}

TEST_CASE("ancestral sampler: matches closed-form affine propagation of mean/variance") {
  // With the analytic denoiser, eps_hat = sigma_t (x - alpha_t mu) / D with
  // D = alpha_t^2 s^2 + sigma_t^2, so every chain update is affine Gaussian:
  //   x' = A x + B mu + var_step^(1/2) z,
  //   A = (1 - beta/D)/sqrt(a_step),  B = beta alpha_t / (D sqrt(a_step)).
  // Propagating (mean, variance) through those coefficients gives the exact
  // output distribution; the sampled moments must match it within Monte-Carlo
  // bounds, and the variance approaches the target s^2 for dense chains.
  const int t_total = 200, steps = 200;
  const double mu = 0.1, s = 0.1;
  NoiseSchedule sched(t_total);

  double m = 0.0, v = 1.0;
  std::vector<int> ts(steps + 1);
  for (int j = 0; j <= steps; ++j) ts[j] = int(std::llround(double(t_total) * j / double(steps)));
  for (int j = steps; j >= 1; --j) {
    int t_cur = ts[j], t_prev = ts[j - 1];
    double abar_cur = sched.alpha_bar(t_cur), abar_prev = sched.alpha_bar(t_prev);
    double a_step = abar_cur / abar_prev, beta = 1.0 - a_step;
    double alpha = sched.alpha(t_cur), sigma = sched.sigma(t_cur);
    double D = alpha * alpha * s * s + sigma * sigma;
    double A = (1.0 - beta / D) / std::sqrt(a_step);
    double B = beta * alpha / (D * std::sqrt(a_step));
    m = A * m + B * mu;
    v = A * A * v;
    if (t_prev > 0) v += beta * (1.0 - abar_prev) / (1.0 - abar_cur);
  }

  Image<double> mu_img(2, 2, 3, mu);
  AnalyticGaussianDenoiser<double> oracle(mu_img, s, sched);
  ConditioningBundle<double> cond;
  Rng root(21);
  double sum = 0, sum2 = 0;
  int n = 0;
  const int runs = 400;
  for (int k = 0; k < runs; ++k) {
    Image<double> x = ancestral_sample(oracle, cond, steps, sched, 2, 2, 3, root.child(k));
    for (double val : x.data) {
      sum += val;
      sum2 += val * val;
      ++n;
    }
  }
  double sample_mean = sum / n;
  double sample_var = sum2 / n - sample_mean * sample_mean;

  double mean_tol = 5.0 * std::sqrt(v / n);           // 5 sigma of the mean estimator
  double var_tol = 5.0 * std::sqrt(2.0 / (n - 1)) * v;  // 5 sigma of the variance estimator
  CHECK(std::abs(sample_mean - m) < mean_tol);
  CHECK(std::abs(sample_var - v) < var_tol);
  CHECK(std::abs(sample_mean - mu) < 0.01);  // chain mean lands on the target
  CHECK(std::sqrt(v) > 0.75 * s);            // dense chain nearly reproduces target spread
  CHECK(std::sqrt(v) < 1.1 * s);
}

TEST_CASE("ancestral sampler: bit-identical under a fixed seed") {
  NoiseSchedule sched(50);
  Image<double> mu(3, 3, 3, 0.1);
  AnalyticGaussianDenoiser<double> oracle(mu, 0.05, sched);
  ConditioningBundle<double> cond;
  Image<double> a = ancestral_sample(oracle, cond, 25, sched, 3, 3, 3, Rng(99));
  Image<double> b = ancestral_sample(oracle, cond, 25, sched, 3, 3, 3, Rng(99));
  CHECK(a.data == b.data);
}

TEST_CASE("ancestral sampler: single step equals the closed-form posterior mean") {
  NoiseSchedule sched(64);
  Image<double> mu(2, 2, 3, -0.25);
  const double s = 0.15;
  AnalyticGaussianDenoiser<double> oracle(mu, s, sched);
  ConditioningBundle<double> cond;

  Rng rng(5);
  Image<double> got = ancestral_sample(oracle, cond, 1, sched, 2, 2, 3, rng);

  // replay: with one step the chain maps x_T to (x_T - sigma_T eps_hat)/alpha_T
  Rng replay = Rng(5).child(0);
  Image<double> x_T = sample_noise<double>(2, 2, 3, replay);
  Image<double> eps = oracle.predict_epsilon(x_T, 64, cond);
  double aT = sched.alpha(64), sT = sched.sigma(64);
  for (std::size_t i = 0; i < got.data.size(); ++i) {
    double expect = (x_T.data[i] - (1.0 - aT * aT) / sT * eps.data[i]) / aT;
    CHECK(std::abs(got.data[i] - expect) < 1e-6);
    double post = oracle.posterior_mean(x_T, 64).data[i];
    CHECK(std::abs(got.data[i] - post) < 1e-6);
  }
}

TEST_CASE("cfg blend: exact at weights 0 and 1, affine in between") {
  ToyDenoiserConfig dcfg = tiny_denoiser_config();
  ToyConditionalDenoiser<double> den(dcfg);
  den.init_params(11);
  ConditioningBundle<double> cond = tiny_bundle(dcfg.image_size);
  Rng r(8);
  Image<double> x_t = sample_noise<double>(dcfg.image_size, dcfg.image_size, 3, r);

  Image<double> e_cond = den.predict_epsilon(x_t, 40, cond);
  Image<double> e_null = den.predict_epsilon(x_t, 40, cond.with_null());
  Image<double> w1 = cfg_epsilon(den, x_t, 40, cond, 1.0);
  Image<double> w0 = cfg_epsilon(den, x_t, 40, cond, 0.0);
  Image<double> wh = cfg_epsilon(den, x_t, 40, cond, 0.5);
  double sep = 0;
  for (std::size_t i = 0; i < w1.data.size(); ++i) {
    CHECK(w1.data[i] == e_cond.data[i]);
    CHECK(w0.data[i] == e_null.data[i]);
    CHECK(std::abs(wh.data[i] - 0.5 * (e_cond.data[i] + e_null.data[i])) <= 1e-9);
    sep += std::abs(e_cond.data[i] - e_null.data[i]);
  }
  CHECK(sep > 1e-6);  // the two branches actually differ
}

TEST_CASE("conditioning: deterministic embeddings and vocabulary round trip") {
  ToyDenoiserConfig dcfg = tiny_denoiser_config();
  ToyConditionalDenoiser<double> den(dcfg);
  den.init_params(3);
  ConditioningBundle<double> cond = tiny_bundle(dcfg.image_size, {4, 7});

  auto a = den.encode_conditions(cond);
  auto b = den.encode_conditions(cond);
  CHECK(a.c_text == b.c_text);
  CHECK(a.pose_features.data == b.pose_features.data);

  // token id -> embedding row index equality
  Vocabulary vocab({"<null>", "a", "photo", "of", "figure", "sks"});
  CHECK(vocab.id("sks") == 5);
  CHECK(vocab.token(5) == "sks");
  CHECK(vocab.encode("a photo of sks figure") == std::vector<int>{1, 2, 3, 5, 4});
  CHECK_THROWS_AS(vocab.id("unknown-token"), ContractError);

  ConditioningBundle<double> bad = cond;
  bad.tokens = {dcfg.vocab_size + 3};
  CHECK_THROWS_AS(den.encode_conditions(bad), ContractError);
}

TEST_CASE("conditioning: pose branch separates after one training step") {
  ToyDenoiserConfig dcfg = tiny_denoiser_config();
  ToyConditionalDenoiser<double> den(dcfg);
  den.init_params(21);

  ConditioningBundle<double> black = tiny_bundle(dcfg.image_size);
  black.pose_image = Image<double>(dcfg.image_size, dcfg.image_size, 3, 0.0);
  ConditioningBundle<double> drawn = tiny_bundle(dcfg.image_size);

  // one step on a target that depends on the drawn pose pushes the pose conv
  Rng r(9);
  Image<double> x_t = sample_noise<double>(dcfg.image_size, dcfg.image_size, 3, r);
  for (int step = 0; step < 4; ++step) {
    ToyConditionalDenoiser<double>::Trace tr;
    Image<double> out = den.forward_trace(x_t, 30, drawn, tr);
    Image<double> d_out = out;  // pull toward zero: d = 2*out/N
    for (auto& v : d_out.data) v *= 2.0 / double(out.data.size());
    std::vector<double> grad(den.param_count(), 0.0);
    den.backward(d_out, tr, grad);
    for (std::size_t i = 0; i < grad.size(); ++i) den.params()[i] -= 0.5 * grad[i];
  }
  auto eb = den.encode_conditions(black);
  auto ed = den.encode_conditions(drawn);
  double dist = 0;
  for (std::size_t i = 0; i < eb.pose_features.data.size(); ++i)
    dist += std::abs(eb.pose_features.data[i] - ed.pose_features.data[i]);
  CHECK(dist > 1e-3);
}

TEST_CASE("toy denoiser: output shape matches input and is finite") {
  ToyDenoiserConfig dcfg = tiny_denoiser_config();
  ToyConditionalDenoiser<double> den(dcfg);
  den.init_params(17);
  ConditioningBundle<double> cond = tiny_bundle(dcfg.image_size);
  Rng r(10);
  Image<double> x_t = sample_noise<double>(dcfg.image_size, dcfg.image_size, 3, r);
  Image<double> out = den.predict_epsilon(x_t, 55, cond);
  CHECK(out.h == x_t.h);
  CHECK(out.w == x_t.w);
  CHECK(out.c == 3);
  CHECK(out.finite());
}

TEST_CASE("toy denoiser: stays within the CPU-trainable parameter budget") {
  ToyDenoiserConfig dcfg;  // shipped defaults
  dcfg.vocab_size = 64;
  ToyConditionalDenoiser<double> den(dcfg);
  CHECK(den.param_count() <= 2000000);
}

TEST_CASE("toy denoiser: parameter gradients match finite differences") {
  ToyDenoiserConfig dcfg = tiny_denoiser_config();
  ToyConditionalDenoiser<double> den(dcfg);
  den.init_params(29);
  ConditioningBundle<double> cond = tiny_bundle(dcfg.image_size, {2, 5});
  Rng r(12);
  Image<double> x_t = sample_noise<double>(dcfg.image_size, dcfg.image_size, 3, r);
  Image<double> target = sample_noise<double>(dcfg.image_size, dcfg.image_size, 3, r);
  const int t = 42;

  auto loss_of = [&]() {
    Image<double> out = den.predict_epsilon(x_t, t, cond);
    return double(mse(out, target));
  };

  ToyConditionalDenoiser<double>::Trace tr;
  Image<double> out = den.forward_trace(x_t, t, cond, tr);
  Image<double> d_out = out;
  for (std::size_t i = 0; i < d_out.data.size(); ++i)
    d_out.data[i] = 2.0 * (out.data[i] - target.data[i]) / double(out.data.size());
  std::vector<double> grad(den.param_count(), 0.0);
  den.backward(d_out, tr, grad);

  Rng pick(13);
  int checked = 0;
  for (int probe = 0; probe < 200 && checked < 16; ++probe) {
    std::size_t k = std::size_t(pick.uniform_index(den.param_count()));
    if (std::abs(grad[k]) < 1e-9) continue;
    double h = 1e-6;
    double orig = den.params()[k];
    den.params()[k] = orig + h;
    double up = loss_of();
    den.params()[k] = orig - h;
    double dn = loss_of();
    den.params()[k] = orig;
    double fd = (up - dn) / (2 * h);
    CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-3));
    ++checked;
  }
  CHECK(checked == 16);

  // null branches get gradients too
  ConditioningBundle<double> null_cond = cond.with_null();
  ToyConditionalDenoiser<double>::Trace tr2;
  Image<double> out2 = den.forward_trace(x_t, t, null_cond, tr2);
  Image<double> d2 = out2;
  for (auto& v : d2.data) v *= 2.0 / double(out2.data.size());
  std::vector<double> grad2(den.param_count(), 0.0);
  den.backward(d2, tr2, grad2);
  double null_grad_mag = 0;
  for (std::size_t i = 0; i < den.param_count(); ++i) null_grad_mag += std::abs(grad2[i]);
  CHECK(null_grad_mag > 0);
}

TEST_CASE("toy denoiser: checkpoint round trip preserves parameters") {
  ToyDenoiserConfig dcfg = tiny_denoiser_config();
  ToyConditionalDenoiser<double> den(dcfg);
  den.init_params(31);
  std::string path = "/tmp/nb_denoiser_ckpt.bin";
  den.save_checkpoint(path);
  auto back = ToyConditionalDenoiser<double>::load_checkpoint(path);
  REQUIRE(back.param_count() == den.param_count());
  for (std::size_t i = 0; i < den.param_count(); ++i) CHECK(back.params()[i] == double(float(den.params()[i])));
  std::remove(path.c_str());
}
