// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "nerfbooth/adam.hpp"
#include "nerfbooth/booth.hpp"
#include "nerfbooth/diffusion.hpp"
#include "nerfbooth/field.hpp"
#include "nerfbooth/geometry.hpp"
#include "nerfbooth/render.hpp"
#include "nerfbooth/schedule.hpp"

namespace nerfbooth {

// ---------------------------------------------------------------------------
// Observation-space camera sampling

struct CameraSamplerConfig {
  // Defaults keep the whole default avatar bbox (half-diagonal ~0.99) inside
  // the frustum with ~5 degrees of margin at the worst draw.
  double radius_min = 3.0, radius_max = 3.6;
  double elev_min_deg = -15.0, elev_max_deg = 25.0;
  double fov_min_deg = 65.0, fov_max_deg = 75.0;
  double lookat_jitter = 0.04;
  double near = 0.05, far = 10.0;
};

template <typename T>
bool frustum_contains_aabb(const CameraPose& cam, const Aabb<T>& box) {
  CameraBasis basis = CameraBasis::from(cam);
  for (int corner = 0; corner < 8; ++corner) {
    Vec3d p{double(corner & 1 ? box.hi.x : box.lo.x), double(corner & 2 ? box.hi.y : box.lo.y),
            double(corner & 4 ? box.hi.z : box.lo.z)};
    auto uv = project_point(cam, basis, p, 1.0);
    if (!uv) return false;
    if (uv->x < 0.0 || uv->x > 1.0 || uv->y < 0.0 || uv->y > 1.0) return false;
    if (uv->z <= cam.near || uv->z >= cam.far) return false;
  }
  return true;
}

// Azimuth uniform over the full circle; elevation/radius/fov uniform over
// their ranges; look-at jittered around the bbox center. Every draw is
// checked against the frustum constraint.
template <typename T>
CameraPose sample_camera(const CameraSamplerConfig& cfg, const Aabb<T>& bbox, Rng rng) {
  double azimuth = rng.uniform(0.0, 2.0 * kPi);
  double elev = deg_to_rad(rng.uniform(cfg.elev_min_deg, cfg.elev_max_deg));
  double radius = rng.uniform(cfg.radius_min, cfg.radius_max);
  double fov = deg_to_rad(rng.uniform(cfg.fov_min_deg, cfg.fov_max_deg));
  Vec3d center = bbox.center().template cast<double>();
  CameraPose cam;
  cam.position = center + Vec3d{radius * std::cos(elev) * std::sin(azimuth), radius * std::sin(elev),
                                radius * std::cos(elev) * std::cos(azimuth)};
  cam.look_at = center + Vec3d{rng.uniform(-cfg.lookat_jitter, cfg.lookat_jitter),
                               rng.uniform(-cfg.lookat_jitter, cfg.lookat_jitter),
                               rng.uniform(-cfg.lookat_jitter, cfg.lookat_jitter)};
  cam.up = {0, 1, 0};
  cam.fov_y = fov;
  cam.near = cfg.near;
  cam.far = cfg.far;
  if (!frustum_contains_aabb(cam, bbox))
    throw ConfigError("camera sampler: configured ranges cannot keep the field bbox in frustum");
  return cam;
}

// Camera on the zero-jitter orbit at an exact azimuth (turntables, eval).
template <typename T>
CameraPose orbit_camera(const Aabb<T>& bbox, double azimuth_rad, double elev_rad, double radius, double fov_rad,
                        double near = 0.05, double far = 10.0) {
  Vec3d center = bbox.center().template cast<double>();
  CameraPose cam;
  cam.position = center + Vec3d{radius * std::cos(elev_rad) * std::sin(azimuth_rad), radius * std::sin(elev_rad),
                                radius * std::cos(elev_rad) * std::cos(azimuth_rad)};
  cam.look_at = center;
  cam.up = {0, 1, 0};
  cam.fov_y = fov_rad;
  cam.near = near;
  cam.far = far;
  return cam;
}

// ---------------------------------------------------------------------------
// Score providers

// Everything the 3D-aware score residual may depend on for one step. The
// distillation loop owns the noising, so oracles (echo, analytic posteriors)
// can see the clean render and the drawn noise; learned providers only look
// at (x_t, t, cond).
template <typename T>
struct ScoreContext {
  const Image<T>& render01;  // clean render in [0,1], upsampled resolution
  const Image<T>& x_t;       // noised render, diffusion domain
  const Image<T>& noise;
  int t;
  const ConditioningBundle<T>& cond;
  const CameraPose& camera;
  CropRect crop;
  Vec3<T> background;
  const NoiseSchedule& sched;
};

template <typename T>
class ScoreProvider {
 public:
  virtual ~ScoreProvider() = default;
  virtual Image<T> epsilon_hat(const ScoreContext<T>& ctx) const = 0;
};

// Classifier-free-guided prediction from a (personalized) denoiser.
template <typename T>
class DenoiserScore : public ScoreProvider<T> {
 public:
  DenoiserScore(const Denoiser<T>& den, double guidance_weight) : den_(&den), w_(guidance_weight) {}
  Image<T> epsilon_hat(const ScoreContext<T>& ctx) const override {
    return cfg_epsilon(*den_, ctx.x_t, ctx.t, ctx.cond, w_);
  }

 private:
  const Denoiser<T>* den_;
  double w_;
};

// eps_hat == eps: the SDS residual vanishes identically (fixed-point oracle).
template <typename T>
class EchoNoiseScore : public ScoreProvider<T> {
 public:
  Image<T> epsilon_hat(const ScoreContext<T>& ctx) const override { return ctx.noise; }
};

// Exact posterior score for a per-view Gaussian image prior N(target, s^2):
// the target image is any function of the step context (camera, conditioning,
// background), which makes multi-view and conditioning-keyed priors cheap.
template <typename T>
class AnalyticTargetScore : public ScoreProvider<T> {
 public:
  using TargetFn = std::function<Image<T>(const ScoreContext<T>&)>;

  AnalyticTargetScore(TargetFn target01, double stddev) : target01_(std::move(target01)), s_(stddev) {}

  Image<T> epsilon_hat(const ScoreContext<T>& ctx) const override {
    Image<T> mu = to_diffusion_domain(target01_(ctx));
    double a = ctx.sched.alpha(ctx.t), sg = ctx.sched.sigma(ctx.t);
    double denom = a * a * s_ * s_ + sg * sg;
    Image<T> out(ctx.x_t.h, ctx.x_t.w, ctx.x_t.c);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      double post = (a * s_ * s_ * double(ctx.x_t.data[i]) + sg * sg * double(mu.data[i])) / denom;
      out.data[i] = T((double(ctx.x_t.data[i]) - a * post) / sg);
    }
    return out;
  }

 private:
  TargetFn target01_;
  double s_;
};

// Silhouette of an opaque sphere over the step background, rendered through
// the step camera/crop. The analytic multi-view prior for carving tests.
template <typename T>
Image<T> sphere_silhouette_target(const ScoreContext<T>& ctx, const Vec3d& center, double radius, const Vec3d& color) {
  int h = ctx.x_t.h, w = ctx.x_t.w;
  auto rays = generate_rays<double>(ctx.camera, h, w, ctx.crop);
  Image<T> img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto& r = rays[std::size_t(y) * w + x];
      Vec3d oc = r.origin - center;
      double b = oc.dot(r.dir);
      double c = oc.dot(oc) - radius * radius;
      bool hit = b * b - c >= 0.0 && (-b + std::sqrt(std::max(0.0, b * b - c))) > 0.0;
      for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = T(hit ? color[ch] : double(ctx.background[ch]));
    }
  return img;
}

// Front/back decision derived from the conditioning image alone: the palette
// draws the subject's left arm warm and right arm cool, so their screen-x
// order flips between hemispheres.
template <typename T>
bool hemisphere_from_conditioning(const Image<T>& skeleton_raster) {
  const Vec3d left_colors[2] = {{1.00, 0.20, 0.00}, {1.00, 0.50, 0.05}};
  const Vec3d right_colors[2] = {{0.00, 0.40, 1.00}, {0.05, 0.80, 1.00}};
  double lx = 0, lw = 0, rx = 0, rw = 0;
  for (int y = 0; y < skeleton_raster.h; ++y)
    for (int x = 0; x < skeleton_raster.w; ++x) {
      Vec3d c{double(skeleton_raster.at(0, y, x)), double(skeleton_raster.at(1, y, x)),
              double(skeleton_raster.at(2, y, x))};
      for (const auto& lc : left_colors)
        if ((c - lc).norm() < 0.22) {
          lx += x;
          lw += 1;
        }
      for (const auto& rc : right_colors)
        if ((c - rc).norm() < 0.22) {
          rx += x;
          rw += 1;
        }
    }
  if (lw == 0 || rw == 0) return true;
  return lx / lw > rx / rw;  // subject's left on screen right -> front view
}

// ---------------------------------------------------------------------------
// Distillation loop

// t ~ U[t_lo, t_hi] with optional linear annealing of the upper bound.
inline int sds_timestep_sampler(int step, int total_steps, int t_lo, int t_hi, bool anneal, int anneal_floor,
                                Rng& rng) {
  if (t_lo >= t_hi) throw ContractError("timestep sampler: empty range");
  int hi = t_hi;
  if (anneal && total_steps > 1) {
    double progress = double(step) / double(total_steps - 1);
    hi = int(std::lround(t_hi + (anneal_floor - t_hi) * progress));
    hi = std::max(hi, t_lo + 1);
  }
  return t_lo + int(rng.uniform_index(std::uint64_t(hi - t_lo + 1)));
}

struct DistillConfig {
  int total_steps = 2000;
  double lambda_geo = 1.0;
  double guidance_weight = 3.0;  // used when the score wraps a denoiser
  double t_lo_frac = 0.02, t_hi_frac = 0.98;
  bool anneal_t_hi = false;
  double anneal_floor_frac = 0.5;
  double lr_tables = 1e-2, lr_heads = 1e-3;
  int n_samples_per_ray = 48;
  bool random_background = true;   // random gray per step, discourages floaters
  Vec3d background{0.0, 0.0, 0.0}; // used when random_background is off
  int checkpoint_every = 0;        // 0 disables periodic checkpoints
  std::string checkpoint_dir;
  std::string metrics_path;  // newline-delimited JSON; empty disables
  int workers = 1;
  bool audit_conditioning = false;  // recompute + compare the skeleton raster
  std::uint64_t seed = 0;
  std::string prompt = "a photo of sks figure";
};

struct StepDiagnostics {
  int step = 0;
  int resolution = 0;
  double sds_grad_norm = 0;
  double geo_loss = 0;
  double wall_ms = 0;
  bool skipped = false;
  int t = 0;
};

template <typename T>
class Distiller {
 public:
  Distiller(RadianceField<T>& field, const ScoreProvider<T>& score, const ArticulatedSkeleton& skeleton,
            std::vector<PartMesh> part_meshes, ResolutionSchedule schedule, CameraSamplerConfig camera,
            GeoLossConfig geo, DistillConfig cfg, const NoiseSchedule& sched, const Vocabulary& vocab)
      : field_(&field),
        score_(&score),
        skeleton_(&skeleton),
        parts_(std::move(part_meshes)),
        schedule_(std::move(schedule)),
        camera_(camera),
        geo_(geo),
        cfg_(cfg),
        sched_(&sched),
        root_(cfg.seed, 0x90),
        grad_(field.param_count()),
        opt_(field.param_count(),
             {{field.table_param_count(), cfg.lr_tables}, {field.param_count(), cfg.lr_heads}}) {
    geo_.validate();
    base_tokens_ = vocab.encode(cfg.prompt);
    face_tokens_ = prepend(vocab, "face of", base_tokens_);
    hand_tokens_ = prepend(vocab, "hand of", base_tokens_);
    int tmax = sched.t_max();
    t_lo_ = std::max(1, int(cfg.t_lo_frac * tmax));
    t_hi_ = std::min(tmax, int(cfg.t_hi_frac * tmax));
    anneal_floor_ = std::max(t_lo_ + 1, int(cfg.anneal_floor_frac * tmax));
    if (t_lo_ >= t_hi_) throw ConfigError("distill: empty timestep range");
  }

  int step_count() const { return step_; }

  // One full 3D-SDS update:
  //   camera -> skeleton conditioning raster -> render -> noise -> score
  //   residual -> renderer backward (the score network is never
  //   differentiated through) -> plus lambda_geo * geometry margin gradient.
  StepDiagnostics sds_step() {
    auto clock0 = std::chrono::steady_clock::now();
    Rng r = root_.child(std::uint64_t(step_));
    const ResolutionStage& stage = schedule_.stage_at(step_);

    CameraPose cam = sample_camera(camera_, field_->bbox(), r.child(1));

    // zoom selection
    CropRect crop;
    const std::vector<int>* tokens = &base_tokens_;
    if (stage.zoom_prob > 0.0) {
      Rng zr = r.child(0);
      if (zr.uniform() < stage.zoom_prob) {
        ZoomMode mode = stage.mode;
        bool left_hand = false;
        if (mode == ZoomMode::RandomPart) {
          std::uint64_t pick = zr.uniform_index(3);
          mode = pick == 0 ? ZoomMode::Head : ZoomMode::Hands;
          left_hand = pick == 1;
        } else if (mode == ZoomMode::Hands) {
          left_hand = zr.uniform() < 0.5;
        }
        ZoomRegion region;
        if (mode == ZoomMode::Head) {
          region.target_joints = {"neck", "head", "head_top"};
          tokens = &face_tokens_;
        } else if (mode == ZoomMode::Hands) {
          region.target_joints = left_hand ? std::vector<std::string>{"l_elbow", "l_wrist"}
                                           : std::vector<std::string>{"r_elbow", "r_wrist"};
          tokens = &hand_tokens_;
        }
        if (!region.target_joints.empty()) {
          ZoomCrop zc = zoom_crop(*skeleton_, cam, region);
          crop = zc.rect;
          if (zc.fell_back) tokens = &base_tokens_;
        }
      }
    }

    // conditioning image for this view
    SkeletonRaster raster = rasterize_skeleton(*skeleton_, cam, stage.upsample_res, stage.upsample_res, crop);
    if (cfg_.audit_conditioning) {
      SkeletonRaster again = rasterize_skeleton(*skeleton_, cam, stage.upsample_res, stage.upsample_res, crop);
      if (again.image.data != raster.image.data)
        throw ContractError("distill audit: conditioning raster not reproducible");
    }

    Vec3<T> bg;
    if (cfg_.random_background) {
      double g = r.child(2).uniform();
      bg = {T(g), T(g), T(g)};
    } else {
      bg = cfg_.background.cast<T>();
    }

    auto render = render_image(*field_, cam, stage.render_res, stage.render_res, bg, cfg_.n_samples_per_ray,
                               r.child(3), cfg_.workers, crop);
    Image<T> up01 = upsample_bilinear(render.color, stage.upsample_res, stage.upsample_res);

    Rng tr = r.child(4);
    int t = sds_timestep_sampler(step_, cfg_.total_steps, t_lo_, t_hi_, cfg_.anneal_t_hi, anneal_floor_, tr);
    Rng nr = r.child(5);
    Image<T> noise = sample_noise<T>(stage.upsample_res, stage.upsample_res, 3, nr);
    Image<T> x0d = to_diffusion_domain(up01);
    Image<T> x_t = add_noise(x0d, t, noise, *sched_);

    ConditioningBundle<T> cond;
    cond.tokens = *tokens;
    cond.pose_image = raster.image.template cast<T>();

    ScoreContext<T> ctx{up01, x_t, noise, t, cond, cam, crop, bg, *sched_};
    Image<T> eps_hat = score_->epsilon_hat(ctx);

    StepDiagnostics diag;
    diag.step = step_;
    diag.resolution = stage.render_res;
    diag.t = t;

    bool bad = !eps_hat.finite();
    if (!bad) {
      // w(t) = sigma_t^2; the diffusion-domain scaling (x -> 2x-1) and the
      // per-pixel mean fold into the adjoint.
      double w = sched_->sigma(t) * sched_->sigma(t);
      double scale = 2.0 * w / double(eps_hat.data.size());
      Image<T> d_up(stage.upsample_res, stage.upsample_res, 3);
      for (std::size_t i = 0; i < d_up.data.size(); ++i)
        d_up.data[i] = T(scale * (double(eps_hat.data[i]) - double(noise.data[i])));
      Image<T> d_render = upsample_bilinear_backward(d_up, stage.render_res, stage.render_res);

      std::fill(grad_.begin(), grad_.end(), T(0));
      render_backward(*field_, render.tape, d_render, grad_, cfg_.workers);

      double norm2 = 0;
      for (T g : grad_) norm2 += double(g) * double(g);
      diag.sds_grad_norm = std::sqrt(norm2);

      if (cfg_.lambda_geo > 0.0 && !parts_.empty()) {
        diag.geo_loss = accumulate_geo_gradient(r.child(6));
      }
      for (T g : grad_)
        if (!std::isfinite(double(g))) {
          bad = true;
          break;
        }
      if (!std::isfinite(diag.sds_grad_norm) || !std::isfinite(diag.geo_loss)) bad = true;
      if (!bad) opt_.step(field_->params(), grad_);
    }

    if (bad) {
      diag.skipped = true;
      ++consecutive_skips_;
      if (consecutive_skips_ >= 3)
        throw NumericError("distill: aborted after 3 consecutive skipped steps (non-finite gradients) at step " +
                           std::to_string(step_));
    } else {
      consecutive_skips_ = 0;
    }

    auto clock1 = std::chrono::steady_clock::now();
    diag.wall_ms = std::chrono::duration<double, std::milli>(clock1 - clock0).count();
    ++step_;
    return diag;
  }

  // Runs total_steps updates, streaming metrics and periodic checkpoints.
  std::vector<StepDiagnostics> run(const std::function<void(const StepDiagnostics&)>& on_step = {}) {
    std::ofstream metrics;
    if (!cfg_.metrics_path.empty()) {
      metrics.open(cfg_.metrics_path);
      if (!metrics) throw IoError("distill: cannot open metrics log " + cfg_.metrics_path);
    }
    std::vector<StepDiagnostics> log;
    log.reserve(std::size_t(cfg_.total_steps));
    for (int s = 0; s < cfg_.total_steps; ++s) {
      StepDiagnostics d = sds_step();
      if (metrics.is_open()) {
        char line[256];
        std::snprintf(line, sizeof(line),
                      "{\"step\":%d,\"resolution\":%d,\"sds_grad_norm\":%.9g,\"geo_loss\":%.9g,\"wall_ms\":%.3f}\n",
                      d.step, d.resolution, d.sds_grad_norm, d.geo_loss, d.wall_ms);
        metrics << line;
      }
      if (cfg_.checkpoint_every > 0 && !cfg_.checkpoint_dir.empty() && (s + 1) % cfg_.checkpoint_every == 0)
        field_->save_checkpoint(cfg_.checkpoint_dir + "/field_step" + std::to_string(s + 1) + ".ckpt");
      if (on_step) on_step(d);
      log.push_back(d);
    }
    return log;
  }

 private:
  static std::vector<int> prepend(const Vocabulary& vocab, const std::string& phrase, const std::vector<int>& base) {
    std::vector<int> out = vocab.encode(phrase);
    out.insert(out.end(), base.begin(), base.end());
    return out;
  }

  // Fresh on/off point sets every step (per-step rng substream), densities
  // queried at the current parameters, squared-hinge adjoints pushed through
  // the density head only.
  double accumulate_geo_gradient(Rng rng) {
    auto scratch = field_->make_scratch();
    double total = 0;
    for (std::size_t m = 0; m < parts_.size(); ++m) {
      Rng mr = rng.child(m);
      std::vector<Vec3d> on = sample_on_mesh(parts_[m], geo_.n_on, mr.child(0));
      std::vector<Vec3d> off = sample_near_mesh(parts_[m], geo_.n_off, geo_.eps_surf, geo_.r_off, mr.child(1));
      std::vector<T> tau_on(on.size()), tau_off(off.size());
      for (std::size_t i = 0; i < on.size(); ++i) tau_on[i] = field_->query_density(on[i].cast<T>(), scratch);
      for (std::size_t i = 0; i < off.size(); ++i) tau_off[i] = field_->query_density(off[i].cast<T>(), scratch);
      std::vector<T> d_on(on.size()), d_off(off.size());
      double loss = double(geo_loss<T>(tau_on, tau_off, geo_, d_on, d_off));
      total += loss / double(parts_.size());
      double lam = cfg_.lambda_geo / double(parts_.size());
      for (std::size_t i = 0; i < on.size(); ++i)
        field_->backward_accumulate(on[i].cast<T>(), {T(0), T(0), T(1)}, T(lam) * d_on[i], {}, grad_.data(), scratch);
      for (std::size_t i = 0; i < off.size(); ++i)
        field_->backward_accumulate(off[i].cast<T>(), {T(0), T(0), T(1)}, T(lam) * d_off[i], {}, grad_.data(),
                                    scratch);
    }
    return total;
  }

  RadianceField<T>* field_;
  const ScoreProvider<T>* score_;
  const ArticulatedSkeleton* skeleton_;
  std::vector<PartMesh> parts_;
  ResolutionSchedule schedule_;
  CameraSamplerConfig camera_;
  GeoLossConfig geo_;
  DistillConfig cfg_;
  const NoiseSchedule* sched_;
  Rng root_;
  std::vector<T> grad_;
  Adam<T> opt_;
  std::vector<int> base_tokens_, face_tokens_, hand_tokens_;
  int t_lo_ = 1, t_hi_ = 2, anneal_floor_ = 2;
  int step_ = 0;
  int consecutive_skips_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation helpers

// Voxel IoU between thresholded field density and a ground-truth occupancy
// predicate, on an n^3 grid of voxel centers over the field bbox.
template <typename T>
double occupancy_iou(const RadianceField<T>& field, const std::function<bool(const Vec3d&)>& gt_occupied,
                     double tau_threshold, int n) {
  auto scratch = field.make_scratch();
  const auto& box = field.bbox();
  Vec3<T> e = box.extent();
  std::size_t inter = 0, uni = 0;
  for (int iz = 0; iz < n; ++iz)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        Vec3<T> p{box.lo.x + e.x * T((ix + 0.5) / n), box.lo.y + e.y * T((iy + 0.5) / n),
                  box.lo.z + e.z * T((iz + 0.5) / n)};
        bool pred = double(field.query_density(p, scratch)) >= tau_threshold;
        bool gt = gt_occupied(p.template cast<double>());
        if (pred && gt) ++inter;
        if (pred || gt) ++uni;
      }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

}  // namespace nerfbooth
