// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "nerfbooth/camera.hpp"
#include "nerfbooth/core.hpp"
#include "nerfbooth/image.hpp"
#include "nerfbooth/parallel.hpp"
#include "nerfbooth/rng.hpp"

namespace nerfbooth {

// The renderer is generic over the medium it integrates. A Field type
// provides:
//   bbox()                      -> Aabb<T>
//   make_scratch()              -> per-worker workspace
//   query(p, dir, sigma, rgb, scratch)
//   backward_accumulate(p, dir, d_sigma, d_rgb, grad_ptr, scratch)
//   params()                    (for the tape fingerprint; analytic test
//                                fields return an empty vector)
// The production field is RadianceField; closed-form test media implement the
// same surface with a no-op backward.

template <typename T>
struct PixelShade {
  Vec3<T> color{};
  T alpha{};
  T depth{};
};

template <typename T>
struct SampleRecord {
  T t;
  T sigma;
  Vec3<T> rgb;
};

template <typename T>
struct RayRecord {
  Vec3<T> origin;
  Vec3<T> dir;
  T t_clip1 = T(0);  // far end of the march interval (delta of the last sample)
  std::size_t sample_begin = 0;
  int sample_count = 0;
};

// Sample tape recorded by a forward render; backward replays it in reverse.
// Compositing weights are recomputed from the stored sigmas and field
// activations are recomputed from the stored positions, so the tape stays
// small even for dense marches.
template <typename T>
struct RenderTape {
  int h = 0, w = 0;
  Vec3<T> background{};
  std::vector<RayRecord<T>> rays;  // one per pixel, row-major
  std::vector<SampleRecord<T>> samples;
  std::uint64_t field_fingerprint = 0;
};

template <typename T>
struct RenderOutput {
  Image<T> color;  // h x w x 3
  Image<T> alpha;  // h x w x 1, equals 1 - T_final per pixel
  Image<T> depth;  // h x w x 1, expected termination distance
  RenderTape<T> tape;
};

template <typename T>
std::uint64_t field_fingerprint_of(const std::vector<T>& params) {
  return params.empty() ? 0 : fnv1a64(params.data(), params.size() * sizeof(T));
}

// Stratified march of one ray with transmittance compositing:
//   delta_i = t_{i+1} - t_i (the last delta runs to the clip bound),
//   T_i = exp(-sum_{j<i} sigma_j delta_j), w_i = T_i (1 - exp(-sigma_i delta_i)),
//   color = sum w_i c_i + T_final * background, alpha = sum w_i,
//   depth = sum w_i t_i + T_final * t_far.
// The march interval is the ray's [t_near, t_far] clipped to the field bbox;
// a miss contributes pure background.
template <typename T, typename Field, typename Scratch>
PixelShade<T> march_and_composite(const Field& field, const Ray<T>& ray, int n_samples, Rng rng,
                                  const Vec3<T>& background, Scratch& scratch, std::vector<T>& ts_buf,
                                  RenderTape<T>* tape = nullptr, int pixel_index = -1) {
  if (n_samples < 2) throw ContractError("march_and_composite: n_samples must be >= 2");
  T t0 = ray.t_near, t1 = ray.t_far;
  bool hit = field.bbox().clip_ray(ray.origin, ray.dir, t0, t1);

  PixelShade<T> out;
  RayRecord<T> rec;
  rec.origin = ray.origin;
  rec.dir = ray.dir;
  if (!hit || !(t1 > t0)) {
    out.color = background;
    out.alpha = T(0);
    out.depth = ray.t_far;
    if (tape) {
      rec.t_clip1 = ray.t_far;
      rec.sample_begin = tape->samples.size();
      rec.sample_count = 0;
      tape->rays.push_back(rec);
    }
    return out;
  }

  ts_buf.resize(std::size_t(n_samples));
  T span = t1 - t0;
  for (int i = 0; i < n_samples; ++i) ts_buf[i] = t0 + (T(i) + T(rng.uniform())) / T(n_samples) * span;

  rec.t_clip1 = t1;
  rec.sample_begin = tape ? tape->samples.size() : 0;
  rec.sample_count = n_samples;

  T transmittance = T(1);
  Vec3<T> color{T(0), T(0), T(0)};
  T alpha = T(0), depth = T(0);
  for (int i = 0; i < n_samples; ++i) {
    T ti = ts_buf[i];
    Vec3<T> p = ray.origin + ray.dir * ti;
    T sigma;
    Vec3<T> rgb;
    field.query(p, ray.dir, sigma, rgb, scratch);
    if (!std::isfinite(double(sigma)) || !rgb.finite())
      throw NumericError("march: non-finite field output at pixel " + std::to_string(pixel_index));
    if (tape) tape->samples.push_back(SampleRecord<T>{ti, sigma, rgb});

    T delta = (i + 1 < n_samples ? ts_buf[i + 1] : t1) - ti;
    T a = -T(std::expm1(double(-sigma * delta)));
    T wi = transmittance * a;
    color += rgb * wi;
    alpha += wi;
    depth += wi * ti;
    transmittance *= T(1) - a;
  }
  out.color = color + background * transmittance;
  out.alpha = alpha;
  out.depth = depth + transmittance * t1;
  if (tape) tape->rays.push_back(rec);
  return out;
}

// Per-pixel stratified render. Pixel rows fan out across workers; each worker
// owns a field scratch and writes disjoint rows, so the output is
// bit-identical for any worker count. Pixel jitter comes from
// rng.child(pixel_index).
template <typename T, typename Field>
RenderOutput<T> render_image(const Field& field, const CameraPose& cam, int h, int w, const Vec3<T>& background,
                             int n_samples, const Rng& rng, int workers = 1, const CropRect& crop = {}) {
  std::vector<Ray<T>> rays = generate_rays<T>(cam, h, w, crop);
  RenderOutput<T> out;
  out.color = Image<T>(h, w, 3);
  out.alpha = Image<T>(h, w, 1);
  out.depth = Image<T>(h, w, 1);
  out.tape.h = h;
  out.tape.w = w;
  out.tape.background = background;
  out.tape.field_fingerprint = field_fingerprint_of(field.params());
  std::size_t n_px = std::size_t(h) * w;
  out.tape.rays.resize(n_px);
  out.tape.samples.resize(n_px * std::size_t(n_samples));

  parallel_for(std::size_t(h), workers, [&](std::size_t row0, std::size_t row1, int) {
    auto scratch = field.make_scratch();
    std::vector<T> ts_buf;
    RenderTape<T> local;
    local.background = background;
    for (std::size_t r = row0; r < row1; ++r) {
      for (int c = 0; c < w; ++c) {
        std::size_t px = r * std::size_t(w) + c;
        local.rays.clear();
        local.samples.clear();
        PixelShade<T> shade =
            march_and_composite(field, rays[px], n_samples, rng.child(px), background, scratch, ts_buf, &local, int(px));
        for (int ch = 0; ch < 3; ++ch) out.color.at(ch, int(r), c) = shade.color[ch];
        out.alpha.at(0, int(r), c) = shade.alpha;
        out.depth.at(0, int(r), c) = shade.depth;
        RayRecord<T> rec = local.rays[0];
        std::size_t begin = px * std::size_t(n_samples);
        for (int i = 0; i < rec.sample_count; ++i) out.tape.samples[begin + i] = local.samples[i];
        rec.sample_begin = begin;
        out.tape.rays[px] = rec;
      }
    }
  });
  return out;
}

// Exact reverse-mode pass of the compositing quadrature. d_color is the
// pixel adjoint image (h x w x 3); d_alpha / d_depth are optional (h x w x 1).
// Gradients accumulate into grad (field parameter layout). Per-worker buffers
// merge in worker order, so a fixed worker count reproduces bitwise.
template <typename T, typename Field>
void render_backward(const Field& field, const RenderTape<T>& tape, const Image<T>& d_color, std::vector<T>& grad,
                     int workers = 1, const Image<T>* d_alpha = nullptr, const Image<T>* d_depth = nullptr) {
  if (tape.field_fingerprint != field_fingerprint_of(field.params()))
    throw ContractError("render_backward: tape is stale (field parameters changed since the forward pass)");
  if (d_color.h != tape.h || d_color.w != tape.w || d_color.c != 3)
    throw ContractError("render_backward: adjoint shape mismatch");
  if (grad.size() != field.params().size()) throw ContractError("render_backward: gradient buffer size mismatch");

  int h = tape.h, w = tape.w;
  workers = std::max(1, workers);
  std::size_t nw = std::min<std::size_t>(std::size_t(workers), std::size_t(h));
  std::vector<std::vector<T>> worker_grads(nw);

  parallel_for(std::size_t(h), int(nw), [&](std::size_t row0, std::size_t row1, int widx) {
    auto scratch = field.make_scratch();
    std::vector<T>& g = worker_grads[widx];
    g.assign(grad.size(), T(0));
    std::vector<T> weights, trans;
    for (std::size_t r = row0; r < row1; ++r) {
      for (int c = 0; c < w; ++c) {
        std::size_t px = r * std::size_t(w) + c;
        const RayRecord<T>& rec = tape.rays[px];
        int n = rec.sample_count;
        if (n == 0) continue;
        const SampleRecord<T>* smp = tape.samples.data() + rec.sample_begin;

        Vec3<T> dC{d_color.at(0, int(r), c), d_color.at(1, int(r), c), d_color.at(2, int(r), c)};
        T dA = d_alpha ? d_alpha->at(0, int(r), c) : T(0);
        T dD = d_depth ? d_depth->at(0, int(r), c) : T(0);

        // Recompute weights and transmittance front to back.
        weights.resize(std::size_t(n));
        trans.resize(std::size_t(n) + 1);
        trans[0] = T(1);
        for (int i = 0; i < n; ++i) {
          T delta = (i + 1 < n ? smp[i + 1].t : rec.t_clip1) - smp[i].t;
          T a = -T(std::expm1(double(-smp[i].sigma * delta)));
          weights[i] = trans[i] * a;
          trans[i + 1] = trans[i] * (T(1) - a);
        }
        // Reverse sweep with a suffix accumulator:
        //   dL/dsigma_k = delta_k * (T_{k+1} * g_k - sum_{i>k} w_i g_i - T_n g_bg)
        // where g_i = dC . c_i + dA + dD t_i and g_bg = dC . bg + dD t_far.
        T suffix = dC.dot(tape.background) * trans[n] + dD * trans[n] * rec.t_clip1;
        for (int k = n - 1; k >= 0; --k) {
          T delta = (k + 1 < n ? smp[k + 1].t : rec.t_clip1) - smp[k].t;
          T gk = dC.dot(smp[k].rgb) + dA + dD * smp[k].t;
          T dsigma = delta * (trans[k + 1] * gk - suffix);
          suffix += weights[k] * gk;
          Vec3<T> drgb = dC * weights[k];
          Vec3<T> p = rec.origin + rec.dir * smp[k].t;
          field.backward_accumulate(p, rec.dir, dsigma, drgb, g.data(), scratch);
        }
      }
    }
  });
  for (std::size_t wi = 0; wi < nw; ++wi) {
    const std::vector<T>& g = worker_grads[wi];
    if (g.empty()) continue;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
  }
}

}  // namespace nerfbooth
