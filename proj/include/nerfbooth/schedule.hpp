// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "nerfbooth/camera.hpp"
#include "nerfbooth/core.hpp"
#include "nerfbooth/geometry.hpp"
#include "nerfbooth/image.hpp"

namespace nerfbooth {

enum class ZoomMode { FullBody, Head, Hands, RandomPart };

ZoomMode zoom_mode_from_string(const std::string& s);
std::string zoom_mode_to_string(ZoomMode m);

struct ResolutionStage {
  int start_step = 0;
  int render_res = 64;
  int upsample_res = 64;
  ZoomMode mode = ZoomMode::FullBody;
  double zoom_prob = 0.0;
};

// Ordered stages; render resolution may only grow over the run.
class ResolutionSchedule {
 public:
  explicit ResolutionSchedule(std::vector<ResolutionStage> stages) : stages_(std::move(stages)) {
    if (stages_.empty()) throw ConfigError("resolution schedule: no stages");
    int prev_start = -1, prev_res = 0;
    for (const auto& s : stages_) {
      if (s.start_step <= prev_start) throw ConfigError("resolution schedule: start steps must be strictly increasing");
      if (s.render_res < prev_res) throw ConfigError("resolution schedule: render resolution must be non-decreasing");
      if (s.upsample_res < s.render_res) throw ConfigError("resolution schedule: upsample target below render resolution");
      if (s.render_res < 1) throw ConfigError("resolution schedule: resolution must be positive");
      if (s.zoom_prob < 0.0 || s.zoom_prob > 1.0) throw ConfigError("resolution schedule: zoom probability outside [0,1]");
      prev_start = s.start_step;
      prev_res = s.render_res;
    }
  }

  const ResolutionStage& stage_at(int step) const {
    if (step < 0) throw ContractError("resolution schedule: negative step");
    const ResolutionStage* best = &stages_.front();
    for (const auto& s : stages_)
      if (s.start_step <= step) best = &s;
    return *best;
  }

  const std::vector<ResolutionStage>& stages() const { return stages_; }

 private:
  std::vector<ResolutionStage> stages_;
};

struct ZoomRegion {
  std::vector<std::string> target_joints;
  double padding = 0.3;  // fractional inflation of the tight box
};

struct ZoomCrop {
  CropRect rect;
  bool fell_back = false;  // all target joints behind the camera
};

// Tight box of the projected target joints, inflated by the padding factor,
// clamped to [0,1]^2 with a minimum side of 1/16 of the image.
ZoomCrop zoom_crop(const ArticulatedSkeleton& skel, const CameraPose& cam, const ZoomRegion& region);

// Bilinear upsampling with corner alignment, so affine images reproduce
// exactly and equal sizes copy bit-for-bit. Downscaling is rejected.
template <typename T>
Image<T> upsample_bilinear(const Image<T>& src, int th, int tw) {
  if (th < src.h || tw < src.w) throw ContractError("upsample: target below source resolution");
  if (th == src.h && tw == src.w) return src;
  Image<T> out(th, tw, src.c);
  double sy_scale = th > 1 ? double(src.h - 1) / double(th - 1) : 0.0;
  double sx_scale = tw > 1 ? double(src.w - 1) / double(tw - 1) : 0.0;
  for (int c = 0; c < src.c; ++c) {
    const T* sp = src.plane_ptr(c);
    T* op = out.plane_ptr(c);
    for (int y = 0; y < th; ++y) {
      double sy = y * sy_scale;
      int y0 = int(sy);
      int y1 = std::min(y0 + 1, src.h - 1);
      double fy = sy - y0;
      for (int x = 0; x < tw; ++x) {
        double sx = x * sx_scale;
        int x0 = int(sx);
        int x1 = std::min(x0 + 1, src.w - 1);
        double fx = sx - x0;
        double v = (1 - fy) * ((1 - fx) * double(sp[y0 * src.w + x0]) + fx * double(sp[y0 * src.w + x1])) +
                   fy * ((1 - fx) * double(sp[y1 * src.w + x0]) + fx * double(sp[y1 * src.w + x1]));
        op[std::size_t(y) * tw + x] = T(v);
      }
    }
  }
  return out;
}

// Transpose of upsample_bilinear: scatters target adjoints back to source.
template <typename T>
Image<T> upsample_bilinear_backward(const Image<T>& d_out, int sh, int sw) {
  Image<T> d_src(sh, sw, d_out.c, T(0));
  if (d_out.h == sh && d_out.w == sw) {
    d_src.data = d_out.data;
    return d_src;
  }
  double sy_scale = d_out.h > 1 ? double(sh - 1) / double(d_out.h - 1) : 0.0;
  double sx_scale = d_out.w > 1 ? double(sw - 1) / double(d_out.w - 1) : 0.0;
  for (int c = 0; c < d_out.c; ++c) {
    const T* dp = d_out.plane_ptr(c);
    T* sp = d_src.plane_ptr(c);
    for (int y = 0; y < d_out.h; ++y) {
      double sy = y * sy_scale;
      int y0 = int(sy);
      int y1 = std::min(y0 + 1, sh - 1);
      double fy = sy - y0;
      for (int x = 0; x < d_out.w; ++x) {
        double sx = x * sx_scale;
        int x0 = int(sx);
        int x1 = std::min(x0 + 1, sw - 1);
        double fx = sx - x0;
        T d = dp[std::size_t(y) * d_out.w + x];
        sp[y0 * sw + x0] += T((1 - fy) * (1 - fx)) * d;
        sp[y0 * sw + x1] += T((1 - fy) * fx) * d;
        sp[y1 * sw + x0] += T(fy * (1 - fx)) * d;
        sp[y1 * sw + x1] += T(fy * fx) * d;
      }
    }
  }
  return d_src;
}

}  // namespace nerfbooth
