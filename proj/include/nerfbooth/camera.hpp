// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "nerfbooth/core.hpp"

namespace nerfbooth {

// Normalized image-plane rectangle, x right / y down, in [0,1]^2.
struct CropRect {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  bool is_full() const { return x0 == 0.0 && y0 == 0.0 && x1 == 1.0 && y1 == 1.0; }
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

struct CameraPose {
  Vec3d position{0, 0, 2.5};
  Vec3d look_at{0, 0, 0};
  Vec3d up{0, 1, 0};
  double fov_y = deg_to_rad(60.0);
  double near = 0.05;
  double far = 10.0;

  void validate() const {
    if (!(near > 0) || !(far > near)) throw ContractError("camera: require far > near > 0");
    Vec3d f = (look_at - position).normalized();
    if (f.cross(up.normalized()).norm() < 1e-9) throw ContractError("camera: up parallel to view direction");
  }
};

template <typename T>
struct Ray {
  Vec3<T> origin;
  Vec3<T> dir;  // unit
  T t_near, t_far;
};

struct CameraBasis {
  Vec3d forward, right, up;

  static CameraBasis from(const CameraPose& cam) {
    cam.validate();
    CameraBasis b;
    b.forward = (cam.look_at - cam.position).normalized();
    b.right = b.forward.cross(cam.up.normalized()).normalized();
    b.up = b.right.cross(b.forward);
    return b;
  }
};

// Pinhole projection of a world point onto the full image plane, x right / y
// down, (0,0) top-left, (1,1) bottom-right. aspect = W/H of the full image.
// Returns nullopt for points at or behind the camera plane.
inline std::optional<Vec3d> project_point(const CameraPose& cam, const CameraBasis& basis, const Vec3d& p,
                                          double aspect) {
  Vec3d rel = p - cam.position;
  double z = rel.dot(basis.forward);
  if (z <= 1e-9) return std::nullopt;
  double tan_y = std::tan(cam.fov_y * 0.5);
  double tan_x = tan_y * aspect;
  double x = rel.dot(basis.right) / (z * tan_x);
  double y = rel.dot(basis.up) / (z * tan_y);
  return Vec3d{(x + 1.0) * 0.5, (1.0 - y) * 0.5, z};
}

// Rays through pixel centers of an h x w raster covering `crop` of the full
// image plane. The plane geometry is fixed by fov_y and aspect = w/h, so a
// crop samples the same angular region at full fidelity regardless of raster
// size. Row-major output.
template <typename T>
std::vector<Ray<T>> generate_rays(const CameraPose& cam, int h, int w, const CropRect& crop = {}) {
  if (h < 1 || w < 1) throw ContractError("generate_rays: resolution must be at least 1x1");
  if (!(crop.width() > 0.0) || !(crop.height() > 0.0) || crop.x0 < 0 || crop.y0 < 0 || crop.x1 > 1 || crop.y1 > 1)
    throw ContractError("generate_rays: degenerate or out-of-range crop");
  CameraBasis basis = CameraBasis::from(cam);
  double tan_y = std::tan(cam.fov_y * 0.5);
  double tan_x = tan_y * (double(w) / double(h));

  std::vector<Ray<T>> rays;
  rays.reserve(std::size_t(h) * w);
  for (int r = 0; r < h; ++r) {
    double v = crop.y0 + (double(r) + 0.5) / double(h) * crop.height();
    for (int c = 0; c < w; ++c) {
      double u = crop.x0 + (double(c) + 0.5) / double(w) * crop.width();
      Vec3d dir =
          (basis.forward + basis.right * ((2.0 * u - 1.0) * tan_x) + basis.up * ((1.0 - 2.0 * v) * tan_y)).normalized();
      rays.push_back(Ray<T>{cam.position.cast<T>(), dir.cast<T>(), T(cam.near), T(cam.far)});
    }
  }
  return rays;
}

}  // namespace nerfbooth
