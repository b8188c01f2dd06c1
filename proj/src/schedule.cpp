// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfbooth/schedule.hpp"

namespace nerfbooth {

ZoomMode zoom_mode_from_string(const std::string& s) {
  if (s == "full") return ZoomMode::FullBody;
  if (s == "head") return ZoomMode::Head;
  if (s == "hands") return ZoomMode::Hands;
  if (s == "random-part") return ZoomMode::RandomPart;
  throw ConfigError("unknown zoom mode '" + s + "' (full|head|hands|random-part)");
}

std::string zoom_mode_to_string(ZoomMode m) {
  switch (m) {
    case ZoomMode::FullBody: return "full";
    case ZoomMode::Head: return "head";
    case ZoomMode::Hands: return "hands";
    case ZoomMode::RandomPart: return "random-part";
  }
  return "full";
}

ZoomCrop zoom_crop(const ArticulatedSkeleton& skel, const CameraPose& cam, const ZoomRegion& region) {
  if (region.target_joints.empty()) throw ContractError("zoom_crop: no target joints");
  CameraBasis basis = CameraBasis::from(cam);
  double u0 = 1e30, v0 = 1e30, u1 = -1e30, v1 = -1e30;
  int in_front = 0;
  for (const auto& name : region.target_joints) {
    const Vec3d& p = skel.joints[std::size_t(skel.index_of(name))].position;
    auto proj = project_point(cam, basis, p, 1.0);
    if (!proj) continue;
    ++in_front;
    u0 = std::min(u0, proj->x);
    u1 = std::max(u1, proj->x);
    v0 = std::min(v0, proj->y);
    v1 = std::max(v1, proj->y);
  }
  if (in_front == 0) return {CropRect{0, 0, 1, 1}, true};

  const double min_side = 1.0 / 16.0;
  double cx = 0.5 * (u0 + u1), cy = 0.5 * (v0 + v1);
  double hw = std::max(0.5 * (u1 - u0) * (1.0 + region.padding), 0.5 * min_side);
  double hh = std::max(0.5 * (v1 - v0) * (1.0 + region.padding), 0.5 * min_side);
  hw = std::min(hw, 0.5);
  hh = std::min(hh, 0.5);
  // shift inside the unit square without shrinking
  cx = std::clamp(cx, hw, 1.0 - hw);
  cy = std::clamp(cy, hh, 1.0 - hh);
  return {CropRect{cx - hw, cy - hh, cx + hw, cy + hh}, false};
}

}  // namespace nerfbooth
