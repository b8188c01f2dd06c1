// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nerfbooth/camera.hpp"
#include "nerfbooth/core.hpp"
#include "nerfbooth/image.hpp"
#include "nerfbooth/rng.hpp"

namespace nerfbooth {

// ---------------------------------------------------------------------------
// Articulated skeleton (canonical A-pose)

struct SkeletonJoint {
  std::string name;
  Vec3d position;
};

struct SkeletonBone {
  int parent = -1;
  int child = -1;
  Vec3d color{1, 1, 1};
};

struct ArticulatedSkeleton {
  std::vector<SkeletonJoint> joints;
  std::vector<SkeletonBone> bones;

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < joints.size(); ++i)
      if (joints[i].name == name) return int(i);
    throw ContractError("skeleton: unknown joint '" + name + "'");
  }

  // The bone graph must be a tree rooted at joint 0.
  void validate() const {
    if (joints.empty()) throw ContractError("skeleton: no joints");
    if (bones.size() + 1 != joints.size()) throw ContractError("skeleton: bone count must be joint count - 1");
    std::vector<int> parent_count(joints.size(), 0);
    for (const auto& b : bones) {
      if (b.parent < 0 || b.parent >= int(joints.size()) || b.child < 0 || b.child >= int(joints.size()))
        throw ContractError("skeleton: bone index out of range");
      parent_count[b.child] += 1;
    }
    if (parent_count[0] != 0) throw ContractError("skeleton: root must have no parent");
    for (std::size_t j = 1; j < joints.size(); ++j)
      if (parent_count[j] != 1) throw ContractError("skeleton: joint '" + joints[j].name + "' must have one parent");
    // connectivity via traversal from the root
    std::vector<char> seen(joints.size(), 0);
    seen[0] = 1;
    bool grew = true;
    while (grew) {
      grew = false;
      for (const auto& b : bones)
        if (seen[b.parent] && !seen[b.child]) {
          seen[b.child] = 1;
          grew = true;
        }
    }
    for (std::size_t j = 0; j < joints.size(); ++j)
      if (!seen[j]) throw ContractError("skeleton: joint '" + joints[j].name + "' unreachable from root");
  }
};

// Fixed per-bone palette shared by the 3D skeleton raster and the 2D pose
// raster. Left-side limbs are warm, right-side cool, so renders from opposite
// hemispheres are distinguishable.
struct BonePaletteEntry {
  const char* parent;
  const char* child;
  Vec3d color;
};
const std::vector<BonePaletteEntry>& bone_palette();

// Canonical A-pose humanoid used for distillation conditioning. Fits inside
// the default field bbox.
ArticulatedSkeleton canonical_skeleton();

// ---------------------------------------------------------------------------
// Part meshes and sampling

struct PartMesh {
  std::string label;
  std::vector<Vec3d> vertices;
  std::vector<std::array<int, 3>> triangles;

  void validate() const;
  double triangle_area(int t) const;
  Vec3d triangle_normal(int t) const;
  double total_area() const;
};

// Axis-aligned ellipsoid triangulation (UV sphere topology).
PartMesh make_ellipsoid_mesh(const std::string& label, const Vec3d& center, const Vec3d& radii, int n_theta = 14,
                             int n_phi = 18);

// Low-poly hand/face primitives anchored at the canonical skeleton.
PartMesh make_hand_mesh(const ArticulatedSkeleton& skel, bool left);
PartMesh make_face_mesh(const ArticulatedSkeleton& skel);

// Area-weighted triangle selection with uniform barycentric placement.
std::vector<Vec3d> sample_on_mesh(const PartMesh& mesh, int n, Rng rng);

// Unsigned distance from p to the mesh surface (brute force over triangles).
double point_triangle_distance(const Vec3d& p, const Vec3d& a, const Vec3d& b, const Vec3d& c);
double mesh_distance(const Vec3d& p, const PartMesh& mesh);

// Points whose unsigned mesh distance lies in [band_lo, band_hi]: surface
// point + signed normal offset, rejected against the full mesh distance.
std::vector<Vec3d> sample_near_mesh(const PartMesh& mesh, int n, double band_lo, double band_hi, Rng rng);

// ---------------------------------------------------------------------------
// Local geometry margin loss

struct GeoLossConfig {
  double tau_min = 0.5;
  double tau_max = 20.0;
  double eps_surf = 0.002;
  double r_off = 0.05;
  int n_on = 256;
  int n_off = 256;

  void validate() const {
    if (!(tau_min >= 0.0) || !(tau_min < tau_max)) throw ConfigError("geo loss: require 0 <= tau_min < tau_max");
    if (!(eps_surf > 0.0) || !(r_off > eps_surf)) throw ConfigError("geo loss: require 0 < eps_surf < r_off");
    if (n_on < 0 || n_off < 0) throw ConfigError("geo loss: negative sample count");
  }
};

// Squared-hinge margins on densities: on-surface points are pushed above
// tau_max, off-band points below tau_min. Writes dL/dtau per point when the
// gradient spans are non-empty. Empty point sets contribute zero.
template <typename T>
T geo_loss(std::span<const T> tau_on, std::span<const T> tau_off, const GeoLossConfig& cfg, std::span<T> d_on = {},
           std::span<T> d_off = {}) {
  double loss = 0;
  for (std::size_t i = 0; i < tau_on.size(); ++i) {
    double tau = double(tau_on[i]);
    if (!std::isfinite(tau)) throw NumericError("geo loss: non-finite density at on-point");
    double h = std::max(0.0, cfg.tau_max - tau);
    loss += h * h / double(tau_on.size());
    if (!d_on.empty()) d_on[i] = T(-2.0 * h / double(tau_on.size()));
  }
  for (std::size_t i = 0; i < tau_off.size(); ++i) {
    double tau = double(tau_off[i]);
    if (!std::isfinite(tau)) throw NumericError("geo loss: non-finite density at off-point");
    double h = std::max(0.0, tau - cfg.tau_min);
    loss += h * h / double(tau_off.size());
    if (!d_off.empty()) d_off[i] = T(2.0 * h / double(tau_off.size()));
  }
  return T(loss);
}

// ---------------------------------------------------------------------------
// Rasterization (conditioning images)

struct SkeletonRaster {
  Image<double> image;  // 3 x H x W on black
  bool all_behind = false;
};

// Anti-aliased colored bone segments plus joint discs, projected by the
// pinhole model. Pure function of its inputs.
SkeletonRaster rasterize_skeleton(const ArticulatedSkeleton& skel, const CameraPose& cam, int h, int w,
                                  const CropRect& crop = {});

// Named 2D joints in normalized [0,1]^2 image coordinates (x right, y down).
using Pose2d = std::vector<std::pair<std::string, Vec3d>>;  // z unused, kept 0

// Same drawing code over pre-projected 2D joints; bones come from the shared
// palette and are drawn only when both endpoints are present.
Image<double> rasterize_pose2d(const Pose2d& pose, int h, int w);

// low-level AA draw helpers (shared with the sprite generator)
void draw_segment_aa(Image<double>& img, double x0, double y0, double x1, double y1, double radius, const Vec3d& color);
void draw_disc_aa(Image<double>& img, double cx, double cy, double radius, const Vec3d& color);

// ---------------------------------------------------------------------------
// File formats

void save_obj(const std::string& path, const PartMesh& mesh);
PartMesh load_obj(const std::string& path, const std::string& label);

void save_skeleton_json(const std::string& path, const ArticulatedSkeleton& skel);
ArticulatedSkeleton load_skeleton_json(const std::string& path);

void save_pose2d_json(const std::string& path, const Pose2d& pose);
Pose2d load_pose2d_json(const std::string& path);

}  // namespace nerfbooth
