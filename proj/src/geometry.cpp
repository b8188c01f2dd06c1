// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfbooth/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace nerfbooth {

const std::vector<BonePaletteEntry>& bone_palette() {
  static const std::vector<BonePaletteEntry> palette = {
      {"pelvis", "spine", {0.20, 0.80, 0.30}},      {"spine", "chest", {0.10, 0.65, 0.25}},
      {"chest", "neck", {0.25, 0.90, 0.45}},        {"neck", "head", {0.95, 0.90, 0.20}},
      {"head", "head_top", {0.85, 0.75, 0.10}},     {"chest", "l_shoulder", {0.95, 0.35, 0.10}},
      {"l_shoulder", "l_elbow", {1.00, 0.20, 0.00}}, {"l_elbow", "l_wrist", {1.00, 0.50, 0.05}},
      {"chest", "r_shoulder", {0.10, 0.35, 0.95}},  {"r_shoulder", "r_elbow", {0.00, 0.40, 1.00}},
      {"r_elbow", "r_wrist", {0.05, 0.80, 1.00}},   {"pelvis", "l_hip", {0.80, 0.20, 0.75}},
      {"l_hip", "l_knee", {0.90, 0.25, 0.85}},      {"l_knee", "l_ankle", {0.95, 0.45, 0.90}},
      {"pelvis", "r_hip", {0.45, 0.15, 0.60}},      {"r_hip", "r_knee", {0.55, 0.20, 0.70}},
      {"r_knee", "r_ankle", {0.65, 0.35, 0.80}},
  };
  return palette;
}

ArticulatedSkeleton canonical_skeleton() {
  // +x is the subject's left in the canonical frame (front faces +z).
  ArticulatedSkeleton s;
  auto add = [&s](const char* name, double x, double y, double z) { s.joints.push_back({name, {x, y, z}}); };
  add("pelvis", 0.00, -0.05, 0.00);
  add("spine", 0.00, 0.12, 0.00);
  add("chest", 0.00, 0.28, 0.00);
  add("neck", 0.00, 0.42, 0.00);
  add("head", 0.00, 0.50, 0.00);
  add("head_top", 0.00, 0.62, 0.00);
  add("l_shoulder", 0.16, 0.38, 0.00);
  add("l_elbow", 0.29, 0.17, 0.00);
  add("l_wrist", 0.38, -0.02, 0.00);
  add("r_shoulder", -0.16, 0.38, 0.00);
  add("r_elbow", -0.29, 0.17, 0.00);
  add("r_wrist", -0.38, -0.02, 0.00);
  add("l_hip", 0.09, -0.12, 0.00);
  add("l_knee", 0.10, -0.40, 0.00);
  add("l_ankle", 0.10, -0.65, 0.00);
  add("r_hip", -0.09, -0.12, 0.00);
  add("r_knee", -0.10, -0.40, 0.00);
  add("r_ankle", -0.10, -0.65, 0.00);
  for (const auto& e : bone_palette())
    s.bones.push_back({s.index_of(e.parent), s.index_of(e.child), e.color});
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Meshes

void PartMesh::validate() const {
  if (vertices.empty() || triangles.empty()) throw ContractError("mesh '" + label + "': empty");
  for (const auto& t : triangles) {
    for (int k = 0; k < 3; ++k)
      if (t[k] < 0 || t[k] >= int(vertices.size())) throw ContractError("mesh '" + label + "': bad triangle index");
  }
  for (std::size_t t = 0; t < triangles.size(); ++t)
    if (triangle_area(int(t)) <= 1e-12) throw ContractError("mesh '" + label + "': degenerate triangle");
}

double PartMesh::triangle_area(int t) const {
  const auto& tri = triangles[std::size_t(t)];
  Vec3d e1 = vertices[tri[1]] - vertices[tri[0]];
  Vec3d e2 = vertices[tri[2]] - vertices[tri[0]];
  return 0.5 * e1.cross(e2).norm();
}

Vec3d PartMesh::triangle_normal(int t) const {
  const auto& tri = triangles[std::size_t(t)];
  Vec3d e1 = vertices[tri[1]] - vertices[tri[0]];
  Vec3d e2 = vertices[tri[2]] - vertices[tri[0]];
  return e1.cross(e2).normalized();
}

double PartMesh::total_area() const {
  double a = 0;
  for (std::size_t t = 0; t < triangles.size(); ++t) a += triangle_area(int(t));
  return a;
}

PartMesh make_ellipsoid_mesh(const std::string& label, const Vec3d& center, const Vec3d& radii, int n_theta,
                             int n_phi) {
  PartMesh m;
  m.label = label;
  // ring vertices plus two poles
  for (int i = 1; i < n_theta; ++i) {
    double theta = kPi * double(i) / n_theta;
    for (int j = 0; j < n_phi; ++j) {
      double phi = 2.0 * kPi * double(j) / n_phi;
      Vec3d p{std::sin(theta) * std::cos(phi) * radii.x, std::cos(theta) * radii.y,
              std::sin(theta) * std::sin(phi) * radii.z};
      m.vertices.push_back(center + p);
    }
  }
  int top = int(m.vertices.size());
  m.vertices.push_back(center + Vec3d{0, radii.y, 0});
  int bottom = int(m.vertices.size());
  m.vertices.push_back(center + Vec3d{0, -radii.y, 0});

  auto ring = [n_phi](int i, int j) { return (i - 1) * n_phi + (j % n_phi); };
  for (int j = 0; j < n_phi; ++j) {
    m.triangles.push_back({top, ring(1, j), ring(1, j + 1)});
    m.triangles.push_back({bottom, ring(n_theta - 1, j + 1), ring(n_theta - 1, j)});
  }
  for (int i = 1; i + 1 < n_theta; ++i) {
    for (int j = 0; j < n_phi; ++j) {
      int a = ring(i, j), b = ring(i, j + 1), c = ring(i + 1, j), d = ring(i + 1, j + 1);
      m.triangles.push_back({a, c, b});
      m.triangles.push_back({b, c, d});
    }
  }
  m.validate();
  return m;
}

PartMesh make_hand_mesh(const ArticulatedSkeleton& skel, bool left) {
  const auto& wrist = skel.joints[std::size_t(skel.index_of(left ? "l_wrist" : "r_wrist"))].position;
  Vec3d center = wrist + Vec3d{left ? 0.03 : -0.03, -0.04, 0.0};
  return make_ellipsoid_mesh(left ? "hand_l" : "hand_r", center, {0.045, 0.065, 0.02});
}

PartMesh make_face_mesh(const ArticulatedSkeleton& skel) {
  const auto& head = skel.joints[std::size_t(skel.index_of("head"))].position;
  return make_ellipsoid_mesh("face", head + Vec3d{0, 0.06, 0.01}, {0.065, 0.085, 0.06});
}

std::vector<Vec3d> sample_on_mesh(const PartMesh& mesh, int n, Rng rng) {
  if (mesh.triangles.empty()) throw ContractError("sample_on_mesh: empty mesh");
  std::vector<double> cum(mesh.triangles.size());
  double acc = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    acc += mesh.triangle_area(int(t));
    cum[t] = acc;
  }
  std::vector<Vec3d> out;
  out.reserve(std::size_t(std::max(0, n)));
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform() * acc;
    std::size_t t = std::size_t(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (t >= mesh.triangles.size()) t = mesh.triangles.size() - 1;
    const auto& tri = mesh.triangles[t];
    double r1 = std::sqrt(rng.uniform());
    double r2 = rng.uniform();
    double wa = 1.0 - r1, wb = r1 * (1.0 - r2), wc = r1 * r2;
    out.push_back(mesh.vertices[tri[0]] * wa + mesh.vertices[tri[1]] * wb + mesh.vertices[tri[2]] * wc);
  }
  return out;
}

double point_triangle_distance(const Vec3d& p, const Vec3d& a, const Vec3d& b, const Vec3d& c) {
  // Ericson, Real-Time Collision Detection 5.1.5
  Vec3d ab = b - a, ac = c - a, ap = p - a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return (p - a).norm();
  Vec3d bp = p - b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return (p - b).norm();
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    double v = d1 / (d1 - d3);
    return (p - (a + ab * v)).norm();
  }
  Vec3d cp = p - c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return (p - c).norm();
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    double w = d2 / (d2 - d6);
    return (p - (a + ac * w)).norm();
  }
  double va = d3 * d6 - d5 * d4;
  if (va <= 0 && d4 - d3 >= 0 && d5 - d6 >= 0) {
    double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + (c - b) * w)).norm();
  }
  double denom = 1.0 / (va + vb + vc);
  double v = vb * denom, w = vc * denom;
  return (p - (a + ab * v + ac * w)).norm();
}

double mesh_distance(const Vec3d& p, const PartMesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tri : mesh.triangles)
    best = std::min(best, point_triangle_distance(p, mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                                                  mesh.vertices[tri[2]]));
  return best;
}

std::vector<Vec3d> sample_near_mesh(const PartMesh& mesh, int n, double band_lo, double band_hi, Rng rng) {
  if (!(band_lo > 0.0) || !(band_hi > band_lo)) throw ContractError("sample_near_mesh: require 0 < band_lo < band_hi");
  if (mesh.triangles.empty()) throw ContractError("sample_near_mesh: empty mesh");
  std::vector<double> cum(mesh.triangles.size());
  double acc = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    acc += mesh.triangle_area(int(t));
    cum[t] = acc;
  }
  std::vector<Vec3d> out;
  out.reserve(std::size_t(std::max(0, n)));
  const int max_attempts = 64;
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
      double u = rng.uniform() * acc;
      std::size_t t = std::size_t(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
      if (t >= mesh.triangles.size()) t = mesh.triangles.size() - 1;
      const auto& tri = mesh.triangles[t];
      double r1 = std::sqrt(rng.uniform());
      double r2 = rng.uniform();
      Vec3d q = mesh.vertices[tri[0]] * (1.0 - r1) + mesh.vertices[tri[1]] * (r1 * (1.0 - r2)) +
                mesh.vertices[tri[2]] * (r1 * r2);
      double offset = rng.uniform(band_lo, band_hi);
      double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      Vec3d p = q + mesh.triangle_normal(int(t)) * (sign * offset);
      double d = mesh_distance(p, mesh);
      if (d >= band_lo && d <= band_hi) {
        out.push_back(p);
        placed = true;
      }
    }
    if (!placed) throw NumericError("sample_near_mesh: rejection failed after bounded attempts");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rasterization

void draw_segment_aa(Image<double>& img, double x0, double y0, double x1, double y1, double radius,
                     const Vec3d& color) {
  double vx = x1 - x0, vy = y1 - y0;
  double len2 = vx * vx + vy * vy;
  int xmin = std::max(0, int(std::floor(std::min(x0, x1) - radius - 1)));
  int xmax = std::min(img.w - 1, int(std::ceil(std::max(x0, x1) + radius + 1)));
  int ymin = std::max(0, int(std::floor(std::min(y0, y1) - radius - 1)));
  int ymax = std::min(img.h - 1, int(std::ceil(std::max(y0, y1) + radius + 1)));
  for (int y = ymin; y <= ymax; ++y) {
    for (int x = xmin; x <= xmax; ++x) {
      double px = x - x0, py = y - y0;
      double t = len2 > 0 ? std::clamp((px * vx + py * vy) / len2, 0.0, 1.0) : 0.0;
      double dx = px - t * vx, dy = py - t * vy;
      double dist = std::sqrt(dx * dx + dy * dy);
      double cov = std::clamp(radius + 0.5 - dist, 0.0, 1.0);
      if (cov <= 0) continue;
      for (int c = 0; c < img.c; ++c) img.at(c, y, x) = color[c] * cov + img.at(c, y, x) * (1.0 - cov);
    }
  }
}

void draw_disc_aa(Image<double>& img, double cx, double cy, double radius, const Vec3d& color) {
  draw_segment_aa(img, cx, cy, cx, cy, radius, color);
}

SkeletonRaster rasterize_skeleton(const ArticulatedSkeleton& skel, const CameraPose& cam, int h, int w,
                                  const CropRect& crop) {
  SkeletonRaster out;
  out.image = Image<double>(h, w, 3, 0.0);
  CameraBasis basis = CameraBasis::from(cam);
  double aspect = double(w) / double(h);

  std::vector<std::optional<Vec3d>> proj(skel.joints.size());
  bool any_front = false;
  for (std::size_t j = 0; j < skel.joints.size(); ++j) {
    proj[j] = project_point(cam, basis, skel.joints[j].position, aspect);
    if (proj[j]) any_front = true;
  }
  if (!any_front) {
    out.all_behind = true;
    return out;
  }
  auto to_px = [&](const Vec3d& uv, double& x, double& y) {
    x = (uv.x - crop.x0) / crop.width() * w - 0.5;
    y = (uv.y - crop.y0) / crop.height() * h - 0.5;
  };
  double bone_r = std::max(0.75, 0.012 * std::min(h, w));
  for (const auto& b : skel.bones) {
    if (!proj[b.parent] || !proj[b.child]) continue;
    double x0, y0, x1, y1;
    to_px(*proj[b.parent], x0, y0);
    to_px(*proj[b.child], x1, y1);
    draw_segment_aa(out.image, x0, y0, x1, y1, bone_r, b.color);
  }
  for (const auto& b : skel.bones) {
    if (!proj[b.child]) continue;
    double x, y;
    to_px(*proj[b.child], x, y);
    draw_disc_aa(out.image, x, y, bone_r * 1.5, b.color);
  }
  return out;
}

Image<double> rasterize_pose2d(const Pose2d& pose, int h, int w) {
  Image<double> img(h, w, 3, 0.0);
  auto find = [&pose](const std::string& name) -> const Vec3d* {
    for (const auto& [n, p] : pose)
      if (n == name) return &p;
    return nullptr;
  };
  double bone_r = std::max(0.75, 0.012 * std::min(h, w));
  for (const auto& e : bone_palette()) {
    const Vec3d* a = find(e.parent);
    const Vec3d* b = find(e.child);
    if (!a || !b) continue;
    draw_segment_aa(img, a->x * w - 0.5, a->y * h - 0.5, b->x * w - 0.5, b->y * h - 0.5, bone_r, e.color);
  }
  for (const auto& e : bone_palette()) {
    const Vec3d* b = find(e.child);
    if (!b) continue;
    draw_disc_aa(img, b->x * w - 0.5, b->y * h - 0.5, bone_r * 1.5, e.color);
  }
  return img;
}

}  // namespace nerfbooth
