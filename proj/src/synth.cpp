// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfbooth/synth.hpp"

#include <filesystem>
#include <fstream>

#include "nerfbooth/denoiser_net.hpp"
#include "nerfbooth/image_io.hpp"

namespace nerfbooth {

namespace fs = std::filesystem;

SpriteStyle sample_sprite_style(Rng rng) {
  auto color = [&rng]() {
    // keep every part clearly above the black background
    return Vec3d{rng.uniform(0.25, 1.0), rng.uniform(0.25, 1.0), rng.uniform(0.25, 1.0)};
  };
  SpriteStyle s;
  s.torso_a = color();
  s.torso_b = color();
  s.arm_color = color();
  s.leg_color = color();
  s.head_color = color();
  s.stripe_count = 3 + int(rng.uniform_index(4));
  return s;
}

PoseParams sample_pose_params(Rng rng) {
  PoseParams p;
  p.l_arm_swing = rng.uniform(-0.5, 0.5);
  p.r_arm_swing = rng.uniform(-0.5, 0.5);
  p.l_elbow_bend = rng.uniform(-0.2, 0.7);
  p.r_elbow_bend = rng.uniform(-0.2, 0.7);
  p.l_leg_swing = rng.uniform(-0.25, 0.25);
  p.r_leg_swing = rng.uniform(-0.25, 0.25);
  p.lean = rng.uniform(-0.12, 0.12);
  return p;
}

Pose2d pose_from_params(const PoseParams& par) {
  Pose2d pose;
  auto put = [&pose](const char* name, double u, double v) { pose.push_back({name, {u, v, 0.0}}); };
  auto step = [](const Vec3d& from, double angle, double len) {
    // angle 0 points straight down (y grows downward)
    return Vec3d{from.x + len * std::sin(angle), from.y + len * std::cos(angle), 0.0};
  };

  Vec3d pelvis{0.5, 0.58, 0.0};
  Vec3d spine = step(pelvis, kPi + par.lean, 0.075);  // upward
  Vec3d chest = step(spine, kPi + par.lean, 0.075);
  Vec3d neck = step(chest, kPi + par.lean, 0.06);
  Vec3d head = step(neck, kPi + par.lean, 0.045);
  Vec3d head_top = step(head, kPi + par.lean, 0.055);

  Vec3d l_sh{chest.x + 0.075, chest.y + 0.02, 0};
  Vec3d r_sh{chest.x - 0.075, chest.y + 0.02, 0};
  // A-pose: upper arms hang outward/downward, swing perturbs them
  Vec3d l_el = step(l_sh, 0.55 + par.l_arm_swing, 0.105);
  Vec3d r_el = step(r_sh, -0.55 - par.r_arm_swing, 0.105);
  Vec3d l_wr = step(l_el, 0.25 + par.l_arm_swing + par.l_elbow_bend, 0.10);
  Vec3d r_wr = step(r_el, -0.25 - par.r_arm_swing - par.r_elbow_bend, 0.10);

  Vec3d l_hip{pelvis.x + 0.042, pelvis.y + 0.02, 0};
  Vec3d r_hip{pelvis.x - 0.042, pelvis.y + 0.02, 0};
  Vec3d l_kn = step(l_hip, par.l_leg_swing, 0.13);
  Vec3d r_kn = step(r_hip, par.r_leg_swing, 0.13);
  Vec3d l_an = step(l_kn, par.l_leg_swing * 0.5, 0.125);
  Vec3d r_an = step(r_kn, par.r_leg_swing * 0.5, 0.125);

  put("pelvis", pelvis.x, pelvis.y);
  put("spine", spine.x, spine.y);
  put("chest", chest.x, chest.y);
  put("neck", neck.x, neck.y);
  put("head", head.x, head.y);
  put("head_top", head_top.x, head_top.y);
  put("l_shoulder", l_sh.x, l_sh.y);
  put("l_elbow", l_el.x, l_el.y);
  put("l_wrist", l_wr.x, l_wr.y);
  put("r_shoulder", r_sh.x, r_sh.y);
  put("r_elbow", r_el.x, r_el.y);
  put("r_wrist", r_wr.x, r_wr.y);
  put("l_hip", l_hip.x, l_hip.y);
  put("l_knee", l_kn.x, l_kn.y);
  put("l_ankle", l_an.x, l_an.y);
  put("r_hip", r_hip.x, r_hip.y);
  put("r_knee", r_kn.x, r_kn.y);
  put("r_ankle", r_an.x, r_an.y);
  for (auto& [name, p] : pose) {
    p.x = std::clamp(p.x, 0.02, 0.98);
    p.y = std::clamp(p.y, 0.02, 0.98);
  }
  return pose;
}

namespace {

const Vec3d* find_joint(const Pose2d& pose, const char* name) {
  for (const auto& [n, p] : pose)
    if (n == name) return &p;
  return nullptr;
}

void draw_limb(SpriteRender& out, const Pose2d& pose, const char* a, const char* b, double radius_px,
               const Vec3d& color) {
  const Vec3d* pa = find_joint(pose, a);
  const Vec3d* pb = find_joint(pose, b);
  if (!pa || !pb) return;
  int w = out.image.w, h = out.image.h;
  draw_segment_aa(out.image, pa->x * w - 0.5, pa->y * h - 0.5, pb->x * w - 0.5, pb->y * h - 0.5, radius_px, color);
  draw_segment_aa(out.mask, pa->x * w - 0.5, pa->y * h - 0.5, pb->x * w - 0.5, pb->y * h - 0.5, radius_px, {1, 1, 1});
}

}  // namespace

SpriteRender draw_sprite(const Pose2d& pose, const SpriteStyle& style, int size) {
  SpriteRender out;
  out.image = Image<double>(size, size, 3, 0.0);
  out.mask = Image<double>(size, size, 1, 0.0);
  double arm_r = 0.028 * size, leg_r = 0.032 * size, torso_r = 0.055 * size;

  draw_limb(out, pose, "l_hip", "l_knee", leg_r, style.leg_color);
  draw_limb(out, pose, "l_knee", "l_ankle", leg_r, style.leg_color * 0.8);
  draw_limb(out, pose, "r_hip", "r_knee", leg_r, style.leg_color);
  draw_limb(out, pose, "r_knee", "r_ankle", leg_r, style.leg_color * 0.8);

  // striped torso: alternate bands along pelvis -> chest
  const Vec3d* pelvis = find_joint(pose, "pelvis");
  const Vec3d* chest = find_joint(pose, "chest");
  if (pelvis && chest) {
    int bands = std::max(2, style.stripe_count);
    for (int b = 0; b < bands; ++b) {
      double t0 = double(b) / bands, t1 = double(b + 1) / bands;
      Vec3d a = *pelvis + (*chest - *pelvis) * t0;
      Vec3d c = *pelvis + (*chest - *pelvis) * t1;
      const Vec3d& col = (b % 2 == 0) ? style.torso_a : style.torso_b;
      draw_segment_aa(out.image, a.x * size - 0.5, a.y * size - 0.5, c.x * size - 0.5, c.y * size - 0.5, torso_r, col);
      draw_segment_aa(out.mask, a.x * size - 0.5, a.y * size - 0.5, c.x * size - 0.5, c.y * size - 0.5, torso_r,
                      {1, 1, 1});
    }
  }

  draw_limb(out, pose, "l_shoulder", "l_elbow", arm_r, style.arm_color);
  draw_limb(out, pose, "l_elbow", "l_wrist", arm_r, style.arm_color * 0.85);
  draw_limb(out, pose, "r_shoulder", "r_elbow", arm_r, style.arm_color);
  draw_limb(out, pose, "r_elbow", "r_wrist", arm_r, style.arm_color * 0.85);

  const Vec3d* head = find_joint(pose, "head");
  const Vec3d* head_top = find_joint(pose, "head_top");
  if (head && head_top) {
    double cx = 0.5 * (head->x + head_top->x) * size - 0.5;
    double cy = 0.5 * (head->y + head_top->y) * size - 0.5;
    double r = 0.5 * (head_top->y - head->y < 0 ? head->y - head_top->y : head_top->y - head->y) * size + 0.02 * size;
    draw_disc_aa(out.image, cx, cy, r, style.head_color);
    draw_disc_aa(out.mask, cx, cy, r, {1, 1, 1});
  }

  // binarize the coverage and mask the image, so background pixels are the
  // exact declared constant (black)
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      bool fg = out.mask.at(0, y, x) >= 0.5;
      out.mask.at(0, y, x) = fg ? 1.0 : 0.0;
      if (!fg)
        for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = 0.0;
    }
  return out;
}

std::vector<std::string> dataset_vocabulary() {
  return {"<null>", "a", "photo", "of", "figure", "sks", "face", "hand"};
}

ClassSample make_class_sample(Rng rng, int image_size) {
  SpriteStyle style = sample_sprite_style(rng.child(1));
  PoseParams params = sample_pose_params(rng.child(2));
  ClassSample cs;
  cs.pose = pose_from_params(params);
  cs.image = draw_sprite(cs.pose, style, image_size).image;
  return cs;
}

void write_fewshot_dataset(const std::string& dir, int n_examples, int image_size, std::uint64_t seed) {
  if (n_examples < 1) throw ConfigError("synth-data: need at least one example");
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  fs::create_directories(root / "masks", ec);
  fs::create_directories(root / "poses", ec);
  fs::create_directories(root / "captions", ec);
  if (ec) throw IoError("synth-data: cannot create dataset directories under " + dir);

  Vocabulary vocab(dataset_vocabulary());
  vocab.save((root / "vocab.txt").string());

  // reference copies of the canonical rig and part meshes in the documented
  // formats
  fs::create_directories(root / "assets", ec);
  ArticulatedSkeleton skel = canonical_skeleton();
  save_skeleton_json((root / "assets" / "skeleton.json").string(), skel);
  save_obj((root / "assets" / "hand_l.obj").string(), make_hand_mesh(skel, true));
  save_obj((root / "assets" / "hand_r.obj").string(), make_hand_mesh(skel, false));
  save_obj((root / "assets" / "face.obj").string(), make_face_mesh(skel));

  Rng root_rng(seed, 0x51);
  SpriteStyle subject_style = sample_sprite_style(root_rng.child(0));
  for (int i = 0; i < n_examples; ++i) {
    char stem[16];
    std::snprintf(stem, sizeof(stem), "ex%02d", i);
    PoseParams params = sample_pose_params(root_rng.child(100 + std::uint64_t(i)));
    Pose2d pose = pose_from_params(params);
    SpriteRender sprite = draw_sprite(pose, subject_style, image_size);
    write_png((root / "images" / (std::string(stem) + ".png")).string(), sprite.image);
    write_png((root / "masks" / (std::string(stem) + ".png")).string(), sprite.mask);
    save_pose2d_json((root / "poses" / (std::string(stem) + ".json")).string(), pose);
    std::ofstream cap((root / "captions" / (std::string(stem) + ".txt")).string());
    if (!cap) throw IoError("synth-data: cannot write caption for " + std::string(stem));
    cap << "a photo of sks figure\n";
  }
}

}  // namespace nerfbooth
