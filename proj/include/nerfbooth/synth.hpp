// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "nerfbooth/geometry.hpp"
#include "nerfbooth/image.hpp"
#include "nerfbooth/rng.hpp"

namespace nerfbooth {

// Procedural articulated sprite: a colored stick figure with a striped torso,
// rendered from 2D forward kinematics. Stands in for foreground-masked photo
// subjects; the generator draws from the same joints it writes to the pose
// files, so reprojection tests close the loop.

struct SpriteStyle {
  Vec3d torso_a{0.9, 0.2, 0.2};
  Vec3d torso_b{0.95, 0.85, 0.2};
  Vec3d arm_color{0.2, 0.5, 0.9};
  Vec3d leg_color{0.3, 0.8, 0.4};
  Vec3d head_color{0.95, 0.75, 0.6};
  int stripe_count = 5;
};

SpriteStyle sample_sprite_style(Rng rng);

struct PoseParams {
  double l_arm_swing = 0.0;  // radians around the shoulder
  double r_arm_swing = 0.0;
  double l_elbow_bend = 0.0;
  double r_elbow_bend = 0.0;
  double l_leg_swing = 0.0;
  double r_leg_swing = 0.0;
  double lean = 0.0;
};

PoseParams sample_pose_params(Rng rng);

// Joint names match the canonical 3D skeleton so the shared bone palette and
// pose rasterizer apply unchanged. Coordinates are normalized, y down.
Pose2d pose_from_params(const PoseParams& params);

struct SpriteRender {
  Image<double> image;  // 3 x S x S over a black background
  Image<double> mask;   // 1 x S x S coverage
};

SpriteRender draw_sprite(const Pose2d& pose, const SpriteStyle& style, int size);

// Fixed vocabulary shipped with every synthesized dataset. Id 0 is the
// learned-null slot; "sks" is the rare subject token.
std::vector<std::string> dataset_vocabulary();

// Writes the documented few-shot layout: images/*.png, masks/*.png,
// poses/*.json, captions/*.txt, plus vocab.txt. Deterministic per seed.
void write_fewshot_dataset(const std::string& dir, int n_examples, int image_size, std::uint64_t seed);

// In-memory class sample (random style + pose) for pre-training.
struct ClassSample {
  Image<double> image;
  Pose2d pose;
};
ClassSample make_class_sample(Rng rng, int image_size);

}  // namespace nerfbooth
