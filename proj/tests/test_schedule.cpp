// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nerfbooth/rng.hpp"
#include "nerfbooth/schedule.hpp"

using namespace nerfbooth;

namespace {
ResolutionSchedule three_stage() {
  return ResolutionSchedule({{0, 16, 16, ZoomMode::FullBody, 0.0},
                             {100, 24, 32, ZoomMode::RandomPart, 0.3},
                             {200, 32, 48, ZoomMode::RandomPart, 0.5}});
}
}  // namespace

TEST_CASE("schedule: stage selection picks the largest start <= step") {
  auto sched = three_stage();
  CHECK(sched.stage_at(0).render_res == 16);
  CHECK(sched.stage_at(99).render_res == 16);
  CHECK(sched.stage_at(100).render_res == 24);
  CHECK(sched.stage_at(150).upsample_res == 32);
  CHECK(sched.stage_at(200).render_res == 32);
  CHECK(sched.stage_at(100000).render_res == 32);  // beyond last start -> last stage
  CHECK_THROWS_AS(sched.stage_at(-1), ContractError);

  // re-verify monotonicity by scan
  int prev = 0;
  for (int s = 0; s < 300; s += 7) {
    int res = sched.stage_at(s).render_res;
    CHECK(res >= prev);
    prev = res;
  }
}

TEST_CASE("schedule: invalid stage lists rejected at construction") {
  CHECK_THROWS_AS(ResolutionSchedule({}), ConfigError);
  CHECK_THROWS_AS(ResolutionSchedule({{0, 32, 32, ZoomMode::FullBody, 0.0}, {0, 32, 32, ZoomMode::FullBody, 0.0}}),
                  ConfigError);
  CHECK_THROWS_AS(ResolutionSchedule({{0, 32, 32, ZoomMode::FullBody, 0.0}, {10, 16, 32, ZoomMode::FullBody, 0.0}}),
                  ConfigError);
  CHECK_THROWS_AS(ResolutionSchedule({{0, 32, 16, ZoomMode::FullBody, 0.0}}), ConfigError);
  CHECK_THROWS_AS(ResolutionSchedule({{0, 32, 32, ZoomMode::FullBody, 1.5}}), ConfigError);
}

TEST_CASE("zoom_crop: contains and centers on the projected head joints") {
  ArticulatedSkeleton skel = canonical_skeleton();
  CameraPose cam;
  cam.position = {0, 0.1, 2.3};
  cam.look_at = {0, 0.1, 0};
  ZoomRegion head{{"neck", "head", "head_top"}, 0.4};
  ZoomCrop crop = zoom_crop(skel, cam, head);
  CHECK_FALSE(crop.fell_back);

  CameraBasis basis = CameraBasis::from(cam);
  double cu = 0, cv = 0;
  for (const auto& name : head.target_joints) {
    auto p = project_point(cam, basis, skel.joints[std::size_t(skel.index_of(name))].position, 1.0);
    REQUIRE(p.has_value());
    CHECK(p->x >= crop.rect.x0);
    CHECK(p->x <= crop.rect.x1);
    CHECK(p->y >= crop.rect.y0);
    CHECK(p->y <= crop.rect.y1);
    cu += p->x / 3.0;
    cv += p->y / 3.0;
  }
  // crop center tracks the joint centroid within the padding slack
  CHECK(std::abs(0.5 * (crop.rect.x0 + crop.rect.x1) - cu) < 0.1);
  CHECK(std::abs(0.5 * (crop.rect.y0 + crop.rect.y1) - cv) < 0.1);
  CHECK(crop.rect.x0 >= 0.0);
  CHECK(crop.rect.y0 >= 0.0);
  CHECK(crop.rect.x1 <= 1.0);
  CHECK(crop.rect.y1 <= 1.0);
}

TEST_CASE("zoom_crop: single joint with zero padding still yields the minimum side") {
  ArticulatedSkeleton skel = canonical_skeleton();
  CameraPose cam;
  cam.position = {0, 0, 2.3};
  cam.look_at = {0, 0, 0};
  ZoomCrop crop = zoom_crop(skel, cam, ZoomRegion{{"head"}, 0.0});
  CHECK_FALSE(crop.fell_back);
  CHECK(crop.rect.width() >= 1.0 / 16.0 - 1e-12);
  CHECK(crop.rect.height() >= 1.0 / 16.0 - 1e-12);
}

TEST_CASE("zoom_crop: all targets behind the camera falls back to full frame") {
  ArticulatedSkeleton skel = canonical_skeleton();
  CameraPose cam;
  cam.position = {0, 0, 2.3};
  cam.look_at = {0, 0, 5.0};  // facing away
  ZoomCrop crop = zoom_crop(skel, cam, ZoomRegion{{"head"}, 0.3});
  CHECK(crop.fell_back);
  CHECK(crop.rect.is_full());
}

TEST_CASE("upsample: identity is bit-exact, constants stay constant") {
  Image<double> img(5, 7, 3);
  Rng r(1);
  for (auto& v : img.data) v = r.uniform();
  Image<double> same = upsample_bilinear(img, 5, 7);
  CHECK(same.data == img.data);

  Image<double> flat(4, 4, 1, 0.37);
  Image<double> up = upsample_bilinear(flat, 9, 13);
  for (double v : up.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));

  CHECK_THROWS_AS(upsample_bilinear(img, 4, 7), ContractError);
}

TEST_CASE("upsample: reproduces affine ramps exactly (bilinear exactness)") {
  const int sh = 9, sw = 11;
  Image<double> ramp(sh, sw, 1);
  for (int y = 0; y < sh; ++y)
    for (int x = 0; x < sw; ++x) ramp.at(0, y, x) = 0.1 + 0.5 * x / (sw - 1.0) + 0.3 * y / (sh - 1.0);
  Image<double> up = upsample_bilinear(ramp, 2 * sh - 1, 2 * sw - 1);
  for (int y = 0; y < up.h; ++y)
    for (int x = 0; x < up.w; ++x) {
      double expect = 0.1 + 0.5 * (x / 2.0) / (sw - 1.0) + 0.3 * (y / 2.0) / (sh - 1.0);
      CHECK(std::abs(up.at(0, y, x) - expect) < 1e-6);
    }
}

TEST_CASE("upsample: preserves [0,1] range and backward is the exact adjoint") {
  Image<double> src(6, 6, 2);
  Rng r(5);
  for (auto& v : src.data) v = r.uniform();
  Image<double> up = upsample_bilinear(src, 17, 13);
  for (double v : up.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  // <d, U s> == <U^T d, s>
  Image<double> d(17, 13, 2);
  for (auto& v : d.data) v = r.normal();
  Image<double> dsrc = upsample_bilinear_backward(d, 6, 6);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < d.data.size(); ++i) lhs += d.data[i] * up.data[i];
  for (std::size_t i = 0; i < src.data.size(); ++i) rhs += dsrc.data[i] * src.data[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}
