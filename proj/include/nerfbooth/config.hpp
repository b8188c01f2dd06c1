// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "nerfbooth/booth.hpp"
#include "nerfbooth/distill.hpp"
#include "nerfbooth/field.hpp"
#include "nerfbooth/schedule.hpp"

namespace nerfbooth {

// Whole-run configuration parsed from one JSON tree. Parsing is strict:
// unknown keys anywhere are a ConfigError, so typos fail loudly instead of
// silently falling back to defaults.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string precision = "f64";  // f32 | f64
  int workers = 0;                // 0 = physical cores

  struct Paths {
    std::string dataset_dir = "data";
    std::string checkpoint_dir = "checkpoints";
    std::string output_dir = "out";
  } paths;

  FieldConfig field;

  struct Render {
    int samples_per_ray = 48;
    Vec3d background{0, 0, 0};
    bool random_background = true;
    int turntable_resolution = 64;
    double turntable_radius = 3.2;
    double turntable_elev_deg = 5.0;
    double turntable_fov_deg = 70.0;
  } render;

  ToyDenoiserConfig diffusion;  // vocab_size filled from the dataset vocab

  struct Synth {
    int examples = 6;
    int image_size = 32;
  } synth;

  PretrainConfig pretrain;
  BoothConfig booth;
  DistillConfig distill;
  CameraSamplerConfig camera;
  std::vector<ResolutionStage> schedule_stages;
  GeoLossConfig geo;
};

RunConfig default_run_config();
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config_json(const std::string& json_text);

}  // namespace nerfbooth
