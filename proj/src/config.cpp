// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfbooth/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace nerfbooth {

using nlohmann::json;

namespace {

// Strict object view: every key must be consumed by a get/sub call.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError("config: " + path_ + " must be an object");
  }

  ~StrictObject() = default;

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_->contains(key)) return;
    try {
      out = j_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: bad value type for " + path_ + "." + key);
    }
  }

  void get_vec3(const char* key, Vec3d& out) {
    seen_.insert(key);
    if (!j_->contains(key)) return;
    const json& arr = j_->at(key);
    if (!arr.is_array() || arr.size() != 3) throw ConfigError("config: " + path_ + "." + key + " must be [x,y,z]");
    out = {arr.at(0).get<double>(), arr.at(1).get<double>(), arr.at(2).get<double>()};
  }

  void get_range(const char* key, double& lo, double& hi) {
    seen_.insert(key);
    if (!j_->contains(key)) return;
    const json& arr = j_->at(key);
    if (!arr.is_array() || arr.size() != 2) throw ConfigError("config: " + path_ + "." + key + " must be [lo,hi]");
    lo = arr.at(0).get<double>();
    hi = arr.at(1).get<double>();
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_->contains(key);
  }

  const json& sub(const char* key) {
    seen_.insert(key);
    return j_->at(key);
  }

  void finish() const {
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError("config: unknown key '" + (path_.empty() ? it.key() : path_ + "." + it.key()) + "'");
  }

 private:
  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

ResolutionStage parse_stage(const json& j, const std::string& path) {
  StrictObject o(j, path);
  ResolutionStage s;
  o.get("start", s.start_step);
  o.get("render", s.render_res);
  o.get("upsample", s.upsample_res);
  std::string zoom = "full";
  o.get("zoom", zoom);
  s.mode = zoom_mode_from_string(zoom);
  o.get("zoom_prob", s.zoom_prob);
  o.finish();
  return s;
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.diffusion.image_size = 32;
  // three stages at 0% / 40% / 75% of the default 2000-step run
  cfg.schedule_stages = {{0, 64, 64, ZoomMode::FullBody, 0.0},
                         {800, 96, 128, ZoomMode::RandomPart, 0.3},
                         {1500, 128, 256, ZoomMode::RandomPart, 0.5}};
  return cfg;
}

RunConfig parse_run_config_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg = default_run_config();
  StrictObject root(j, "");

  root.get("seed", cfg.seed);
  root.get("precision", cfg.precision);
  if (cfg.precision != "f32" && cfg.precision != "f64")
    throw ConfigError("config: precision must be f32 or f64");
  root.get("workers", cfg.workers);

  if (root.has("paths")) {
    StrictObject o(root.sub("paths"), "paths");
    o.get("dataset_dir", cfg.paths.dataset_dir);
    o.get("checkpoint_dir", cfg.paths.checkpoint_dir);
    o.get("output_dir", cfg.paths.output_dir);
    o.finish();
  }
  if (root.has("field")) {
    StrictObject o(root.sub("field"), "field");
    o.get("levels", cfg.field.grid.levels);
    o.get("base_resolution", cfg.field.grid.base_resolution);
    o.get("growth", cfg.field.grid.growth);
    o.get("table_size_log2", cfg.field.grid.table_size_log2);
    o.get("feature_dim", cfg.field.grid.feature_dim);
    o.get("hidden_dim", cfg.field.hidden_dim);
    o.get("hidden_layers", cfg.field.hidden_layers);
    o.get_vec3("bbox_min", cfg.field.bbox_lo);
    o.get_vec3("bbox_max", cfg.field.bbox_hi);
    o.get("blob_scale", cfg.field.blob_scale);
    o.get("blob_radius", cfg.field.blob_radius);
    o.finish();
  }
  if (root.has("render")) {
    StrictObject o(root.sub("render"), "render");
    o.get("samples_per_ray", cfg.render.samples_per_ray);
    o.get_vec3("background", cfg.render.background);
    o.get("random_background", cfg.render.random_background);
    o.get("turntable_resolution", cfg.render.turntable_resolution);
    o.get("turntable_radius", cfg.render.turntable_radius);
    o.get("turntable_elev_deg", cfg.render.turntable_elev_deg);
    o.get("turntable_fov_deg", cfg.render.turntable_fov_deg);
    o.finish();
  }
  if (root.has("diffusion")) {
    StrictObject o(root.sub("diffusion"), "diffusion");
    o.get("t_max", cfg.diffusion.t_max);
    o.get("image_size", cfg.diffusion.image_size);
    o.get("channels", cfg.diffusion.channels);
    o.get("pose_channels", cfg.diffusion.pose_channels);
    o.get("emb_dim", cfg.diffusion.emb_dim);
    o.get("cond_dim", cfg.diffusion.cond_dim);
    o.get("t_channels", cfg.diffusion.t_channels);
    o.finish();
  }
  if (root.has("synth")) {
    StrictObject o(root.sub("synth"), "synth");
    o.get("examples", cfg.synth.examples);
    o.get("image_size", cfg.synth.image_size);
    o.finish();
  }
  if (root.has("pretrain")) {
    StrictObject o(root.sub("pretrain"), "pretrain");
    o.get("steps", cfg.pretrain.steps);
    o.get("lr", cfg.pretrain.lr);
    o.get("batch", cfg.pretrain.batch);
    o.get("null_dropout", cfg.pretrain.null_dropout);
    o.finish();
  }
  if (root.has("booth")) {
    StrictObject o(root.sub("booth"), "booth");
    o.get("lambda_cppl", cfg.booth.lambda_cppl);
    o.get("prior_count", cfg.booth.prior_count);
    o.get("steps", cfg.booth.steps);
    o.get("lr", cfg.booth.lr);
    o.get("lr_text", cfg.booth.lr_text);
    o.get("batch_fewshot", cfg.booth.batch_fewshot);
    o.get("batch_prior", cfg.booth.batch_prior);
    o.get("sampler_steps", cfg.booth.sampler_steps);
    o.get("subject_token", cfg.booth.subject_token);
    o.finish();
  }
  if (root.has("distill")) {
    StrictObject o(root.sub("distill"), "distill");
    o.get("steps", cfg.distill.total_steps);
    o.get("lambda_geo", cfg.distill.lambda_geo);
    o.get("guidance_weight", cfg.distill.guidance_weight);
    o.get("t_lo_frac", cfg.distill.t_lo_frac);
    o.get("t_hi_frac", cfg.distill.t_hi_frac);
    o.get("anneal_t_hi", cfg.distill.anneal_t_hi);
    o.get("anneal_floor_frac", cfg.distill.anneal_floor_frac);
    o.get("lr_tables", cfg.distill.lr_tables);
    o.get("lr_heads", cfg.distill.lr_heads);
    o.get("checkpoint_every", cfg.distill.checkpoint_every);
    o.get("audit_conditioning", cfg.distill.audit_conditioning);
    o.get("prompt", cfg.distill.prompt);
    o.finish();
  }
  if (root.has("camera")) {
    StrictObject o(root.sub("camera"), "camera");
    o.get_range("radius", cfg.camera.radius_min, cfg.camera.radius_max);
    o.get_range("elevation_deg", cfg.camera.elev_min_deg, cfg.camera.elev_max_deg);
    o.get_range("fov_deg", cfg.camera.fov_min_deg, cfg.camera.fov_max_deg);
    o.get("lookat_jitter", cfg.camera.lookat_jitter);
    o.get("near", cfg.camera.near);
    o.get("far", cfg.camera.far);
    o.finish();
  }
  if (root.has("schedule")) {
    StrictObject o(root.sub("schedule"), "schedule");
    if (o.has("stages")) {
      const json& stages = o.sub("stages");
      if (!stages.is_array() || stages.empty()) throw ConfigError("config: schedule.stages must be a non-empty array");
      cfg.schedule_stages.clear();
      for (std::size_t i = 0; i < stages.size(); ++i)
        cfg.schedule_stages.push_back(parse_stage(stages.at(i), "schedule.stages[" + std::to_string(i) + "]"));
    }
    o.finish();
  }
  if (root.has("geo")) {
    StrictObject o(root.sub("geo"), "geo");
    o.get("tau_min", cfg.geo.tau_min);
    o.get("tau_max", cfg.geo.tau_max);
    o.get("eps_surf", cfg.geo.eps_surf);
    o.get("r_off", cfg.geo.r_off);
    o.get("n_on", cfg.geo.n_on);
    o.get("n_off", cfg.geo.n_off);
    o.finish();
  }
  root.finish();

  // cross-field validation that does not need the dataset
  ResolutionSchedule validate_stages(cfg.schedule_stages);
  (void)validate_stages;
  cfg.geo.validate();
  cfg.booth.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_run_config_json(text);
}

}  // namespace nerfbooth
