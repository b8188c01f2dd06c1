// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "nerfbooth/config.hpp"
#include "nerfbooth/pipeline.hpp"
#include "nerfbooth/serialize.hpp"

using namespace nerfbooth;
namespace fs = std::filesystem;

namespace {

std::string cli() { return NB_CLI; }

int run_cli(const std::string& args) {
  std::string cmd = cli() + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::uint64_t dir_fingerprint(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir).string());
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& rel : files) {
    h = fnv1a64(rel.data(), rel.size(), h);
    std::uint64_t fh = hash_file(dir + "/" + rel);
    h = fnv1a64(&fh, 8, h);
  }
  return h;
}

std::string write_config(const std::string& dir, const std::string& body) {
  std::string path = dir + "/run.json";
  std::ofstream f(path);
  f << body;
  return path;
}

const char* kTinyConfig = R"({
  "seed": 5,
  "workers": 2,
  "paths": {"dataset_dir": "%D/data", "checkpoint_dir": "%D/ckpt", "output_dir": "%D/out"},
  "synth": {"examples": 3, "image_size": 24},
  "diffusion": {"t_max": 120, "channels": 8, "pose_channels": 4},
  "pretrain": {"steps": 30, "batch": 2},
  "booth": {"steps": 20, "prior_count": 3, "sampler_steps": 8},
  "field": {"levels": 3, "table_size_log2": 9, "hidden_dim": 12},
  "render": {"samples_per_ray": 8, "turntable_resolution": 16},
  "distill": {"steps": 6, "checkpoint_every": 3},
  "schedule": {"stages": [{"start":0,"render":10,"upsample":12,"zoom":"full","zoom_prob":0.0}]},
  "geo": {"n_on": 16, "n_off": 16, "eps_surf": 0.01, "r_off": 0.06}
})";

std::string tiny_config(const std::string& dir) {
  std::string body = kTinyConfig;
  std::string::size_type pos;
  while ((pos = body.find("%D")) != std::string::npos) body.replace(pos, 2, dir);
  return write_config(dir, body);
}

}  // namespace

TEST_CASE("config: unknown keys are rejected with exit code 2") {
  CHECK_THROWS_AS(parse_run_config_json(R"({"sede": 3})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_json(R"({"booth": {"lamda_cppl": 1.0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_json(R"({"precision": "f16"})"), ConfigError);
  CHECK_NOTHROW(parse_run_config_json(R"({"seed": 3, "booth": {"lambda_cppl": 0.5}})"));

  std::string dir = fresh_dir("nb_cli_badcfg");
  std::string cfg = write_config(dir, R"({"sede": 3})");
  CHECK(run_cli("synth-data --config " + cfg) == 2);
  fs::remove_all(dir);
}

TEST_CASE("cli: same seed gives a byte-identical dataset, --seed overrides") {
  std::string dir = fresh_dir("nb_cli_synth");
  std::string cfg = tiny_config(dir);
  REQUIRE(run_cli("synth-data --config " + cfg) == 0);
  std::uint64_t h1 = dir_fingerprint(dir + "/data");
  fs::remove_all(dir + "/data");
  REQUIRE(run_cli("synth-data --config " + cfg) == 0);
  CHECK(dir_fingerprint(dir + "/data") == h1);
  fs::remove_all(dir + "/data");
  REQUIRE(run_cli("synth-data --config " + cfg + " --seed 99") == 0);
  CHECK(dir_fingerprint(dir + "/data") != h1);
  fs::remove_all(dir);
}

TEST_CASE("cli: booth without a base checkpoint exits with the I/O code") {
  std::string dir = fresh_dir("nb_cli_nobase");
  std::string cfg = tiny_config(dir);
  REQUIRE(run_cli("synth-data --config " + cfg) == 0);
  CHECK(run_cli("booth --config " + cfg) == 4);
  fs::remove_all(dir);
}

TEST_CASE("cli: full two-stage pipeline runs and logs one metrics line per step") {
  std::string dir = fresh_dir("nb_cli_full");
  std::string cfg = tiny_config(dir);
  REQUIRE(run_cli("synth-data --config " + cfg) == 0);
  REQUIRE(run_cli("pretrain --config " + cfg) == 0);
  REQUIRE(run_cli("booth --config " + cfg) == 0);
  REQUIRE(run_cli("distill --config " + cfg) == 0);

  std::ifstream metrics(dir + "/out/metrics.ndjson");
  REQUIRE(metrics.good());
  int lines = 0;
  std::string line;
  while (std::getline(metrics, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 6);  // distill.steps
  CHECK(fs::exists(dir + "/ckpt/field_step3.ckpt"));
  CHECK(fs::exists(dir + "/ckpt/field_step6.ckpt"));
  CHECK(fs::exists(dir + "/ckpt/field_final.ckpt"));
  CHECK(fs::exists(dir + "/out/booth_history.json"));

  // rerun determinism at the artifact level
  std::uint64_t f1 = hash_file(dir + "/ckpt/field_final.ckpt");
  std::uint64_t d1 = hash_file(dir + "/ckpt/personalized_denoiser.ckpt");
  REQUIRE(run_cli("booth --config " + cfg) == 0);
  REQUIRE(run_cli("distill --config " + cfg) == 0);
  CHECK(hash_file(dir + "/ckpt/field_final.ckpt") == f1);
  CHECK(hash_file(dir + "/ckpt/personalized_denoiser.ckpt") == d1);
  fs::remove_all(dir);
}

TEST_CASE("cli: single-view turntable equals a direct render bit-exactly") {
  std::string dir = fresh_dir("nb_cli_tt");
  std::string cfg_path = tiny_config(dir);
  RunConfig cfg = load_run_config(cfg_path);

  RadianceField<double> field(cfg.field);
  field.init_params(123);
  fs::create_directories(dir + "/ckpt");
  field.save_checkpoint(dir + "/ckpt/field_final.ckpt");

  REQUIRE(run_cli("turntable --config " + cfg_path + " --views 1") == 0);

  // replicate the view-0 render through the library
  RadianceField<double> loaded = RadianceField<double>::load_checkpoint(dir + "/ckpt/field_final.ckpt");
  CameraPose cam = orbit_camera(loaded.bbox(), 0.0, deg_to_rad(cfg.render.turntable_elev_deg),
                                cfg.render.turntable_radius, deg_to_rad(cfg.render.turntable_fov_deg));
  auto out = render_image(loaded, cam, cfg.render.turntable_resolution, cfg.render.turntable_resolution,
                          cfg.render.background.cast<double>(), cfg.render.samples_per_ray, Rng(cfg.seed, 0xA0).child(0),
                          2);
  Image<double> raw = read_raw_image<double>(dir + "/out/turntable/view000.raw");
  REQUIRE(raw.data.size() == out.color.data.size());
  for (std::size_t i = 0; i < raw.data.size(); ++i) CHECK(raw.data[i] == double(float(out.color.data[i])));

  // 8-view sweep hits the azimuth grid exactly
  REQUIRE(run_cli("turntable --config " + cfg_path + " --views 8") == 0);
  for (int k = 0; k < 8; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "/out/turntable/view%03d.png", k);
    CHECK(fs::exists(dir + name));
  }
  fs::remove_all(dir);
}

TEST_CASE("cli: turntable metrics against its own renders give the sentinel") {
  std::string dir = fresh_dir("nb_cli_self");
  std::string cfg_path = tiny_config(dir);
  RunConfig cfg = load_run_config(cfg_path);
  RadianceField<double> field(cfg.field);
  field.init_params(9);
  fs::create_directories(dir + "/ckpt");
  field.save_checkpoint(dir + "/ckpt/field_final.ckpt");
  REQUIRE(run_cli("turntable --config " + cfg_path + " --views 2") == 0);
  fs::create_directories(dir + "/gt");
  fs::copy(dir + "/out/turntable/view000.png", dir + "/gt/view000.png");
  fs::copy(dir + "/out/turntable/view001.png", dir + "/gt/view001.png");
  REQUIRE(run_cli("turntable --config " + cfg_path + " --views 2 --gt-dir " + dir + "/gt") == 0);
  std::ifstream rep(dir + "/out/turntable_report.json");
  REQUIRE(rep.good());
  std::string text((std::istreambuf_iterator<char>(rep)), std::istreambuf_iterator<char>());
  CHECK(text.find("99.0") != std::string::npos);  // capped sentinel psnr
  fs::remove_all(dir);
}

TEST_CASE("cli: bench reports all throughput keys and honors the gate") {
  std::string dir = fresh_dir("nb_cli_bench");
  std::string cfg_path = tiny_config(dir);
  REQUIRE(run_cli("bench --config " + cfg_path) == 0);  // report-only without baseline
  std::ifstream rep(dir + "/out/bench_report.json");
  std::string text((std::istreambuf_iterator<char>(rep)), std::istreambuf_iterator<char>());
  CHECK(text.find("hash_encode_qps") != std::string::npos);
  CHECK(text.find("rays_per_sec") != std::string::npos);
  CHECK(text.find("denoiser_steps_per_sec") != std::string::npos);

  // gate fires when the stored baseline is artificially doubled
  REQUIRE(run_cli("bench --config " + cfg_path + " --write-baseline") == 0);
  {
    std::ifstream basein(dir + "/out/bench_baseline.json");
    nlohmann::json j;
    basein >> j;
    for (auto& [k, v] : j.items()) j[k] = v.get<double>() * 2.0;
    std::ofstream baseout(dir + "/out/bench_baseline.json");
    baseout << j.dump() << "\n";
  }
  CHECK(run_cli("bench --config " + cfg_path) == 1);
  fs::remove_all(dir);
}

TEST_CASE("pose files: malformed schemas are rejected") {
  std::string dir = fresh_dir("nb_cli_pose");
  std::ofstream(dir + "/bad1.json") << R"({"joints": {"head": [0.5]}})";
  CHECK_THROWS_AS(load_pose2d_json(dir + "/bad1.json"), IoError);
  std::ofstream(dir + "/bad2.json") << R"({"joints": {"head": [0.5, 1.7]}})";
  CHECK_THROWS_AS(load_pose2d_json(dir + "/bad2.json"), IoError);
  std::ofstream(dir + "/bad3.json") << R"({"no_joints": 3})";
  CHECK_THROWS_AS(load_pose2d_json(dir + "/bad3.json"), IoError);
  fs::remove_all(dir);
}
