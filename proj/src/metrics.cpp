// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfbooth/metrics.hpp"

#include <json.hpp>

#include <cstdio>

namespace nerfbooth {

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["per_view"] = nlohmann::json::array();
  for (std::size_t i = 0; i < per_view_psnr.size(); ++i)
    j["per_view"].push_back({{"view", i}, {"psnr_db", per_view_psnr[i]}, {"ssim", per_view_ssim[i]}});
  j["mean_psnr_db"] = mean_psnr();
  j["min_psnr_db"] = min_psnr();
  j["mean_ssim"] = mean_ssim();
  j["min_ssim"] = min_ssim();
  return j.dump(2);
}

std::string MetricReport::to_table() const {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-6s %12s %10s\n", "view", "psnr[dB]", "ssim");
  out += line;
  for (std::size_t i = 0; i < per_view_psnr.size(); ++i) {
    std::snprintf(line, sizeof(line), "%-6zu %12.4f %10.6f\n", i, per_view_psnr[i], per_view_ssim[i]);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-6s %12.4f %10.6f\n", "mean", mean_psnr(), mean_ssim());
  out += line;
  std::snprintf(line, sizeof(line), "%-6s %12.4f %10.6f\n", "min", min_psnr(), min_ssim());
  out += line;
  return out;
}

}  // namespace nerfbooth
