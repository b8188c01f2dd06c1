// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "nerfbooth/core.hpp"
#include "nerfbooth/image.hpp"

namespace nerfbooth {

constexpr double kPsnrSentinelDb = 99.0;

// 10 log10(peak^2 / MSE); identical images return +infinity (serialized
// reports cap at the 99 dB sentinel).
template <typename T>
double psnr(const Image<T>& a, const Image<T>& b, double peak = 1.0) {
  if (!a.same_shape(b)) throw ContractError("psnr: shape mismatch");
  double m = double(mse(a, b));
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

struct SsimConfig {
  int window = 11;
  double k1 = 0.01;
  double k2 = 0.03;
  double sigma = 1.5;
  double dynamic_range = 1.0;
};

// Windowed SSIM with a Gaussian window (separable filtering over the five
// moment planes), averaged over valid window positions and channels.
template <typename T>
double ssim(const Image<T>& a, const Image<T>& b, const SsimConfig& cfg = {}) {
  if (!a.same_shape(b)) throw ContractError("ssim: shape mismatch");
  if (cfg.window % 2 == 0 || cfg.window < 3) throw ContractError("ssim: window must be odd and >= 3");
  if (a.h < cfg.window || a.w < cfg.window) throw ContractError("ssim: image smaller than window");

  const int W = cfg.window, R = W / 2;
  std::vector<double> kernel(static_cast<std::size_t>(W));
  double ksum = 0;
  for (int i = 0; i < W; ++i) {
    double x = i - R;
    kernel[std::size_t(i)] = std::exp(-x * x / (2 * cfg.sigma * cfg.sigma));
    ksum += kernel[std::size_t(i)];
  }
  for (double& k : kernel) k /= ksum;

  const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
  const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
  const int vh = a.h - W + 1, vw = a.w - W + 1;

  auto filter_valid = [&](const std::vector<double>& plane, int h, int w, std::vector<double>& out) {
    // horizontal then vertical, valid region only
    std::vector<double> tmp(std::size_t(h) * vw);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < vw; ++x) {
        double acc = 0;
        for (int k = 0; k < W; ++k) acc += kernel[std::size_t(k)] * plane[std::size_t(y) * w + x + k];
        tmp[std::size_t(y) * vw + x] = acc;
      }
    out.assign(std::size_t(vh) * vw, 0.0);
    for (int y = 0; y < vh; ++y)
      for (int x = 0; x < vw; ++x) {
        double acc = 0;
        for (int k = 0; k < W; ++k) acc += kernel[std::size_t(k)] * tmp[std::size_t(y + k) * vw + x];
        out[std::size_t(y) * vw + x] = acc;
      }
  };

  double total = 0;
  std::size_t n = std::size_t(a.h) * a.w;
  std::vector<double> xa(n), xb(n), xaa(n), xbb(n), xab(n);
  std::vector<double> mu_a, mu_b, raw_aa, raw_bb, raw_ab;
  for (int c = 0; c < a.c; ++c) {
    const T* pa = a.plane_ptr(c);
    const T* pb = b.plane_ptr(c);
    for (std::size_t i = 0; i < n; ++i) {
      xa[i] = double(pa[i]);
      xb[i] = double(pb[i]);
      xaa[i] = xa[i] * xa[i];
      xbb[i] = xb[i] * xb[i];
      xab[i] = xa[i] * xb[i];
    }
    filter_valid(xa, a.h, a.w, mu_a);
    filter_valid(xb, a.h, a.w, mu_b);
    filter_valid(xaa, a.h, a.w, raw_aa);
    filter_valid(xbb, a.h, a.w, raw_bb);
    filter_valid(xab, a.h, a.w, raw_ab);
    double acc = 0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      double ma = mu_a[i], mb = mu_b[i];
      double va = raw_aa[i] - ma * ma;
      double vb = raw_bb[i] - mb * mb;
      double cov = raw_ab[i] - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total += acc / double(mu_a.size());
  }
  return total / a.c;
}

struct MetricReport {
  std::vector<double> per_view_psnr;  // capped at the sentinel
  std::vector<double> per_view_ssim;

  void add(double psnr_db, double ssim_val) {
    per_view_psnr.push_back(std::min(psnr_db, kPsnrSentinelDb));
    per_view_ssim.push_back(ssim_val);
  }
  double mean_psnr() const { return mean(per_view_psnr); }
  double min_psnr() const { return minimum(per_view_psnr); }
  double mean_ssim() const { return mean(per_view_ssim); }
  double min_ssim() const { return minimum(per_view_ssim); }

  std::string to_json() const;
  std::string to_table() const;

 private:
  static double mean(const std::vector<double>& v) {
    if (v.empty()) return 0;
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
  }
  static double minimum(const std::vector<double>& v) {
    if (v.empty()) return 0;
    return *std::min_element(v.begin(), v.end());
  }
};

}  // namespace nerfbooth
