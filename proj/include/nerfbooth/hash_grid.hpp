// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "nerfbooth/core.hpp"

namespace nerfbooth {

// Multi-resolution hash-grid encoding over the unit cube. Each level overlays
// a virtual grid of N_l = floor(N_min * growth^l) cells per axis; grid-vertex
// features live in a fixed-size table addressed by a spatial hash
// (coordinate-times-prime XOR, masked to a power-of-two table). The encoding
// of a point is the per-level trilinear blend of the 8 surrounding vertex
// entries, levels concatenated coarse to fine.
struct HashGridConfig {
  int levels = 8;
  int base_resolution = 16;
  double growth = 1.5;
  int table_size_log2 = 14;
  int feature_dim = 2;
};

template <typename T>
class HashGridEncoding {
 public:
  HashGridEncoding() = default;

  explicit HashGridEncoding(const HashGridConfig& cfg) : cfg_(cfg) {
    if (cfg.levels < 1 || cfg.base_resolution < 1 || cfg.feature_dim < 1)
      throw ConfigError("hash grid: levels, base_resolution, feature_dim must be positive");
    if (cfg.table_size_log2 < 1 || cfg.table_size_log2 > 30)
      throw ConfigError("hash grid: table_size_log2 out of range");
    table_size_ = std::uint32_t(1) << cfg.table_size_log2;
    int prev = 0;
    for (int l = 0; l < cfg.levels; ++l) {
      int res = int(std::floor(double(cfg.base_resolution) * std::pow(cfg.growth, l)));
      if (res <= prev) throw ConfigError("hash grid: level resolutions must be strictly increasing");
      resolutions_.push_back(res);
      prev = res;
    }
  }

  int levels() const { return cfg_.levels; }
  int feature_dim() const { return cfg_.feature_dim; }
  int output_dim() const { return cfg_.levels * cfg_.feature_dim; }
  std::uint32_t table_size() const { return table_size_; }
  int resolution(int level) const { return resolutions_[level]; }
  std::size_t param_count() const { return std::size_t(cfg_.levels) * table_size_ * cfg_.feature_dim; }
  const HashGridConfig& config() const { return cfg_; }

  static std::uint32_t hash_vertex(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz, std::uint32_t mask) {
    // Primes follow the usual spatial-hash construction; the first axis is
    // left unmultiplied.
    return (ix ^ (iy * 2654435761u) ^ (iz * 805459861u)) & mask;
  }

  // tables: flat [level][slot][feature] buffer of param_count() scalars.
  // point must lie in [0,1]^3.
  void encode(const Vec3<T>& p, const T* tables, T* out) const {
    if (p.x < T(0) || p.x > T(1) || p.y < T(0) || p.y > T(1) || p.z < T(0) || p.z > T(1))
      throw ContractError("hash grid: point outside unit cube");
    const std::uint32_t mask = table_size_ - 1;
    const int F = cfg_.feature_dim;
    for (int l = 0; l < cfg_.levels; ++l) {
      const T* table = tables + std::size_t(l) * table_size_ * F;
      T fx, fy, fz;
      std::uint32_t ix, iy, iz;
      cell_coords(p, l, ix, iy, iz, fx, fy, fz);
      T* dst = out + std::size_t(l) * F;
      for (int f = 0; f < F; ++f) dst[f] = T(0);
      for (int corner = 0; corner < 8; ++corner) {
        std::uint32_t cx = ix + (corner & 1), cy = iy + ((corner >> 1) & 1), cz = iz + ((corner >> 2) & 1);
        T wx = (corner & 1) ? fx : T(1) - fx;
        T wy = ((corner >> 1) & 1) ? fy : T(1) - fy;
        T wz = ((corner >> 2) & 1) ? fz : T(1) - fz;
        T w = wx * wy * wz;
        const T* entry = table + std::size_t(hash_vertex(cx, cy, cz, mask)) * F;
        for (int f = 0; f < F; ++f) dst[f] += w * entry[f];
      }
    }
  }

  // Scatter-add of d_out (output_dim adjoints) into grad_tables.
  void encode_backward(const Vec3<T>& p, const T* d_out, T* grad_tables) const {
    const std::uint32_t mask = table_size_ - 1;
    const int F = cfg_.feature_dim;
    for (int l = 0; l < cfg_.levels; ++l) {
      T* gtable = grad_tables + std::size_t(l) * table_size_ * F;
      T fx, fy, fz;
      std::uint32_t ix, iy, iz;
      cell_coords(p, l, ix, iy, iz, fx, fy, fz);
      const T* src = d_out + std::size_t(l) * F;
      for (int corner = 0; corner < 8; ++corner) {
        std::uint32_t cx = ix + (corner & 1), cy = iy + ((corner >> 1) & 1), cz = iz + ((corner >> 2) & 1);
        T wx = (corner & 1) ? fx : T(1) - fx;
        T wy = ((corner >> 1) & 1) ? fy : T(1) - fy;
        T wz = ((corner >> 2) & 1) ? fz : T(1) - fz;
        T w = wx * wy * wz;
        T* entry = gtable + std::size_t(hash_vertex(cx, cy, cz, mask)) * F;
        for (int f = 0; f < F; ++f) entry[f] += w * src[f];
      }
    }
  }

 private:
  void cell_coords(const Vec3<T>& p, int level, std::uint32_t& ix, std::uint32_t& iy, std::uint32_t& iz, T& fx, T& fy,
                   T& fz) const {
    T res = T(resolutions_[level]);
    T px = p.x * res, py = p.y * res, pz = p.z * res;
    T bx = std::floor(px), by = std::floor(py), bz = std::floor(pz);
    ix = std::uint32_t(bx);
    iy = std::uint32_t(by);
    iz = std::uint32_t(bz);
    fx = px - bx;
    fy = py - by;
    fz = pz - bz;
  }

  HashGridConfig cfg_;
  std::uint32_t table_size_ = 0;
  std::vector<int> resolutions_;
};

}  // namespace nerfbooth
