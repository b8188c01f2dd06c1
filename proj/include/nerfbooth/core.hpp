// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace nerfbooth {

// Error taxonomy. The CLI maps these to exit codes: config errors -> 2,
// numeric aborts -> 3, I/O failures -> 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
struct Vec3 {
  T x{}, y{}, z{};

  Vec3() = default;
  Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

  T& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  T operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(T s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3 operator-() const { return {-x, -y, -z}; }

  T dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  T norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    T n = norm();
    return n > T(0) ? *this / n : Vec3{T(0), T(0), T(0)};
  }
  bool finite() const {
    return std::isfinite(double(x)) && std::isfinite(double(y)) && std::isfinite(double(z));
  }

  template <typename U>
  Vec3<U> cast() const {
    return {U(x), U(y), U(z)};
  }
};

template <typename T>
inline Vec3<T> operator*(T s, const Vec3<T>& v) {
  return v * s;
}

using Vec3d = Vec3<double>;
using Vec3f = Vec3<float>;

template <typename T>
struct Aabb {
  Vec3<T> lo, hi;

  bool contains(const Vec3<T>& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
  }
  Vec3<T> center() const { return (lo + hi) * T(0.5); }
  Vec3<T> extent() const { return hi - lo; }

  // Slab intersection. Returns false when the ray misses the box entirely;
  // otherwise [t0, t1] is the clipped parameter interval.
  bool clip_ray(const Vec3<T>& origin, const Vec3<T>& dir, T& t0, T& t1) const {
    for (int a = 0; a < 3; ++a) {
      T inv = T(1) / dir[a];
      T ta = (lo[a] - origin[a]) * inv;
      T tb = (hi[a] - origin[a]) * inv;
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return false;
    }
    return true;
  }
};

// Numerically safe activations used by the field heads and toy networks.
template <typename T>
inline T softplus(T x) {
  if (x > T(30)) return x;
  if (x < T(-30)) return std::exp(x);
  return std::log1p(std::exp(x));
}

template <typename T>
inline T sigmoid(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
inline T silu(T x) {
  return x * sigmoid(x);
}

// d/dx silu(x) = s(x) * (1 + x * (1 - s(x)))
template <typename T>
inline T silu_grad(T x) {
  T s = sigmoid(x);
  return s * (T(1) + x * (T(1) - s));
}

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }

// FNV-1a, used for checkpoint/parameter fingerprints in tests and logs.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace nerfbooth
