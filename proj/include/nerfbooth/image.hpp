// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "nerfbooth/core.hpp"

namespace nerfbooth {

// Planar image: C planes of H*W scalars. Planar layout keeps the conv and
// compositing inner loops contiguous.
template <typename T>
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<T> data;

  Image() = default;
  Image(int h_, int w_, int c_, T fill = T(0)) : h(h_), w(w_), c(c_), data(std::size_t(h_) * w_ * c_, fill) {}

  std::size_t plane() const { return std::size_t(h) * w; }
  std::size_t size() const { return data.size(); }

  T& at(int ch, int y, int x) { return data[plane() * ch + std::size_t(y) * w + x]; }
  T at(int ch, int y, int x) const { return data[plane() * ch + std::size_t(y) * w + x]; }

  T* plane_ptr(int ch) { return data.data() + plane() * ch; }
  const T* plane_ptr(int ch) const { return data.data() + plane() * ch; }

  bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }

  bool finite() const {
    for (T v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  template <typename U>
  Image<U> cast() const {
    Image<U> out(h, w, c);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }
};

template <typename T>
T mse(const Image<T>& a, const Image<T>& b) {
  if (!a.same_shape(b)) throw ContractError("mse: shape mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = double(a.data[i]) - double(b.data[i]);
    acc += d * d;
  }
  return T(acc / double(a.data.size()));
}

template <typename T>
T mean_value(const Image<T>& a) {
  double acc = 0;
  for (T v : a.data) acc += double(v);
  return T(acc / double(a.data.size()));
}

// [0,1] image domain <-> [-1,1] diffusion domain.
template <typename T>
Image<T> to_diffusion_domain(const Image<T>& img01) {
  Image<T> out = img01;
  for (T& v : out.data) v = T(2) * v - T(1);
  return out;
}

template <typename T>
Image<T> from_diffusion_domain(const Image<T>& imgpm1) {
  Image<T> out = imgpm1;
  for (T& v : out.data) v = (v + T(1)) * T(0.5);
  return out;
}

}  // namespace nerfbooth
