// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfbooth/image.hpp"

namespace nerfbooth {

// 3x3 zero-padded stride-1 convolution on planar images, with the hand-rolled
// reverse passes the toy denoiser trains through.
// Weight layout: [out_ch][in_ch][ky][kx], bias: [out_ch].

template <typename T>
void conv3x3_forward(const Image<T>& in, const T* weight, const T* bias, Image<T>& out) {
  int h = in.h, w = in.w, cin = in.c, cout = out.c;
  for (int oc = 0; oc < cout; ++oc) {
    T* op = out.plane_ptr(oc);
    for (int i = 0; i < h * w; ++i) op[i] = bias[oc];
    for (int ic = 0; ic < cin; ++ic) {
      const T* ip = in.plane_ptr(ic);
      const T* k = weight + (std::size_t(oc) * cin + ic) * 9;
      for (int y = 0; y < h; ++y) {
        for (int ky = -1; ky <= 1; ++ky) {
          int sy = y + ky;
          if (sy < 0 || sy >= h) continue;
          const T* row = ip + std::size_t(sy) * w;
          T* orow = op + std::size_t(y) * w;
          const T* kr = k + (ky + 1) * 3;
          for (int x = 0; x < w; ++x) {
            T acc = T(0);
            if (x > 0) acc += kr[0] * row[x - 1];
            acc += kr[1] * row[x];
            if (x + 1 < w) acc += kr[2] * row[x + 1];
            orow[x] += acc;
          }
        }
      }
    }
  }
}

// Accumulates weight/bias gradients; if d_in is non-null it must be
// zero-initialized by the caller and receives the input adjoint.
template <typename T>
void conv3x3_backward(const Image<T>& in, const T* weight, const Image<T>& d_out, T* d_weight, T* d_bias,
                      Image<T>* d_in) {
  int h = in.h, w = in.w, cin = in.c, cout = d_out.c;
  for (int oc = 0; oc < cout; ++oc) {
    const T* dop = d_out.plane_ptr(oc);
    T bacc = T(0);
    for (int i = 0; i < h * w; ++i) bacc += dop[i];
    d_bias[oc] += bacc;
    for (int ic = 0; ic < cin; ++ic) {
      const T* ip = in.plane_ptr(ic);
      T* dk = d_weight + (std::size_t(oc) * cin + ic) * 9;
      const T* k = weight + (std::size_t(oc) * cin + ic) * 9;
      T* dip = d_in ? d_in->plane_ptr(ic) : nullptr;
      for (int y = 0; y < h; ++y) {
        const T* dorow = dop + std::size_t(y) * w;
        for (int ky = -1; ky <= 1; ++ky) {
          int sy = y + ky;
          if (sy < 0 || sy >= h) continue;
          const T* irow = ip + std::size_t(sy) * w;
          T* dirow = dip ? dip + std::size_t(sy) * w : nullptr;
          T* dkr = dk + (ky + 1) * 3;
          const T* kr = k + (ky + 1) * 3;
          for (int x = 0; x < w; ++x) {
            T d = dorow[x];
            if (x > 0) {
              dkr[0] += d * irow[x - 1];
              if (dirow) dirow[x - 1] += d * kr[0];
            }
            dkr[1] += d * irow[x];
            if (dirow) dirow[x] += d * kr[1];
            if (x + 1 < w) {
              dkr[2] += d * irow[x + 1];
              if (dirow) dirow[x + 1] += d * kr[2];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void silu_inplace(Image<T>& img) {
  for (T& v : img.data) v = silu(v);
}

// d_pre = d_post * silu'(pre); pre is the pre-activation image.
template <typename T>
void silu_backward(const Image<T>& pre, Image<T>& d) {
  for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] *= silu_grad(pre.data[i]);
}

}  // namespace nerfbooth
