// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "nerfbooth/core.hpp"
#include "nerfbooth/rng.hpp"

namespace nerfbooth {

// Fully-connected net operating on an external flat parameter buffer.
// Layers are [W0 | b0 | W1 | b1 | ...] starting at `offset` inside the owner's
// parameter vector; hidden activations are SiLU (smooth, so finite-difference
// gradient checks are well behaved), output is linear.
template <typename T>
class SmallMlp {
 public:
  SmallMlp() = default;

  SmallMlp(std::vector<int> dims, std::size_t offset) : dims_(std::move(dims)), offset_(offset) {
    std::size_t p = offset_;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      w_off_.push_back(p);
      p += std::size_t(dims_[l]) * dims_[l + 1];
      b_off_.push_back(p);
      p += std::size_t(dims_[l + 1]);
    }
    end_ = p;
  }

  std::size_t param_count() const { return end_ - offset_; }
  std::size_t end_offset() const { return end_; }
  int in_dim() const { return dims_.front(); }
  int out_dim() const { return dims_.back(); }
  int num_layers() const { return int(dims_.size()) - 1; }
  int max_width() const {
    int m = 0;
    for (int d : dims_) m = std::max(m, d);
    return m;
  }

  void init(T* params, Rng& rng) const {
    for (int l = 0; l < num_layers(); ++l) {
      int fan_in = dims_[l], fan_out = dims_[l + 1];
      double scale = std::sqrt(2.0 / double(fan_in + fan_out));
      T* w = params + w_off_[l];
      for (int i = 0; i < fan_in * fan_out; ++i) w[i] = T(rng.normal() * scale);
      T* b = params + b_off_[l];
      for (int i = 0; i < fan_out; ++i) b[i] = T(0);
    }
  }

  // scratch must hold 2 * num_layers() * max_width() scalars; it receives the
  // pre-activations needed by backward(). Layout: [pre_0 | act_0 | pre_1 | ...].
  void forward(const T* params, const T* x, T* out, T* scratch) const {
    const T* cur = x;
    int mw = max_width();
    for (int l = 0; l < num_layers(); ++l) {
      int in = dims_[l], on = dims_[l + 1];
      const T* w = params + w_off_[l];
      const T* b = params + b_off_[l];
      T* pre = scratch + std::size_t(2 * l) * mw;
      T* act = scratch + std::size_t(2 * l + 1) * mw;
      for (int j = 0; j < on; ++j) {
        T acc = b[j];
        const T* wr = w + std::size_t(j) * in;
        for (int i = 0; i < in; ++i) acc += wr[i] * cur[i];
        pre[j] = acc;
      }
      bool last = (l + 1 == num_layers());
      T* dst = last ? out : act;
      for (int j = 0; j < on; ++j) dst[j] = last ? pre[j] : silu(pre[j]);
      cur = dst;
    }
  }

  // Accumulates parameter gradients into grad (same layout as params) and, if
  // dx != nullptr, writes the input adjoint. Requires the scratch from the
  // matching forward() call; dwork must hold 2 * max_width() scalars.
  void backward(const T* params, const T* x, const T* dout, T* grad, T* dx, const T* scratch, T* dwork) const {
    int mw = max_width();
    T* da = dwork;       // adjoint of current layer output
    T* db = dwork + mw;  // adjoint of current layer input
    for (int j = 0; j < out_dim(); ++j) da[j] = dout[j];

    for (int l = num_layers() - 1; l >= 0; --l) {
      int in = dims_[l], on = dims_[l + 1];
      const T* pre = scratch + std::size_t(2 * l) * mw;
      const T* input = (l == 0) ? x : scratch + std::size_t(2 * (l - 1) + 1) * mw;
      // dpre = da * act'(pre) for hidden layers, da for the linear output
      if (l + 1 < num_layers())
        for (int j = 0; j < on; ++j) da[j] *= silu_grad(pre[j]);
      T* gw = grad + w_off_[l];
      T* gb = grad + b_off_[l];
      const T* w = params + w_off_[l];
      for (int i = 0; i < in; ++i) db[i] = T(0);
      for (int j = 0; j < on; ++j) {
        T d = da[j];
        gb[j] += d;
        T* gwr = gw + std::size_t(j) * in;
        const T* wr = w + std::size_t(j) * in;
        for (int i = 0; i < in; ++i) {
          gwr[i] += d * input[i];
          db[i] += d * wr[i];
        }
      }
      std::swap(da, db);
    }
    if (dx)
      for (int i = 0; i < in_dim(); ++i) dx[i] = da[i];
  }

  std::size_t scratch_size() const { return std::size_t(2 * num_layers()) * max_width(); }
  std::size_t dwork_size() const { return std::size_t(2) * max_width(); }

 private:
  std::vector<int> dims_;
  std::size_t offset_ = 0;
  std::size_t end_ = 0;
  std::vector<std::size_t> w_off_, b_off_;
};

}  // namespace nerfbooth
