// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

#include "nerfbooth/core.hpp"

namespace nerfbooth {

// Per-parameter first/second-moment optimizer over a flat parameter vector.
// Parameter groups are contiguous ranges with their own learning rate; a rate
// of zero freezes the range entirely (moments untouched), which is how the
// pose encoder stays fixed during personalization.
template <typename T>
class Adam {
 public:
  struct Group {
    std::size_t end;  // exclusive end index of this group
    double lr;
  };

  Adam() = default;

  Adam(std::size_t n, std::vector<Group> groups, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(n, T(0)), v_(n, T(0)), groups_(std::move(groups)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (groups_.empty() || groups_.back().end != n) throw ContractError("adam: groups must cover the parameter vector");
  }

  void step(std::vector<T>& params, const std::vector<T>& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw ContractError("adam: size mismatch");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, double(t_));
    double bc2 = 1.0 - std::pow(beta2_, double(t_));
    std::size_t begin = 0;
    for (const Group& g : groups_) {
      if (g.lr != 0.0) {
        for (std::size_t i = begin; i < g.end; ++i) {
          m_[i] = T(beta1_ * double(m_[i]) + (1.0 - beta1_) * double(grad[i]));
          v_[i] = T(beta2_ * double(v_[i]) + (1.0 - beta2_) * double(grad[i]) * double(grad[i]));
          double mhat = double(m_[i]) / bc1;
          double vhat = double(v_[i]) / bc2;
          params[i] = T(double(params[i]) - g.lr * mhat / (std::sqrt(vhat) + eps_));
        }
      }
      begin = g.end;
    }
  }

  long step_count() const { return t_; }

 private:
  std::vector<T> m_, v_;
  std::vector<Group> groups_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace nerfbooth
