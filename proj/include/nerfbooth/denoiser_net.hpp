// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "nerfbooth/conv.hpp"
#include "nerfbooth/core.hpp"
#include "nerfbooth/diffusion.hpp"
#include "nerfbooth/rng.hpp"
#include "nerfbooth/serialize.hpp"

namespace nerfbooth {

// Plain-text vocabulary: one token per line, line number = id. Id 0 is the
// learned-null placeholder by convention of the shipped vocab files.
class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = int(i);
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("vocabulary: cannot open " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(f, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("vocabulary: cannot write " + path);
    for (const auto& t : tokens_) f << t << "\n";
  }

  int size() const { return int(tokens_.size()); }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw ContractError("vocabulary: unknown token '" + token + "'");
    return it->second;
  }

  const std::string& token(int id_) const {
    if (id_ < 0 || id_ >= size()) throw ContractError("vocabulary: id out of range");
    return tokens_[std::size_t(id_)];
  }

  std::vector<int> encode(const std::string& caption) const {
    std::istringstream ss(caption);
    std::vector<int> ids;
    std::string tok;
    while (ss >> tok) ids.push_back(id(tok));
    return ids;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct ToyDenoiserConfig {
  int image_size = 32;
  int channels = 16;       // conv width
  int pose_channels = 8;   // output of the pose block
  int emb_dim = 16;        // token embedding width
  int cond_dim = 8;        // text conditioning vector width
  int t_channels = 4;      // broadcast timestep features
  int vocab_size = 0;
  int t_max = 1000;
};

// Small convolutional epsilon-predictor at desk resolution.
//
//   c_t  = Gamma(mean of token embeddings)            (or the learned null)
//   pose = silu(conv3x3(pose raster))                 (or the learned null)
//   h    = conv1([x_t | pose | t features])
//   h    = silu(h * (1 + gamma(c_t)) + beta(c_t))     FiLM on the text branch
//   out  = conv3([silu(conv2(h))])
//
// Parameters live in one flat vector; the pose block (weights, bias, learned
// null) occupies a contiguous range so personalization can freeze it.
template <typename T>
class ToyConditionalDenoiser : public Denoiser<T> {
 public:
  ToyConditionalDenoiser() = default;

  explicit ToyConditionalDenoiser(const ToyDenoiserConfig& cfg) : cfg_(cfg) {
    if (cfg.vocab_size < 1) throw ConfigError("toy denoiser: vocabulary required");
    int C = cfg.channels, P = cfg.pose_channels, E = cfg.emb_dim, D = cfg.cond_dim, K = cfg.t_channels;
    int V = cfg.vocab_size;
    in_channels_ = 3 + P + K;
    std::size_t off = 0;
    auto claim = [&off](std::size_t n) {
      std::size_t o = off;
      off += n;
      return o;
    };
    off_emb_ = claim(std::size_t(V) * E);
    off_gamma_w_ = claim(std::size_t(D) * E);
    off_gamma_b_ = claim(std::size_t(D));
    off_null_text_ = claim(std::size_t(D));
    off_film_w_ = claim(std::size_t(2 * C) * D);
    off_film_b_ = claim(std::size_t(2 * C));
    off_pose_w_ = claim(std::size_t(P) * 3 * 9);
    off_pose_b_ = claim(std::size_t(P));
    off_null_pose_ = claim(std::size_t(P));
    off_conv1_w_ = claim(std::size_t(C) * in_channels_ * 9);
    off_conv1_b_ = claim(std::size_t(C));
    off_conv2_w_ = claim(std::size_t(C) * C * 9);
    off_conv2_b_ = claim(std::size_t(C));
    off_conv3_w_ = claim(std::size_t(3) * C * 9);
    off_conv3_b_ = claim(std::size_t(3));
    params_.assign(off, T(0));
  }

  void init_params(std::uint64_t seed) {
    Rng rng(seed, 0x22);
    auto fill_normal = [&](std::size_t o, std::size_t n, double sd, std::uint64_t key) {
      Rng r = rng.child(key);
      for (std::size_t i = 0; i < n; ++i) params_[o + i] = T(r.normal() * sd);
    };
    int C = cfg_.channels, P = cfg_.pose_channels, E = cfg_.emb_dim, D = cfg_.cond_dim;
    fill_normal(off_emb_, std::size_t(cfg_.vocab_size) * E, 0.02, 1);
    fill_normal(off_gamma_w_, std::size_t(D) * E, std::sqrt(1.0 / E), 2);
    fill_normal(off_null_text_, std::size_t(D), 0.02, 3);
    fill_normal(off_film_w_, std::size_t(2 * C) * D, 0.01, 4);
    fill_normal(off_pose_w_, std::size_t(P) * 3 * 9, std::sqrt(2.0 / (3 * 9)), 5);
    fill_normal(off_null_pose_, std::size_t(P), 0.02, 6);
    fill_normal(off_conv1_w_, std::size_t(C) * in_channels_ * 9, std::sqrt(2.0 / (in_channels_ * 9)), 7);
    fill_normal(off_conv2_w_, std::size_t(C) * C * 9, std::sqrt(2.0 / (C * 9)), 8);
    fill_normal(off_conv3_w_, std::size_t(3) * C * 9, std::sqrt(2.0 / (C * 9)), 9);
  }

  const ToyDenoiserConfig& config() const { return cfg_; }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }
  std::size_t param_count() const override { return params_.size(); }

  // [pose_begin, pose_end) is the contiguous pose-block range (frozen during
  // personalization); [0, emb_end) is the token embedding table.
  std::size_t emb_end() const { return off_gamma_w_; }
  std::size_t pose_begin() const { return off_pose_w_; }
  std::size_t pose_end() const { return off_conv1_w_; }

  struct Encoded {
    std::vector<T> c_text;   // cond_dim
    Image<T> pose_features;  // pose_channels x S x S (post activation)
  };

  // Deterministic conditioning embeddings (inspection surface; the training
  // path re-derives these inside forward_trace so gradients reach the tables).
  Encoded encode_conditions(const ConditioningBundle<T>& cond) const {
    Encoded e;
    e.c_text.assign(std::size_t(cfg_.cond_dim), T(0));
    std::vector<T> mean_emb;
    encode_text(cond, e.c_text.data(), mean_emb);
    int s = cond.pose_image.h > 0 ? cond.pose_image.h : cfg_.image_size;
    e.pose_features = Image<T>(s, s, cfg_.pose_channels);
    Image<T> pre = e.pose_features;
    encode_pose(cond, e.pose_features, pre);
    return e;
  }

  struct Trace {
    ConditioningBundle<T> cond;
    std::vector<T> mean_emb;  // empty when null_text
    std::vector<T> c_text;
    Image<T> pose_pre;  // pre-activation (empty when null_pose)
    Image<T> h_in;
    Image<T> conv1_out;
    std::vector<T> gamma, beta;
    Image<T> film_pre;
    Image<T> h1;
    Image<T> conv2_pre;
    Image<T> h2;
  };

  Image<T> predict_epsilon(const Image<T>& x_t, int t, const ConditioningBundle<T>& cond) const override {
    Trace tr;
    return forward_trace(x_t, t, cond, tr);
  }

  // Fully convolutional: any square resolution works; cfg_.image_size is the
  // nominal training resolution.
  Image<T> forward_trace(const Image<T>& x_t, int t, const ConditioningBundle<T>& cond, Trace& tr) const {
    int S = x_t.h, C = cfg_.channels, P = cfg_.pose_channels, K = cfg_.t_channels;
    if (x_t.h != x_t.w || x_t.c != 3 || x_t.h < 3) throw ContractError("toy denoiser: input must be 3 x S x S");
    tr.cond = cond;

    tr.c_text.assign(std::size_t(cfg_.cond_dim), T(0));
    encode_text(cond, tr.c_text.data(), tr.mean_emb);

    Image<T> pose_feat(S, S, P);
    tr.pose_pre = Image<T>();
    if (cond.null_pose) {
      const T* np = params_.data() + off_null_pose_;
      for (int c = 0; c < P; ++c) {
        T* plane = pose_feat.plane_ptr(c);
        for (int i = 0; i < S * S; ++i) plane[i] = np[c];
      }
    } else {
      tr.pose_pre = Image<T>(S, S, P);
      encode_pose(cond, pose_feat, tr.pose_pre);
    }

    tr.h_in = Image<T>(S, S, in_channels_);
    for (int c = 0; c < 3; ++c)
      std::copy(x_t.plane_ptr(c), x_t.plane_ptr(c) + S * S, tr.h_in.plane_ptr(c));
    for (int c = 0; c < P; ++c)
      std::copy(pose_feat.plane_ptr(c), pose_feat.plane_ptr(c) + S * S, tr.h_in.plane_ptr(3 + c));
    double that = double(t) / double(cfg_.t_max);
    for (int k = 0; k < K; ++k) {
      double freq = (k / 2) * 2 + 1;  // 1, 1, 3, 3, ...
      double v = (k % 2 == 0) ? std::sin(freq * kPi * that) : std::cos(freq * kPi * that);
      T* plane = tr.h_in.plane_ptr(3 + P + k);
      for (int i = 0; i < S * S; ++i) plane[i] = T(v);
    }

    tr.conv1_out = Image<T>(S, S, C);
    conv3x3_forward(tr.h_in, params_.data() + off_conv1_w_, params_.data() + off_conv1_b_, tr.conv1_out);

    tr.gamma.assign(std::size_t(C), T(0));
    tr.beta.assign(std::size_t(C), T(0));
    const T* fw = params_.data() + off_film_w_;
    const T* fb = params_.data() + off_film_b_;
    for (int j = 0; j < 2 * C; ++j) {
      T acc = fb[j];
      for (int d = 0; d < cfg_.cond_dim; ++d) acc += fw[std::size_t(j) * cfg_.cond_dim + d] * tr.c_text[d];
      (j < C ? tr.gamma[j] : tr.beta[j - C]) = acc;
    }
    tr.film_pre = Image<T>(S, S, C);
    for (int c = 0; c < C; ++c) {
      const T* src = tr.conv1_out.plane_ptr(c);
      T* dst = tr.film_pre.plane_ptr(c);
      T g = T(1) + tr.gamma[c], b = tr.beta[c];
      for (int i = 0; i < S * S; ++i) dst[i] = src[i] * g + b;
    }
    tr.h1 = tr.film_pre;
    silu_inplace(tr.h1);

    tr.conv2_pre = Image<T>(S, S, C);
    conv3x3_forward(tr.h1, params_.data() + off_conv2_w_, params_.data() + off_conv2_b_, tr.conv2_pre);
    tr.h2 = tr.conv2_pre;
    silu_inplace(tr.h2);

    Image<T> out(S, S, 3);
    conv3x3_forward(tr.h2, params_.data() + off_conv3_w_, params_.data() + off_conv3_b_, out);
    return out;
  }

  // Accumulates parameter gradients for one traced forward pass.
  void backward(const Image<T>& d_out, const Trace& tr, std::vector<T>& grad) const {
    if (grad.size() != params_.size()) throw ContractError("toy denoiser: gradient buffer size mismatch");
    int S = cfg_.image_size, C = cfg_.channels, P = cfg_.pose_channels, D = cfg_.cond_dim, E = cfg_.emb_dim;

    Image<T> d_h2(S, S, C);
    conv3x3_backward(tr.h2, params_.data() + off_conv3_w_, d_out, grad.data() + off_conv3_w_,
                     grad.data() + off_conv3_b_, &d_h2);
    silu_backward(tr.conv2_pre, d_h2);

    Image<T> d_h1(S, S, C);
    conv3x3_backward(tr.h1, params_.data() + off_conv2_w_, d_h2, grad.data() + off_conv2_w_,
                     grad.data() + off_conv2_b_, &d_h1);
    silu_backward(tr.film_pre, d_h1);

    // FiLM: film_pre = conv1_out * (1 + gamma_c) + beta_c
    std::vector<T> d_gamma(std::size_t(C), T(0)), d_beta(std::size_t(C), T(0));
    Image<T> d_conv1(S, S, C);
    for (int c = 0; c < C; ++c) {
      const T* dfp = d_h1.plane_ptr(c);
      const T* co = tr.conv1_out.plane_ptr(c);
      T* dco = d_conv1.plane_ptr(c);
      T g = T(1) + tr.gamma[c];
      T dg = T(0), db = T(0);
      for (int i = 0; i < S * S; ++i) {
        dg += dfp[i] * co[i];
        db += dfp[i];
        dco[i] = dfp[i] * g;
      }
      d_gamma[c] = dg;
      d_beta[c] = db;
    }
    std::vector<T> d_ct(std::size_t(D), T(0));
    const T* fw = params_.data() + off_film_w_;
    for (int j = 0; j < 2 * C; ++j) {
      T dj = j < C ? d_gamma[j] : d_beta[j - C];
      grad[off_film_b_ + j] += dj;
      for (int d = 0; d < D; ++d) {
        grad[off_film_w_ + std::size_t(j) * D + d] += dj * tr.c_text[d];
        d_ct[d] += dj * fw[std::size_t(j) * D + d];
      }
    }

    Image<T> d_hin(S, S, in_channels_);
    conv3x3_backward(tr.h_in, params_.data() + off_conv1_w_, d_conv1, grad.data() + off_conv1_w_,
                     grad.data() + off_conv1_b_, &d_hin);

    // pose branch
    if (tr.cond.null_pose) {
      for (int c = 0; c < P; ++c) {
        const T* plane = d_hin.plane_ptr(3 + c);
        T acc = T(0);
        for (int i = 0; i < S * S; ++i) acc += plane[i];
        grad[off_null_pose_ + c] += acc;
      }
    } else {
      Image<T> d_pose(S, S, P);
      for (int c = 0; c < P; ++c)
        std::copy(d_hin.plane_ptr(3 + c), d_hin.plane_ptr(3 + c) + S * S, d_pose.plane_ptr(c));
      silu_backward(tr.pose_pre, d_pose);
      conv3x3_backward(tr.cond.pose_image, params_.data() + off_pose_w_, d_pose, grad.data() + off_pose_w_,
                       grad.data() + off_pose_b_, static_cast<Image<T>*>(nullptr));
    }

    // text branch
    if (tr.cond.null_text) {
      for (int d = 0; d < D; ++d) grad[off_null_text_ + d] += d_ct[d];
    } else {
      const T* gw = params_.data() + off_gamma_w_;
      std::vector<T> d_mean(std::size_t(E), T(0));
      for (int d = 0; d < D; ++d) {
        grad[off_gamma_b_ + d] += d_ct[d];
        for (int e = 0; e < E; ++e) {
          grad[off_gamma_w_ + std::size_t(d) * E + e] += d_ct[d] * tr.mean_emb[e];
          d_mean[e] += d_ct[d] * gw[std::size_t(d) * E + e];
        }
      }
      T inv = T(1) / T(tr.cond.tokens.size());
      for (int tok : tr.cond.tokens)
        for (int e = 0; e < E; ++e) grad[off_emb_ + std::size_t(tok) * E + e] += d_mean[e] * inv;
    }
  }

  void save_checkpoint(const std::string& path) const {
    CheckpointWriter w(path, "NBDC", 1);
    w.write_u32(std::uint32_t(cfg_.image_size));
    w.write_u32(std::uint32_t(cfg_.channels));
    w.write_u32(std::uint32_t(cfg_.pose_channels));
    w.write_u32(std::uint32_t(cfg_.emb_dim));
    w.write_u32(std::uint32_t(cfg_.cond_dim));
    w.write_u32(std::uint32_t(cfg_.t_channels));
    w.write_u32(std::uint32_t(cfg_.vocab_size));
    w.write_u32(std::uint32_t(cfg_.t_max));
    w.write_params_f32(params_);
    w.finish();
  }

  static ToyConditionalDenoiser<T> load_checkpoint(const std::string& path) {
    CheckpointReader r(path, "NBDC", 1);
    ToyDenoiserConfig cfg;
    cfg.image_size = int(r.read_u32());
    cfg.channels = int(r.read_u32());
    cfg.pose_channels = int(r.read_u32());
    cfg.emb_dim = int(r.read_u32());
    cfg.cond_dim = int(r.read_u32());
    cfg.t_channels = int(r.read_u32());
    cfg.vocab_size = int(r.read_u32());
    cfg.t_max = int(r.read_u32());
    ToyConditionalDenoiser<T> d(cfg);
    std::vector<T> p = r.read_params_f32<T>();
    if (p.size() != d.params_.size()) throw IoError("denoiser checkpoint: parameter count mismatch in " + path);
    d.params_ = std::move(p);
    return d;
  }

  // Embedding row view for the vocabulary round-trip contract.
  const T* embedding_row(int token_id) const {
    if (token_id < 0 || token_id >= cfg_.vocab_size) throw ContractError("toy denoiser: token id out of range");
    return params_.data() + off_emb_ + std::size_t(token_id) * cfg_.emb_dim;
  }

 private:
  void encode_text(const ConditioningBundle<T>& cond, T* c_text, std::vector<T>& mean_emb) const {
    int E = cfg_.emb_dim, D = cfg_.cond_dim;
    if (cond.null_text) {
      const T* nt = params_.data() + off_null_text_;
      for (int d = 0; d < D; ++d) c_text[d] = nt[d];
      mean_emb.clear();
      return;
    }
    if (cond.tokens.empty()) throw ContractError("toy denoiser: empty token list");
    mean_emb.assign(std::size_t(E), T(0));
    for (int tok : cond.tokens) {
      if (tok < 0 || tok >= cfg_.vocab_size) throw ContractError("toy denoiser: unknown token id");
      const T* row = params_.data() + off_emb_ + std::size_t(tok) * E;
      for (int e = 0; e < E; ++e) mean_emb[e] += row[e];
    }
    for (int e = 0; e < E; ++e) mean_emb[e] /= T(cond.tokens.size());
    const T* gw = params_.data() + off_gamma_w_;
    const T* gb = params_.data() + off_gamma_b_;
    for (int d = 0; d < D; ++d) {
      T acc = gb[d];
      for (int e = 0; e < E; ++e) acc += gw[std::size_t(d) * E + e] * mean_emb[e];
      c_text[d] = acc;
    }
  }

  void encode_pose(const ConditioningBundle<T>& cond, Image<T>& post, Image<T>& pre) const {
    int S = pre.h;
    if (cond.pose_image.h != S || cond.pose_image.w != S || cond.pose_image.c != 3)
      throw ContractError("toy denoiser: pose raster must match the input resolution");
    conv3x3_forward(cond.pose_image, params_.data() + off_pose_w_, params_.data() + off_pose_b_, pre);
    post = pre;
    silu_inplace(post);
  }

  ToyDenoiserConfig cfg_;
  int in_channels_ = 0;
  std::vector<T> params_;
  std::size_t off_emb_ = 0, off_gamma_w_ = 0, off_gamma_b_ = 0, off_null_text_ = 0, off_film_w_ = 0, off_film_b_ = 0,
              off_pose_w_ = 0, off_pose_b_ = 0, off_null_pose_ = 0, off_conv1_w_ = 0, off_conv1_b_ = 0,
              off_conv2_w_ = 0, off_conv2_b_ = 0, off_conv3_w_ = 0, off_conv3_b_ = 0;
};

}  // namespace nerfbooth
