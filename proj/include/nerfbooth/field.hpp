// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "nerfbooth/core.hpp"
#include "nerfbooth/hash_grid.hpp"
#include "nerfbooth/mlp.hpp"
#include "nerfbooth/rng.hpp"
#include "nerfbooth/serialize.hpp"

namespace nerfbooth {

// Degree-2 real spherical harmonics basis (9 values) for view directions.
template <typename T>
inline void sh9(const Vec3<T>& d, T* out) {
  T x = d.x, y = d.y, z = d.z;
  out[0] = T(0.28209479177387814);
  out[1] = T(0.4886025119029199) * y;
  out[2] = T(0.4886025119029199) * z;
  out[3] = T(0.4886025119029199) * x;
  out[4] = T(1.0925484305920792) * x * y;
  out[5] = T(1.0925484305920792) * y * z;
  out[6] = T(0.9461746957575601) * z * z - T(0.31539156525251999);
  out[7] = T(1.0925484305920792) * x * z;
  out[8] = T(0.5462742152960396) * (x * x - y * y);
}

constexpr int kShDim = 9;

struct FieldConfig {
  HashGridConfig grid;
  int hidden_dim = 64;
  int hidden_layers = 2;
  Vec3d bbox_lo{-0.6, -0.7, -0.35};
  Vec3d bbox_hi{0.6, 0.7, 0.35};
  // Optional additive density-logit blob around the bbox center: raw +=
  // blob_scale * (1 - |p - center| / blob_radius). Zero scale disables it.
  // Distillation configs use it to start from a dense seed the score gradient
  // can carve, instead of empty space it cannot see.
  double blob_scale = 0.0;
  double blob_radius = 0.3;
};

template <typename T>
struct FieldScratch;

template <typename T>
struct FieldQuery {
  Vec3<T> point;
  Vec3<T> view_dir;
};

template <typename T>
struct FieldAdjoint {
  T d_density = T(0);
  Vec3<T> d_rgb{T(0), T(0), T(0)};
};

// Hash-grid radiance field: density = softplus(mlp_d(enc(p)) + blob(p)),
// color = sigmoid(mlp_c(enc(p), sh9(dir))). Queries outside the bounding box
// return zero density, so the represented object is compactly supported.
// Parameters live in one flat vector: [tables | density mlp | color mlp].
template <typename T>
class RadianceField {
 public:
  RadianceField() = default;

  explicit RadianceField(const FieldConfig& cfg) : cfg_(cfg), grid_(cfg.grid) {
    std::size_t off = grid_.param_count();
    int enc_dim = grid_.output_dim();
    std::vector<int> ddims{enc_dim};
    std::vector<int> cdims{enc_dim + kShDim};
    for (int i = 0; i < cfg.hidden_layers; ++i) {
      ddims.push_back(cfg.hidden_dim);
      cdims.push_back(cfg.hidden_dim);
    }
    ddims.push_back(1);
    cdims.push_back(3);
    density_mlp_ = SmallMlp<T>(ddims, off);
    color_mlp_ = SmallMlp<T>(cdims, density_mlp_.end_offset());
    params_.assign(color_mlp_.end_offset(), T(0));
    bbox_ = Aabb<T>{cfg.bbox_lo.cast<T>(), cfg.bbox_hi.cast<T>()};
  }

  void init_params(std::uint64_t seed) {
    Rng rng(seed, 0x11);
    // Small random table entries, as in the usual hash-grid initialization.
    Rng trng = rng.child(1);
    for (std::size_t i = 0; i < grid_.param_count(); ++i) params_[i] = T(trng.uniform(-1e-4, 1e-4));
    Rng drng = rng.child(2);
    density_mlp_.init(params_.data(), drng);
    Rng crng = rng.child(3);
    color_mlp_.init(params_.data(), crng);
  }

  const FieldConfig& config() const { return cfg_; }
  const HashGridEncoding<T>& grid() const { return grid_; }
  const Aabb<T>& bbox() const { return bbox_; }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }
  std::size_t table_param_count() const { return grid_.param_count(); }
  std::pair<std::size_t, std::size_t> density_head_range() const {
    return {grid_.param_count(), grid_.param_count() + density_mlp_.param_count()};
  }
  std::pair<std::size_t, std::size_t> color_head_range() const {
    return {density_head_range().second, density_head_range().second + color_mlp_.param_count()};
  }

  Vec3<T> normalize_point(const Vec3<T>& p) const {
    Vec3<T> e = bbox_.extent();
    return {(p.x - bbox_.lo.x) / e.x, (p.y - bbox_.lo.y) / e.y, (p.z - bbox_.lo.z) / e.z};
  }

  T blob_logit(const Vec3<T>& p) const {
    if (cfg_.blob_scale == 0.0) return T(0);
    Vec3<T> c = bbox_.center();
    T r = (p - c).norm();
    return T(cfg_.blob_scale) * (T(1) - r / T(cfg_.blob_radius));
  }

  FieldScratch<T> make_scratch() const;

  void encode(const Vec3<T>& unit_point, T* out) const { grid_.encode(unit_point, params_.data(), out); }

  T query_density(const Vec3<T>& p, FieldScratch<T>& s) const {
    if (!p.finite()) throw ContractError("query_density: non-finite point");
    if (!bbox_.contains(p)) return T(0);
    grid_.encode(normalize_point(p), params_.data(), s.enc.data());
    T raw;
    density_mlp_.forward(params_.data(), s.enc.data(), &raw, s.mlp_d.data());
    return softplus(raw + blob_logit(p));
  }

  Vec3<T> query_color(const Vec3<T>& p, const Vec3<T>& view_dir, FieldScratch<T>& s) const {
    if (std::abs(double(view_dir.norm()) - 1.0) > 1e-6) throw ContractError("query_color: view_dir must be unit length");
    if (!bbox_.contains(p)) return {T(0.5), T(0.5), T(0.5)};
    grid_.encode(normalize_point(p), params_.data(), s.enc.data());
    return color_from_encoding(s.enc.data(), view_dir, s);
  }

  // Joint density+color query used by the renderer; p must be inside the bbox.
  void query(const Vec3<T>& p, const Vec3<T>& view_dir, T& density, Vec3<T>& rgb, FieldScratch<T>& s) const {
    grid_.encode(normalize_point(p), params_.data(), s.enc.data());
    T raw;
    density_mlp_.forward(params_.data(), s.enc.data(), &raw, s.mlp_d.data());
    density = softplus(raw + blob_logit(p));
    rgb = color_from_encoding(s.enc.data(), view_dir, s);
  }

  // Reverse-mode accumulation for one query; recomputes activations so the
  // render tape only has to remember sample positions and adjoints.
  void backward_accumulate(const Vec3<T>& p, const Vec3<T>& view_dir, T d_density, const Vec3<T>& d_rgb, T* grad,
                           FieldScratch<T>& s) const {
    if (d_density == T(0) && d_rgb.x == T(0) && d_rgb.y == T(0) && d_rgb.z == T(0)) return;
    if (!bbox_.contains(p)) return;
    Vec3<T> q = normalize_point(p);
    grid_.encode(q, params_.data(), s.enc.data());
    const int enc_dim = grid_.output_dim();
    for (int i = 0; i < enc_dim; ++i) s.denc[i] = T(0);

    if (d_density != T(0)) {
      T raw;
      density_mlp_.forward(params_.data(), s.enc.data(), &raw, s.mlp_d.data());
      T draw = d_density * sigmoid(raw + blob_logit(p));
      density_mlp_.backward(params_.data(), s.enc.data(), &draw, grad, s.dinput.data(), s.mlp_d.data(), s.dwork.data());
      for (int i = 0; i < enc_dim; ++i) s.denc[i] += s.dinput[i];
    }
    if (d_rgb.x != T(0) || d_rgb.y != T(0) || d_rgb.z != T(0)) {
      for (int i = 0; i < enc_dim; ++i) s.color_in[i] = s.enc[i];
      sh9(view_dir, s.color_in.data() + enc_dim);
      T logits[3];
      color_mlp_.forward(params_.data(), s.color_in.data(), logits, s.mlp_c.data());
      T dlogits[3];
      for (int k = 0; k < 3; ++k) {
        T sgm = sigmoid(logits[k]);
        dlogits[k] = d_rgb[k] * sgm * (T(1) - sgm);
      }
      color_mlp_.backward(params_.data(), s.color_in.data(), dlogits, grad, s.dinput.data(), s.mlp_c.data(),
                          s.dwork.data());
      for (int i = 0; i < enc_dim; ++i) s.denc[i] += s.dinput[i];
    }
    grid_.encode_backward(q, s.denc.data(), grad);
  }

  // Batched form of the gradient contract: adjoints[i] belongs to queries[i].
  void accumulate_param_gradients(std::span<const FieldQuery<T>> queries, std::span<const FieldAdjoint<T>> adjoints,
                                  std::vector<T>& grad, FieldScratch<T>& s) const {
    if (queries.size() != adjoints.size())
      throw ContractError("accumulate_param_gradients: query/adjoint count mismatch");
    if (grad.size() != params_.size()) throw ContractError("accumulate_param_gradients: gradient buffer size mismatch");
    for (std::size_t i = 0; i < queries.size(); ++i)
      backward_accumulate(queries[i].point, queries[i].view_dir, adjoints[i].d_density, adjoints[i].d_rgb, grad.data(),
                          s);
  }

  void save_checkpoint(const std::string& path) const {
    CheckpointWriter w(path, "NBFC", 1);
    w.write_u32(std::uint32_t(cfg_.grid.levels));
    w.write_u32(std::uint32_t(cfg_.grid.base_resolution));
    w.write_f64(cfg_.grid.growth);
    w.write_u32(std::uint32_t(cfg_.grid.table_size_log2));
    w.write_u32(std::uint32_t(cfg_.grid.feature_dim));
    w.write_u32(std::uint32_t(cfg_.hidden_dim));
    w.write_u32(std::uint32_t(cfg_.hidden_layers));
    for (int a = 0; a < 3; ++a) w.write_f64(cfg_.bbox_lo[a]);
    for (int a = 0; a < 3; ++a) w.write_f64(cfg_.bbox_hi[a]);
    w.write_f64(cfg_.blob_scale);
    w.write_f64(cfg_.blob_radius);
    w.write_params_f32(params_);
    w.finish();
  }

  static RadianceField<T> load_checkpoint(const std::string& path) {
    CheckpointReader r(path, "NBFC", 1);
    FieldConfig cfg;
    cfg.grid.levels = int(r.read_u32());
    cfg.grid.base_resolution = int(r.read_u32());
    cfg.grid.growth = r.read_f64();
    cfg.grid.table_size_log2 = int(r.read_u32());
    cfg.grid.feature_dim = int(r.read_u32());
    cfg.hidden_dim = int(r.read_u32());
    cfg.hidden_layers = int(r.read_u32());
    for (int a = 0; a < 3; ++a) cfg.bbox_lo[a] = r.read_f64();
    for (int a = 0; a < 3; ++a) cfg.bbox_hi[a] = r.read_f64();
    cfg.blob_scale = r.read_f64();
    cfg.blob_radius = r.read_f64();
    RadianceField<T> field(cfg);
    std::vector<T> p = r.read_params_f32<T>();
    if (p.size() != field.params_.size()) throw IoError("field checkpoint: parameter count mismatch in " + path);
    field.params_ = std::move(p);
    return field;
  }

  void validate_against(const FieldConfig& expect) const {
    const auto& g = cfg_.grid;
    const auto& e = expect.grid;
    if (g.levels != e.levels || g.base_resolution != e.base_resolution || g.table_size_log2 != e.table_size_log2 ||
        g.feature_dim != e.feature_dim || cfg_.hidden_dim != expect.hidden_dim ||
        cfg_.hidden_layers != expect.hidden_layers)
      throw ConfigError("field checkpoint does not match configured architecture");
  }

 private:
  Vec3<T> color_from_encoding(const T* enc, const Vec3<T>& view_dir, FieldScratch<T>& s) const {
    const int enc_dim = grid_.output_dim();
    for (int i = 0; i < enc_dim; ++i) s.color_in[i] = enc[i];
    sh9(view_dir, s.color_in.data() + enc_dim);
    T logits[3];
    color_mlp_.forward(params_.data(), s.color_in.data(), logits, s.mlp_c.data());
    return {sigmoid(logits[0]), sigmoid(logits[1]), sigmoid(logits[2])};
  }

  FieldConfig cfg_;
  HashGridEncoding<T> grid_;
  SmallMlp<T> density_mlp_;
  SmallMlp<T> color_mlp_;
  std::vector<T> params_;
  Aabb<T> bbox_;

  template <typename U>
  friend struct FieldScratch;
};

// Per-worker workspace; render threads each own one.
template <typename T>
struct FieldScratch {
  std::vector<T> enc, color_in, denc, dinput, mlp_d, mlp_c, dwork;

  explicit FieldScratch(const RadianceField<T>& f) {
    int enc_dim = f.grid().output_dim();
    enc.resize(enc_dim);
    color_in.resize(enc_dim + kShDim);
    denc.resize(enc_dim);
    dinput.resize(std::max<std::size_t>(f.density_mlp_.in_dim(), f.color_mlp_.in_dim()));
    mlp_d.resize(f.density_mlp_.scratch_size());
    mlp_c.resize(f.color_mlp_.scratch_size());
    dwork.resize(std::max(f.density_mlp_.dwork_size(), f.color_mlp_.dwork_size()));
  }
};

template <typename T>
FieldScratch<T> RadianceField<T>::make_scratch() const {
  return FieldScratch<T>(*this);
}

}  // namespace nerfbooth
