#include "fieldslam/scene_field.hpp"

#include <cmath>
#include <stdexcept>

namespace fieldslam {

SceneField::SceneField(const SceneBounds& bounds, const SceneFieldConfig& cfg, ParamStore& store)
    : bounds_(bounds), cfg_(cfg), oneblob_(bounds, cfg.oneblob) {
  if (!bounds.valid()) throw ConfigError("scene bounds must satisfy max > min per axis");
  if (!cfg.use_hash && !cfg.use_planes) {
    throw ConfigError("at least one of the hash grid and tri-planes must be enabled");
  }
  Rng init(cfg.init_seed);
  if (cfg.use_hash) hash_.emplace(bounds, cfg.hash, store, init);
  if (cfg.use_planes) {
    app_.emplace(PlaneKind::Appearance, bounds, cfg.planes.channels, cfg.planes.coarse_cell_m,
                 cfg.planes.app_fine_cell_m, store, init);
    geo_.emplace(PlaneKind::Geometry, bounds, cfg.planes.channels, cfg.planes.coarse_cell_m,
                 cfg.planes.geo_fine_cell_m, store, init);
  }
  geo_in_ = (hash_ ? hash_->dim() : 0) + (geo_ ? geo_->dim() : 0) + oneblob_.dim();
  color_in_ = (app_ ? app_->dim() : 0) + oneblob_.dim() + cfg.g_dim;
  if (geo_in_ > kMaxFeatureDim || color_in_ > kMaxFeatureDim) {
    throw ConfigError("encoder feature dimension exceeds compiled maximum");
  }
  geo_mlp_ = Mlp(geo_in_, cfg.mlp_hidden, 1 + cfg.g_dim, store, ParamGroup::Decoder, init);
  color_mlp_ = Mlp(color_in_, cfg.mlp_hidden, 3, store, ParamGroup::Decoder, init);
  log_beta_ = store.allocate(1, ParamGroup::Decoder);
  store.values()[log_beta_.offset] = std::log(cfg.beta_init);
}

void SceneField::query(const VecX& values, const Vec3& x, double* sdf, Vec3* rgb,
                       SampleCache* cache) const {
  if (!bounds_.contains(x)) clamped_.fetch_add(1, std::memory_order_relaxed);

  SampleCache local;
  SampleCache& c = cache ? *cache : local;
  c.geo_in.resize(geo_in_);
  c.color_in.resize(color_in_);

  // Geometry decoder input: hash features, geometry planes, one-blob.
  int at = 0;
  if (hash_) {
    hash_->encode(values, x, c.geo_in.data() + at);
    at += hash_->dim();
  }
  if (geo_) {
    geo_->encode(values, x, c.geo_in.data() + at);
    at += geo_->dim();
  }
  oneblob_.encode(x, c.geo_in.data() + at);

  double geo_out[1 + Mlp::kMaxWidth];
  geo_mlp_.forward(values, c.geo_in.data(), geo_out, &c.geo_mlp);
  c.sdf = geo_out[0];
  c.g.resize(cfg_.g_dim);
  for (int i = 0; i < cfg_.g_dim; ++i) c.g[i] = geo_out[1 + i];

  // Color decoder input: appearance planes, one-blob, g.
  at = 0;
  if (app_) {
    app_->encode(values, x, c.color_in.data() + at);
    at += app_->dim();
  }
  // One-blob features are shared; reuse the slice computed above.
  const int ob = oneblob_.dim();
  for (int i = 0; i < ob; ++i) c.color_in[at + i] = c.geo_in[geo_in_ - ob + i];
  at += ob;
  for (int i = 0; i < cfg_.g_dim; ++i) c.color_in[at + i] = c.g[i];

  double raw[3];
  color_mlp_.forward(values, c.color_in.data(), raw, &c.color_mlp);
  for (int i = 0; i < 3; ++i) c.rgb[i] = 1.0 / (1.0 + std::exp(-raw[i]));

  if (sdf) *sdf = c.sdf;
  if (rgb) *rgb = c.rgb;
}

Vec3 SceneField::query_backward(const VecX& values, VecX* grads, const Vec3& x,
                                const SampleCache& cache, double dsdf, const Vec3& drgb,
                                bool scatter_scene) const {
  const bool scatter_decoder = scatter_scene && grads != nullptr;

  // Color head: logistic derivative, then MLP backward.
  double draw[3];
  for (int i = 0; i < 3; ++i) draw[i] = drgb[i] * cache.rgb[i] * (1.0 - cache.rgb[i]);
  SmallVec<kMaxFeatureDim> dcolor_in(color_in_);
  color_mlp_.backward(values, grads, cache.color_in.data(), cache.color_mlp, draw,
                      dcolor_in.data(), scatter_decoder);

  // Geometry head adjoint: sdf plus the g passed into the color decoder.
  double dgeo_out[1 + Mlp::kMaxWidth];
  dgeo_out[0] = dsdf;
  const int app_dim = app_ ? app_->dim() : 0;
  const int ob = oneblob_.dim();
  for (int i = 0; i < cfg_.g_dim; ++i) dgeo_out[1 + i] = dcolor_in[app_dim + ob + i];
  SmallVec<kMaxFeatureDim> dgeo_in(geo_in_);
  geo_mlp_.backward(values, grads, cache.geo_in.data(), cache.geo_mlp, dgeo_out, dgeo_in.data(),
                    scatter_decoder);

  // Encoder adjoints: scatter into tables/planes, accumulate dL/dx.
  Vec3 dx = Vec3::Zero();
  int at = 0;
  if (hash_) {
    dx += hash_->backward(values, grads, x, dgeo_in.data() + at, scatter_scene && grads);
    at += hash_->dim();
  }
  if (geo_) {
    dx += geo_->backward(values, grads, x, dgeo_in.data() + at, scatter_scene && grads);
    at += geo_->dim();
  }
  // One-blob adjoint combines both decoders' uses.
  SmallVec<kMaxFeatureDim> dob(ob);
  for (int i = 0; i < ob; ++i) dob[i] = dgeo_in[at + i] + dcolor_in[app_dim + i];
  dx += oneblob_.backward(x, dob.data());
  if (app_) {
    dx += app_->backward(values, grads, x, dcolor_in.data(), scatter_scene && grads);
  }
  return dx;
}

}  // namespace fieldslam
