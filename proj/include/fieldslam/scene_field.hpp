#pragma once

#include "fieldslam/bounds.hpp"
#include "fieldslam/hash_grid.hpp"
#include "fieldslam/mlp.hpp"
#include "fieldslam/oneblob.hpp"
#include "fieldslam/param_store.hpp"
#include "fieldslam/tri_plane.hpp"

#include <atomic>
#include <optional>

namespace fieldslam {

struct SceneFieldConfig {
  OneBlobConfig oneblob;
  HashGridConfig hash;
  TriPlaneConfig planes;
  int g_dim = 15;
  int mlp_hidden = 32;
  double beta_init = 10.0;
  bool use_hash = true;
  bool use_planes = true;
  uint64_t init_seed = 1;
};

// The trainable scene: one-blob + hash grid + geometry/appearance tri-planes
// feeding a geometry decoder (SDF in truncation-normalized units plus an
// embedding g) and a color decoder (logistic RGB). All parameters live in one
// ParamStore; beta of the SDF-to-density mapping is stored in log space.
class SceneField {
 public:
  static constexpr int kMaxFeatureDim = 192;

  SceneField(const SceneBounds& bounds, const SceneFieldConfig& cfg, ParamStore& store);

  const SceneBounds& bounds() const { return bounds_; }
  const SceneFieldConfig& config() const { return cfg_; }
  const OneBlobEncoder& oneblob() const { return oneblob_; }
  const HashGrid* hash_grid() const { return hash_ ? &*hash_ : nullptr; }
  const TriPlaneSet* appearance_planes() const { return app_ ? &*app_ : nullptr; }
  const TriPlaneSet* geometry_planes() const { return geo_ ? &*geo_ : nullptr; }
  const Mlp& geometry_mlp() const { return geo_mlp_; }
  const Mlp& color_mlp() const { return color_mlp_; }
  Eigen::Index log_beta_index() const { return log_beta_.offset; }

  int geo_in_dim() const { return geo_in_; }
  int color_in_dim() const { return color_in_; }
  int g_dim() const { return cfg_.g_dim; }

  double beta(const VecX& values) const { return std::exp(values[log_beta_.offset]); }

  // Count of queries whose point needed clamping into bounds (debug aid).
  int64_t clamped_queries() const { return clamped_.load(); }

  struct SampleCache {
    SmallVec<kMaxFeatureDim> geo_in, color_in;
    Mlp::Cache geo_mlp, color_mlp;
    SmallVec<Mlp::kMaxWidth> g;
    Vec3 rgb;  // post-logistic
    double sdf = 0.0;
  };

  // Full field query at world point x. rgb is in (0,1)^3.
  void query(const VecX& values, const Vec3& x, double* sdf, Vec3* rgb,
             SampleCache* cache) const;

  // Backward for one sample. Accumulates parameter gradients into grads when
  // scatter_scene is true, and always returns dL/dx for pose chains.
  Vec3 query_backward(const VecX& values, VecX* grads, const Vec3& x, const SampleCache& cache,
                      double dsdf, const Vec3& drgb, bool scatter_scene) const;

 private:
  SceneBounds bounds_;
  SceneFieldConfig cfg_;
  OneBlobEncoder oneblob_;
  std::optional<HashGrid> hash_;
  std::optional<TriPlaneSet> app_, geo_;
  Mlp geo_mlp_, color_mlp_;
  ParamBlock log_beta_;
  int geo_in_ = 0, color_in_ = 0;
  mutable std::atomic<int64_t> clamped_{0};
};

}  // namespace fieldslam
