#include "fieldslam/hash_grid.hpp"

#include "fieldslam/test_hook.hpp"

#include <cmath>

namespace fieldslam {

namespace {
constexpr uint64_t kPrimeX = 73856093ull;
constexpr uint64_t kPrimeY = 19349663ull;
constexpr uint64_t kPrimeZ = 83492791ull;
}  // namespace

HashGrid::HashGrid(const SceneBounds& bounds, const HashGridConfig& cfg, ParamStore& store,
                   Rng& init)
    : bounds_(bounds), cfg_(cfg) {
  table_size_ = Eigen::Index(1) << cfg_.table_size_log2;
  edge_.resize(static_cast<size_t>(cfg_.levels));
  const double coarsest = bounds_.longest_axis() / static_cast<double>(cfg_.base_resolution);
  const double finest = std::min(cfg_.finest_voxel_m, coarsest);
  for (int l = 0; l < cfg_.levels; ++l) {
    const double s = cfg_.levels > 1 ? static_cast<double>(l) / (cfg_.levels - 1) : 0.0;
    edge_[static_cast<size_t>(l)] = coarsest * std::pow(finest / coarsest, s);
  }
  block_ = store.allocate(static_cast<Eigen::Index>(cfg_.levels) * table_size_ *
                              cfg_.features_per_level,
                          ParamGroup::SceneGeometry);
  auto v = store.values(block_);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = init.uniform(-1e-4, 1e-4);
}

uint32_t HashGrid::hash_index(int ix, int iy, int iz) const {
  const uint64_t h = static_cast<uint64_t>(ix) * kPrimeX ^ static_cast<uint64_t>(iy) * kPrimeY ^
                     static_cast<uint64_t>(iz) * kPrimeZ;
  return static_cast<uint32_t>(h & (static_cast<uint64_t>(table_size_) - 1));
}

void HashGrid::locate(int level, const Vec3& x, std::array<int, 3>& cell, Vec3& frac) const {
  const Vec3 c = bounds_.clamp(x);
  const double e = edge_[static_cast<size_t>(level)];
  for (int a = 0; a < 3; ++a) {
    const double u = (c[a] - bounds_.min_corner[a]) / e;
    int i = static_cast<int>(std::floor(u));
    double t = u - i;
    // Keep the stencil inside the lattice covering the bounds.
    const int max_cell = std::max(0, static_cast<int>(std::floor(bounds_.extent()[a] / e)));
    if (i > max_cell) {
      i = max_cell;
      t = 1.0;
    }
    if (i < 0) {
      i = 0;
      t = 0.0;
    }
    cell[static_cast<size_t>(a)] = i;
    frac[a] = t;
  }
}

void HashGrid::encode(const VecX& values, const Vec3& x, double* out) const {
  const int F = cfg_.features_per_level;
  std::array<int, 3> cell;
  Vec3 t;
  for (int l = 0; l < cfg_.levels; ++l) {
    locate(l, x, cell, t);
    double* dst = out + l * F;
    for (int f = 0; f < F; ++f) dst[f] = 0.0;
    for (int c = 0; c < 8; ++c) {
      const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
      const double w = (dx ? t[0] : 1.0 - t[0]) * (dy ? t[1] : 1.0 - t[1]) *
                       (dz ? t[2] : 1.0 - t[2]);
      const Eigen::Index base =
          param_index(l, hash_index(cell[0] + dx, cell[1] + dy, cell[2] + dz), 0);
      for (int f = 0; f < F; ++f) dst[f] += w * values[base + f];
    }
  }
}

Vec3 HashGrid::backward(const VecX& values, VecX* grads, const Vec3& x, const double* dout,
                        bool scatter) const {
  const int F = cfg_.features_per_level;
  const bool interior_x = x[0] > bounds_.min_corner[0] && x[0] < bounds_.max_corner[0];
  const bool interior_y = x[1] > bounds_.min_corner[1] && x[1] < bounds_.max_corner[1];
  const bool interior_z = x[2] > bounds_.min_corner[2] && x[2] < bounds_.max_corner[2];
  const double fault = testhook::adjoint_fault("hashgrid");
  Vec3 dxdy = Vec3::Zero();
  std::array<int, 3> cell;
  Vec3 t;
  for (int l = 0; l < cfg_.levels; ++l) {
    locate(l, x, cell, t);
    const double inv_e = 1.0 / edge_[static_cast<size_t>(l)];
    const double* g = dout + l * F;
    for (int c = 0; c < 8; ++c) {
      const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
      const double wx = dx ? t[0] : 1.0 - t[0];
      const double wy = dy ? t[1] : 1.0 - t[1];
      const double wz = dz ? t[2] : 1.0 - t[2];
      const double w = wx * wy * wz;
      const Eigen::Index base =
          param_index(l, hash_index(cell[0] + dx, cell[1] + dy, cell[2] + dz), 0);
      double gdotf = 0.0;
      for (int f = 0; f < F; ++f) {
        if (scatter) (*grads)[base + f] += (w + fault) * g[f];
        gdotf += g[f] * values[base + f];
      }
      const double sx = dx ? 1.0 : -1.0;
      const double sy = dy ? 1.0 : -1.0;
      const double sz = dz ? 1.0 : -1.0;
      if (interior_x) dxdy[0] += gdotf * sx * wy * wz * inv_e;
      if (interior_y) dxdy[1] += gdotf * sy * wx * wz * inv_e;
      if (interior_z) dxdy[2] += gdotf * sz * wx * wy * inv_e;
    }
  }
  return dxdy;
}

std::array<uint32_t, 8> HashGrid::stencil_slots(int level, const Vec3& x) const {
  std::array<int, 3> cell;
  Vec3 t;
  locate(level, x, cell, t);
  std::array<uint32_t, 8> out;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    out[static_cast<size_t>(c)] = hash_index(cell[0] + dx, cell[1] + dy, cell[2] + dz);
  }
  return out;
}

}  // namespace fieldslam
