#include "fieldslam/tri_plane.hpp"

#include "fieldslam/test_hook.hpp"

#include <cmath>

namespace fieldslam {

TriPlaneSet::TriPlaneSet(PlaneKind kind, const SceneBounds& bounds, int channels,
                         double coarse_cell, double fine_cell, ParamStore& store, Rng& init)
    : kind_(kind), bounds_(bounds), channels_(channels) {
  const ParamGroup group =
      kind == PlaneKind::Appearance ? ParamGroup::SceneAppearance : ParamGroup::SceneGeometry;
  static constexpr int kAxes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (int level = 0; level < 2; ++level) {
    const double cell = level == 0 ? coarse_cell : fine_cell;
    for (int p = 0; p < 3; ++p) {
      Plane pl;
      pl.axis0 = kAxes[p][0];
      pl.axis1 = kAxes[p][1];
      pl.cell = cell;
      const Vec3 ext = bounds.extent();
      pl.n0 = static_cast<int>(std::ceil(ext[pl.axis0] / cell)) + 1;
      pl.n1 = static_cast<int>(std::ceil(ext[pl.axis1] / cell)) + 1;
      pl.block = store.allocate(static_cast<Eigen::Index>(pl.n0) * pl.n1 * channels_, group);
      auto v = store.values(pl.block);
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = init.uniform(-1e-4, 1e-4);
      planes_[static_cast<size_t>(level * 3 + p)] = pl;
    }
  }
}

namespace {

struct BilinearCell {
  int i0, i1;
  double t0, t1;
};

BilinearCell locate(const SceneBounds& bounds, const TriPlaneSet::Plane& pl, const Vec3& x) {
  BilinearCell c;
  const Vec3 cl = bounds.clamp(x);
  const double u0 = (cl[pl.axis0] - bounds.min_corner[pl.axis0]) / pl.cell;
  const double u1 = (cl[pl.axis1] - bounds.min_corner[pl.axis1]) / pl.cell;
  c.i0 = std::min(std::max(0, static_cast<int>(std::floor(u0))), pl.n0 - 2);
  c.i1 = std::min(std::max(0, static_cast<int>(std::floor(u1))), pl.n1 - 2);
  c.t0 = u0 - c.i0;
  c.t1 = u1 - c.i1;
  return c;
}

}  // namespace

void TriPlaneSet::encode(const VecX& values, const Vec3& x, double* out) const {
  const int C = channels_;
  for (int level = 0; level < 2; ++level) {
    double* dst = out + level * C;
    for (int c = 0; c < C; ++c) dst[c] = 0.0;
    for (int p = 0; p < 3; ++p) {
      const Plane& pl = plane(level, p);
      const BilinearCell cell = locate(bounds_, pl, x);
      const double w00 = (1.0 - cell.t0) * (1.0 - cell.t1);
      const double w10 = cell.t0 * (1.0 - cell.t1);
      const double w01 = (1.0 - cell.t0) * cell.t1;
      const double w11 = cell.t0 * cell.t1;
      const Eigen::Index b00 = plane_param_index(pl, cell.i0, cell.i1, 0);
      const Eigen::Index b10 = plane_param_index(pl, cell.i0 + 1, cell.i1, 0);
      const Eigen::Index b01 = plane_param_index(pl, cell.i0, cell.i1 + 1, 0);
      const Eigen::Index b11 = plane_param_index(pl, cell.i0 + 1, cell.i1 + 1, 0);
      for (int c = 0; c < C; ++c) {
        dst[c] += w00 * values[b00 + c] + w10 * values[b10 + c] + w01 * values[b01 + c] +
                  w11 * values[b11 + c];
      }
    }
  }
}

Vec3 TriPlaneSet::backward(const VecX& values, VecX* grads, const Vec3& x, const double* dout,
                           bool scatter) const {
  const int C = channels_;
  const double fault = testhook::adjoint_fault("triplane");
  Vec3 dx = Vec3::Zero();
  std::array<bool, 3> interior;
  for (int a = 0; a < 3; ++a) {
    interior[static_cast<size_t>(a)] =
        x[a] > bounds_.min_corner[a] && x[a] < bounds_.max_corner[a];
  }
  for (int level = 0; level < 2; ++level) {
    const double* g = dout + level * C;
    for (int p = 0; p < 3; ++p) {
      const Plane& pl = plane(level, p);
      const BilinearCell cell = locate(bounds_, pl, x);
      const double w00 = (1.0 - cell.t0) * (1.0 - cell.t1);
      const double w10 = cell.t0 * (1.0 - cell.t1);
      const double w01 = (1.0 - cell.t0) * cell.t1;
      const double w11 = cell.t0 * cell.t1;
      const Eigen::Index b00 = plane_param_index(pl, cell.i0, cell.i1, 0);
      const Eigen::Index b10 = plane_param_index(pl, cell.i0 + 1, cell.i1, 0);
      const Eigen::Index b01 = plane_param_index(pl, cell.i0, cell.i1 + 1, 0);
      const Eigen::Index b11 = plane_param_index(pl, cell.i0 + 1, cell.i1 + 1, 0);
      double d0 = 0.0, d1 = 0.0;
      for (int c = 0; c < C; ++c) {
        const double gc = g[c];
        if (scatter) {
          (*grads)[b00 + c] += (w00 + fault) * gc;
          (*grads)[b10 + c] += w10 * gc;
          (*grads)[b01 + c] += w01 * gc;
          (*grads)[b11 + c] += w11 * gc;
        }
        const double f00 = values[b00 + c], f10 = values[b10 + c];
        const double f01 = values[b01 + c], f11 = values[b11 + c];
        d0 += gc * ((1.0 - cell.t1) * (f10 - f00) + cell.t1 * (f11 - f01));
        d1 += gc * ((1.0 - cell.t0) * (f01 - f00) + cell.t0 * (f11 - f10));
      }
      if (interior[static_cast<size_t>(pl.axis0)]) dx[pl.axis0] += d0 / pl.cell;
      if (interior[static_cast<size_t>(pl.axis1)]) dx[pl.axis1] += d1 / pl.cell;
    }
  }
  return dx;
}

}  // namespace fieldslam
