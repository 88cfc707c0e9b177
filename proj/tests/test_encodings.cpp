#include "fieldslam/grad_check.hpp"
#include "fieldslam/hash_grid.hpp"
#include "fieldslam/oneblob.hpp"
#include "fieldslam/tri_plane.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"

using namespace fieldslam;

namespace {

SceneBounds unit_bounds() {
  SceneBounds b;
  b.min_corner = Vec3(0, 0, 0);
  b.max_corner = Vec3(1, 1, 1);
  return b;
}

}  // namespace

// ---- one-blob ---------------------------------------------------------------

TEST_CASE("oneblob: activation peaks at the containing bin") {
  OneBlobConfig cfg;
  const OneBlobEncoder enc(unit_bounds(), cfg);
  std::vector<double> out(static_cast<size_t>(enc.dim()));
  for (int k = 0; k < cfg.bins; ++k) {
    const double center = (k + 0.5) / cfg.bins;
    enc.encode(Vec3(center, 0.5, 0.5), out.data());
    int argmax = 0;
    for (int j = 1; j < cfg.bins; ++j) {
      if (out[static_cast<size_t>(j)] > out[static_cast<size_t>(argmax)]) argmax = j;
    }
    CHECK(argmax == k);
  }
}

TEST_CASE("oneblob: activations strictly positive") {
  const OneBlobEncoder enc(unit_bounds(), {});
  std::vector<double> out(static_cast<size_t>(enc.dim()));
  enc.encode(Vec3(0.03, 0.5, 0.97), out.data());
  for (double v : out) CHECK(v > 0.0);
}

TEST_CASE("oneblob: mirror symmetry about the domain midpoint") {
  const OneBlobEncoder enc(unit_bounds(), {});
  const int bins = enc.bins();
  std::vector<double> a(static_cast<size_t>(enc.dim())), b(static_cast<size_t>(enc.dim()));
  enc.encode(Vec3(0.31, 0.12, 0.77), a.data());
  enc.encode(Vec3(0.69, 0.88, 0.23), b.data());
  for (int axis = 0; axis < 3; ++axis) {
    for (int j = 0; j < bins; ++j) {
      CHECK(a[static_cast<size_t>(axis * bins + j)] ==
            doctest::Approx(b[static_cast<size_t>(axis * bins + bins - 1 - j)]).epsilon(1e-12));
    }
  }
}

// Numeric integration oracle: Simpson's rule on the Gaussian kernel per bin.
static double simpson_mass(double u, double lo, double hi, double sigma) {
  const int n = 2000;
  const double h = (hi - lo) / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = lo + i * h;
    const double val = std::exp(-0.5 * std::pow((t - u) / sigma, 2)) /
                       (sigma * std::sqrt(2.0 * M_PI));
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    sum += w * val;
  }
  return sum * h / 3.0;
}

TEST_CASE("oneblob: bin masses match numeric integration, sums constant") {
  const OneBlobEncoder enc(unit_bounds(), {});
  const int bins = enc.bins();
  std::vector<double> out(static_cast<size_t>(enc.dim()));
  Rng rng(11);
  double ref_sum = -1.0;
  for (int trial = 0; trial < 20; ++trial) {
    // Interior coordinates: boundary truncation is below 1e-9 at 6+ sigma.
    const double u = rng.uniform(0.4, 0.6);
    enc.encode(Vec3(u, 0.5, 0.5), out.data());
    double sum = 0.0;
    for (int j = 0; j < bins; ++j) {
      const double oracle = simpson_mass(u, static_cast<double>(j) / bins,
                                         static_cast<double>(j + 1) / bins, enc.sigma());
      CHECK(out[static_cast<size_t>(j)] == doctest::Approx(oracle).epsilon(1e-8));
      sum += out[static_cast<size_t>(j)];
    }
    if (ref_sum < 0.0) ref_sum = sum;
    CHECK(sum == doctest::Approx(ref_sum).epsilon(1e-9));
  }
}

TEST_CASE("oneblob: dx adjoint matches finite differences") {
  const SceneBounds bounds = testutil::small_bounds();
  const OneBlobEncoder enc(bounds, {});
  Rng rng(5);
  std::vector<double> dout(static_cast<size_t>(enc.dim()));
  for (auto& v : dout) v = rng.normal();
  const Vec3 x(0.37, 0.62, 0.41);
  const Vec3 dx = enc.backward(x, dout.data());
  std::vector<double> fp(dout.size()), fm(dout.size());
  const double h = 1e-6;
  for (int a = 0; a < 3; ++a) {
    Vec3 xp = x, xm = x;
    xp[a] += h;
    xm[a] -= h;
    enc.encode(xp, fp.data());
    enc.encode(xm, fm.data());
    double fd = 0.0;
    for (size_t i = 0; i < dout.size(); ++i) fd += dout[i] * (fp[i] - fm[i]) / (2.0 * h);
    CHECK(dx[a] == doctest::Approx(fd).epsilon(1e-5));
  }
}

// ---- hash grid ----------------------------------------------------------------

TEST_CASE("hashgrid: exact vertex query returns the stored feature") {
  ParamStore store;
  Rng init(3);
  HashGridConfig cfg;
  cfg.levels = 4;
  cfg.table_size_log2 = 9;
  cfg.base_resolution = 4;
  cfg.finest_voxel_m = 0.05;
  const SceneBounds bounds = testutil::small_bounds();
  const HashGrid grid(bounds, cfg, store, init);
  Rng rng(17);
  for (Eigen::Index i = 0; i < store.size(); ++i) store.values()[i] = rng.uniform(-1, 1);

  std::vector<double> out(static_cast<size_t>(grid.dim()));
  // A vertex of the coarsest level is a vertex of-no other level in general,
  // so check each level at one of its own lattice vertices.
  for (int l = 0; l < cfg.levels; ++l) {
    const double e = grid.voxel_edge(l);
    const Vec3 x = bounds.min_corner + Vec3(2 * e, e, 3 * e);
    if (!bounds.contains(x)) continue;
    grid.encode(store.values(), x, out.data());
    for (int f = 0; f < cfg.features_per_level; ++f) {
      const double stored = store.values()[grid.vertex_param_index(l, 2, 1, 3, f)];
      CHECK(out[static_cast<size_t>(l * cfg.features_per_level + f)] ==
            doctest::Approx(stored).epsilon(1e-9));
    }
  }
}

TEST_CASE("hashgrid: voxel-center query is the mean of 8 corners") {
  ParamStore store;
  Rng init(4);
  HashGridConfig cfg;
  cfg.levels = 3;
  cfg.table_size_log2 = 8;
  cfg.base_resolution = 4;
  cfg.finest_voxel_m = 0.08;
  const SceneBounds bounds = testutil::small_bounds();
  const HashGrid grid(bounds, cfg, store, init);
  Rng rng(18);
  for (Eigen::Index i = 0; i < store.size(); ++i) store.values()[i] = rng.uniform(-1, 1);

  const int level = 1;
  const double e = grid.voxel_edge(level);
  const Vec3 x = bounds.min_corner + Vec3(1.5 * e, 2.5 * e, 0.5 * e);
  REQUIRE(bounds.contains(x));
  std::vector<double> out(static_cast<size_t>(grid.dim()));
  grid.encode(store.values(), x, out.data());
  for (int f = 0; f < cfg.features_per_level; ++f) {
    double mean = 0.0;
    for (int c = 0; c < 8; ++c) {
      mean += store.values()[grid.vertex_param_index(level, 1 + (c & 1), 2 + ((c >> 1) & 1),
                                                     0 + ((c >> 2) & 1), f)];
    }
    mean /= 8.0;
    CHECK(out[static_cast<size_t>(level * cfg.features_per_level + f)] ==
          doctest::Approx(mean).epsilon(1e-9));
  }
}

TEST_CASE("hashgrid: adjoint into table entries equals trilinear weight (FD)") {
  ParamStore store;
  Rng init(5);
  HashGridConfig cfg;
  cfg.levels = 3;
  cfg.table_size_log2 = 7;
  cfg.base_resolution = 4;
  cfg.finest_voxel_m = 0.06;
  const SceneBounds bounds = testutil::small_bounds();
  const HashGrid grid(bounds, cfg, store, init);
  Rng rng(19);
  for (Eigen::Index i = 0; i < store.size(); ++i) store.values()[i] = rng.uniform(-1, 1);

  const Vec3 x(0.33, 0.48, 0.21);
  std::vector<double> dout(static_cast<size_t>(grid.dim()));
  for (auto& v : dout) v = rng.normal();

  store.zero_grads();
  grid.backward(store.values(), &store.grads(), x, dout.data(), true);

  // Scalar objective dout . encode(x); central differences on touched entries.
  const auto f = [&](ParamStore& s) {
    std::vector<double> out(static_cast<size_t>(grid.dim()));
    grid.encode(s.values(), x, out.data());
    double acc = 0.0;
    for (size_t i = 0; i < out.size(); ++i) acc += dout[i] * out[i];
    return acc;
  };
  std::set<Eigen::Index> touched;
  for (int l = 0; l < cfg.levels; ++l) {
    for (uint32_t slot : grid.stencil_slots(l, x)) {
      for (int feat = 0; feat < cfg.features_per_level; ++feat) {
        touched.insert(grid.param_index(l, slot, feat));
      }
    }
  }
  const std::vector<Eigen::Index> subset(touched.begin(), touched.end());
  const GradCheckReport rep = gradient_check(f, store, 1e-5, subset);
  CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("hashgrid: locality of table perturbations") {
  ParamStore store;
  Rng init(6);
  HashGridConfig cfg;
  cfg.levels = 2;
  cfg.table_size_log2 = 6;
  cfg.base_resolution = 4;
  cfg.finest_voxel_m = 0.1;
  const SceneBounds bounds = testutil::small_bounds();
  const HashGrid grid(bounds, cfg, store, init);
  Rng rng(20);
  for (Eigen::Index i = 0; i < store.size(); ++i) store.values()[i] = rng.uniform(-1, 1);

  std::vector<Vec3> points;
  for (int i = 0; i < 64; ++i) {
    points.emplace_back(rng.uniform(0, 1.2), rng.uniform(0, 1.0), rng.uniform(0, 0.8));
  }
  std::vector<std::vector<double>> before;
  for (const Vec3& p : points) {
    std::vector<double> out(static_cast<size_t>(grid.dim()));
    grid.encode(store.values(), p, out.data());
    before.push_back(out);
  }
  const int level = 1;
  const uint32_t slot = 13;
  store.values()[grid.param_index(level, slot, 0)] += 0.5;
  for (size_t pi = 0; pi < points.size(); ++pi) {
    std::vector<double> out(static_cast<size_t>(grid.dim()));
    grid.encode(store.values(), points[pi], out.data());
    const auto slots = grid.stencil_slots(level, points[pi]);
    const bool in_stencil = std::find(slots.begin(), slots.end(), slot) != slots.end();
    bool changed = false;
    for (size_t i = 0; i < out.size(); ++i) {
      if (out[i] != before[pi][i]) changed = true;
    }
    if (in_stencil) {
      // Weight can be zero on a stencil boundary; allow no-change there.
      continue;
    }
    CHECK(!changed);
  }
}

TEST_CASE("hashgrid: exactly trilinear within a cell") {
  ParamStore store;
  Rng init(7);
  HashGridConfig cfg;
  cfg.levels = 1;
  cfg.table_size_log2 = 10;
  cfg.base_resolution = 4;
  cfg.finest_voxel_m = 1.0;  // single coarse level
  const SceneBounds bounds = testutil::small_bounds();
  const HashGrid grid(bounds, cfg, store, init);
  Rng rng(21);
  for (Eigen::Index i = 0; i < store.size(); ++i) store.values()[i] = rng.uniform(-1, 1);

  const double e = grid.voxel_edge(0);
  const Vec3 base = bounds.min_corner + Vec3(e, e, e);
  // Closed form from the 8 corner features of cell (1,1,1).
  double corner[8];
  for (int c = 0; c < 8; ++c) {
    corner[c] =
        store.values()[grid.vertex_param_index(0, 1 + (c & 1), 1 + ((c >> 1) & 1),
                                               1 + ((c >> 2) & 1), 0)];
  }
  for (int trial = 0; trial < 32; ++trial) {
    const Vec3 t(rng.uniform01(), rng.uniform01(), rng.uniform01());
    const Vec3 x = base + e * t;
    if (!bounds.contains(x)) continue;
    std::vector<double> out(static_cast<size_t>(grid.dim()));
    grid.encode(store.values(), x, out.data());
    double expect = 0.0;
    for (int c = 0; c < 8; ++c) {
      const double w = ((c & 1) ? t[0] : 1 - t[0]) * (((c >> 1) & 1) ? t[1] : 1 - t[1]) *
                       (((c >> 2) & 1) ? t[2] : 1 - t[2]);
      expect += w * corner[c];
    }
    CHECK(out[0] == doctest::Approx(expect).epsilon(1e-12));
  }
}

// ---- tri-planes ------------------------------------------------------------------

TEST_CASE("triplane: zero planes give a zero feature") {
  ParamStore store;
  Rng init(8);
  const SceneBounds bounds = testutil::small_bounds();
  TriPlaneSet planes(PlaneKind::Appearance, bounds, 8, 0.4, 0.1, store, init);
  store.values().setZero();
  std::vector<double> out(static_cast<size_t>(planes.dim()));
  planes.encode(store.values(), Vec3(0.7, 0.3, 0.5), out.data());
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("triplane: constant coarse xy-plane fills the first half with k") {
  ParamStore store;
  Rng init(9);
  const SceneBounds bounds = testutil::small_bounds();
  const int C = 8;
  TriPlaneSet planes(PlaneKind::Appearance, bounds, C, 0.4, 0.1, store, init);
  store.values().setZero();
  const auto& xy = planes.plane(0, 0);
  for (int i1 = 0; i1 < xy.n1; ++i1) {
    for (int i0 = 0; i0 < xy.n0; ++i0) {
      for (int c = 0; c < C; ++c) {
        store.values()[planes.plane_param_index(xy, i0, i1, c)] = 2.5;
      }
    }
  }
  std::vector<double> out(static_cast<size_t>(planes.dim()));
  planes.encode(store.values(), Vec3(0.9, 0.2, 0.6), out.data());
  for (int c = 0; c < C; ++c) CHECK(out[static_cast<size_t>(c)] == doctest::Approx(2.5));
  for (int c = C; c < 2 * C; ++c) CHECK(out[static_cast<size_t>(c)] == 0.0);
}

// Independent bilinear reference for one plane.
static double bilerp_plane(const ParamStore& store, const TriPlaneSet& set,
                           const TriPlaneSet::Plane& pl, const SceneBounds& bounds, const Vec3& x,
                           int channel) {
  const double u0 = (x[pl.axis0] - bounds.min_corner[pl.axis0]) / pl.cell;
  const double u1 = (x[pl.axis1] - bounds.min_corner[pl.axis1]) / pl.cell;
  const int i0 = std::min(std::max(0, static_cast<int>(std::floor(u0))), pl.n0 - 2);
  const int i1 = std::min(std::max(0, static_cast<int>(std::floor(u1))), pl.n1 - 2);
  const double t0 = u0 - i0, t1 = u1 - i1;
  const double f00 = store.values()[set.plane_param_index(pl, i0, i1, channel)];
  const double f10 = store.values()[set.plane_param_index(pl, i0 + 1, i1, channel)];
  const double f01 = store.values()[set.plane_param_index(pl, i0, i1 + 1, channel)];
  const double f11 = store.values()[set.plane_param_index(pl, i0 + 1, i1 + 1, channel)];
  return (1 - t0) * (1 - t1) * f00 + t0 * (1 - t1) * f10 + (1 - t0) * t1 * f01 + t0 * t1 * f11;
}

TEST_CASE("triplane: random planes match per-plane bilinear oracle summed") {
  ParamStore store;
  Rng init(10);
  const SceneBounds bounds = testutil::small_bounds();
  const int C = 8;
  TriPlaneSet planes(PlaneKind::Geometry, bounds, C, 0.4, 0.1, store, init);
  Rng rng(23);
  for (Eigen::Index i = 0; i < store.size(); ++i) store.values()[i] = rng.uniform(-2, 2);
  std::vector<double> out(static_cast<size_t>(planes.dim()));
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 x(rng.uniform(0, 1.2), rng.uniform(0, 1.0), rng.uniform(0, 0.8));
    planes.encode(store.values(), x, out.data());
    for (int level = 0; level < 2; ++level) {
      const int c = static_cast<int>(rng.uniform_int(C));
      double expect = 0.0;
      for (int p = 0; p < 3; ++p) {
        expect += bilerp_plane(store, planes, planes.plane(level, p), bounds, x, c);
      }
      CHECK(out[static_cast<size_t>(level * C + c)] == doctest::Approx(expect).epsilon(1e-10));
    }
  }
}

TEST_CASE("triplane: adjoints match finite differences") {
  ParamStore store;
  Rng init(11);
  const SceneBounds bounds = testutil::small_bounds();
  const int C = 4;
  TriPlaneSet planes(PlaneKind::Geometry, bounds, C, 0.4, 0.15, store, init);
  Rng rng(29);
  for (Eigen::Index i = 0; i < store.size(); ++i) store.values()[i] = rng.uniform(-1, 1);
  const Vec3 x(0.51, 0.77, 0.33);
  std::vector<double> dout(static_cast<size_t>(planes.dim()));
  for (auto& v : dout) v = rng.normal();

  store.zero_grads();
  const Vec3 dx = planes.backward(store.values(), &store.grads(), x, dout.data(), true);

  const auto f = [&](ParamStore& s) {
    std::vector<double> out(static_cast<size_t>(planes.dim()));
    planes.encode(s.values(), x, out.data());
    double acc = 0.0;
    for (size_t i = 0; i < out.size(); ++i) acc += dout[i] * out[i];
    return acc;
  };
  // Parameter adjoints on a random subset of touched entries.
  std::vector<Eigen::Index> subset;
  for (int i = 0; i < 40; ++i) subset.push_back(static_cast<Eigen::Index>(
      rng.uniform_int(static_cast<uint64_t>(store.size()))));
  const GradCheckReport rep = gradient_check(f, store, 1e-6, subset);
  CHECK(rep.max_rel_err < 1e-7);

  // Spatial adjoint.
  const double h = 1e-6;
  for (int a = 0; a < 3; ++a) {
    Vec3 xp = x, xm = x;
    xp[a] += h;
    xm[a] -= h;
    std::vector<double> op(dout.size()), om(dout.size());
    planes.encode(store.values(), xp, op.data());
    planes.encode(store.values(), xm, om.data());
    double fd = 0.0;
    for (size_t i = 0; i < dout.size(); ++i) fd += dout[i] * (op[i] - om[i]) / (2 * h);
    CHECK(dx[a] == doctest::Approx(fd).epsilon(1e-6));
  }
}
