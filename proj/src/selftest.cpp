#include "fieldslam/selftest.hpp"

#include "fieldslam/config.hpp"
#include "fieldslam/grad_check.hpp"
#include "fieldslam/metrics.hpp"
#include "fieldslam/synthetic.hpp"
#include "fieldslam/test_hook.hpp"
#include "fieldslam/threading.hpp"
#include "fieldslam/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace fieldslam {

namespace {

struct Harness {
  SelftestReport* report;
  std::ostream* os;

  void add(const std::string& name, double err, double tol) {
    SelftestCheck c;
    c.name = name;
    c.max_err = err;
    c.tol = tol;
    c.pass = err <= tol;
    report->checks.push_back(c);
    report->all_pass &= c.pass;
    (*os) << (c.pass ? "[ok]   " : "[FAIL] ") << name << "  max_err=" << err << "  tol=" << tol
          << "\n";
  }
};

// Central differences across a ReLU kink (or a grid cell face) measure the
// average of the two one-sided slopes, not the analytic one-sided gradient.
// Shrinking h moves the stencil off the kink, so a correct adjoint passes at
// some h in the ladder while a broken one fails at every h.
double kink_robust_check(const std::function<double(ParamStore&)>& f, ParamStore& store,
                         std::span<const Eigen::Index> subset, double tol) {
  double worst = 0.0;
  for (const Eigen::Index idx : subset) {
    const Eigen::Index one[] = {idx};
    double best = std::numeric_limits<double>::infinity();
    for (const double h : {1e-5, 1e-6, 1e-7, 1e-8}) {
      const GradCheckReport rep = gradient_check(f, store, h, one);
      best = std::min(best, rep.max_rel_err);
      if (best < 0.1 * tol) break;
    }
    worst = std::max(worst, best);
  }
  return worst;
}

// Draw k distinct entries from the indices with nonzero analytic gradient.
std::vector<Eigen::Index> pick_touched(const VecX& grads, Eigen::Index lo, Eigen::Index hi,
                                       int k, Rng& rng) {
  std::vector<Eigen::Index> touched;
  for (Eigen::Index i = lo; i < hi; ++i) {
    if (grads[i] != 0.0) touched.push_back(i);
  }
  std::vector<Eigen::Index> out;
  if (touched.empty()) return out;
  for (int i = 0; i < k; ++i) {
    out.push_back(touched[rng.uniform_int(touched.size())]);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

SelftestReport run_selftest(const SelftestOptions& opts, std::ostream& os) {
  SelftestReport report;
  Harness h{&report, &os};
  testhook::adjoint_fault_op = opts.fault_op;

  RunConfig cfg;
  cfg.seed = opts.seed;
  const SceneBounds bounds = cfg.bounds();
  Rng rng(opts.seed + 101);

  // A small synthetic observation so rays see real geometry.
  SyntheticSceneConfig scfg;
  scfg.width = 80;
  scfg.height = 60;
  scfg.focal = 60;
  const SyntheticScene scene(scfg);
  Frame frame;
  frame.id = 0;
  frame.timestamp = 0.0;
  frame.intrinsics = scene.intrinsics();
  frame.pose = scene.pose_at(0);
  {
    std::vector<float> rgb, depth;
    render_synthetic_frame(scene, frame.pose, frame.intrinsics, rgb, depth);
    frame.rgb = std::move(rgb);
    frame.depth = std::move(depth);
  }

  ParamStore store;
  const SceneField field(bounds, cfg.field_config(), store);
  // Give features structure so gradients are informative.
  for (Eigen::Index i = 0; i < store.size(); ++i) {
    const ParamGroup g = store.group_of(i);
    if (g == ParamGroup::SceneGeometry || g == ParamGroup::SceneAppearance) {
      store.values()[i] = rng.uniform(-0.2, 0.2);
    }
  }

  // ---- per-op adjoints against finite differences --------------------------
  {
    const OneBlobEncoder& ob = field.oneblob();
    std::vector<double> dout(static_cast<size_t>(ob.dim()));
    for (auto& v : dout) v = rng.normal();
    const Vec3 x(1.3, 1.1, 0.9);
    const Vec3 dx = ob.backward(x, dout.data());
    double max_err = 0.0;
    const double step = 1e-6;
    for (int a = 0; a < 3; ++a) {
      Vec3 xp = x, xm = x;
      xp[a] += step;
      xm[a] -= step;
      std::vector<double> fp(dout.size()), fm(dout.size());
      ob.encode(xp, fp.data());
      ob.encode(xm, fm.data());
      double fd = 0.0;
      for (size_t i = 0; i < dout.size(); ++i) fd += dout[i] * (fp[i] - fm[i]) / (2 * step);
      max_err = std::max(max_err, std::abs(dx[a] - fd) / std::max(1.0, std::abs(fd)));
    }
    h.add("adjoint/oneblob", max_err, 1e-4);
  }
  {
    const HashGrid& grid = *field.hash_grid();
    std::vector<double> dout(static_cast<size_t>(grid.dim()));
    for (auto& v : dout) v = rng.normal();
    const Vec3 x(2.1, 1.7, 1.2);
    store.zero_grads();
    grid.backward(store.values(), &store.grads(), x, dout.data(), true);
    const auto f = [&](ParamStore& s) {
      std::vector<double> out(static_cast<size_t>(grid.dim()));
      grid.encode(s.values(), x, out.data());
      return std::inner_product(out.begin(), out.end(), dout.begin(), 0.0);
    };
    const auto subset =
        pick_touched(store.grads(), grid.block().offset, grid.block().offset + grid.block().size,
                     40, rng);
    const GradCheckReport rep = gradient_check(f, store, 1e-5, subset);
    h.add("adjoint/hashgrid", rep.max_rel_err, 1e-4);
  }
  {
    const TriPlaneSet& planes = *field.appearance_planes();
    std::vector<double> dout(static_cast<size_t>(planes.dim()));
    for (auto& v : dout) v = rng.normal();
    const Vec3 x(1.9, 1.4, 1.0);
    store.zero_grads();
    planes.backward(store.values(), &store.grads(), x, dout.data(), true);
    const auto f = [&](ParamStore& s) {
      std::vector<double> out(static_cast<size_t>(planes.dim()));
      planes.encode(s.values(), x, out.data());
      return std::inner_product(out.begin(), out.end(), dout.begin(), 0.0);
    };
    const auto subset = pick_touched(store.grads(), 0, store.size(), 40, rng);
    const GradCheckReport rep = gradient_check(f, store, 1e-5, subset);
    h.add("adjoint/triplane", rep.max_rel_err, 1e-4);
  }
  {
    const Mlp& mlp = field.geometry_mlp();
    std::vector<double> in(static_cast<size_t>(mlp.in_dim()));
    for (auto& v : in) v = rng.normal();
    std::vector<double> dout(static_cast<size_t>(mlp.out_dim()));
    for (auto& v : dout) v = rng.normal();
    std::vector<double> out(static_cast<size_t>(mlp.out_dim()));
    Mlp::Cache cache;
    mlp.forward(store.values(), in.data(), out.data(), &cache);
    store.zero_grads();
    std::vector<double> din(static_cast<size_t>(mlp.in_dim()));
    mlp.backward(store.values(), &store.grads(), in.data(), cache, dout.data(), din.data(), true);
    const auto f = [&](ParamStore& s) {
      std::vector<double> o(static_cast<size_t>(mlp.out_dim()));
      mlp.forward(s.values(), in.data(), o.data(), nullptr);
      return std::inner_product(o.begin(), o.end(), dout.begin(), 0.0);
    };
    const auto subset = pick_touched(store.grads(), mlp.block().offset,
                                     mlp.block().offset + mlp.block().size, 40, rng);
    const GradCheckReport rep = gradient_check(f, store, 1e-6, subset);
    // The input adjoint is covered by the full-loss pose chain below.
    h.add("adjoint/mlp", rep.max_rel_err, 1e-4);
  }
  {
    double max_err = 0.0;
    for (int trial = 0; trial < 64; ++trial) {
      const double sdf = rng.uniform(-1.2, 1.2);
      const double beta = rng.uniform(1.0, 25.0);
      const DensityGrad g = sdf_to_density_grad(sdf, beta);
      const double step = 1e-6;
      const double fd_s =
          (sdf_to_density(sdf + step, beta) - sdf_to_density(sdf - step, beta)) / (2 * step);
      const double fd_b =
          (sdf_to_density(sdf, beta + step) - sdf_to_density(sdf, beta - step)) / (2 * step);
      max_err = std::max(max_err, std::abs(g.d_sdf - fd_s) / std::max(1.0, std::abs(fd_s)));
      max_err = std::max(max_err, std::abs(g.d_beta - fd_b) / std::max(1.0, std::abs(fd_b)));
    }
    h.add("adjoint/density", max_err, 1e-4);
  }

  // ---- full-loss gradient integrity (8-ray batches, every group) -----------
  {
    TrainConfig tc = cfg.train_config();
    tc.threads = resolve_threads(opts.threads);
    tc.patch.side = 2;
    tc.patch.reps = 2;
    tc.patch.kernel = 2;
    tc.patch.stride = 1;
    ParamStore pose_store;
    pose_store.allocate(6, ParamGroup::Pose);
    const WindowFrame window[] = {{&frame, 0}};
    const int counts[] = {8};
    Rng plan_rng(opts.seed + 5);
    const Plan plan = make_plan(field, window, counts, tc, plan_rng);
    const ForwardResult fwd =
        forward_loss(field, store.values(), pose_store.values(), window, plan, tc);
    store.zero_grads();
    VecX pose_grads = VecX::Zero(6);
    backward(field, store.values(), pose_store.values(), window, plan, fwd, tc, &store.grads(),
             &pose_grads);
    const auto f = [&](ParamStore& s) {
      return forward_loss(field, s.values(), pose_store.values(), window, plan, tc).losses.total;
    };

    const auto check_block = [&](const char* name, Eigen::Index lo, Eigen::Index hi, int k) {
      const auto subset = pick_touched(store.grads(), lo, hi, k, rng);
      if (subset.empty()) {
        h.add(std::string("gradients/") + name, 1.0, 1e-4);
        return;
      }
      h.add(std::string("gradients/") + name, kink_robust_check(f, store, subset, 1e-4), 1e-4);
    };
    const HashGrid& grid = *field.hash_grid();
    check_block("hash-tables", grid.block().offset, grid.block().offset + grid.block().size, 50);
    const TriPlaneSet* app = field.appearance_planes();
    const TriPlaneSet* geo = field.geometry_planes();
    for (int level = 0; level < 2; ++level) {
      for (int p = 0; p < 3; ++p) {
        const char* names_app[2][3] = {{"plane-a-xy-coarse", "plane-a-xz-coarse", "plane-a-yz-coarse"},
                                       {"plane-a-xy-fine", "plane-a-xz-fine", "plane-a-yz-fine"}};
        const char* names_geo[2][3] = {{"plane-g-xy-coarse", "plane-g-xz-coarse", "plane-g-yz-coarse"},
                                       {"plane-g-xy-fine", "plane-g-xz-fine", "plane-g-yz-fine"}};
        const auto& pa = app->plane(level, p);
        check_block(names_app[level][p], pa.block.offset, pa.block.offset + pa.block.size, 10);
        const auto& pg = geo->plane(level, p);
        check_block(names_geo[level][p], pg.block.offset, pg.block.offset + pg.block.size, 10);
      }
    }
    const Mlp& gm = field.geometry_mlp();
    check_block("geometry-decoder", gm.block().offset, gm.block().offset + gm.block().size, 25);
    const Mlp& cm = field.color_mlp();
    check_block("color-decoder", cm.block().offset, cm.block().offset + cm.block().size, 25);
    {
      const Eigen::Index subset[] = {field.log_beta_index()};
      h.add("gradients/beta", kink_robust_check(f, store, subset, 1e-4), 1e-4);
    }
    {
      pose_store.grads() = pose_grads;
      const auto fp = [&](ParamStore& s) {
        return forward_loss(field, store.values(), s.values(), window, plan, tc).losses.total;
      };
      const Eigen::Index subset[] = {0, 1, 2, 3, 4, 5};
      h.add("gradients/pose", kink_robust_check(fp, pose_store, subset, 1e-4), 1e-4);
    }
  }

  // ---- oracle equivalence ----------------------------------------------------
  {
    double max_err = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 1 + static_cast<int>(rng.uniform_int(40));
      std::vector<double> sigma(static_cast<size_t>(n)), z(static_cast<size_t>(n)),
          w(static_cast<size_t>(n));
      std::vector<Vec3> rgb(static_cast<size_t>(n));
      double zacc = 0.0;
      for (int i = 0; i < n; ++i) {
        sigma[static_cast<size_t>(i)] = rng.uniform(0, 3);
        zacc += rng.uniform(0.01, 0.2);
        z[static_cast<size_t>(i)] = zacc;
        rgb[static_cast<size_t>(i)] = Vec3(rng.uniform01(), rng.uniform01(), rng.uniform01());
      }
      Vec3 c;
      double d;
      composite(sigma, rgb, z, w, &c, &d);
      // Naive sequential accumulation.
      Vec3 c2 = Vec3::Zero();
      double d2 = 0.0;
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = 0; k < i; ++k) acc += sigma[static_cast<size_t>(k)];
        const double wi = std::exp(-acc) * (1.0 - std::exp(-sigma[static_cast<size_t>(i)]));
        max_err = std::max(max_err, std::abs(wi - w[static_cast<size_t>(i)]));
        c2 += wi * rgb[static_cast<size_t>(i)];
        d2 += wi * z[static_cast<size_t>(i)];
      }
      max_err = std::max(max_err, (c - c2).cwiseAbs().maxCoeff());
      max_err = std::max(max_err, std::abs(d - d2));
    }
    h.add("oracle/composite", max_err, 1e-10);
  }
  {
    PatchSpec spec;
    double max_err = 0.0;
    const int side = 12;
    std::vector<double> x(static_cast<size_t>(side * side)), y(x.size());
    for (int trial = 0; trial < 1000; ++trial) {
      for (size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.uniform01();
        y[i] = rng.uniform01();
      }
      const double mine = patch_ssim_plane(x.data(), y.data(), side, spec);
      // Dense reference restricted to stride window starts.
      double sum = 0.0;
      int count = 0;
      for (int j0 = 0; j0 + spec.kernel <= side; ++j0) {
        for (int i0 = 0; i0 + spec.kernel <= side; ++i0) {
          if (j0 % spec.stride || i0 % spec.stride) continue;
          double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
          const int m = spec.kernel * spec.kernel;
          for (int j = 0; j < spec.kernel; ++j) {
            for (int i = 0; i < spec.kernel; ++i) {
              const double xv = x[static_cast<size_t>((j0 + j) * side + i0 + i)];
              const double yv = y[static_cast<size_t>((j0 + j) * side + i0 + i)];
              sx += xv;
              sy += yv;
              sxx += xv * xv;
              syy += yv * yv;
              sxy += xv * yv;
            }
          }
          const double mx = sx / m, my = sy / m;
          const double vx = sxx / m - mx * mx, vy = syy / m - my * my;
          const double cxy = sxy / m - mx * my;
          sum += ((2 * mx * my + spec.c1) * (2 * cxy + spec.c2)) /
                 ((mx * mx + my * my + spec.c1) * (vx + vy + spec.c2));
          ++count;
        }
      }
      max_err = std::max(max_err, std::abs(mine - sum / count));
    }
    h.add("oracle/ssim", max_err, 1e-10);
  }
  {
    double max_err = 0.0;
    const double T = 0.06;
    for (int trial = 0; trial < 1000; ++trial) {
      const int n_rays = 1 + static_cast<int>(rng.uniform_int(6));
      RenderOutput r;
      std::vector<double> gt(static_cast<size_t>(n_rays));
      std::vector<uint8_t> valid(static_cast<size_t>(n_rays), 1);
      for (int ri = 0; ri < n_rays; ++ri) {
        gt[static_cast<size_t>(ri)] = rng.uniform(0.5, 3.0);
        const int ns = 4 + static_cast<int>(rng.uniform_int(24));
        r.offset.push_back(static_cast<int>(r.z.size()));
        r.count.push_back(ns);
        for (int s = 0; s < ns; ++s) {
          r.z.push_back(rng.uniform(0.0, 3.5));
          r.sdf.push_back(rng.uniform(-1.5, 1.5));
        }
      }
      const SdfLosses mine = sdf_losses(r, gt, valid, T, 0.5);
      double mid_total = 0, tail_total = 0, fs_total = 0;
      for (int ri = 0; ri < n_rays; ++ri) {
        double ms = 0, ts = 0, fs = 0;
        int nm = 0, nt = 0, nf = 0;
        for (int s = r.begin_of(ri); s < r.begin_of(ri) + r.samples_of(ri); ++s) {
          const double dz = r.z[static_cast<size_t>(s)] - gt[static_cast<size_t>(ri)];
          const double sd = r.sdf[static_cast<size_t>(s)];
          if (std::abs(dz) < T) {
            const double res = sd * T + dz;
            if (std::abs(dz) < 0.5 * T) {
              ms += res * res;
              ++nm;
            } else {
              ts += res * res;
              ++nt;
            }
          } else if (dz <= -T) {
            fs += (sd - 1) * (sd - 1);
            ++nf;
          }
        }
        if (nm) mid_total += ms / nm;
        if (nt) tail_total += ts / nt;
        if (nf) fs_total += fs / nf;
      }
      max_err = std::max(max_err, std::abs(mine.l_sdfm - mid_total / n_rays));
      max_err = std::max(max_err, std::abs(mine.l_sdft - tail_total / n_rays));
      max_err = std::max(max_err, std::abs(mine.l_fs - fs_total / n_rays));
    }
    h.add("oracle/sdf-losses", max_err, 1e-10);
  }
  {
    double max_err = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 1 + static_cast<int>(rng.uniform_int(50));
      std::vector<Vec3> rc(static_cast<size_t>(n)), gc(static_cast<size_t>(n));
      std::vector<double> rd(static_cast<size_t>(n)), gd(static_cast<size_t>(n));
      std::vector<uint8_t> valid(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        rc[static_cast<size_t>(i)] = Vec3(rng.uniform01(), rng.uniform01(), rng.uniform01());
        gc[static_cast<size_t>(i)] = Vec3(rng.uniform01(), rng.uniform01(), rng.uniform01());
        rd[static_cast<size_t>(i)] = rng.uniform(0, 3);
        gd[static_cast<size_t>(i)] = rng.uniform(0, 3);
        valid[static_cast<size_t>(i)] = rng.uniform01() < 0.8;
      }
      const ColorDepthLoss mine = color_depth_loss(rc, rd, gc, gd, valid);
      double cs = 0, ds = 0;
      int nd = 0;
      for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < 3; ++ch) {
          const double e = rc[static_cast<size_t>(i)][ch] - gc[static_cast<size_t>(i)][ch];
          cs += e * e;
        }
        if (valid[static_cast<size_t>(i)]) {
          const double e = rd[static_cast<size_t>(i)] - gd[static_cast<size_t>(i)];
          ds += e * e;
          ++nd;
        }
      }
      max_err = std::max(max_err, std::abs(mine.l_color - cs / (3.0 * n)));
      if (nd) max_err = std::max(max_err, std::abs(mine.l_depth - ds / nd));
    }
    h.add("oracle/mse", max_err, 1e-10);
  }

  // ---- rendering invariants ---------------------------------------------------
  {
    double worst_w = 0.0;     // most negative weight
    double worst_sum = 0.0;   // largest sum - 1
    Rng rr(opts.seed + 9);
    const int n_rays = 100000;
    for (int ray = 0; ray < n_rays; ++ray) {
      const int n = 1 + static_cast<int>(rr.uniform_int(48));
      double tlog = 0.0;
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
        const double sigma = rr.uniform(0, 4);
        const double w = std::exp(tlog) * (1.0 - std::exp(-sigma));
        worst_w = std::min(worst_w, w);
        sum += w;
        tlog -= sigma;
      }
      worst_sum = std::max(worst_sum, sum - 1.0);
    }
    h.add("invariant/weights-nonneg", -worst_w, 0.0);
    h.add("invariant/weight-sum", worst_sum, 1e-9);
    double prev_violation = 0.0;
    for (int bi = 0; bi < 100; ++bi) {
      const double beta = 0.3 + 0.3 * bi;
      double prev = std::numeric_limits<double>::infinity();
      for (int si = 0; si < 100; ++si) {
        const double sdf = -1.0 + 2.0 * si / 99.0;
        const double sigma = sdf_to_density(sdf, beta);
        if (sigma >= prev) prev_violation = std::max(prev_violation, sigma - prev + 1e-300);
        prev = sigma;
      }
    }
    h.add("invariant/density-monotone", prev_violation, 0.0);
  }

  testhook::adjoint_fault_op.clear();
  return report;
}

}  // namespace fieldslam
