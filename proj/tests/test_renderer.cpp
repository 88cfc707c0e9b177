#include "fieldslam/grad_check.hpp"
#include "fieldslam/rays.hpp"
#include "fieldslam/render.hpp"
#include "fieldslam/train.hpp"

#include <doctest.h>

#include <cmath>

#include "test_util.hpp"

using namespace fieldslam;

TEST_CASE("generate_rays: principal point maps to the optical axis") {
  Frame f = testutil::make_test_frame();
  f.pose = Pose::identity();
  const std::pair<int, int> px[] = {{f.width() / 2, f.height() / 2}};
  const RayBatch batch = generate_rays(f, 0, px, 10.0);
  const Ray& r = batch.rays[0];
  CHECK(r.dir_world(f.pose).isApprox(Vec3(0, 0, 1), 1e-12));
  CHECK(r.cos_theta == doctest::Approx(1.0));
}

TEST_CASE("generate_rays: translation moves the origin, not the direction") {
  Frame f = testutil::make_test_frame();
  f.pose = Pose::identity();
  const std::pair<int, int> px[] = {{3, 4}};
  const RayBatch a = generate_rays(f, 0, px, 10.0);
  Pose moved = Pose::identity();
  moved.t = Vec3(0.3, -0.2, 0.1);
  const Vec3 dir_a = a.rays[0].dir_world(f.pose);
  const Vec3 dir_b = a.rays[0].dir_world(moved);
  CHECK(dir_a.isApprox(dir_b, 1e-15));
  CHECK(a.rays[0].origin_world(moved).isApprox(moved.t, 1e-15));
}

TEST_CASE("generate_rays: corner pixel matches the closed-form pinhole direction") {
  Frame f = testutil::make_test_frame();
  const auto& k = f.intrinsics;
  const std::pair<int, int> px[] = {{0, 0}};
  const RayBatch batch = generate_rays(f, 0, px, 10.0);
  Vec3 expect((0.0 - k.cx) / k.fx, (0.0 - k.cy) / k.fy, 1.0);
  expect.normalize();
  CHECK(batch.rays[0].dir_cam.isApprox(expect, 1e-12));
  // Unit within 1e-9 as contracted.
  CHECK(std::abs(batch.rays[0].dir_cam.norm() - 1.0) < 1e-9);
}

TEST_CASE("sample_points: invalid depth gives exactly n_strat samples in range") {
  Rng rng(1);
  std::vector<double> z;
  sample_points(0.0, 5.0, 0.0, false, 0.06, 32, 8, rng, z);
  CHECK(z.size() == 32);
  for (double v : z) {
    CHECK(v >= 0.0);
    CHECK(v <= 5.0);
  }
}

TEST_CASE("sample_points: valid depth adds n_surf samples inside the band") {
  Rng rng(2);
  std::vector<double> z;
  const double d = 2.0, T = 0.06;
  sample_points(0.0, 5.0, d, true, T, 32, 8, rng, z);
  CHECK(z.size() == 40);
  int in_band = 0;
  for (double v : z) {
    if (std::abs(v - d) <= T) ++in_band;
  }
  CHECK(in_band >= 8);
}

TEST_CASE("sample_points: strictly sorted over many trials") {
  Rng rng(3);
  std::vector<double> z;
  for (int trial = 0; trial < 10000; ++trial) {
    const bool valid = rng.uniform01() < 0.7;
    const double d = rng.uniform(0.5, 4.5);
    sample_points(0.0, 5.0, d, valid, 0.06, 16, 4, rng, z);
    for (size_t i = 1; i < z.size(); ++i) CHECK(z[i] > z[i - 1]);
  }
}

TEST_CASE("sdf_to_density: exact values and limits") {
  CHECK(sdf_to_density(0.0, 10.0) == doctest::Approx(5.0).epsilon(1e-15));
  // High-precision scalar evaluation of beta*logistic(-beta*sdf):
  // sdf=-0.1, beta=10 -> 10*logistic(1) = 7.3105857863000489...
  CHECK(sdf_to_density(-0.1, 10.0) == doctest::Approx(7.310585786300049).epsilon(1e-12));
  CHECK(sdf_to_density(1e3, 10.0) == doctest::Approx(0.0));
  CHECK(sdf_to_density(-1e3, 10.0) == doctest::Approx(10.0));
}

TEST_CASE("sdf_to_density: strictly decreasing in sdf on a grid") {
  // Grid spans the normalized-SDF working range; beyond |beta*sdf| ~ 36 the
  // logistic saturates in float64 and strictness is unrepresentable.
  for (int bi = 0; bi < 100; ++bi) {
    const double beta = 0.3 + 0.3 * bi;
    double prev = std::numeric_limits<double>::infinity();
    for (int si = 0; si < 100; ++si) {
      const double sdf = -1.0 + 2.0 * si / 99.0;
      const double sigma = sdf_to_density(sdf, beta);
      CHECK(sigma < prev);
      CHECK(sigma >= 0.0);
      prev = sigma;
    }
  }
}

TEST_CASE("sdf_to_density: analytic grads match finite differences") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const double sdf = rng.uniform(-1.5, 1.5);
    const double beta = rng.uniform(0.5, 30.0);
    const DensityGrad g = sdf_to_density_grad(sdf, beta);
    const double h = 1e-6;
    const double fd_sdf = (sdf_to_density(sdf + h, beta) - sdf_to_density(sdf - h, beta)) / (2 * h);
    const double fd_beta =
        (sdf_to_density(sdf, beta + h) - sdf_to_density(sdf, beta - h)) / (2 * h);
    CHECK(g.d_sdf == doctest::Approx(fd_sdf).epsilon(1e-6));
    CHECK(g.d_beta == doctest::Approx(fd_beta).epsilon(1e-6));
  }
}

TEST_CASE("composite: hand-derived cases") {
  SUBCASE("all sigma zero") {
    const double sigma[] = {0.0, 0.0, 0.0};
    const Vec3 rgb[] = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    const double z[] = {1.0, 2.0, 3.0};
    double w[3];
    Vec3 c;
    double d;
    composite(sigma, rgb, z, w, &c, &d);
    for (double v : w) CHECK(v == 0.0);
    CHECK(c == Vec3::Zero());
    CHECK(d == 0.0);
  }
  SUBCASE("single sample, sigma = ln 2") {
    const double sigma[] = {std::log(2.0)};
    const Vec3 rgb[] = {Vec3(0.8, 0.4, 0.2)};
    const double z[] = {1.5};
    double w[1];
    Vec3 c;
    double d;
    composite(sigma, rgb, z, w, &c, &d);
    CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(c.isApprox(0.5 * Vec3(0.8, 0.4, 0.2), 1e-14));
    CHECK(d == doctest::Approx(0.75));
  }
  SUBCASE("two samples, sigma = (ln 2, ln 2)") {
    const double sigma[] = {std::log(2.0), std::log(2.0)};
    const Vec3 rgb[] = {Vec3(1, 1, 1), Vec3(1, 1, 1)};
    const double z[] = {1.0, 2.0};
    double w[2];
    Vec3 c;
    double d;
    composite(sigma, rgb, z, w, &c, &d);
    CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(w[0] + w[1] == doctest::Approx(0.75));
  }
}

// Naive per-sample sequential accumulation oracle.
static void composite_oracle(std::span<const double> sigma, std::span<const Vec3> rgb,
                             std::span<const double> z, std::vector<double>& w, Vec3& c,
                             double& d) {
  w.assign(sigma.size(), 0.0);
  c = Vec3::Zero();
  d = 0.0;
  for (size_t n = 0; n < sigma.size(); ++n) {
    double acc = 0.0;
    for (size_t k = 0; k < n; ++k) acc += sigma[k];
    w[n] = std::exp(-acc) * (1.0 - std::exp(-sigma[n]));
    c += w[n] * rgb[n];
    d += w[n] * z[n];
  }
}

TEST_CASE("composite: matches the sequential oracle and keeps invariants") {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(40));
    std::vector<double> sigma(static_cast<size_t>(n)), z(static_cast<size_t>(n));
    std::vector<Vec3> rgb(static_cast<size_t>(n));
    double zacc = 0.0;
    for (int i = 0; i < n; ++i) {
      sigma[static_cast<size_t>(i)] = rng.uniform(0.0, 3.0);
      zacc += rng.uniform(0.01, 0.2);
      z[static_cast<size_t>(i)] = zacc;
      rgb[static_cast<size_t>(i)] = Vec3(rng.uniform01(), rng.uniform01(), rng.uniform01());
    }
    std::vector<double> w(static_cast<size_t>(n));
    Vec3 c;
    double d;
    composite(sigma, rgb, z, w, &c, &d);
    std::vector<double> w_ref;
    Vec3 c_ref;
    double d_ref;
    composite_oracle(sigma, rgb, z, w_ref, c_ref, d_ref);
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(w[static_cast<size_t>(i)] == doctest::Approx(w_ref[static_cast<size_t>(i)]).epsilon(1e-12));
      CHECK(w[static_cast<size_t>(i)] >= 0.0);
      wsum += w[static_cast<size_t>(i)];
    }
    CHECK(wsum <= 1.0 + 1e-9);
    CHECK((c - c_ref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(d == doctest::Approx(d_ref).epsilon(1e-12));
  }
}

TEST_CASE("composite: increasing front density never increases later weights") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(20));
    std::vector<double> sigma(static_cast<size_t>(n)), z(static_cast<size_t>(n));
    std::vector<Vec3> rgb(static_cast<size_t>(n), Vec3::Zero());
    for (int i = 0; i < n; ++i) {
      sigma[static_cast<size_t>(i)] = rng.uniform(0.0, 2.0);
      z[static_cast<size_t>(i)] = i;
    }
    std::vector<double> w0(static_cast<size_t>(n)), w1(static_cast<size_t>(n));
    composite(sigma, rgb, z, w0, nullptr, nullptr);
    sigma[0] += rng.uniform(0.1, 2.0);
    composite(sigma, rgb, z, w1, nullptr, nullptr);
    for (int i = 1; i < n; ++i) {
      CHECK(w1[static_cast<size_t>(i)] <= w0[static_cast<size_t>(i)] + 1e-15);
    }
  }
}

TEST_CASE("composite_backward: matches finite differences") {
  Rng rng(7);
  const int n = 12;
  std::vector<double> sigma(n), z(n), w(n);
  std::vector<Vec3> rgb(n);
  for (int i = 0; i < n; ++i) {
    sigma[static_cast<size_t>(i)] = rng.uniform(0.0, 2.0);
    z[static_cast<size_t>(i)] = 0.1 * (i + 1);
    rgb[static_cast<size_t>(i)] = Vec3(rng.uniform01(), rng.uniform01(), rng.uniform01());
  }
  const Vec3 dc(rng.normal(), rng.normal(), rng.normal());
  const double dd = rng.normal();
  Vec3 c;
  double d;
  composite(sigma, rgb, z, w, &c, &d);
  std::vector<double> dsigma(n);
  std::vector<Vec3> drgb(n);
  composite_backward(sigma, rgb, z, w, dc, dd, dsigma, drgb);

  const double h = 1e-7;
  for (int i = 0; i < n; ++i) {
    auto eval = [&](double ds) {
      std::vector<double> s2 = sigma;
      s2[static_cast<size_t>(i)] += ds;
      std::vector<double> w2(n);
      Vec3 c2;
      double d2;
      composite(s2, rgb, z, w2, &c2, &d2);
      return dc.dot(c2) + dd * d2;
    };
    const double fd = (eval(h) - eval(-h)) / (2 * h);
    CHECK(dsigma[static_cast<size_t>(i)] == doctest::Approx(fd).epsilon(1e-5));
  }
}

// ---- full differentiable pipeline -------------------------------------------

TEST_CASE("full loss gradients: scene, beta and pose against central differences") {
  ParamStore scene_store;
  const SceneBounds bounds = testutil::small_bounds();
  const SceneField field(bounds, testutil::small_field_config(), scene_store);
  Rng rng(31);
  testutil::randomize_scene(scene_store, rng);

  Frame frame = testutil::make_test_frame();
  TrainConfig cfg;
  cfg.render.n_strat = 8;
  cfg.render.n_surf = 4;
  cfg.render.trunc_m = 0.06;
  cfg.render.max_depth_m = 5.0;
  cfg.patch.side = 2;  // tiny patches so draws fit a 4-ray batch
  cfg.patch.reps = 2;
  cfg.patch.kernel = 2;
  cfg.patch.stride = 1;
  cfg.threads = 2;

  ParamStore pose_store;
  pose_store.allocate(6, ParamGroup::Pose);
  const WindowFrame window[] = {{&frame, 0}};
  const int rays_per_frame[] = {4};

  Rng plan_rng(77);
  const Plan plan = make_plan(field, window, rays_per_frame, cfg, plan_rng);

  const ForwardResult fwd =
      forward_loss(field, scene_store.values(), pose_store.values(), window, plan, cfg);
  CHECK(fwd.losses.total > 0.0);

  scene_store.zero_grads();
  VecX pose_grads = VecX::Zero(6);
  backward(field, scene_store.values(), pose_store.values(), window, plan, fwd, cfg,
           &scene_store.grads(), &pose_grads);

  const auto f_scene = [&](ParamStore& s) {
    return forward_loss(field, s.values(), pose_store.values(), window, plan, cfg).losses.total;
  };

  // 20 random scene parameters drawn from entries with nonzero gradient plus
  // a few arbitrary ones, beta, and a sweep of decoder weights.
  std::vector<Eigen::Index> subset;
  std::vector<Eigen::Index> touched;
  for (Eigen::Index i = 0; i < scene_store.size(); ++i) {
    if (scene_store.grads()[i] != 0.0) touched.push_back(i);
  }
  REQUIRE(touched.size() > 50);
  for (int i = 0; i < 20; ++i) {
    subset.push_back(touched[rng.uniform_int(touched.size())]);
  }
  subset.push_back(field.log_beta_index());
  const GradCheckReport rep = gradient_check(f_scene, scene_store, 1e-5, subset);
  CAPTURE(rep.worst_index);
  CAPTURE(rep.worst_analytic);
  CAPTURE(rep.worst_numeric);
  CHECK(rep.max_rel_err < 1e-4);

  // Pose tangent gradients.
  pose_store.grads() = pose_grads;
  const auto f_pose = [&](ParamStore& s) {
    return forward_loss(field, scene_store.values(), s.values(), window, plan, cfg).losses.total;
  };
  const Eigen::Index pose_subset[] = {0, 1, 2, 3, 4, 5};
  const GradCheckReport prep = gradient_check(f_pose, pose_store, 1e-6, pose_subset);
  CAPTURE(prep.worst_index);
  CAPTURE(prep.worst_analytic);
  CAPTURE(prep.worst_numeric);
  CHECK(prep.max_rel_err < 1e-4);
}

TEST_CASE("gradient accumulation is additive") {
  ParamStore scene_store;
  const SceneBounds bounds = testutil::small_bounds();
  const SceneField field(bounds, testutil::small_field_config(), scene_store);
  Rng rng(32);
  testutil::randomize_scene(scene_store, rng);
  Frame frame = testutil::make_test_frame();
  TrainConfig cfg;
  cfg.render.n_strat = 6;
  cfg.render.n_surf = 2;
  cfg.render.max_depth_m = 5.0;
  cfg.patch.side = 2;
  cfg.patch.reps = 1;
  cfg.patch.kernel = 2;
  cfg.patch.stride = 1;
  cfg.threads = 1;
  ParamStore pose_store;
  pose_store.allocate(6, ParamGroup::Pose);
  const WindowFrame window[] = {{&frame, 0}};
  const int rays_per_frame[] = {5};
  Rng plan_rng(78);
  const Plan plan = make_plan(field, window, rays_per_frame, cfg, plan_rng);
  const ForwardResult fwd =
      forward_loss(field, scene_store.values(), pose_store.values(), window, plan, cfg);

  scene_store.zero_grads();
  backward(field, scene_store.values(), pose_store.values(), window, plan, fwd, cfg,
           &scene_store.grads(), nullptr);
  const VecX once = scene_store.grads();
  backward(field, scene_store.values(), pose_store.values(), window, plan, fwd, cfg,
           &scene_store.grads(), nullptr);
  for (Eigen::Index i = 0; i < once.size(); ++i) {
    CHECK(scene_store.grads()[i] == 2.0 * once[i]);
  }
}

TEST_CASE("rendering invariants over random rays through the field") {
  ParamStore scene_store;
  const SceneField field(testutil::small_bounds(), testutil::small_field_config(), scene_store);
  Rng rng(33);
  testutil::randomize_scene(scene_store, rng, 1.0);
  Frame frame = testutil::make_test_frame();
  TrainConfig cfg;
  cfg.render.n_strat = 16;
  cfg.render.n_surf = 4;
  cfg.render.max_depth_m = 5.0;
  cfg.threads = 2;
  ParamStore pose_store;
  pose_store.allocate(6, ParamGroup::Pose);
  const WindowFrame window[] = {{&frame, -1}};
  const int rays_per_frame[] = {256};
  Rng plan_rng(79);
  const Plan plan = make_plan(field, window, rays_per_frame, cfg, plan_rng);
  const ForwardResult fwd =
      forward_loss(field, scene_store.values(), pose_store.values(), window, plan, cfg);
  for (int ri = 0; ri < fwd.render.ray_count(); ++ri) {
    double sum = 0.0;
    const int off = fwd.render.begin_of(ri), cnt = fwd.render.samples_of(ri);
    for (int s = off; s < off + cnt; ++s) {
      CHECK(fwd.render.weight[static_cast<size_t>(s)] >= 0.0);
      sum += fwd.render.weight[static_cast<size_t>(s)];
    }
    CHECK(sum <= 1.0 + 1e-9);
  }
}

TEST_CASE("forward/backward deterministic across thread counts setting") {
  ParamStore scene_store;
  const SceneField field(testutil::small_bounds(), testutil::small_field_config(), scene_store);
  Rng rng(34);
  testutil::randomize_scene(scene_store, rng);
  Frame frame = testutil::make_test_frame();
  ParamStore pose_store;
  pose_store.allocate(6, ParamGroup::Pose);
  const WindowFrame window[] = {{&frame, 0}};
  const int rays_per_frame[] = {64};

  auto run = [&](int threads) {
    TrainConfig cfg;
    cfg.render.n_strat = 8;
    cfg.render.n_surf = 2;
    cfg.render.max_depth_m = 5.0;
    cfg.patch.side = 4;
    cfg.patch.reps = 2;
    cfg.threads = threads;
    Rng plan_rng(80);
    const Plan plan = make_plan(field, window, rays_per_frame, cfg, plan_rng);
    const ForwardResult fwd =
        forward_loss(field, scene_store.values(), pose_store.values(), window, plan, cfg);
    return fwd.losses.total;
  };
  // Same thread count twice: bitwise identical.
  CHECK(run(2) == run(2));
}
