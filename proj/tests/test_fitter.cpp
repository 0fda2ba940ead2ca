#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>

#include <bodybench/fitter.hpp>
#include <bodybench/synthgen.hpp>

#include "test_util.hpp"

using namespace bodybench;

namespace {

double gm(double x, double s) { return s * s * x * x / (s * s + x * x); }

LabeledScan labeled(TriMesh mesh, double p_skin, double p_cloth) {
  LabeledScan s;
  const Eigen::Index n = mesh.positions.rows();
  s.mesh = std::move(mesh);
  s.p_skin = Eigen::VectorXd::Constant(n, p_skin);
  s.p_cloth = Eigen::VectorXd::Constant(n, p_cloth);
  s.p_other = Eigen::VectorXd::Constant(n, 1.0 - p_skin - p_cloth);
  s.identity = "t";
  return s;
}

// Point cloud "scan" with a single degenerate-free triangle per three points.
TriMesh cloud(const Points3d& pts) {
  TriMesh m;
  m.positions = pts;
  const Eigen::Index nt = pts.rows() / 3;
  m.triangles.resize(nt, 3);
  for (Eigen::Index t = 0; t < nt; ++t) m.triangles.row(t) << 3 * t, 3 * t + 1, 3 * t + 2;
  return m;
}

// Big flat body surface at z = 0 facing +z, and cloth points offset along z.
LabeledScan flat_cloth(double offset, int n, CounterRng& rng) {
  Points3d pts(n, 3);
  for (int i = 0; i < n; ++i) pts.row(i) << rng.uniform(-1, 1), rng.uniform(-1, 1), offset;
  return labeled(cloud(pts), 0.0, 1.0);
}

// Scan of face-centroid points offset 1-5 mm in or out along the face
// normal of `truth`, with random skin/cloth labels. Only points whose
// distance to `surface` is smooth under small motions are kept: closest
// point inside a triangle and off the surface, and no other triangle has a
// separate near-tie.
// Distance to a union of tubes has kinks elsewhere.
LabeledScan generic_scan(const TriMesh& truth, const TriMesh& surface, int count, CounterRng& rng) {
  std::vector<Eigen::Vector3d> keep;
  while (static_cast<int>(keep.size()) < count) {
    const int f = rng.uniform_int(0, static_cast<int>(truth.triangles.rows()) - 1);
    const Eigen::Vector3d a = truth.positions.row(truth.triangles(f, 0)).transpose();
    const Eigen::Vector3d b = truth.positions.row(truth.triangles(f, 1)).transpose();
    const Eigen::Vector3d c = truth.positions.row(truth.triangles(f, 2)).transpose();
    const double off = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.001, 0.005);
    const Eigen::Vector3d q = (a + b + c) / 3.0 + off * (b - a).cross(c - a).normalized();
    const ClosestPoint cp = closest_point_brute_force(surface, q);
    if (cp.barycentric.minCoeff() < 0.05 || cp.distance < 2e-4) continue;
    bool unique = true;
    for (Eigen::Index t = 0; t < surface.triangles.rows() && unique; ++t) {
      if (t == cp.triangle) continue;
      const ClosestPoint c2 = closest_point_on_triangle(q, surface.positions.row(surface.triangles(t, 0)).transpose(),
                                                        surface.positions.row(surface.triangles(t, 1)).transpose(),
                                                        surface.positions.row(surface.triangles(t, 2)).transpose());
      unique = c2.distance > cp.distance + 2e-3 || (c2.point - cp.point).norm() < 1e-3;
    }
    if (unique) keep.push_back(q);
  }
  Points3d pts(count, 3);
  for (int i = 0; i < count; ++i) pts.row(i) = keep[static_cast<std::size_t>(i)].transpose();
  LabeledScan out = labeled(cloud(pts), 0.0, 0.0);
  for (int i = 0; i < count; ++i) {
    out.p_skin[i] = rng.uniform(0.0, 1.0);
    out.p_cloth[i] = 1.0 - out.p_skin[i];
    out.p_other[i] = 0.0;
  }
  return out;
}

GenSpec plain_spec() {
  GenSpec spec;
  spec.clothed = false;
  spec.child_probability = 0.0;
  return spec;
}

}  // namespace

TEST_CASE("geman_mcclure examples and domain") {
  CHECK(geman_mcclure(0.0, 2.0) == 0.0);
  CHECK(geman_mcclure(1.0, 1.0) == doctest::Approx(0.5));
  CHECK(geman_mcclure(1e6, 3.0) == doctest::Approx(9.0).epsilon(1e-6));
  CHECK(geman_mcclure(-0.7, 1.3) == geman_mcclure(0.7, 1.3));
  CHECK_THROWS_AS(geman_mcclure(1.0, 0.0), std::domain_error);
  CHECK_THROWS_AS(geman_mcclure(1.0, -1.0), std::domain_error);
}

TEST_CASE("landmark_energy: self-consistent, single offset, naive sum, no usable landmark") {
  const BodyModel& model = testutil::toy_model();
  CounterRng rng(11);
  BodyParams p = testutil::random_params(model, rng, 0.2);
  p.trans.setZero();
  const PosedBody posed = forward(model, p);
  const std::vector<Camera> cams = make_camera_rig(Eigen::Vector3d(0, 0.9, 0), 3);
  LandmarkSet views = synthesize_landmarks(model, p, cams, 0.0, rng);
  CHECK(landmark_energy(model, posed, views, 100.0) <= 1e-12);

  LandmarkSet one{views[0]};
  one[0].confidence.setZero();
  one[0].confidence[5] = 1.0;
  one[0].points(5, 0) += 7.0;
  CHECK(landmark_energy(model, posed, one, 20.0) == doctest::Approx(gm(7.0, 20.0)).epsilon(1e-12));

  for (LandmarkView& v : views) {
    for (Eigen::Index k = 0; k < v.points.rows(); ++k) {
      v.points(k, 0) += rng.normal(0, 30);
      v.points(k, 1) += rng.normal(0, 30);
      v.confidence[k] = rng.uniform(0, 1);
    }
  }
  const Points3d kp = keypoints(model, posed);
  double naive = 0.0;
  for (const LandmarkView& v : views) {
    const Projection pr = project(v.camera, kp);
    for (Eigen::Index k = 0; k < kp.rows(); ++k) {
      if (!pr.valid[static_cast<std::size_t>(k)]) continue;
      naive += v.confidence[k] * gm((pr.pixels.row(k) - v.points.row(k)).norm(), 50.0);
    }
  }
  CHECK(landmark_energy(model, posed, views, 50.0) == doctest::Approx(naive).epsilon(1e-12));

  for (LandmarkView& v : views) v.confidence.setZero();
  CHECK_THROWS_AS(landmark_energy(model, posed, views, 50.0), ContractError);
}

TEST_CASE("landmark_energy skips keypoints behind the camera and counts them") {
  const BodyModel& model = testutil::toy_model();
  const BodyParams p = BodyParams::zeros(model);
  const PosedBody posed = forward(model, p);
  // Camera inside the torso looking forward: part of the body is behind it.
  const Camera cam = Camera::look_at({0, 0.9, 0}, {0, 0.9, 5}, 500.0, 640, 640);
  CounterRng rng(1);
  const LandmarkSet views = synthesize_landmarks(model, p, {cam}, 0.0, rng);
  int excluded = -1;
  CHECK(landmark_energy(model, posed, views, 100.0, &excluded) <= 1e-12);
  CHECK(excluded == 0);  // synthesized confidences already zero them out

  LandmarkSet forced = views;
  forced[0].confidence.setOnes();
  forced[0].points = forced[0].points.unaryExpr([](double x) { return std::isfinite(x) ? x : 0.0; });
  landmark_energy(model, posed, forced, 100.0, &excluded);
  CHECK(excluded == static_cast<int>((views[0].confidence.array() == 0.0).count()));
}

TEST_CASE("skin_energy: on-surface, zero weight, brute-force oracle") {
  const BodyModel& model = testutil::toy_model();
  CounterRng rng(5);
  const BodyParams p = testutil::random_params(model, rng, 0.2);
  const SurfaceIndex surface(posed_mesh(model, forward(model, p)));
  const double sigma = 0.05;

  CHECK(skin_energy(labeled(surface.mesh(), 1.0, 0.0), surface, sigma) <= 1e-20);

  Points3d pts(201, 3);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const Eigen::Index v = static_cast<Eigen::Index>(rng.uniform_int(0, model.num_vertices() - 1));
    pts.row(i) = surface.mesh().positions.row(v) + 0.03 * Eigen::RowVector3d(rng.normal(), rng.normal(), rng.normal());
  }
  LabeledScan scan = labeled(cloud(pts), 1.0, 0.0);
  CHECK(skin_energy(labeled(cloud(pts), 0.0, 1.0), surface, sigma) == 0.0);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    scan.p_skin[i] = rng.uniform(0, 1);
    scan.p_cloth[i] = 0.0;
    scan.p_other[i] = 1.0 - scan.p_skin[i];
  }
  double naive = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double d = closest_point_brute_force(surface.mesh(), pts.row(i).transpose()).distance;
    naive += gm(std::sqrt(scan.p_skin[i]) * d, sigma);
  }
  CHECK(skin_energy(scan, surface, sigma) == doctest::Approx(naive).epsilon(1e-10));
}

TEST_CASE("cloth_energy on a flat region") {
  CounterRng rng(8);
  const SurfaceIndex flat(testutil::quad(-3, 3, -3, 3, 0.0));
  const double sigma = 0.05;

  const LabeledScan out = flat_cloth(0.005, 50, rng);
  const ClothEnergy eo = cloth_energy(out, flat, sigma);
  CHECK(eo.inside == 0.0);
  CHECK(eo.num_inside == 0);
  CHECK(eo.outside == doctest::Approx(50 * gm(0.005, sigma)).epsilon(1e-10));
  CHECK(eo.total(123.0) == doctest::Approx(eo.outside));

  LabeledScan in = flat_cloth(-0.004, 40, rng);
  for (Eigen::Index i = 0; i < in.p_cloth.size(); ++i) {
    in.p_cloth[i] = rng.uniform(0.1, 1.0);
    in.p_other[i] = 1.0 - in.p_cloth[i];
  }
  const ClothEnergy ei = cloth_energy(in, flat, sigma);
  CHECK(ei.outside == 0.0);
  CHECK(ei.num_inside == 40);
  CHECK(ei.inside == doctest::Approx(in.p_cloth.sum() * 0.004 * 0.004).epsilon(1e-10));
  CHECK(ei.total(7.0) == doctest::Approx(7.0 * ei.inside));

  CHECK(cloth_energy(flat_cloth(0.01, 20, rng), flat, sigma).total(1.0) > 0.0);
  LabeledScan none = flat_cloth(-0.01, 20, rng);
  none.p_cloth.setZero();
  none.p_skin.setOnes();
  CHECK(cloth_energy(none, flat, sigma).total(100.0) == 0.0);
}

TEST_CASE("surface energies are invariant under scan vertex reordering") {
  const BodyModel& model = testutil::toy_model();
  CounterRng rng(3);
  GenSpec spec;
  spec.child_probability = 0.0;
  const GenScan g = gen_scan(model, spec, rng, "a");
  BodyParams q = g.truth;
  q.body_pose[10] += 0.1;
  q.beta[0] += 0.3;
  const SurfaceIndex surface(posed_mesh(model, forward(model, q)));

  const LabeledScan& a = g.scan;
  const Eigen::Index n = a.num_points();
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (Eigen::Index i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
  std::vector<int> inv(perm.size());
  LabeledScan b = a;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int j = perm[static_cast<std::size_t>(i)];
    inv[static_cast<std::size_t>(j)] = static_cast<int>(i);
    b.mesh.positions.row(i) = a.mesh.positions.row(j);
    b.p_skin[i] = a.p_skin[j];
    b.p_cloth[i] = a.p_cloth[j];
    b.p_other[i] = a.p_other[j];
  }
  for (Eigen::Index t = 0; t < a.mesh.triangles.rows(); ++t)
    for (int c = 0; c < 3; ++c) b.mesh.triangles(t, c) = inv[static_cast<std::size_t>(a.mesh.triangles(t, c))];

  CHECK(skin_energy(b, surface, 0.05) == doctest::Approx(skin_energy(a, surface, 0.05)).epsilon(1e-12));
  const ClothEnergy ca = cloth_energy(a, surface, 0.05), cb = cloth_energy(b, surface, 0.05);
  CHECK(cb.outside == doctest::Approx(ca.outside).epsilon(1e-12));
  CHECK(cb.inside == doctest::Approx(ca.inside).epsilon(1e-12));
  CHECK(cb.num_inside == ca.num_inside);
}

TEST_CASE("interbeta_energy examples") {
  const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(4, 0);
  CHECK(interbeta_energy({e1, e1, e1}) == 0.0);
  CHECK(interbeta_energy({e1, -e1}) == doctest::Approx(4.0));
  CHECK(interbeta_energy({e1}) == 0.0);
  CounterRng rng(2);
  std::vector<Eigen::VectorXd> b(3, Eigen::VectorXd(6));
  for (auto& v : b)
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  double naive = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = i + 1; j < b.size(); ++j)
      for (Eigen::Index k = 0; k < 6; ++k) naive += (b[i][k] - b[j][k]) * (b[i][k] - b[j][k]);
  CHECK(interbeta_energy(b) == doctest::Approx(naive).epsilon(1e-14));
}

TEST_CASE("regularizer examples and term-by-term oracle") {
  const BodyModel& model = testutil::toy_model();
  FitWeights zero{0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  CHECK(regularizer(model, BodyParams::zeros(model), FitWeights{}) == 0.0);
  BodyParams p = BodyParams::zeros(model);
  p.beta[0] = 1.0;
  FitWeights w = zero;
  w.shape = 2.0;
  CHECK(regularizer(model, p, w) == doctest::Approx(2.0));

  CounterRng rng(9);
  p = testutil::random_params(model, rng, 0.5);
  w = FitWeights{};
  w.body_pose = 0.3;
  w.hand_pose = 0.2;
  w.shape = 0.7;
  w.expression = 0.11;
  w.bend = 1.7;
  double naive = 0.0;
  for (Eigen::Index i = 3; i < p.body_pose.size(); ++i) naive += 0.3 * p.body_pose[i] * p.body_pose[i];
  for (Eigen::Index i = 0; i < p.left_hand.size(); ++i) naive += 0.2 * p.left_hand[i] * p.left_hand[i];
  for (Eigen::Index i = 0; i < p.right_hand.size(); ++i) naive += 0.2 * p.right_hand[i] * p.right_hand[i];
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) naive += 0.7 * p.beta[i] * p.beta[i];
  for (Eigen::Index i = 0; i < p.expression.size(); ++i) naive += 0.11 * p.expression[i] * p.expression[i];
  for (const BendLimit& b : model.bend_limits) {
    const double x = b.sign * p.body_pose[3 * b.joint + b.axis];
    if (x > 0) naive += 1.7 * (std::exp(x) - 1.0) * (std::exp(x) - 1.0);
  }
  CHECK(regularizer(model, p, w) == doctest::Approx(naive).epsilon(1e-12));

  // Global orientation is free.
  BodyParams g = BodyParams::zeros(model);
  g.body_pose.head<3>() = Eigen::Vector3d(1, 2, 3);
  CHECK(regularizer(model, g, w) == 0.0);
  CHECK(bend_barrier(-1.0) == 0.0);
  CHECK(bend_barrier(0.5) == doctest::Approx((std::exp(0.5) - 1) * (std::exp(0.5) - 1)));
}

TEST_CASE("flatten_params round trip") {
  const BodyModel& model = testutil::toy_model();
  CounterRng rng(4);
  const BodyParams p = testutil::random_params(model, rng);
  const BodyParams back = unflatten_params(model, flatten_params(p, true), true, "x");
  CHECK(back.body_pose == p.body_pose);
  CHECK(back.trans == p.trans);
  CHECK(back.alpha == p.alpha);
  CHECK(unflatten_params(model, flatten_params(p, false), false, "x").alpha == 1.0);
  CHECK_THROWS_AS(unflatten_params(model, Eigen::VectorXd::Zero(3), false, "x"), ContractError);
}

TEST_CASE("every refinement term gradient matches central differences") {
  const BodyModel& model = testutil::toy_model();
  CounterRng rng(2024);
  FitConfig config = FitConfig::defaults();
  // Visible magnitudes for all terms.
  config.refine.landmark = 1e-3;
  config.refine.body_pose = 0.1;
  config.refine.hand_pose = 0.1;
  config.refine.shape = 0.1;
  config.refine.expression = 0.1;
  config.refine.bend = 0.5;
  GenSpec spec;
  spec.child_probability = 0.5;
  spec.child_alpha_min = 0.2;
  spec.child_alpha_max = 0.8;
  spec.label_noise = 0.2;
  const double h = 1e-5;
  const double tol = 1e-4;

  for (int trial = 0; trial < 20; ++trial) {
    CounterRng r = rng.substream(static_cast<std::uint64_t>(trial));
    const GenScan g = gen_scan(model, spec, r, "g");
    const bool child = g.scan.is_child;
    const LandmarkSet lm = synthesize_landmarks(model, g.truth, scan_cameras(g.scan, 4), 3.0, r);
    BodyParams at = g.truth;
    for (Eigen::Index i = 3; i < at.body_pose.size(); ++i) at.body_pose[i] += r.normal(0.0, 0.03);
    for (Eigen::Index i = 0; i < at.beta.size(); ++i) at.beta[i] += r.normal(0.0, 0.1);
    at.trans += Eigen::Vector3d(r.normal(0, 0.005), r.normal(0, 0.005), r.normal(0, 0.005));
    // Push one bend component past its limit so the barrier is active.
    const BendLimit& bl = model.bend_limits[static_cast<std::size_t>(trial) % model.bend_limits.size()];
    at.body_pose[3 * bl.joint + bl.axis] = bl.sign * 0.2;
    const Eigen::VectorXd x0 = flatten_params(at, child);
    LabeledScan scan = generic_scan(posed_mesh(model, forward(model, g.truth)), posed_mesh(model, forward(model, at)), 150, r);
    scan.is_child = child;

    for (RefineTerm term : {RefineTerm::kLandmark, RefineTerm::kSkin, RefineTerm::kCloth, RefineTerm::kRegularizer}) {
      auto direct = [&](const Eigen::VectorXd& x) {
        const BodyParams p = unflatten_params(model, x, child, "g");
        const FitWeights& w = config.refine;
        switch (term) {
          case RefineTerm::kLandmark:
            return w.landmark * landmark_energy(model, forward(model, p), lm, config.landmark_sigma);
          case RefineTerm::kSkin:
            return w.skin * skin_energy(scan, SurfaceIndex(posed_mesh(model, forward(model, p))), config.surface_sigma);
          case RefineTerm::kCloth:
            return w.cloth * cloth_energy(scan, SurfaceIndex(posed_mesh(model, forward(model, p))), config.surface_sigma)
                                 .total(w.inner);
          case RefineTerm::kRegularizer:
            return regularizer(model, p, w);
        }
        return 0.0;
      };
      const TermGradient tg = refine_term_gradient(model, scan, lm, at, config, term);
      CAPTURE(trial);
      CAPTURE(static_cast<int>(term));
      CHECK(tg.value == doctest::Approx(direct(x0)).epsilon(1e-9));
      Eigen::VectorXd fd(x0.size());
      for (Eigen::Index i = 0; i < x0.size(); ++i) {
        Eigen::VectorXd xp = x0, xm = x0;
        xp[i] += h;
        xm[i] -= h;
        fd[i] = (direct(xp) - direct(xm)) / (2 * h);
      }
      const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-12);
      double worst = 0.0;
      for (Eigen::Index i = 0; i < x0.size(); ++i) {
        const double denom = std::max(std::abs(fd[i]), 1e-3 * scale);
        worst = std::max(worst, std::abs(tg.gradient[i] - fd[i]) / denom);
      }
      CHECK(worst <= tol);
    }
  }

  // Inter-shape term.
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Eigen::VectorXd> betas(3, Eigen::VectorXd(model.num_betas()));
    for (auto& b : betas)
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.normal();
    const TermGradient tg = interbeta_gradient(betas, 2.5);
    CHECK(tg.value == doctest::Approx(2.5 * interbeta_energy(betas)).epsilon(1e-12));
    double worst = 0.0;
    for (std::size_t s = 0; s < betas.size(); ++s) {
      for (Eigen::Index i = 0; i < betas[s].size(); ++i) {
        auto bp = betas, bm = betas;
        bp[s][i] += h;
        bm[s][i] -= h;
        const double fd = 2.5 * (interbeta_energy(bp) - interbeta_energy(bm)) / (2 * h);
        const double a = tg.gradient[static_cast<Eigen::Index>(s) * betas[s].size() + i];
        worst = std::max(worst, std::abs(a - fd) / std::max(std::abs(fd), 1e-6));
      }
    }
    CHECK(worst <= tol);
  }
}

TEST_CASE("make_camera_rig rings the target") {
  const Eigen::Vector3d target(0.1, 0.9, -0.2);
  const std::vector<Camera> cams = make_camera_rig(target, 4);
  REQUIRE(cams.size() == 4);
  for (const Camera& c : cams) {
    const Eigen::Vector3d centre = -c.rotation.transpose() * c.translation;
    CHECK((centre - target).norm() == doctest::Approx(3.0));
    CHECK(centre.y() == doctest::Approx(target.y()));
    Points3d t(1, 3);
    t.row(0) = target.transpose();
    const Projection pr = project(c, t);
    CHECK(pr.pixels(0, 0) == doctest::Approx(320.0));
    CHECK(pr.pixels(0, 1) == doctest::Approx(320.0));
  }
  CHECK_THROWS_AS(make_camera_rig(target, 0), ContractError);
}

TEST_CASE("fit_multiview_init: rest fixed point and landmark round trip") {
  const BodyModel& model = testutil::toy_model();
  const FitConfig config = FitConfig::defaults();
  CounterRng rng(77);

  const BodyParams rest = BodyParams::zeros(model);
  LabeledScan rest_scan = labeled(posed_mesh(model, forward(model, rest)), 1.0, 0.0);
  const LandmarkSet rest_lm = synthesize_landmarks(model, rest, scan_cameras(rest_scan, 4), 0.0, rng);
  const InitResult r0 = fit_multiview_init(model, rest_scan, rest_lm, config);
  CHECK(r0.params.body_pose.norm() < 1e-3);
  CHECK(r0.final_energy <= r0.initial_energy);

  const GenScan g = gen_scan(model, plain_spec(), rng, "rt");
  const LandmarkSet lm = synthesize_landmarks(model, g.truth, scan_cameras(g.scan, 4), 0.0, rng);
  const InitResult r = fit_multiview_init(model, g.scan, lm, config);
  CHECK(r.final_energy <= r.initial_energy);
  const Points3d jf = forward(model, r.params).joints, jt = forward(model, g.truth).joints;
  CHECK((jf - jt).rowwise().norm().maxCoeff() < 1e-3);
}

TEST_CASE("fit_multiview_init: single camera still returns and too few landmarks throw") {
  const BodyModel& model = testutil::toy_model();
  const FitConfig config = FitConfig::defaults();
  CounterRng rng(78);
  const GenScan g = gen_scan(model, plain_spec(), rng, "one");
  LandmarkSet lm = synthesize_landmarks(model, g.truth, scan_cameras(g.scan, 1), 0.0, rng);
  const InitResult r = fit_multiview_init(model, g.scan, lm, config);
  CHECK(r.final_energy <= r.initial_energy);
  CHECK(r.params.trans.allFinite());

  lm[0].confidence.setZero();
  lm[0].confidence.head(5).setOnes();
  CHECK_THROWS_AS(fit_multiview_init(model, g.scan, lm, config), ContractError);
}

TEST_CASE("fit_refine: unclothed round trip, monotone energy, breakdown sums") {
  const BodyModel& model = testutil::toy_model();
  const FitConfig config = FitConfig::defaults();
  CounterRng rng(91);
  const GenScan g = gen_scan(model, plain_spec(), rng, "u");
  const LandmarkSet lm = synthesize_landmarks(model, g.truth, scan_cameras(g.scan, 4), 0.0, rng);
  const InitResult init = fit_multiview_init(model, g.scan, lm, config);
  const FitResult fr = fit_refine(model, {g.scan}, {lm}, {init.params}, config);

  double prev = std::numeric_limits<double>::infinity();
  for (const IterationRecord& rec : fr.log) {
    if (!rec.accepted) continue;
    CHECK(rec.energy.total() <= prev);
    prev = rec.energy.total();
  }
  const EnergyBreakdown e = refine_energy(model, {g.scan}, {lm}, {fr.scans[0].params}, config);
  CHECK(e.total() == doctest::Approx(e.landmark + e.skin + e.cloth + e.reg + e.interbeta).epsilon(1e-9));
  CHECK(e.total() == doctest::Approx(fr.final_energy).epsilon(1e-9));
  const SurfaceIndex fitted(posed_mesh(model, forward(model, fr.scans[0].params)));
  const std::optional<double> err = skin_error(g.scan, fitted);
  REQUIRE(err);
  CHECK(*err < 1.0);
}

TEST_CASE("fit_refine: child scan recovers alpha") {
  const BodyModel& model = testutil::toy_model();
  const FitConfig config = FitConfig::defaults();
  GenSpec spec = plain_spec();
  spec.child_probability = 1.0;
  spec.child_alpha_min = spec.child_alpha_max = 0.3;
  CounterRng rng(92);
  const GenScan g = gen_scan(model, spec, rng, "kid");
  REQUIRE(g.scan.is_child);
  const LandmarkSet lm = synthesize_landmarks(model, g.truth, scan_cameras(g.scan, 4), 0.0, rng);
  const InitResult init = fit_multiview_init(model, g.scan, lm, config);
  const FitResult fr = fit_refine(model, {g.scan}, {lm}, {init.params}, config);
  CHECK(std::abs(fr.scans[0].params.alpha - 0.3) <= 0.1);
}

TEST_CASE("fit_refine: inter-shape coupling pulls betas together") {
  const BodyModel& model = testutil::toy_model();
  CounterRng rng(93);
  const std::vector<GenScan> gs = gen_identity_scans(model, plain_spec(), rng, "pair", 2);
  std::vector<LabeledScan> scans;
  std::vector<LandmarkSet> lms;
  std::vector<BodyParams> init;
  FitConfig base = FitConfig::defaults();
  for (const GenScan& g : gs) {
    scans.push_back(g.scan);
    lms.push_back(synthesize_landmarks(model, g.truth, scan_cameras(g.scan, 4), 2.0, rng));
    init.push_back(fit_multiview_init(model, g.scan, lms.back(), base).params);
  }
  init[1].beta.array() += 0.5;
  base.outer_iterations = 8;
  std::vector<double> gaps;
  for (double lam : {1e-6, 1e-4, 1e4}) {
    FitConfig c = base;
    c.refine.interbeta = lam;
    const FitResult fr = fit_refine(model, scans, lms, init, c);
    gaps.push_back((fr.scans[0].params.beta - fr.scans[1].params.beta).norm());
  }
  CAPTURE(gaps[0]);
  CAPTURE(gaps[1]);
  CAPTURE(gaps[2]);
  CHECK(gaps[1] <= gaps[0]);
  CHECK(gaps[2] <= gaps[1]);
  CHECK(gaps[2] < 1e-4);
}

TEST_CASE("fit_refine rejects mixed identities and mismatched inputs") {
  const BodyModel& model = testutil::toy_model();
  CounterRng rng(94);
  const GenScan a = gen_scan(model, plain_spec(), rng, "a");
  const GenScan b = gen_scan(model, plain_spec(), rng, "b");
  const FitConfig c = FitConfig::defaults();
  CHECK_THROWS_AS(fit_refine(model, {a.scan, b.scan}, {{}, {}}, {a.truth, b.truth}, c), ContractError);
  CHECK_THROWS_AS(fit_refine(model, {a.scan}, {{}, {}}, {a.truth}, c), ContractError);
  CHECK_THROWS_AS(fit_refine(model, {}, {}, {}, c), ContractError);
  FitConfig bad = c;
  bad.surface_sigma = 0.0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("skin_error examples") {
  CounterRng rng(6);
  const SurfaceIndex flat(testutil::quad(-3, 3, -3, 3, 0.0));
  LabeledScan on = flat_cloth(0.0, 30, rng);
  on.p_skin.setOnes();
  on.p_cloth.setZero();
  CHECK(*skin_error(on, flat) <= 1e-9);

  LabeledScan off = flat_cloth(0.005, 30, rng);
  off.p_skin.setOnes();
  off.p_cloth.setZero();
  CHECK(*skin_error(off, flat) == doctest::Approx(5.0).epsilon(1e-9));

  LabeledScan mixed = off;
  double ws = 0, ds = 0;
  for (Eigen::Index i = 0; i < mixed.num_points(); ++i) {
    mixed.mesh.positions(i, 2) = rng.uniform(-0.02, 0.02);
    mixed.p_skin[i] = rng.uniform(0, 1);
    mixed.p_other[i] = 1.0 - mixed.p_skin[i];
    ws += mixed.p_skin[i];
    ds += mixed.p_skin[i] * std::abs(mixed.mesh.positions(i, 2));
  }
  CHECK(*skin_error(mixed, flat) == doctest::Approx(1000.0 * ds / ws).epsilon(1e-9));

  LabeledScan none = off;
  none.p_skin.setZero();
  none.p_other.setOnes();
  CHECK_FALSE(skin_error(none, flat).has_value());
}

TEST_CASE("cloth_penetration_error examples") {
  CounterRng rng(7);
  const SurfaceIndex flat(testutil::quad(-3, 3, -3, 3, 0.0));
  const PenetrationError out = cloth_penetration_error(flat_cloth(0.004, 20, rng), flat);
  CHECK(*out.percent == 0.0);
  CHECK_FALSE(out.mean_mm.has_value());

  const PenetrationError in = cloth_penetration_error(flat_cloth(-0.005, 20, rng), flat);
  CHECK(*in.percent == doctest::Approx(100.0));
  CHECK(*in.mean_mm == doctest::Approx(5.0).epsilon(1e-9));

  LabeledScan half = flat_cloth(0.003, 20, rng);
  for (Eigen::Index i = 0; i < 10; ++i) half.mesh.positions(i, 2) = -0.003;
  CHECK(*cloth_penetration_error(half, flat).percent == doctest::Approx(50.0));

  LabeledScan none = half;
  none.p_cloth.setZero();
  none.p_skin.setOnes();
  const PenetrationError e = cloth_penetration_error(none, flat);
  CHECK_FALSE(e.percent.has_value());
  CHECK_FALSE(e.mean_mm.has_value());
}
