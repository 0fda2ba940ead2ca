#include "bodybench/acceptance.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "bodybench/evalproto.hpp"
#include "bodybench/fitter.hpp"
#include "bodybench/parallel.hpp"
#include "bodybench/synthgen.hpp"

namespace bodybench {

namespace {

constexpr double kNa = std::numeric_limits<double>::quiet_NaN();

std::string num(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Published baseline results in mm. F1 carries two decimals, so normalized
// cells of some rows drift from raw / F1 by more than display rounding.
struct BaselineRow {
  const char* method;
  double mpjpe_b, mpjpe_lh, mpjpe_rh, mpjpe_f, mpjpe_fb;
  double mve_b, mve_lh, mve_rh, mve_f, mve_fb;
  double nmje_b, nmje_fb, nmve_b, nmve_fb;
  double f1;
  unsigned drift;  // bit 0 nmje_b, 1 nmje_fb, 2 nmve_b, 3 nmve_fb
};

constexpr BaselineRow kBaselines[] = {
    {"HMR", 180.5, kNa, kNa, kNa, kNa, 173.6, kNa, kNa, kNa, kNa, 226.0, kNa, 217.0, kNa, 0.80, 1},
    {"CenterHMR", 168.1, kNa, kNa, kNa, kNa, 161.4, kNa, kNa, kNa, kNa, 242.3, kNa, 233.9, kNa, 0.69, 1},
    {"EFT", 165.4, kNa, kNa, kNa, kNa, 159.0, kNa, kNa, kNa, kNa, 203.6, kNa, 196.3, kNa, 0.81, 1},
    {"SPIN", 175.1, kNa, kNa, kNa, kNa, 168.7, kNa, kNa, kNa, kNa, 223.1, kNa, 216.3, kNa, 0.78, 1},
    {"SPIN-ft", 153.4, kNa, kNa, kNa, kNa, 148.9, kNa, kNa, kNa, kNa, 199.2, kNa, 193.4, kNa, 0.77, 0},
    {"SMPLify-X", 182.1, 46.5, 49.6, 52.9, 231.8, 187.0, 48.3, 51.4, 48.9, 236.5, 256.5, 326.5, 263.3, 333.1, 0.71, 4},
    {"ExPose", 150.4, 72.5, 68.8, 55.2, 215.9, 151.5, 74.9, 71.3, 51.1, 217.3, 183.4, 263.3, 184.8, 265.0, 0.82, 0},
    {"Frankmocap", 165.2, 52.3, 53.1, kNa, kNa, 168.3, 54.7, 55.7, kNa, kNa, 204.0, kNa, 207.8, kNa, 0.81, 0},
};

constexpr double kExactTol = 0.05;
constexpr double kDriftTol = 1.0;

CheckResult criterion1() {
  CheckResult r{1, "full-body error arithmetic", true, "", 0.0};
  int cells = 0;
  double worst = 0.0;
  for (const auto& row : kBaselines) {
    const std::pair<const double*, const char*> sets[] = {{&row.mpjpe_b, "MPJPE"}, {&row.mve_b, "MVE"}};
    for (const auto& [base, name] : sets) {
      const double b = base[0], lh = base[1], rh = base[2], f = base[3], fb = base[4];
      if (std::isnan(fb)) continue;
      const double got = fb_error(b, lh, rh, f);
      const double d = std::abs(got - fb);
      worst = std::max(worst, d);
      ++cells;
      if (d > kExactTol) {
        r.pass = false;
        r.detail += std::string(row.method) + " " + name + " FB " + num(got) + " vs " + num(fb, 1) + "; ";
      }
    }
  }
  r.detail += std::to_string(cells) + " cells, worst |d| " + num(worst);
  if (cells != 4) r.pass = false;
  return r;
}

CheckResult criterion2() {
  CheckResult r{2, "normalized error arithmetic", true, "", 0.0};
  int exact = 0, drift = 0;
  std::string failures, rounding;
  for (const auto& row : kBaselines) {
    const double raw[4] = {row.mpjpe_b, row.mpjpe_fb, row.mve_b, row.mve_fb};
    const double table[4] = {row.nmje_b, row.nmje_fb, row.nmve_b, row.nmve_fb};
    const char* names[4] = {"NMJE-B", "NMJE-FB", "NMVE-B", "NMVE-FB"};
    for (int c = 0; c < 4; ++c) {
      if (std::isnan(raw[c]) || std::isnan(table[c])) continue;
      const double got = *normalized_errors(raw[c], std::nullopt, row.f1).nmje;
      const double d = std::abs(got - table[c]);
      const bool is_drift = (row.drift >> c) & 1u;
      const double tol = is_drift ? kDriftTol : kExactTol;
      ++(is_drift ? drift : exact);
      if (d > tol) {
        r.pass = false;
        // The F1 that reproduces the published cell, and whether it rounds
        // to the published two-decimal F1.
        const double implied = raw[c] / table[c];
        const bool consistent = std::abs(implied - row.f1) <= 0.005;
        failures += std::string(row.method) + " " + names[c] + " " + num(raw[c], 1) + "/" + num(row.f1, 2) + " = " +
                    num(got, 2) + " vs " + num(table[c], 1) + " (|d| " + num(d, 2) + " > " + num(tol, 2) + "); ";
        rounding += "; " + std::string(row.method) + " implied F1 " + num(implied, 4) +
                    (consistent ? " rounds to " : " does not round to ") + num(row.f1, 2);
      }
    }
  }
  r.detail = std::to_string(exact) + " cells at +-0.05, " + std::to_string(drift) + " F1-rounding cells at +-1.0";
  if (!r.pass) r.detail += "; exceeds: " + failures.substr(0, failures.size() - 2) + rounding;
  return r;
}

// Corpus fits. Each scan is its own identity; landmarks are noiseless
// projections into four ring cameras.
struct ScanOutcome {
  double skin_mm = kNa;
  double joint_mm = kNa;
  double penetration = kNa;
  double alpha = kNa;
  double truth_alpha = kNa;
};

ScanOutcome fit_one(const BodyModel& model, const GenSpec& spec, CounterRng rng, const std::string& identity) {
  const FitConfig config = FitConfig::defaults();
  const GenScan g = gen_scan(model, spec, rng, identity);
  const LandmarkSet lm = synthesize_landmarks(model, g.truth, scan_cameras(g.scan, config.num_cameras), 0.0, rng);
  const InitResult init = fit_multiview_init(model, g.scan, lm, config);
  const FitResult fit = fit_refine(model, {g.scan}, {lm}, {init.params}, config);
  const BodyParams& p = fit.scans[0].params;
  const PosedBody fitted = forward(model, p);
  const PosedBody truth = forward(model, g.truth);
  const SurfaceIndex surface(posed_mesh(model, fitted));
  ScanOutcome out;
  if (const auto e = skin_error(g.scan, surface)) out.skin_mm = *e;
  if (const auto pe = cloth_penetration_error(g.scan, surface); pe.percent) out.penetration = *pe.percent;
  double worst = 0.0;
  for (int j : model.parts.body_joints) worst = std::max(worst, (fitted.joints.row(j) - truth.joints.row(j)).norm());
  out.joint_mm = 1000.0 * worst;
  out.alpha = p.alpha;
  out.truth_alpha = g.truth.alpha;
  return out;
}

std::vector<ScanOutcome> fit_corpus(const BodyModel& model, const GenSpec& spec, std::uint64_t seed, int count,
                                    int jobs, const std::string& prefix) {
  std::vector<ScanOutcome> out(static_cast<std::size_t>(count));
  const CounterRng root(seed);
  parallel_for(count, jobs, [&](int s) {
    out[static_cast<std::size_t>(s)] =
        fit_one(model, spec, root.substream(static_cast<std::uint64_t>(s)), prefix + std::to_string(s));
  });
  return out;
}

double worst_of(const std::vector<ScanOutcome>& v, double ScanOutcome::*field) {
  double w = -std::numeric_limits<double>::infinity();
  for (const auto& o : v) w = std::isnan(o.*field) ? std::numeric_limits<double>::infinity() : std::max(w, o.*field);
  return w;
}

CheckResult criterion3(const BodyModel& model, const AcceptanceOptions& opt) {
  CheckResult r{3, "fitting round trip", true, "", 0.0};
  const int n = opt.quick ? 1 : 20;
  GenSpec plain;
  plain.clothed = false;
  plain.child_probability = 0.0;
  GenSpec clothed = plain;
  clothed.clothed = true;
  const auto u = fit_corpus(model, plain, 42, n, opt.jobs, "unclothed_");
  const auto c = fit_corpus(model, clothed, 42, n, opt.jobs, "clothed_");
  const double skin = worst_of(u, &ScanOutcome::skin_mm);
  const double joints = worst_of(u, &ScanOutcome::joint_mm);
  const double pen = worst_of(c, &ScanOutcome::penetration);
  r.pass = skin < 1.0 && joints < 5.0 && pen < 20.0;
  r.detail = std::to_string(n) + "+" + std::to_string(n) + " scans; worst skin error " + num(skin, 4) +
             " mm (< 1), worst body joint " + num(joints, 4) + " mm (< 5), worst penetration " + num(pen, 2) +
             " % (< 20)";
  return r;
}

CheckResult criterion4(const BodyModel& model, const AcceptanceOptions& opt) {
  CheckResult r{4, "child interpolation", true, "", 0.0};
  const bool adult = interpolate_template(model, 1.0) == model.adult_template;
  const bool child = interpolate_template(model, 0.0) == model.child_template;
  BodyParams rest = BodyParams::zeros(model);
  rest.alpha = 0.0;
  const bool rest_child = (forward(model, rest).vertices - model.child_template).cwiseAbs().maxCoeff() <= 1e-12;
  GenSpec spec;
  spec.clothed = false;
  spec.child_probability = 1.0;
  spec.child_alpha_min = spec.child_alpha_max = 0.3;
  const int n = opt.quick ? 1 : 3;
  const auto fits = fit_corpus(model, spec, 92, n, opt.jobs, "child_");
  double worst = 0.0;
  for (const auto& f : fits) worst = std::max(worst, std::abs(f.alpha - 0.3));
  r.pass = adult && child && rest_child && worst <= 0.1;
  r.detail = std::string("endpoints ") + (adult && child ? "exact" : "differ") + ", rest pose at alpha 0 " +
             (rest_child ? "is" : "is not") + " the child template; " + std::to_string(n) +
             " child scans at alpha* 0.3, worst |alpha - 0.3| " + num(worst, 4) + " (<= 0.1)";
  return r;
}

// Scan of face-centroid points offset 1-5 mm along the face normal of
// `truth`, kept only where the distance to `surface` is smooth: closest
// point inside a triangle, off the surface, no separate near-tie.
LabeledScan smooth_scan(const TriMesh& truth, const TriMesh& surface, int count, CounterRng& rng) {
  std::vector<Eigen::Vector3d> keep;
  while (static_cast<int>(keep.size()) < count) {
    const int f = rng.uniform_int(0, truth.num_triangles() - 1);
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
  LabeledScan out;
  out.mesh.positions.resize(count, 3);
  for (int i = 0; i < count; ++i) out.mesh.positions.row(i) = keep[static_cast<std::size_t>(i)].transpose();
  out.mesh.triangles.resize(count / 3, 3);
  for (int t = 0; t < count / 3; ++t) out.mesh.triangles.row(t) << 3 * t, 3 * t + 1, 3 * t + 2;
  out.p_skin.resize(count);
  out.p_cloth.resize(count);
  out.p_other = Eigen::VectorXd::Zero(count);
  for (int i = 0; i < count; ++i) {
    out.p_skin[i] = rng.uniform(0.0, 1.0);
    out.p_cloth[i] = 1.0 - out.p_skin[i];
  }
  out.identity = "g";
  return out;
}

double worst_relative(const Eigen::VectorXd& analytic, const Eigen::VectorXd& fd) {
  const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-12);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < fd.size(); ++i)
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / std::max(std::abs(fd[i]), 1e-3 * scale));
  return worst;
}

CheckResult criterion5(const BodyModel& model, const AcceptanceOptions& opt) {
  CheckResult r{5, "energy gradients", true, "", 0.0};
  const int trials = opt.quick ? 4 : 20;
  FitConfig config = FitConfig::defaults();
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
  const RefineTerm terms[] = {RefineTerm::kLandmark, RefineTerm::kSkin, RefineTerm::kCloth, RefineTerm::kRegularizer};
  const char* names[] = {"landmark", "skin", "cloth", "regularizer", "interbeta"};
  std::vector<std::array<double, 5>> worst(static_cast<std::size_t>(trials));
  const CounterRng root(2024);

  parallel_for(trials, opt.jobs, [&](int trial) {
    CounterRng rng = root.substream(static_cast<std::uint64_t>(trial));
    const GenScan g = gen_scan(model, spec, rng, "g");
    const bool child = g.scan.is_child;
    const LandmarkSet lm = synthesize_landmarks(model, g.truth, scan_cameras(g.scan, 4), 3.0, rng);
    BodyParams at = g.truth;
    for (Eigen::Index i = 3; i < at.body_pose.size(); ++i) at.body_pose[i] += rng.normal(0.0, 0.03);
    for (Eigen::Index i = 0; i < at.beta.size(); ++i) at.beta[i] += rng.normal(0.0, 0.1);
    at.trans += Eigen::Vector3d(rng.normal(0, 0.005), rng.normal(0, 0.005), rng.normal(0, 0.005));
    const BendLimit& bl = model.bend_limits[static_cast<std::size_t>(trial) % model.bend_limits.size()];
    at.body_pose[3 * bl.joint + bl.axis] = bl.sign * 0.2;
    const Eigen::VectorXd x0 = flatten_params(at, child);
    LabeledScan scan =
        smooth_scan(posed_mesh(model, forward(model, g.truth)), posed_mesh(model, forward(model, at)), 150, rng);
    scan.is_child = child;
    auto& w = worst[static_cast<std::size_t>(trial)];

    for (int t = 0; t < 4; ++t) {
      auto direct = [&](const Eigen::VectorXd& x) {
        const BodyParams p = unflatten_params(model, x, child, "g");
        const FitWeights& fw = config.refine;
        switch (terms[t]) {
          case RefineTerm::kLandmark:
            return fw.landmark * landmark_energy(model, forward(model, p), lm, config.landmark_sigma);
          case RefineTerm::kSkin:
            return fw.skin * skin_energy(scan, SurfaceIndex(posed_mesh(model, forward(model, p))), config.surface_sigma);
          case RefineTerm::kCloth:
            return fw.cloth *
                   cloth_energy(scan, SurfaceIndex(posed_mesh(model, forward(model, p))), config.surface_sigma)
                       .total(fw.inner);
          case RefineTerm::kRegularizer:
            return regularizer(model, p, fw);
        }
        return 0.0;
      };
      const TermGradient tg = refine_term_gradient(model, scan, lm, at, config, terms[t]);
      Eigen::VectorXd fd(x0.size());
      for (Eigen::Index i = 0; i < x0.size(); ++i) {
        Eigen::VectorXd xp = x0, xm = x0;
        xp[i] += h;
        xm[i] -= h;
        fd[i] = (direct(xp) - direct(xm)) / (2 * h);
      }
      const double value_err = std::abs(tg.value - direct(x0)) / std::max(std::abs(direct(x0)), 1e-12);
      w[static_cast<std::size_t>(t)] = std::max(worst_relative(tg.gradient, fd), value_err > 1e-9 ? 1.0 : 0.0);
    }

    std::vector<Eigen::VectorXd> betas(3, Eigen::VectorXd(model.num_betas()));
    for (auto& b : betas)
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.normal();
    const TermGradient tg = interbeta_gradient(betas, 2.5);
    Eigen::VectorXd fd(tg.gradient.size());
    for (std::size_t s = 0; s < betas.size(); ++s) {
      for (Eigen::Index i = 0; i < betas[s].size(); ++i) {
        auto bp = betas, bm = betas;
        bp[s][i] += h;
        bm[s][i] -= h;
        fd[static_cast<Eigen::Index>(s) * betas[s].size() + i] =
            2.5 * (interbeta_energy(bp) - interbeta_energy(bm)) / (2 * h);
      }
    }
    w[4] = worst_relative(tg.gradient, fd);
  });

  r.detail = std::to_string(trials) + " configurations; worst relative error:";
  for (int t = 0; t < 5; ++t) {
    double m = 0.0;
    for (const auto& w : worst) m = std::max(m, w[static_cast<std::size_t>(t)]);
    if (!(m <= tol)) r.pass = false;
    char buf[64];
    std::snprintf(buf, sizeof buf, " %s %.2e", names[t], m);
    r.detail += buf;
  }
  r.detail += " (<= 1e-4)";
  return r;
}

// Exhaustive optimum: most pairs, then least total cost. NaN is forbidden.
void exhaustive(const Eigen::MatrixXd& cost, int row, std::vector<bool>& used, int pairs, double total,
                int* best_pairs, double* best_total) {
  if (row == cost.rows()) {
    if (pairs > *best_pairs || (pairs == *best_pairs && total < *best_total)) {
      *best_pairs = pairs;
      *best_total = total;
    }
    return;
  }
  exhaustive(cost, row + 1, used, pairs, total, best_pairs, best_total);
  for (Eigen::Index c = 0; c < cost.cols(); ++c) {
    if (used[static_cast<std::size_t>(c)] || std::isnan(cost(row, c))) continue;
    used[static_cast<std::size_t>(c)] = true;
    exhaustive(cost, row + 1, used, pairs + 1, total + cost(row, c), best_pairs, best_total);
    used[static_cast<std::size_t>(c)] = false;
  }
}

// Matching cost recomputed from scratch: box IoU gate on the valid projected
// body joints, mean pixel distance over joints valid on both sides.
Eigen::MatrixXd oracle_cost(const BodyModel& model, const SceneTruth& scene, const ScenePrediction& preds, double tau) {
  const auto& body = model.parts.body_joints;
  auto select = [&](const Points3d& k) {
    Points3d out(static_cast<Eigen::Index>(body.size()), 3);
    for (std::size_t i = 0; i < body.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = k.row(body[i]);
    return out;
  };
  auto valid = [](const Projection& p) {
    std::vector<Eigen::Vector2d> v;
    for (Eigen::Index i = 0; i < p.pixels.rows(); ++i)
      if (p.valid[static_cast<std::size_t>(i)]) v.push_back(p.pixels.row(i).transpose());
    Points2d out(static_cast<Eigen::Index>(v.size()), 2);
    for (std::size_t i = 0; i < v.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    return out;
  };
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(scene.persons.size()),
                                                   static_cast<Eigen::Index>(preds.persons.size()), kNa);
  for (std::size_t g = 0; g < scene.persons.size(); ++g) {
    const Projection a = project(scene.camera, select(scene.persons[g].keypoints));
    for (std::size_t q = 0; q < preds.persons.size(); ++q) {
      const Projection b = project_camera_frame(preds.persons[q].camera, select(preds.persons[q].keypoints));
      const Points2d av = valid(a), bv = valid(b);
      if (av.rows() == 0 || bv.rows() == 0) continue;
      const IouResult iou = aabb_iou(av, bv);
      if (iou.degenerate || iou.iou < tau) continue;
      double sum = 0.0;
      int n = 0;
      for (Eigen::Index j = 0; j < a.pixels.rows(); ++j) {
        if (!a.valid[static_cast<std::size_t>(j)] || !b.valid[static_cast<std::size_t>(j)]) continue;
        sum += (a.pixels.row(j) - b.pixels.row(j)).norm();
        ++n;
      }
      if (n > 0) cost(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(q)) = sum / n;
    }
  }
  return cost;
}

CheckResult criterion6(const BodyModel& model, const AcceptanceOptions& opt) {
  CheckResult r{6, "geometry oracles", true, "", 0.0};
  CounterRng rng(606);

  // BVH against brute force.
  BodyParams p = BodyParams::zeros(model);
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) p.beta[i] = rng.normal();
  for (Eigen::Index i = 3; i < p.body_pose.size(); ++i) p.body_pose[i] = 0.3 * rng.normal();
  const TriMesh mesh = posed_mesh(model, forward(model, p));
  const Bvh bvh(mesh);
  const Eigen::Vector3d lo = mesh.positions.colwise().minCoeff().transpose();
  const Eigen::Vector3d hi = mesh.positions.colwise().maxCoeff().transpose();
  double bvh_worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::Vector3d q;
    for (int c = 0; c < 3; ++c) q[c] = rng.uniform(lo[c] - 0.2, hi[c] + 0.2);
    bvh_worst =
        std::max(bvh_worst, std::abs(closest_point(mesh, bvh, q).distance - closest_point_brute_force(mesh, q).distance));
  }
  const bool bvh_ok = bvh_worst <= 1e-12;

  // Closed cube: points pushed out of or into it along the pseudo-normal
  // at random surface points, edges and corners included.
  const TriMesh cube = box_mesh(Eigen::AlignedBox3d(Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones()));
  const Bvh cube_bvh(cube);
  const PseudoNormals cube_normals(cube);
  int sign_wrong = 0, sign_tested = 0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::Vector3d s(rng.uniform(), rng.uniform(), rng.uniform());
    s[rng.uniform_int(0, 2)] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    if (i % 10 == 0) s = Eigen::Vector3d(1.0, 1.0, rng.uniform());
    if (i % 50 == 0) s = Eigen::Vector3d(0.0, 1.0, 1.0);
    const Eigen::Vector3d n = cube_normals.at(closest_point(cube, cube_bvh, s)).normalized();
    const bool outside = rng.bernoulli(0.5);
    const Eigen::Vector3d q = s + (outside ? rng.uniform(0.001, 0.2) : -rng.uniform(0.001, 0.05)) * n;
    const ClosestPoint cp = closest_point(cube, cube_bvh, q);
    ++sign_tested;
    if ((signed_side(q, cp.point, cube_normals.at(cp)) == SurfaceSide::kOutside) != outside) ++sign_wrong;
  }

  // Body surface: points pushed off face interiors. The toy body is a union
  // of overlapping part surfaces, so points whose nearest surface belongs to
  // another part have no constructed side and are skipped.
  const PseudoNormals normals(mesh);
  int body_skipped = 0;
  for (int i = 0; i < 1000; ++i) {
    const int f = rng.uniform_int(0, mesh.num_triangles() - 1);
    const Eigen::Vector3d a = mesh.positions.row(mesh.triangles(f, 0)).transpose();
    const Eigen::Vector3d b = mesh.positions.row(mesh.triangles(f, 1)).transpose();
    const Eigen::Vector3d c = mesh.positions.row(mesh.triangles(f, 2)).transpose();
    const Eigen::Vector3d n = (b - a).cross(c - a);
    double u = rng.uniform(0.1, 0.8), v = rng.uniform(0.1, 0.8);
    if (u + v > 0.9) {
      u = 0.9 - u;
      v = 0.9 - v;
    }
    const Eigen::Vector3d s = a + u * (b - a) + v * (c - a);
    const bool outside = rng.bernoulli(0.5);
    const Eigen::Vector3d q = s + (outside ? 1.0 : -1.0) * rng.uniform(1e-4, 5e-4) * n.normalized();
    const ClosestPoint cp = closest_point(mesh, bvh, q);
    if (cp.triangle != f) {
      ++body_skipped;
      continue;
    }
    ++sign_tested;
    if ((signed_side(q, cp.point, normals.at(cp)) == SurfaceSide::kOutside) != outside) ++sign_wrong;
  }
  const bool sign_ok = sign_wrong == 0 && body_skipped < 50;

  // Assignment on random cost matrices.
  int matrix_bad = 0;
  for (int t = 0; t < 500; ++t) {
    const int rows = rng.uniform_int(0, 5), cols = rng.uniform_int(0, 5);
    Eigen::MatrixXd cost(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int k = 0; k < cols; ++k) cost(i, k) = rng.bernoulli(0.25) ? kNa : std::floor(rng.uniform(0.0, 6.0));
    const std::vector<int> got = assign_min_cost(cost);
    int pairs = 0;
    double total = 0.0;
    for (int i = 0; i < rows; ++i)
      if (got[static_cast<std::size_t>(i)] >= 0) {
        ++pairs;
        total += cost(i, got[static_cast<std::size_t>(i)]);
      }
    int bp = 0;
    double bt = 0.0;
    std::vector<bool> used(static_cast<std::size_t>(cols), false);
    exhaustive(cost, 0, used, 0, 0.0, &bp, &bt);
    if (pairs != bp || std::abs(total - bt) > 1e-9 || std::isnan(total)) ++matrix_bad;
  }

  // Assignment inside generated scenes of at most five people, with extra
  // duplicate detections competing for the same person.
  GenSpec spec;
  spec.min_persons = 1;
  spec.max_persons = 5;
  spec.max_overlap = 0.6;
  const int num_scenes = opt.quick ? 40 : 150;
  int scene_bad = 0, contested = 0;
  for (int s = 0; s < num_scenes; ++s) {
    CounterRng sr = rng.substream(static_cast<std::uint64_t>(s));
    const SceneTruth scene = gen_scene(model, spec, sr, "oracle");
    DegradeSpec d;
    d.noise_mm = 60.0;
    d.miss_rate = 0.2;
    d.fp_rate = 0.3;
    d.vertices = false;
    ScenePrediction preds = degrade_predictions(model, scene, d, sr);
    const ScenePrediction truth = truth_as_prediction(scene);
    int next_id = 2001;
    for (const auto& tp : truth.persons) {
      if (!sr.bernoulli(0.6)) continue;
      PredictedPerson dup = tp;
      dup.id = next_id++;
      dup.vertices.reset();
      const Eigen::Vector3d shift(sr.normal(0.0, 0.25), sr.normal(0.0, 0.05), sr.normal(0.0, 0.25));
      dup.keypoints.rowwise() += shift.transpose();
      preds.persons.push_back(dup);
    }
    const MatchOutcome m = match(model, scene, preds, 0.1);
    const Eigen::MatrixXd cost = oracle_cost(model, scene, preds, 0.1);
    int bp = 0;
    double bt = 0.0;
    std::vector<bool> used(static_cast<std::size_t>(cost.cols()), false);
    exhaustive(cost, 0, used, 0, 0.0, &bp, &bt);
    double total = 0.0;
    for (const auto& pr : m.pairs) total += pr.error_px;
    int admissible_per_row_max = 0;
    for (Eigen::Index g = 0; g < cost.rows(); ++g) {
      int k = 0;
      for (Eigen::Index q = 0; q < cost.cols(); ++q) k += std::isnan(cost(g, q)) ? 0 : 1;
      admissible_per_row_max = std::max(admissible_per_row_max, k);
    }
    if (admissible_per_row_max > 1) ++contested;
    if (static_cast<int>(m.pairs.size()) != bp || std::abs(total - bt) > 1e-9 * (1.0 + bt)) ++scene_bad;
  }

  r.pass = bvh_ok && sign_ok && matrix_bad == 0 && scene_bad == 0;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "BVH worst |d| %.1e over 1000 queries; side test %d/%d correct (%d body points with a foreign nearest part skipped); assignment: %d/500 matrices and "
                "%d/%d scenes (%d contested) off the exhaustive optimum",
                bvh_worst, sign_tested - sign_wrong, sign_tested, body_skipped, matrix_bad, scene_bad, num_scenes, contested);
  r.detail = buf;
  return r;
}

std::vector<SceneTruth> scenes_for(const BodyModel& model, int min_persons, std::uint64_t seed) {
  GenSpec spec;
  std::vector<SceneTruth> scenes;
  int persons = 0;
  const CounterRng root(seed);
  for (int s = 0; persons < min_persons; ++s) {
    CounterRng rng = root.substream(static_cast<std::uint64_t>(s));
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04d", s);
    scenes.push_back(gen_scene(model, spec, rng, name));
    persons += static_cast<int>(scenes.back().persons.size());
  }
  return scenes;
}

struct DegradedRun {
  EvalReport report;
  DegradeStats stats;
};

DegradedRun degraded_run(const BodyModel& model, const std::vector<SceneTruth>& scenes, const DegradeSpec& d,
                         std::uint64_t seed) {
  DegradedRun out;
  std::vector<ScenePrediction> preds;
  const CounterRng root(seed);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    CounterRng rng = root.substream(i);
    DegradeStats st;
    preds.push_back(degrade_predictions(model, scenes[i], d, rng, &st));
    out.stats.kept += st.kept;
    out.stats.dropped += st.dropped;
    out.stats.injected += st.injected;
    out.stats.fp_placement_failures += st.fp_placement_failures;
  }
  out.report = evaluate(model, scenes, preds);
  return out;
}

CheckResult criterion7(const BodyModel& model, const AcceptanceOptions&) {
  CheckResult r{7, "protocol identity and calibration", true, "", 0.0};
  const std::vector<SceneTruth> scenes = scenes_for(model, 400, 7);
  int persons = 0;
  for (const auto& s : scenes) persons += static_cast<int>(s.persons.size());

  // Identity.
  std::vector<ScenePrediction> truth;
  for (const auto& s : scenes) truth.push_back(truth_as_prediction(s));
  const EvalReport id = evaluate(model, scenes, truth);
  bool zero = id.detection.f1 == 1.0 && id.detection.fp == 0 && id.detection.fn == 0;
  for (const PartErrors* e : {&id.body, &id.left_hand, &id.right_hand, &id.face, &id.full_body})
    zero = zero && e->mpjpe && *e->mpjpe == 0.0 && e->mve && *e->mve == 0.0;
  zero = zero && id.body_normalized.nmje && *id.body_normalized.nmje == 0.0;

  // Calibration with exact positions so counts are attributable.
  DegradeSpec cal;
  cal.miss_rate = 0.3;
  cal.fp_rate = 0.2;
  const DegradedRun c = degraded_run(model, scenes, cal, 71);
  const DetectionScores& d = c.report.detection;
  const bool counts = d.tp == c.stats.kept && d.fn == c.stats.dropped && d.fp == c.stats.injected;
  const double expected_precision = static_cast<double>(c.stats.kept) / (c.stats.kept + c.stats.injected);
  const bool recall_ok = std::abs(d.recall - 0.7) <= 0.05;
  const bool precision_ok =
      std::abs(d.precision - expected_precision) <= 1e-12 && std::abs(d.precision - 0.7 / 0.9) <= 0.05;

  // NMJE >= MPJPE on every run, equal exactly when F1 is 1.
  struct Run {
    double noise, miss, fp;
  };
  const Run runs[] = {{20, 0, 0}, {20, 0.3, 0.2}, {20, 0.3, 0}, {20, 0, 0.2}, {50, 0.1, 0.1}};
  int order_bad = 0;
  auto check_order = [&](const EvalReport& rep) {
    const double mpjpe = *rep.body.mpjpe, nmje = *rep.body_normalized.nmje;
    const bool f1_one = rep.detection.f1 == 1.0;
    if (nmje < mpjpe || (nmje == mpjpe) != f1_one) ++order_bad;
  };
  check_order(id);
  std::uint64_t seed = 80;
  for (const Run& run : runs) {
    DegradeSpec ds;
    ds.noise_mm = run.noise;
    ds.miss_rate = run.miss;
    ds.fp_rate = run.fp;
    check_order(degraded_run(model, scenes, ds, seed++).report);
  }

  r.pass = zero && counts && recall_ok && precision_ok && order_bad == 0 && persons >= 400;
  r.detail = std::to_string(persons) + " persons; identity " + (zero ? "error free, F1 1" : "NOT error free") +
             "; miss 0.3 / fp 0.2: recall " + num(d.recall) + ", precision " + num(d.precision) + " (kept " +
             std::to_string(c.stats.kept) + ", injected " + std::to_string(c.stats.injected) + " -> " +
             num(expected_precision) + ")" + (counts ? "" : ", counts differ from injection log") + "; NMJE ordering " +
             std::to_string(6 - order_bad) + "/6 runs";
  return r;
}

PersonRecord occ_record(double occlusion, bool matched, double err) {
  PersonRecord p;
  p.scene = "s";
  p.matched = matched;
  p.b_mpjpe = err;
  p.occlusion = occlusion;
  p.image_width = 640;
  return p;
}

TriMesh quad(double x0, double x1, double y0, double y1, double depth) {
  TriMesh m;
  m.positions.resize(4, 3);
  m.positions << x0, y0, depth, x1, y0, depth, x1, y1, depth, x0, y1, depth;
  m.triangles.resize(2, 3);
  m.triangles << 0, 1, 2, 0, 2, 3;
  return m;
}

CheckResult criterion8(const BodyModel&, const AcceptanceOptions&) {
  CheckResult r{8, "occlusion analysis", true, "", 0.0};
  Camera cam;
  cam.focal = 100.0;
  cam.principal = Eigen::Vector2d(50.0, 50.0);
  cam.width = 100;
  cam.height = 100;
  // Far person covers 25 x 40 = 1000 px at depth 10. The near one covers
  // 10 x 40 = 400 of them at depth 5; the cover hides all of them.
  const TriMesh far = quad(-2.5, 0.0, -2.0, 2.0, 10.0);
  const TriMesh near = quad(-1.25, -0.75, -1.0, 1.0, 5.0);
  const TriMesh cover = quad(-1.25, 0.0, -1.0, 1.0, 5.0);
  const std::vector<RasterItem> partial = {{&far, 2}, {&near, 1}};
  const std::vector<RasterItem> hidden = {{&far, 2}, {&cover, 1}};
  const MaskImage m = rasterize(partial, cam);
  const MaskImage h = rasterize(hidden, cam);
  const double p0 = *occlusion_percent(m, 1);
  const double p40 = *occlusion_percent(m, 2);
  const double p100 = *occlusion_percent(h, 2);
  const bool fixtures = m.unoccluded_count(2) == 1000 && m.count_label(2) == 600 && h.count_label(2) == 0 &&
                        p0 == 0.0 && std::abs(p40 - 40.0) <= 1e-12 && p100 == 100.0;

  // Decile membership, 100 in the last bin.
  const std::pair<double, int> edges[] = {{0.0, 0}, {9.999, 0}, {10.0, 1}, {40.0, 4}, {55.5, 5}, {99.99, 9}, {100.0, 9}};
  bool deciles = true;
  for (const auto& [occ, bin] : edges) {
    const auto rows = binned_analysis({occ_record(occ, true, 1.0)}, BinKind::kOcclusion);
    deciles = deciles && rows.size() == 10 && rows[static_cast<std::size_t>(bin)].count == 1;
  }

  // Hand computation. Bin 0: one hit at 50 mm -> 50. Bin 4: hits at 100
  // and 200, one miss -> mean 150, recall 2/3, 225. Bin 9: one miss.
  const std::vector<PersonRecord> recs = {occ_record(5, true, 50),   occ_record(41, true, 100),
                                          occ_record(45, true, 200), occ_record(49.9, false, 0),
                                          occ_record(100, false, 0)};
  const auto rows = binned_analysis(recs, BinKind::kOcclusion);
  const bool hand = rows[0].count == 1 && *rows[0].recall_nmje == 50.0 && rows[4].count == 3 && rows[4].matched == 2 &&
                    *rows[4].mean_b_mpjpe == 150.0 && std::abs(*rows[4].recall_nmje - 225.0) <= 1e-12 &&
                    std::abs(*rows[4].miss_rate - 1.0 / 3.0) <= 1e-15 && rows[9].count == 1 &&
                    *rows[9].miss_rate == 1.0 && !rows[9].mean_b_mpjpe && !rows[9].recall_nmje && rows[2].count == 0 &&
                    !rows[2].miss_rate;

  r.pass = fixtures && deciles && hand;
  r.detail = "fixtures " + num(p0, 1) + "/" + num(p40, 1) + "/" + num(p100, 1) + " %" + (fixtures ? "" : " WRONG") +
             "; decile edges " + (deciles ? "correct" : "WRONG") + "; recall-NMJE bin 4 " +
             num(rows[4].recall_nmje.value_or(kNa), 3) + " (hand 225)" + (hand ? "" : " WRONG");
  return r;
}

}  // namespace

std::vector<CheckResult> run_acceptance(const AcceptanceOptions& options) {
  const BodyModel model = make_toy_model(1);
  std::vector<CheckResult> out;
  auto wanted = [&](int c) {
    return options.only.empty() || std::find(options.only.begin(), options.only.end(), c) != options.only.end();
  };
  auto run = [&](int c, auto&& fn) {
    if (!wanted(c)) return;
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult res;
    try {
      res = fn();
    } catch (const std::exception& e) {
      res = CheckResult{c, "criterion " + std::to_string(c), false, std::string("threw: ") + e.what(), 0.0};
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (options.on_result) options.on_result(res);
    out.push_back(std::move(res));
  };
  run(1, [&] { return criterion1(); });
  run(2, [&] { return criterion2(); });
  run(3, [&] { return criterion3(model, options); });
  run(4, [&] { return criterion4(model, options); });
  run(5, [&] { return criterion5(model, options); });
  run(6, [&] { return criterion6(model, options); });
  run(7, [&] { return criterion7(model, options); });
  run(8, [&] { return criterion8(model, options); });
  if (options.force_fail) {
    CheckResult f{0, "forced failure", false, "requested by the forced-failure flag", 0.0};
    if (options.on_result) options.on_result(f);
    out.push_back(f);
  }
  return out;
}

std::string format_check(const CheckResult& r) {
  char head[96];
  std::snprintf(head, sizeof head, "criterion %d  %s  ", r.criterion, r.pass ? "PASS" : "FAIL");
  return head + r.title + "  (" + r.detail + "; " + num(r.seconds, 1) + " s)";
}

}  // namespace bodybench
