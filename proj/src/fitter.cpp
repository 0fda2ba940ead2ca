#include "bodybench/fitter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <ceres/ceres.h>

namespace bodybench {

void LabeledScan::validate() const {
  mesh.validate();
  const Eigen::Index n = mesh.positions.rows();
  require(p_skin.size() == n && p_cloth.size() == n && p_other.size() == n, "label count does not match scan vertices");
  require(!identity.empty(), "scan identity tag is empty");
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = p_skin[i], b = p_cloth[i], c = p_other[i];
    require(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0 && c >= 0.0 && c <= 1.0, "label probability outside [0, 1]");
    require(std::abs(a + b + c - 1.0) <= 1e-6, "label probabilities do not sum to 1");
  }
}

FitConfig FitConfig::defaults() {
  FitConfig c;
  c.init.landmark = 1.0;
  c.init.body_pose = 1e-2;
  c.init.hand_pose = 1e-2;
  c.init.shape = 1e-2;
  c.init.expression = 1e-2;
  c.init.bend = 1.0;
  c.init.skin = 0.0;
  c.init.cloth = 0.0;
  c.init.interbeta = 0.0;

  c.refine.landmark = 1e-4;
  c.refine.skin = 1.0;
  c.refine.cloth = 1.0;
  c.refine.inner = 100.0;
  c.refine.interbeta = 1.0;
  c.refine.body_pose = 1e-6;
  c.refine.hand_pose = 1e-6;
  c.refine.shape = 1e-6;
  c.refine.expression = 1e-6;
  c.refine.bend = 1e-3;

  c.init_solver.max_iterations = 100;
  c.init_solver.function_tolerance = 1e-10;
  c.init_solver.initial_trust_region = 1e-2;
  c.inner_solver.max_iterations = 10;
  return c;
}

namespace {

void validate_weights(const FitWeights& w) {
  for (double x : {w.landmark, w.skin, w.cloth, w.interbeta, w.inner, w.body_pose, w.hand_pose, w.shape, w.expression,
                   w.bend}) {
    require(std::isfinite(x) && x >= 0.0, "fit weights must be finite and nonnegative");
  }
}

}  // namespace

void FitConfig::validate() const {
  validate_weights(init);
  validate_weights(refine);
  require(landmark_sigma > 0.0 && surface_sigma > 0.0, "robust scale must be positive");
  require(num_cameras >= 1, "at least one camera required");
  require(outer_iterations >= 0 && prealign_iterations >= 0 && max_backtracks >= 0 && warmup_iterations >= 0 && warmup_prior_scale >= 0.0 && init_solver.max_iterations >= 0 && inner_solver.max_iterations >= 0,
          "iteration counts must be nonnegative");
}

double geman_mcclure(double x, double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("geman_mcclure: sigma must be positive");
  const double s2 = sigma * sigma;
  const double x2 = x * x;
  return s2 * x2 / (s2 + x2);
}

namespace {

int count_usable_landmarks(const BodyModel& model, const LandmarkSet& views) {
  int usable = 0;
  for (const LandmarkView& view : views) {
    view.camera.validate();
    require(view.points.rows() == model.num_keypoints() && view.confidence.size() == model.num_keypoints(),
            "landmark count does not match model keypoints");
    for (int k = 0; k < model.num_keypoints(); ++k) {
      const double c = view.confidence[k];
      require(std::isfinite(c) && c >= 0.0 && c <= 1.0, "landmark confidence outside [0, 1]");
      if (c > 0.0 && view.points.row(k).allFinite()) ++usable;
    }
  }
  return usable;
}

}  // namespace

double landmark_energy(const BodyModel& model, const PosedBody& posed, const LandmarkSet& views, double sigma,
                       int* excluded) {
  if (!(sigma > 0.0)) throw std::domain_error("landmark_energy: sigma must be positive");
  count_usable_landmarks(model, views);
  const Points3d kp = keypoints(model, posed);
  double total = 0.0;
  int used = 0;
  int skipped = 0;
  for (const LandmarkView& view : views) {
    for (int k = 0; k < model.num_keypoints(); ++k) {
      const double c = view.confidence[k];
      if (!(c > 0.0) || !view.points.row(k).allFinite()) continue;
      Eigen::Vector2d px;
      if (!project_world_point<double>(view.camera, kp.row(k).transpose(), &px)) {
        ++skipped;
        continue;
      }
      total += c * geman_mcclure((px - view.points.row(k).transpose()).norm(), sigma);
      ++used;
    }
  }
  if (excluded) *excluded = skipped;
  if (used == 0) throw ContractError("no usable landmark in any view");
  return total;
}

SurfaceIndex::SurfaceIndex(TriMesh mesh) : mesh_(std::move(mesh)), bvh_(mesh_), normals_(mesh_) {}

double skin_energy(const LabeledScan& scan, const SurfaceIndex& surface, double sigma) {
  double total = 0.0;
  for (int i = 0; i < scan.num_points(); ++i) {
    const double p = scan.p_skin[i];
    if (!(p > 0.0)) continue;
    const ClosestPoint cp = surface.closest(scan.mesh.positions.row(i).transpose());
    total += geman_mcclure(std::sqrt(p) * cp.distance, sigma);
  }
  return total;
}

ClothEnergy cloth_energy(const LabeledScan& scan, const SurfaceIndex& surface, double sigma) {
  ClothEnergy e;
  for (int i = 0; i < scan.num_points(); ++i) {
    const double p = scan.p_cloth[i];
    if (!(p > 0.0)) continue;
    const Eigen::Vector3d q = scan.mesh.positions.row(i).transpose();
    const ClosestPoint cp = surface.closest(q);
    if (surface.side(q, cp) == SurfaceSide::kInside) {
      e.inside += p * cp.distance * cp.distance;
      ++e.num_inside;
    } else {
      e.outside += geman_mcclure(std::sqrt(p) * cp.distance, sigma);
    }
  }
  return e;
}

double interbeta_energy(const std::vector<Eigen::VectorXd>& betas) {
  require(!betas.empty(), "interbeta_energy needs at least one beta");
  double total = 0.0;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    for (std::size_t j = i + 1; j < betas.size(); ++j) {
      require(betas[i].size() == betas[j].size(), "beta dimension mismatch");
      total += (betas[i] - betas[j]).squaredNorm();
    }
  }
  return total;
}

double bend_barrier(double signed_angle) {
  const double e = std::exp(std::max(signed_angle, 0.0)) - 1.0;
  return e * e;
}

double regularizer(const BodyModel& model, const PoseParams<double>& params, const FitWeights& weights) {
  check_dimensions(model, params);
  const Eigen::Index nb = params.body_pose.size();
  double total = weights.body_pose * params.body_pose.tail(nb - 3).squaredNorm();
  total += weights.hand_pose * (params.left_hand.squaredNorm() + params.right_hand.squaredNorm());
  total += weights.shape * params.beta.squaredNorm();
  total += weights.expression * params.expression.squaredNorm();
  double bend = 0.0;
  for (const BendLimit& b : model.bend_limits) bend += bend_barrier(b.sign * params.body_pose[3 * b.joint + b.axis]);
  return total + weights.bend * bend;
}

std::vector<Camera> make_camera_rig(const Eigen::Vector3d& target, int count, double radius, double focal, int width,
                                    int height) {
  require(count >= 1, "camera rig needs at least one camera");
  std::vector<Camera> cams;
  for (int k = 0; k < count; ++k) {
    const double phi = 2.0 * std::numbers::pi * k / count;
    const Eigen::Vector3d eye = target + radius * Eigen::Vector3d(std::sin(phi), 0.0, std::cos(phi));
    cams.push_back(Camera::look_at(eye, target, focal, width, height));
  }
  return cams;
}

namespace {

constexpr int kStride = 16;

// Parameter blocks of one scan, in the order handed to the cost functions.
enum Block { kTrans, kGlobal, kBody, kLeftHand, kRightHand, kBeta, kExpr, kAlpha };

struct ScanState {
  Eigen::Vector3d trans;
  Eigen::Vector3d global;
  Eigen::VectorXd body;
  Eigen::VectorXd left_hand;
  Eigen::VectorXd right_hand;
  Eigen::VectorXd beta;
  Eigen::VectorXd expr;

  explicit ScanState(const BodyParams& p)
      : trans(p.trans),
        global(p.body_pose.head<3>()),
        body(p.body_pose.tail(p.body_pose.size() - 3)),
        left_hand(p.left_hand),
        right_hand(p.right_hand),
        beta(p.beta),
        expr(p.expression) {}

  BodyParams to_params(const std::string& identity, double alpha) const {
    BodyParams p;
    p.identity = identity;
    p.trans = trans;
    p.body_pose.resize(3 + body.size());
    p.body_pose << global, body;
    p.left_hand = left_hand;
    p.right_hand = right_hand;
    p.beta = beta;
    p.expression = expr;
    p.alpha = alpha;
    return p;
  }

  ScanState lerp(const ScanState& to, double t) const {
    ScanState out = *this;
    out.trans += t * (to.trans - trans);
    out.global += t * (to.global - global);
    out.body += t * (to.body - body);
    out.left_hand += t * (to.left_hand - left_hand);
    out.right_hand += t * (to.right_hand - right_hand);
    out.beta += t * (to.beta - beta);
    out.expr += t * (to.expr - expr);
    return out;
  }

  std::vector<double*> blocks(double* alpha_logit) {
    std::vector<double*> b{trans.data(), global.data(), body.data(), left_hand.data(),
                           right_hand.data(), beta.data(), expr.data()};
    if (alpha_logit) b.push_back(alpha_logit);
    return b;
  }
};

// Same rotation with angle in [-pi, pi].
Eigen::Vector3d wrap_rotation(const Eigen::Vector3d& w) {
  const double a = w.norm();
  if (a <= std::numbers::pi) return w;
  const double wrapped = a - 2.0 * std::numbers::pi * std::round(a / (2.0 * std::numbers::pi));
  return w * (wrapped / a);
}

void wrap_rotations(ScanState& s) {
  s.global = wrap_rotation(s.global);
  for (Eigen::Index j = 0; j + 2 < s.body.size(); j += 3) s.body.segment<3>(j) = wrap_rotation(s.body.segment<3>(j));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double a) {
  a = std::clamp(a, 1e-6, 1.0 - 1e-6);
  return std::log(a / (1.0 - a));
}

struct LandmarkTerm {
  int view;
  int keypoint;
  double scale;  // sqrt(2 lambda conf)
};

struct SurfaceTarget {
  Eigen::Vector3d point;
  int triangle;
  Eigen::Vector3d barycentric;
  // Outward unit direction at the closest model point: the pseudo-normal
  // when the scan point lies on the surface, otherwise the direction to the
  // point, flipped for points inside. Residuals measure the offset along it.
  Eigen::Vector3d direction;
  double scale;        // sqrt(2 lambda) of the robust term
  double inner_scale;  // sqrt(2 lambda lambda_inner) for cloth points below the surface; 0 for skin
  double weight;       // label probability
};

// All data residuals of one scan, sharing a single forward evaluation over
// the vertices they touch.
class ScanResidual {
 public:
  ScanResidual(const BodyModel& model, bool child, const LandmarkSet* views, std::vector<LandmarkTerm> landmarks,
               double landmark_sigma, std::vector<SurfaceTarget> targets, double surface_sigma)
      : model_(model),
        child_(child),
        views_(views),
        landmarks_(std::move(landmarks)),
        landmark_sigma_(landmark_sigma),
        targets_(std::move(targets)),
        surface_sigma_(surface_sigma) {
    std::vector<int> local(static_cast<std::size_t>(model.num_vertices()), -1);
    auto use = [&](int v) {
      if (local[static_cast<std::size_t>(v)] < 0) {
        local[static_cast<std::size_t>(v)] = static_cast<int>(vertices_.size());
        vertices_.push_back(v);
      }
      return local[static_cast<std::size_t>(v)];
    };
    if (!landmarks_.empty()) {
      for (int v : model.parts.face_landmarks) landmark_vertex_.push_back(use(v));
    }
    for (const SurfaceTarget& t : targets_) {
      corners_.push_back({use(model.faces(t.triangle, 0)), use(model.faces(t.triangle, 1)), use(model.faces(t.triangle, 2))});
    }
  }

  int num_residuals() const { return static_cast<int>(2 * landmarks_.size() + targets_.size()); }

  template <typename T>
  bool operator()(T const* const* p, T* r) const {
    using std::exp;
    using std::sqrt;
    const int nb = model_.num_body_joints;
    PoseParams<T> params;
    params.trans = Vec3<T>(p[kTrans][0], p[kTrans][1], p[kTrans][2]);
    params.body_pose.resize(3 * nb);
    for (int i = 0; i < 3; ++i) params.body_pose[i] = p[kGlobal][i];
    for (int i = 0; i < 3 * (nb - 1); ++i) params.body_pose[3 + i] = p[kBody][i];
    params.left_hand = Eigen::Map<const VecX<T>>(p[kLeftHand], model_.hand_latent_dim());
    params.right_hand = Eigen::Map<const VecX<T>>(p[kRightHand], model_.hand_latent_dim());
    params.beta = Eigen::Map<const VecX<T>>(p[kBeta], model_.num_betas());
    params.expression = Eigen::Map<const VecX<T>>(p[kExpr], model_.num_expressions());
    params.alpha = child_ ? T(1) / (T(1) + exp(-p[kAlpha][0])) : T(1);

    const PosedBodyT<T> posed = forward_subset<T>(model_, params, vertices_);

    int out = 0;
    const int nj = model_.num_joints();
    const T l2 = T(landmark_sigma_ * landmark_sigma_);
    for (const LandmarkTerm& lm : landmarks_) {
      const LandmarkView& view = (*views_)[lm.view];
      const Vec3<T> kp = lm.keypoint < nj ? Vec3<T>(posed.joints.row(lm.keypoint).transpose())
                                          : Vec3<T>(posed.vertices.row(landmark_vertex_[lm.keypoint - nj]).transpose());
      Vec2<T> px;
      if (project_world_point<T>(view.camera, kp, &px)) {
        const Vec2<T> e = px - view.points.row(lm.keypoint).transpose().cast<T>();
        const T k = T(lm.scale * landmark_sigma_) / sqrt(l2 + e.squaredNorm());
        r[out] = k * e[0];
        r[out + 1] = k * e[1];
      } else {
        r[out] = T(0);
        r[out + 1] = T(0);
      }
      out += 2;
    }

    const T s2 = T(surface_sigma_ * surface_sigma_);
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      const SurfaceTarget& t = targets_[i];
      Vec3<T> m = Vec3<T>::Zero();
      for (int c = 0; c < 3; ++c) m += t.barycentric[c] * posed.vertices.row(corners_[i][c]).transpose();
      const T e = (t.point.cast<T>() - m).dot(t.direction.cast<T>());
      if (t.inner_scale > 0.0 && e < T(0)) {
        r[out] = T(t.inner_scale * std::sqrt(t.weight)) * e;
      } else {
        r[out] = T(t.scale * surface_sigma_ * std::sqrt(t.weight)) * e / sqrt(s2 + t.weight * e * e);
      }
      ++out;
    }
    return true;
  }

 private:
  const BodyModel& model_;
  bool child_;
  const LandmarkSet* views_;
  std::vector<LandmarkTerm> landmarks_;
  double landmark_sigma_;
  std::vector<SurfaceTarget> targets_;
  double surface_sigma_;
  std::vector<int> vertices_;
  std::vector<int> landmark_vertex_;
  std::vector<std::array<int, 3>> corners_;
};

// scale * x over a whole block.
struct NormPrior {
  double scale;
  int size;
  template <typename T>
  bool operator()(T const* const* p, T* r) const {
    for (int i = 0; i < size; ++i) r[i] = T(scale) * p[0][i];
    return true;
  }
};

struct BendPrior {
  double scale;
  std::vector<std::pair<int, double>> components;  // index into the body block, sign
  template <typename T>
  bool operator()(T const* const* p, T* r) const {
    using std::exp;
    for (std::size_t i = 0; i < components.size(); ++i) {
      const T x = components[i].second * p[0][components[i].first];
      r[i] = x > T(0) ? T(scale) * (exp(x) - T(1)) : T(0);
    }
    return true;
  }
};

struct InterBeta {
  double scale;
  int size;
  template <typename T>
  bool operator()(T const* const* p, T* r) const {
    for (int i = 0; i < size; ++i) r[i] = T(scale) * (p[0][i] - p[1][i]);
    return true;
  }
};

void add_norm_prior(ceres::Problem& problem, double weight, double* block, int size) {
  if (!(weight > 0.0) || size == 0) return;
  auto* cost = new ceres::DynamicAutoDiffCostFunction<NormPrior, kStride>(new NormPrior{std::sqrt(2.0 * weight), size});
  cost->AddParameterBlock(size);
  cost->SetNumResiduals(size);
  problem.AddResidualBlock(cost, nullptr, block);
}

void add_priors(ceres::Problem& problem, const BodyModel& model, const FitWeights& w, ScanState& s) {
  add_norm_prior(problem, w.body_pose, s.body.data(), static_cast<int>(s.body.size()));
  add_norm_prior(problem, w.hand_pose, s.left_hand.data(), static_cast<int>(s.left_hand.size()));
  add_norm_prior(problem, w.hand_pose, s.right_hand.data(), static_cast<int>(s.right_hand.size()));
  add_norm_prior(problem, w.shape, s.beta.data(), static_cast<int>(s.beta.size()));
  add_norm_prior(problem, w.expression, s.expr.data(), static_cast<int>(s.expr.size()));
  if (w.bend > 0.0 && !model.bend_limits.empty()) {
    BendPrior prior{std::sqrt(2.0 * w.bend), {}};
    for (const BendLimit& b : model.bend_limits) {
      require(b.joint >= 1 && b.joint < model.num_body_joints, "bend limit on an invalid joint");
      prior.components.emplace_back(3 * (b.joint - 1) + b.axis, b.sign);
    }
    const int n = static_cast<int>(prior.components.size());
    auto* cost = new ceres::DynamicAutoDiffCostFunction<BendPrior, kStride>(new BendPrior(std::move(prior)));
    cost->AddParameterBlock(static_cast<int>(s.body.size()));
    cost->SetNumResiduals(n);
    problem.AddResidualBlock(cost, nullptr, s.body.data());
  }
}

void add_scan_residual(ceres::Problem& problem, const BodyModel& model, std::unique_ptr<ScanResidual> functor,
                       ScanState& s, double* alpha_logit) {
  if (functor->num_residuals() == 0) return;
  const int n = functor->num_residuals();
  auto* cost = new ceres::DynamicAutoDiffCostFunction<ScanResidual, kStride>(functor.release());
  cost->AddParameterBlock(3);
  cost->AddParameterBlock(3);
  cost->AddParameterBlock(3 * (model.num_body_joints - 1));
  cost->AddParameterBlock(model.hand_latent_dim());
  cost->AddParameterBlock(model.hand_latent_dim());
  cost->AddParameterBlock(model.num_betas());
  cost->AddParameterBlock(model.num_expressions());
  if (alpha_logit) cost->AddParameterBlock(1);
  cost->SetNumResiduals(n);
  problem.AddResidualBlock(cost, nullptr, s.blocks(alpha_logit));
}

std::vector<LandmarkTerm> landmark_terms(const BodyModel& model, const LandmarkSet& views, double weight) {
  std::vector<LandmarkTerm> out;
  if (!(weight > 0.0)) return out;
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (int k = 0; k < model.num_keypoints(); ++k) {
      const double c = views[v].confidence[k];
      if (c > 0.0 && views[v].points.row(k).allFinite()) {
        out.push_back({static_cast<int>(v), k, std::sqrt(2.0 * weight * c)});
      }
    }
  }
  return out;
}

void check_fittable(const BodyModel& model) {
  require(model.num_body_joints >= 2 && model.hand_latent_dim() >= 1 && model.num_betas() >= 1 &&
              model.num_expressions() >= 1,
          "fitting needs nonempty pose, hand, shape and expression spaces");
}

ceres::Solver::Options solver_options(const SolverSettings& s) {
  ceres::Solver::Options o;
  o.minimizer_type = ceres::TRUST_REGION;
  o.trust_region_strategy_type = ceres::LEVENBERG_MARQUARDT;
  o.linear_solver_type = ceres::SPARSE_NORMAL_CHOLESKY;
  o.max_num_iterations = s.max_iterations;
  o.gradient_tolerance = s.gradient_tolerance;
  o.function_tolerance = s.function_tolerance;
  o.parameter_tolerance = s.parameter_tolerance;
  o.initial_trust_region_radius = s.initial_trust_region;
  o.num_threads = 1;
  o.logging_type = ceres::SILENT;
  o.minimizer_progress_to_stdout = false;
  return o;
}

int iteration_count(const ceres::Solver::Summary& s) { return s.num_successful_steps + s.num_unsuccessful_steps; }

double mv_energy(const BodyModel& model, const BodyParams& params, const LandmarkSet& views, const FitConfig& config,
                 int* excluded) {
  const PosedBody posed = forward(model, params);
  return config.init.landmark * landmark_energy(model, posed, views, config.landmark_sigma, excluded) +
         regularizer(model, params, config.init);
}

}  // namespace

InitResult fit_multiview_init(const BodyModel& model, const LabeledScan& scan, const LandmarkSet& landmarks,
                              const FitConfig& config) {
  config.validate();
  scan.validate();
  check_fittable(model);
  if (count_usable_landmarks(model, landmarks) < 6) throw ContractError("fewer than 6 usable landmarks");

  BodyParams start = BodyParams::zeros(model);
  start.identity = scan.identity;
  start.alpha = scan.is_child ? 0.5 : 1.0;
  const Points3d rest = interpolate_template(model, start.alpha);
  const Eigen::Vector3d scan_center =
      0.5 * (scan.mesh.positions.colwise().minCoeff() + scan.mesh.positions.colwise().maxCoeff()).transpose();
  const Eigen::Vector3d rest_center = 0.5 * (rest.colwise().minCoeff() + rest.colwise().maxCoeff()).transpose();
  start.trans = scan_center - rest_center;

  InitResult result;
  result.initial_energy = mv_energy(model, start, landmarks, config, nullptr);

  ScanState state(start);
  double alpha_logit = logit(start.alpha);
  double* alpha_ptr = scan.is_child ? &alpha_logit : nullptr;

  const std::vector<std::vector<int>> stages = {
      {kTrans, kGlobal}, {kTrans, kGlobal, kBody}, {kTrans, kGlobal, kBody, kLeftHand, kRightHand, kBeta, kExpr, kAlpha}};
  ceres::Solver::Options options = solver_options(config.init_solver);
  ceres::Solver::Summary summary;
  std::ostringstream msg;
  for (std::size_t st = 0; st < stages.size(); ++st) {
    const bool warmup = st + 1 < stages.size();
    FitWeights weights = config.init;
    if (warmup) {
      weights.body_pose *= config.warmup_prior_scale;
      weights.hand_pose *= config.warmup_prior_scale;
    }
    ceres::Problem problem;
    add_scan_residual(problem, model,
                      std::make_unique<ScanResidual>(model, scan.is_child, &landmarks,
                                                     landmark_terms(model, landmarks, config.init.landmark),
                                                     config.landmark_sigma, std::vector<SurfaceTarget>{},
                                                     config.surface_sigma),
                      state, alpha_ptr);
    add_priors(problem, model, weights, state);
    const std::vector<double*> all = state.blocks(alpha_ptr);
    for (std::size_t b = 0; b < all.size(); ++b) {
      if (!problem.HasParameterBlock(all[b])) continue;
      if (std::find(stages[st].begin(), stages[st].end(), static_cast<int>(b)) == stages[st].end()) {
        problem.SetParameterBlockConstant(all[b]);
      }
    }
    options.max_num_iterations =
        warmup ? std::min(config.warmup_iterations, config.init_solver.max_iterations) : config.init_solver.max_iterations;
    ceres::Solve(options, &problem, &summary);
    wrap_rotations(state);
    result.iterations += iteration_count(summary);
    msg << "stage " << st + 1 << ": " << summary.message << "; ";
  }

  result.params = state.to_params(scan.identity, scan.is_child ? sigmoid(alpha_logit) : 1.0);
  result.final_energy = mv_energy(model, result.params, landmarks, config, &result.excluded_projections);
  result.converged = summary.termination_type == ceres::CONVERGENCE;
  if (!result.converged) msg << "no convergence within the iteration limit";
  if (result.final_energy > result.initial_energy) {
    result.converged = false;
    msg << "energy did not decrease";
  }
  result.message = msg.str();
  return result;
}

EnergyBreakdown refine_energy(const BodyModel& model, const std::vector<LabeledScan>& scans,
                              const std::vector<LandmarkSet>& landmarks, const std::vector<BodyParams>& params,
                              const FitConfig& config, std::vector<EnergyBreakdown>* per_scan) {
  require(scans.size() == params.size() && scans.size() == landmarks.size(), "scan, landmark and parameter counts differ");
  const FitWeights& w = config.refine;
  EnergyBreakdown total;
  if (per_scan) per_scan->assign(scans.size(), EnergyBreakdown{});
  std::vector<Eigen::VectorXd> betas;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    const PosedBody posed = forward(model, params[i]);
    const SurfaceIndex surface(posed_mesh(model, posed));
    EnergyBreakdown e;
    if (!landmarks[i].empty() && w.landmark > 0.0) {
      e.landmark = w.landmark * landmark_energy(model, posed, landmarks[i], config.landmark_sigma);
    }
    e.skin = w.skin * skin_energy(scans[i], surface, config.surface_sigma);
    e.cloth = w.cloth * cloth_energy(scans[i], surface, config.surface_sigma).total(w.inner);
    e.reg = regularizer(model, params[i], w);
    total.landmark += e.landmark;
    total.skin += e.skin;
    total.cloth += e.cloth;
    total.reg += e.reg;
    if (per_scan) (*per_scan)[i] = e;
    betas.push_back(params[i].beta);
  }
  total.interbeta = w.interbeta * interbeta_energy(betas);
  return total;
}

namespace {

std::vector<SurfaceTarget> surface_targets(const LabeledScan& scan, const SurfaceIndex& surface, const FitWeights& w) {
  std::vector<SurfaceTarget> out;
  const double skin_scale = std::sqrt(2.0 * w.skin);
  for (int i = 0; i < scan.num_points(); ++i) {
    const Eigen::Vector3d q = scan.mesh.positions.row(i).transpose();
    const double ps = w.skin > 0.0 ? scan.p_skin[i] : 0.0;
    const double pc = w.cloth > 0.0 ? scan.p_cloth[i] : 0.0;
    if (!(ps > 0.0) && !(pc > 0.0)) continue;
    const ClosestPoint cp = surface.closest(q);
    const bool inside = surface.side(q, cp) == SurfaceSide::kInside;
    const Eigen::Vector3d dir = cp.distance > 1e-12
                                    ? Eigen::Vector3d((inside ? -1.0 : 1.0) * (q - cp.point) / cp.distance)
                                    : surface.normals().at(cp).normalized();
    if (ps > 0.0) out.push_back({q, cp.triangle, cp.barycentric, dir, skin_scale, 0.0, ps});
    if (pc > 0.0) {
      out.push_back({q, cp.triangle, cp.barycentric, dir, std::sqrt(2.0 * w.cloth), std::sqrt(2.0 * w.cloth * w.inner), pc});
    }
  }
  return out;
}

// Model-to-scan point-to-plane targets for skin regions: each posed model
// vertex against its closest scan point, along the scan pseudo-normal.
std::vector<SurfaceTarget> reverse_targets(const BodyModel& model, const PosedBody& posed, const LabeledScan& scan,
                                           const SurfaceIndex& scan_surface, const std::vector<int>& vertex_face,
                                           const FitWeights& w) {
  std::vector<SurfaceTarget> out;
  if (!(w.skin > 0.0)) return out;
  const double scale = std::sqrt(2.0 * w.skin);
  for (int v = 0; v < model.num_vertices(); ++v) {
    const Eigen::Vector3d x = posed.vertices.row(v).transpose();
    const ClosestPoint cp = scan_surface.closest(x);
    double p = 0.0;
    for (int c = 0; c < 3; ++c) p += cp.barycentric[c] * scan.p_skin[scan.mesh.triangles(cp.triangle, c)];
    if (!(p > 0.0)) continue;
    const int f = vertex_face[static_cast<std::size_t>(v)];
    Eigen::Vector3d bary = Eigen::Vector3d::Zero();
    for (int c = 0; c < 3; ++c) {
      if (model.faces(f, c) == v) bary[c] = 1.0;
    }
    const Eigen::Vector3d n = scan_surface.normals().at(cp).normalized();
    out.push_back({cp.point, f, bary, n, scale, 0.0, p});
  }
  return out;
}

}  // namespace

FitResult fit_refine(const BodyModel& model, const std::vector<LabeledScan>& scans,
                     const std::vector<LandmarkSet>& landmarks, const std::vector<BodyParams>& init,
                     const FitConfig& config) {
  config.validate();
  check_fittable(model);
  require(!scans.empty(), "fit_refine needs at least one scan");
  require(scans.size() == init.size() && scans.size() == landmarks.size(), "scan, landmark and parameter counts differ");
  for (std::size_t i = 0; i < scans.size(); ++i) {
    scans[i].validate();
    init[i].validate(model);
    require(scans[i].identity == scans.front().identity, "scans do not share an identity");
    if (!landmarks[i].empty()) count_usable_landmarks(model, landmarks[i]);
  }
  const FitWeights& w = config.refine;
  const std::string& identity = scans.front().identity;

  std::vector<ScanState> states;
  states.reserve(scans.size());
  double alpha_sum = 0.0;
  int num_child = 0;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    states.emplace_back(init[i]);
    if (scans[i].is_child) {
      alpha_sum += init[i].alpha;
      ++num_child;
    }
  }
  double alpha_logit = logit(num_child > 0 ? alpha_sum / num_child : 1.0);

  auto current_params = [&]() {
    std::vector<BodyParams> out;
    for (std::size_t i = 0; i < scans.size(); ++i) {
      out.push_back(states[i].to_params(identity, scans[i].is_child ? sigmoid(alpha_logit) : 1.0));
    }
    return out;
  };

  const ceres::Solver::Options options = solver_options(config.inner_solver);
  if (config.prealign_iterations > 0) {
    std::vector<int> vertex_face(static_cast<std::size_t>(model.num_vertices()), -1);
    for (Eigen::Index f = 0; f < model.faces.rows(); ++f) {
      for (int c = 0; c < 3; ++c) vertex_face[static_cast<std::size_t>(model.faces(f, c))] = static_cast<int>(f);
    }
    std::vector<std::unique_ptr<SurfaceIndex>> scan_surfaces;
    for (const LabeledScan& scan : scans) scan_surfaces.push_back(std::make_unique<SurfaceIndex>(scan.mesh));
    FitWeights skin_only = w;
    skin_only.cloth = 0.0;
    for (int it = 0; it < config.prealign_iterations; ++it) {
      const std::vector<BodyParams> params = current_params();
      ceres::Problem problem;
      std::vector<std::unique_ptr<SurfaceIndex>> surfaces;
      for (std::size_t i = 0; i < scans.size(); ++i) {
        const PosedBody posed = forward(model, params[i]);
        surfaces.push_back(std::make_unique<SurfaceIndex>(posed_mesh(model, posed)));
        std::vector<SurfaceTarget> targets = surface_targets(scans[i], *surfaces.back(), skin_only);
        std::vector<SurfaceTarget> reverse = reverse_targets(model, posed, scans[i], *scan_surfaces[i], vertex_face, w);
        targets.insert(targets.end(), reverse.begin(), reverse.end());
        add_scan_residual(problem, model,
                          std::make_unique<ScanResidual>(model, scans[i].is_child, &landmarks[i],
                                                         landmark_terms(model, landmarks[i], w.landmark),
                                                         config.landmark_sigma, std::move(targets),
                                                         config.surface_sigma),
                          states[i], scans[i].is_child ? &alpha_logit : nullptr);
        add_priors(problem, model, w, states[i]);
      }
      ceres::Solver::Summary summary;
      ceres::Solve(options, &problem, &summary);
      for (ScanState& st : states) wrap_rotations(st);
    }
  }

  FitResult result;
  std::vector<BodyParams> params = current_params();
  std::vector<EnergyBreakdown> per_scan;
  EnergyBreakdown energy = refine_energy(model, scans, landmarks, params, config, &per_scan);
  result.log.push_back({0, energy, true});
  std::ostringstream msg;

  for (int it = 1; it <= config.outer_iterations; ++it) {
    const std::vector<ScanState> saved = states;
    const double saved_logit = alpha_logit;

    ceres::Problem problem;
    std::vector<std::unique_ptr<SurfaceIndex>> surfaces;
    for (std::size_t i = 0; i < scans.size(); ++i) {
      const PosedBody posed = forward(model, params[i]);
      surfaces.push_back(std::make_unique<SurfaceIndex>(posed_mesh(model, posed)));
      double* alpha_ptr = scans[i].is_child ? &alpha_logit : nullptr;
      add_scan_residual(problem, model,
                        std::make_unique<ScanResidual>(model, scans[i].is_child, &landmarks[i],
                                                       landmark_terms(model, landmarks[i], w.landmark),
                                                       config.landmark_sigma,
                                                       surface_targets(scans[i], *surfaces.back(), w),
                                                       config.surface_sigma),
                        states[i], alpha_ptr);
      add_priors(problem, model, w, states[i]);
    }
    if (w.interbeta > 0.0) {
      const int nbeta = model.num_betas();
      for (std::size_t i = 0; i < scans.size(); ++i) {
        for (std::size_t j = i + 1; j < scans.size(); ++j) {
          auto* cost = new ceres::DynamicAutoDiffCostFunction<InterBeta, kStride>(
              new InterBeta{std::sqrt(2.0 * w.interbeta), nbeta});
          cost->AddParameterBlock(nbeta);
          cost->AddParameterBlock(nbeta);
          cost->SetNumResiduals(nbeta);
          problem.AddResidualBlock(cost, nullptr, states[i].beta.data(), states[j].beta.data());
        }
      }
    }

    ceres::Solver::Summary summary;
    ceres::Solve(options, &problem, &summary);
    const std::vector<ScanState> solved = states;
    const double solved_logit = alpha_logit;

    // Backtrack along the inner step until the true energy does not increase.
    std::vector<BodyParams> candidate;
    std::vector<EnergyBreakdown> candidate_scan;
    EnergyBreakdown next;
    bool found = false;
    double t = 1.0;
    for (int k = 0; k <= config.max_backtracks; ++k, t *= 0.5) {
      for (std::size_t i = 0; i < states.size(); ++i) {
        states[i] = saved[i].lerp(solved[i], t);
        wrap_rotations(states[i]);
      }
      alpha_logit = saved_logit + t * (solved_logit - saved_logit);
      candidate = current_params();
      next = refine_energy(model, scans, landmarks, candidate, config, &candidate_scan);
      if (next.total() <= energy.total()) {
        found = true;
        break;
      }
    }
    if (!found) {
      states = saved;
      alpha_logit = saved_logit;
      result.log.push_back({it, next, false});
      msg << "outer iteration " << it << " found no decrease; ";
      result.converged = true;
      break;
    }
    const double decrease = energy.total() - next.total();
    params = std::move(candidate);
    per_scan = std::move(candidate_scan);
    energy = next;
    result.iterations = it;
    result.log.push_back({it, energy, true});
    if (decrease <= config.outer_tolerance * std::max(energy.total(), std::numeric_limits<double>::min())) {
      result.converged = true;
      break;
    }
  }
  if (!result.converged) msg << "outer iteration limit reached";

  for (std::size_t i = 0; i < scans.size(); ++i) result.scans.push_back({params[i], per_scan[i]});
  result.final_energy = energy.total();
  result.message = msg.str();
  return result;
}

Eigen::VectorXd flatten_params(const BodyParams& params, bool child) {
  const Eigen::Index n = 3 + params.body_pose.size() + params.left_hand.size() + params.right_hand.size() +
                         params.beta.size() + params.expression.size() + (child ? 1 : 0);
  Eigen::VectorXd x(n);
  Eigen::Index at = 0;
  auto put = [&](const Eigen::VectorXd& v) {
    x.segment(at, v.size()) = v;
    at += v.size();
  };
  put(params.trans);
  put(params.body_pose);
  put(params.left_hand);
  put(params.right_hand);
  put(params.beta);
  put(params.expression);
  if (child) x[at] = params.alpha;
  return x;
}

BodyParams unflatten_params(const BodyModel& model, const Eigen::VectorXd& x, bool child, const std::string& identity) {
  BodyParams p = BodyParams::zeros(model);
  require(x.size() == flatten_params(p, child).size(), "flattened parameter size mismatch");
  p.identity = identity;
  Eigen::Index at = 0;
  auto take = [&](auto& v) {
    v = x.segment(at, v.size());
    at += v.size();
  };
  take(p.trans);
  take(p.body_pose);
  take(p.left_hand);
  take(p.right_hand);
  take(p.beta);
  take(p.expression);
  p.alpha = child ? x[at] : 1.0;
  return p;
}

TermGradient refine_term_gradient(const BodyModel& model, const LabeledScan& scan, const LandmarkSet& landmarks,
                                  const BodyParams& params, const FitConfig& config, RefineTerm term) {
  config.validate();
  check_fittable(model);
  scan.validate();
  params.validate(model);
  const bool child = scan.is_child;
  require(!child || (params.alpha > 0.0 && params.alpha < 1.0), "child alpha must lie strictly inside (0, 1)");
  const FitWeights& w = config.refine;

  ScanState state(params);
  double alpha_logit = child ? logit(params.alpha) : 0.0;
  double* alpha_ptr = child ? &alpha_logit : nullptr;
  ceres::Problem problem;
  const PosedBody posed = forward(model, params);
  const SurfaceIndex surface(posed_mesh(model, posed));
  FitWeights surface_w = w;
  surface_w.skin = term == RefineTerm::kSkin ? w.skin : 0.0;
  surface_w.cloth = term == RefineTerm::kCloth ? w.cloth : 0.0;
  switch (term) {
    case RefineTerm::kLandmark:
      add_scan_residual(problem, model,
                        std::make_unique<ScanResidual>(model, child, &landmarks, landmark_terms(model, landmarks, w.landmark),
                                                       config.landmark_sigma, std::vector<SurfaceTarget>{},
                                                       config.surface_sigma),
                        state, alpha_ptr);
      break;
    case RefineTerm::kSkin:
    case RefineTerm::kCloth:
      add_scan_residual(problem, model,
                        std::make_unique<ScanResidual>(model, child, &landmarks, std::vector<LandmarkTerm>{},
                                                       config.landmark_sigma, surface_targets(scan, surface, surface_w),
                                                       config.surface_sigma),
                        state, alpha_ptr);
      break;
    case RefineTerm::kRegularizer:
      add_priors(problem, model, w, state);
      break;
  }

  TermGradient out;
  out.gradient = Eigen::VectorXd::Zero(flatten_params(params, child).size());
  const std::vector<double*> all = state.blocks(alpha_ptr);
  std::vector<double*> present;
  for (double* b : all) {
    if (problem.HasParameterBlock(b)) present.push_back(b);
  }
  if (present.empty()) return out;
  ceres::Problem::EvaluateOptions eval;
  eval.parameter_blocks = present;
  eval.num_threads = 1;
  std::vector<double> grad;
  problem.Evaluate(eval, &out.value, nullptr, &grad, nullptr);

  // Block offsets in the flattened layout; global orientation sits at the
  // head of the body pose.
  const int nb = model.num_body_joints;
  const int nh = model.hand_latent_dim();
  const std::array<Eigen::Index, 8> offset = {0, 3, 6, 3 + 3 * nb, 3 + 3 * nb + nh, 3 + 3 * nb + 2 * nh,
                                              3 + 3 * nb + 2 * nh + model.num_betas(),
                                              3 + 3 * nb + 2 * nh + model.num_betas() + model.num_expressions()};
  std::size_t at = 0;
  for (double* b : present) {
    const std::size_t k = static_cast<std::size_t>(std::find(all.begin(), all.end(), b) - all.begin());
    const int size = problem.ParameterBlockSize(b);
    for (int i = 0; i < size; ++i) out.gradient[offset[k] + i] = grad[at + static_cast<std::size_t>(i)];
    at += static_cast<std::size_t>(size);
  }
  if (child) {
    // d/dalpha from d/dlogit.
    const Eigen::Index a = out.gradient.size() - 1;
    out.gradient[a] /= params.alpha * (1.0 - params.alpha);
  }
  return out;
}

TermGradient interbeta_gradient(const std::vector<Eigen::VectorXd>& betas, double weight) {
  require(weight >= 0.0, "interbeta weight must be nonnegative");
  TermGradient out;
  if (betas.empty()) return out;
  const int nbeta = static_cast<int>(betas.front().size());
  for (const Eigen::VectorXd& b : betas) require(b.size() == nbeta, "shape vectors differ in size");
  out.gradient = Eigen::VectorXd::Zero(nbeta * static_cast<Eigen::Index>(betas.size()));
  if (betas.size() < 2 || !(weight > 0.0) || nbeta == 0) return out;
  std::vector<Eigen::VectorXd> copy = betas;
  ceres::Problem problem;
  for (std::size_t i = 0; i < copy.size(); ++i) {
    for (std::size_t j = i + 1; j < copy.size(); ++j) {
      auto* cost = new ceres::DynamicAutoDiffCostFunction<InterBeta, kStride>(new InterBeta{std::sqrt(2.0 * weight), nbeta});
      cost->AddParameterBlock(nbeta);
      cost->AddParameterBlock(nbeta);
      cost->SetNumResiduals(nbeta);
      problem.AddResidualBlock(cost, nullptr, copy[i].data(), copy[j].data());
    }
  }
  ceres::Problem::EvaluateOptions eval;
  for (Eigen::VectorXd& b : copy) eval.parameter_blocks.push_back(b.data());
  eval.num_threads = 1;
  std::vector<double> grad;
  problem.Evaluate(eval, &out.value, nullptr, &grad, nullptr);
  out.gradient = Eigen::Map<const Eigen::VectorXd>(grad.data(), static_cast<Eigen::Index>(grad.size()));
  return out;
}

std::optional<double> skin_error(const LabeledScan& scan, const SurfaceIndex& fitted) {
  double wsum = 0.0;
  double dsum = 0.0;
  for (int i = 0; i < scan.num_points(); ++i) {
    const double p = scan.p_skin[i];
    if (!(p > 0.0)) continue;
    wsum += p;
    dsum += p * fitted.closest(scan.mesh.positions.row(i).transpose()).distance;
  }
  if (!(wsum > 0.0)) return std::nullopt;
  return 1000.0 * dsum / wsum;
}

PenetrationError cloth_penetration_error(const LabeledScan& scan, const SurfaceIndex& fitted) {
  double wsum = 0.0;
  double inside_w = 0.0;
  double inside_d = 0.0;
  for (int i = 0; i < scan.num_points(); ++i) {
    const double p = scan.p_cloth[i];
    if (!(p > 0.0)) continue;
    wsum += p;
    const Eigen::Vector3d q = scan.mesh.positions.row(i).transpose();
    const ClosestPoint cp = fitted.closest(q);
    if (fitted.side(q, cp) == SurfaceSide::kInside) {
      inside_w += p;
      inside_d += p * cp.distance;
    }
  }
  PenetrationError out;
  if (!(wsum > 0.0)) return out;
  out.percent = 100.0 * inside_w / wsum;
  if (inside_w > 0.0) out.mean_mm = 1000.0 * inside_d / inside_w;
  return out;
}

}  // namespace bodybench
