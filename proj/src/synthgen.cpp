#include "bodybench/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace bodybench {

void GenSpec::validate() const {
  require(num_scenes >= 0, "scene count must be nonnegative");
  require(min_persons >= 1 && max_persons >= min_persons, "invalid person count range");
  require(pose_sd >= 0.0 && hand_sd >= 0.0 && beta_sd >= 0.0 && expr_sd >= 0.0 && scan_max_yaw >= 0.0,
          "sampling spreads must be nonnegative");
  require(child_probability >= 0.0 && child_probability <= 1.0, "child probability outside [0, 1]");
  require(0.0 <= child_alpha_min && child_alpha_min <= child_alpha_max && child_alpha_max <= 1.0,
          "invalid child alpha range");
  require(cloth_offset_min >= 0.0 && cloth_offset_max >= cloth_offset_min, "clothing offsets must be nonnegative");
  require(label_noise >= 0.0 && label_noise < 0.5, "label noise outside [0, 0.5)");
  require(!focal_mm.empty(), "focal set is empty");
  for (double f : focal_mm) require(f > 0.0, "focal lengths must be positive");
  require(image_width >= 1 && image_height >= 1, "invalid image size");
  require(0.0 < min_depth && min_depth <= max_depth, "invalid depth range");
  require(max_overlap >= 0.0 && max_overlap <= 1.0, "overlap threshold outside [0, 1]");
  require(occluder_probability >= 0.0 && occluder_probability <= 1.0, "occluder probability outside [0, 1]");
  require(bfh_probability >= 0.0 && bfh_probability <= 1.0, "BFH probability outside [0, 1]");
  require(placement_retries >= 1, "placement retries must be positive");
}

void sample_pose(const BodyModel& model, const GenSpec& spec, CounterRng& rng, BodyParams& params) {
  for (Eigen::Index i = 3; i < params.body_pose.size(); ++i) params.body_pose[i] = rng.normal(0.0, spec.pose_sd);
  for (const BendLimit& b : model.bend_limits) {
    double& x = params.body_pose[3 * b.joint + b.axis];
    x = -b.sign * std::abs(x);
  }
  for (Eigen::Index i = 0; i < params.left_hand.size(); ++i) params.left_hand[i] = rng.normal(0.0, spec.hand_sd);
  for (Eigen::Index i = 0; i < params.right_hand.size(); ++i) params.right_hand[i] = rng.normal(0.0, spec.hand_sd);
  for (Eigen::Index i = 0; i < params.expression.size(); ++i) params.expression[i] = rng.normal(0.0, spec.expr_sd);
}

BodyParams sample_params(const BodyModel& model, const GenSpec& spec, CounterRng& rng, bool child) {
  BodyParams p = BodyParams::zeros(model);
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) p.beta[i] = rng.normal(0.0, spec.beta_sd);
  p.alpha = child ? rng.uniform(spec.child_alpha_min, spec.child_alpha_max) : 1.0;
  sample_pose(model, spec, rng, p);
  return p;
}

std::vector<int> clothing_region(const BodyModel& model) {
  // Pelvis, hips, knees, spine, collars, shoulders.
  static constexpr int kJoints[] = {0, 1, 2, 3, 4, 5, 6, 9, 13, 14, 16, 17};
  std::vector<int> out;
  for (int v = 0; v < model.num_vertices(); ++v) {
    int best = -1;
    double best_w = -1.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.skin_weights, v); it; ++it) {
      if (it.value() > best_w) {
        best_w = it.value();
        best = static_cast<int>(it.col());
      }
    }
    if (std::find(std::begin(kJoints), std::end(kJoints), best) != std::end(kJoints)) out.push_back(v);
  }
  return out;
}

LabeledScan make_scan(const BodyModel& model, const BodyParams& truth, const GenSpec& spec, CounterRng& rng,
                      const std::string& identity, bool is_child) {
  const PosedBody posed = forward(model, truth);
  const SurfaceIndex surface(posed_mesh(model, posed));
  const int n = model.num_vertices();

  LabeledScan scan;
  scan.mesh = posed_mesh(model, posed);
  scan.identity = identity;
  scan.is_child = is_child;
  scan.p_skin = Eigen::VectorXd::Ones(n);
  scan.p_cloth = Eigen::VectorXd::Zero(n);
  scan.p_other = Eigen::VectorXd::Zero(n);

  if (spec.clothed) {
    const Points3d& normals = surface.normals().vertex_normals();
    for (int v : clothing_region(model)) {
      const double offset = rng.uniform(spec.cloth_offset_min, spec.cloth_offset_max);
      const Eigen::Vector3d base = posed.vertices.row(v).transpose();
      const Eigen::Vector3d q = base + offset * normals.row(v).transpose().normalized();
      if (offset > 0.0) {
        const ClosestPoint cp = surface.closest(q);
        if (surface.side(q, cp) != SurfaceSide::kOutside || std::abs(cp.distance - offset) > 0.25 * offset) continue;
      }
      scan.mesh.positions.row(v) = q.transpose();
      scan.p_skin[v] = 0.0;
      scan.p_cloth[v] = 1.0;
    }
  }

  if (spec.label_noise > 0.0) {
    for (int v = 0; v < n; ++v) {
      const double e = rng.uniform(0.0, spec.label_noise);
      if (scan.p_cloth[v] > 0.5) {
        scan.p_cloth[v] = 1.0 - e;
        scan.p_skin[v] = e;
      } else {
        scan.p_skin[v] = 1.0 - e;
        scan.p_cloth[v] = e;
      }
    }
  }
  return scan;
}

namespace {

void sample_scan_orientation(const GenSpec& spec, CounterRng& rng, BodyParams& p) {
  p.body_pose.head<3>() = Eigen::Vector3d(0.0, rng.uniform(-spec.scan_max_yaw, spec.scan_max_yaw), 0.0);
  p.trans = Eigen::Vector3d(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
}

}  // namespace

GenScan gen_scan(const BodyModel& model, const GenSpec& spec, CounterRng& rng, const std::string& identity) {
  spec.validate();
  const bool child = rng.bernoulli(spec.child_probability);
  GenScan out;
  out.truth = sample_params(model, spec, rng, child);
  out.truth.identity = identity;
  sample_scan_orientation(spec, rng, out.truth);
  out.scan = make_scan(model, out.truth, spec, rng, identity, child);
  return out;
}

std::vector<GenScan> gen_identity_scans(const BodyModel& model, const GenSpec& spec, CounterRng& rng,
                                        const std::string& identity, int count) {
  spec.validate();
  const bool child = rng.bernoulli(spec.child_probability);
  const BodyParams base = sample_params(model, spec, rng, child);
  std::vector<GenScan> out;
  for (int i = 0; i < count; ++i) {
    GenScan g;
    g.truth = base;
    g.truth.identity = identity;
    sample_pose(model, spec, rng, g.truth);
    sample_scan_orientation(spec, rng, g.truth);
    g.scan = make_scan(model, g.truth, spec, rng, identity, child);
    out.push_back(std::move(g));
  }
  return out;
}

LandmarkSet synthesize_landmarks(const BodyModel& model, const BodyParams& truth, const std::vector<Camera>& cameras,
                                 double noise_px, CounterRng& rng) {
  const Points3d kp = keypoints(model, forward(model, truth));
  LandmarkSet out;
  for (const Camera& cam : cameras) {
    LandmarkView view;
    view.camera = cam;
    const Projection proj = project(cam, kp);
    view.points = proj.pixels;
    view.confidence = Eigen::VectorXd::Ones(kp.rows());
    for (Eigen::Index k = 0; k < kp.rows(); ++k) {
      if (!proj.valid[static_cast<std::size_t>(k)]) {
        view.confidence[k] = 0.0;
        continue;
      }
      if (noise_px > 0.0) {
        view.points(k, 0) += rng.normal(0.0, noise_px);
        view.points(k, 1) += rng.normal(0.0, noise_px);
      }
    }
    out.push_back(std::move(view));
  }
  return out;
}

std::vector<Camera> scan_cameras(const LabeledScan& scan, int count) {
  const Eigen::Vector3d center =
      0.5 * (scan.mesh.positions.colwise().minCoeff() + scan.mesh.positions.colwise().maxCoeff()).transpose();
  return make_camera_rig(center, count);
}

double focal_pixels(double focal_mm, int image_width) { return focal_mm / 36.0 * image_width; }

Camera scene_camera(double focal_px, int width, int height) {
  return Camera::look_at({0.0, 1.5, 0.0}, {0.0, 1.5, 1.0}, focal_px, width, height);
}

MaskImage render_masks(const SceneTruth& scene, const BodyModel& model) {
  std::vector<TriMesh> meshes;
  meshes.reserve(scene.persons.size() + scene.occluders.size());
  std::vector<RasterItem> items;
  for (const auto& p : scene.persons) meshes.push_back(TriMesh{p.vertices, model.faces});
  for (const auto& box : scene.occluders) meshes.push_back(box_mesh(box));
  for (std::size_t i = 0; i < meshes.size(); ++i)
    items.push_back({&meshes[i], i < scene.persons.size() ? scene.persons[i].id : 0});
  return rasterize(items, scene.camera);
}

namespace {

struct Footprint {
  double x0, x1, z0, z1;
};

double footprint_iou(const Footprint& a, const Footprint& b) {
  const double w = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double d = std::max(0.0, std::min(a.z1, b.z1) - std::max(a.z0, b.z0));
  const double inter = w * d;
  const double uni = (a.x1 - a.x0) * (a.z1 - a.z0) + (b.x1 - b.x0) * (b.z1 - b.z0) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// One placement attempt of n persons; false when some person found no spot.
bool place_persons(const BodyModel& model, const GenSpec& spec, const Camera& cam, int n, CounterRng& rng,
                   SceneTruth& scene) {
  std::vector<Footprint> placed;
  for (int i = 0; i < n; ++i) {
    TruthPerson person;
    person.id = i + 1;
    person.is_child = rng.bernoulli(spec.child_probability);
    person.bfh = rng.bernoulli(spec.bfh_probability);
    person.params = sample_params(model, spec, rng, person.is_child);
    person.params.identity = "person_" + std::to_string(person.id);
    person.params.body_pose.head<3>() = Eigen::Vector3d(0.0, rng.uniform(-std::numbers::pi, std::numbers::pi), 0.0);
    const PosedBody rest = forward(model, person.params);
    const Eigen::RowVector3d lo = rest.vertices.colwise().minCoeff();
    const Eigen::RowVector3d hi = rest.vertices.colwise().maxCoeff();

    bool ok = false;
    for (int attempt = 0; attempt < spec.placement_retries && !ok; ++attempt) {
      const double depth = rng.uniform(spec.min_depth, spec.max_depth);
      const double u = rng.uniform(0.1 * cam.width, 0.9 * cam.width);
      const Eigen::Vector3d at = unproject(cam, {u, cam.principal.y()}, depth);
      const Footprint f{lo.x() + at.x(), hi.x() + at.x(), lo.z() + at.z(), hi.z() + at.z()};
      ok = std::all_of(placed.begin(), placed.end(),
                       [&](const Footprint& g) { return footprint_iou(f, g) <= spec.max_overlap; });
      if (ok) {
        placed.push_back(f);
        person.params.trans = Eigen::Vector3d(at.x(), -lo.y(), at.z());
      }
    }
    if (!ok) return false;
    const PosedBody posed = forward(model, person.params);
    person.keypoints = keypoints(model, posed);
    person.vertices = posed.vertices;
    scene.persons.push_back(std::move(person));
  }
  return true;
}

}  // namespace

SceneTruth gen_scene(const BodyModel& model, const GenSpec& spec, CounterRng& rng, const std::string& name,
                     SceneLog* log) {
  spec.validate();
  SceneTruth scene;
  scene.name = name;
  const double f_mm = spec.focal_mm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(spec.focal_mm.size()) - 1))];
  scene.camera = scene_camera(focal_pixels(f_mm, spec.image_width), spec.image_width, spec.image_height);
  scene.width = spec.image_width;
  scene.height = spec.image_height;

  int n = rng.uniform_int(spec.min_persons, spec.max_persons);
  SceneLog local;
  local.requested = n;
  for (;;) {
    CounterRng attempt = rng.substream(static_cast<std::uint64_t>(local.restarts));
    scene.persons.clear();
    if (place_persons(model, spec, scene.camera, n, attempt, scene) || n == 1) break;
    ++local.restarts;
    --n;
  }

  if (!scene.persons.empty() && rng.bernoulli(spec.occluder_probability)) {
    const auto& target = scene.persons[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(scene.persons.size()) - 1))];
    const double x = target.params.trans.x() + rng.uniform(-0.3, 0.3);
    const double z = std::max(1.0, target.params.trans.z() - rng.uniform(0.8, 2.0));
    const double w = rng.uniform(0.4, 1.0);
    const double h = rng.uniform(0.5, 1.3);
    scene.occluders.emplace_back(Eigen::Vector3d(x - 0.5 * w, 0.0, z - 0.15), Eigen::Vector3d(x + 0.5 * w, h, z + 0.15));
  }
  scene.masks = render_masks(scene, model);
  if (log) *log = local;
  return scene;
}

void DegradeSpec::validate() const {
  require(noise_mm >= 0.0 && std::isfinite(noise_mm), "noise must be nonnegative");
  require(miss_rate >= 0.0 && miss_rate <= 1.0, "miss rate outside [0, 1]");
  require(fp_rate >= 0.0 && fp_rate <= 1.0, "false positive rate outside [0, 1]");
  require(tau > 0.0 && tau < 1.0, "tau must lie in (0, 1)");
}

namespace {

Points3d camera_points(const Camera& cam, const Points3d& world) {
  Points3d out = (world * cam.rotation.transpose()).rowwise() + cam.translation.transpose();
  return out;
}

Points2d body_pixels(const BodyModel& model, const Camera& cam, const Points3d& cam_keypoints) {
  const auto& body = model.parts.body_joints;
  Points3d pts(static_cast<Eigen::Index>(body.size()), 3);
  for (std::size_t i = 0; i < body.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = cam_keypoints.row(body[i]);
  const Projection pr = project_camera_frame(cam, pts);
  Points2d out(pr.pixels.rows(), 2);
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < pr.pixels.rows(); ++i)
    if (pr.valid[static_cast<std::size_t>(i)]) out.row(n++) = pr.pixels.row(i);
  out.conservativeResize(n, 2);
  return out;
}

void add_noise(Points3d& pts, double sd, CounterRng& rng) {
  if (sd <= 0.0) return;
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    for (int c = 0; c < 3; ++c) pts(i, c) += rng.normal(0.0, sd);
}

}  // namespace

ScenePrediction degrade_predictions(const BodyModel& model, const SceneTruth& scene, const DegradeSpec& spec,
                                    CounterRng& rng, DegradeStats* stats) {
  spec.validate();
  const Camera& cam = scene.camera;
  const double sd = spec.noise_mm / 1000.0;
  ScenePrediction out;
  out.scene = scene.name;
  DegradeStats st;

  std::vector<Points3d> truth_cam;
  std::vector<Points2d> truth_boxes;
  for (const auto& p : scene.persons) {
    truth_cam.push_back(camera_points(cam, p.keypoints));
    truth_boxes.push_back(body_pixels(model, cam, truth_cam.back()));
  }

  for (std::size_t i = 0; i < scene.persons.size(); ++i) {
    if (rng.bernoulli(spec.miss_rate)) {
      ++st.dropped;
      continue;
    }
    PredictedPerson q;
    q.id = scene.persons[i].id;
    q.camera = cam;
    q.keypoints = truth_cam[i];
    add_noise(q.keypoints, sd, rng);
    if (spec.vertices) {
      Points3d v = camera_points(cam, scene.persons[i].vertices);
      add_noise(v, sd, rng);
      q.vertices = std::move(v);
    }
    out.persons.push_back(std::move(q));
    ++st.kept;
  }

  int next_id = 1001;
  for (std::size_t i = 0; i < scene.persons.size(); ++i) {
    if (!rng.bernoulli(spec.fp_rate)) continue;
    const auto src = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(scene.persons.size()) - 1));
    const Eigen::RowVector3d pelvis = truth_cam[src].row(model.parts.pelvis);
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      const double depth = rng.uniform(4.0, 14.0);
      const double u = rng.uniform(0.0, cam.width);
      const double v = rng.uniform(0.0, cam.height);
      const Eigen::RowVector3d at((u - cam.principal.x()) * depth / cam.focal,
                                  (v - cam.principal.y()) * depth / cam.focal, depth);
      const Eigen::RowVector3d shift = at - pelvis;
      const Points3d kp = truth_cam[src].rowwise() + shift;
      const Points2d px = body_pixels(model, cam, kp);
      if (px.rows() == 0) continue;
      ok = std::all_of(truth_boxes.begin(), truth_boxes.end(), [&](const Points2d& b) {
        return b.rows() == 0 || aabb_iou(px, b).iou < spec.tau;
      });
      if (!ok) continue;
      PredictedPerson q;
      q.id = next_id++;
      q.camera = cam;
      q.keypoints = kp;
      add_noise(q.keypoints, sd, rng);
      if (spec.vertices) {
        Points3d verts = camera_points(cam, scene.persons[src].vertices).rowwise() + shift;
        add_noise(verts, sd, rng);
        q.vertices = std::move(verts);
      }
      out.persons.push_back(std::move(q));
      ++st.injected;
    }
    if (!ok) ++st.fp_placement_failures;
  }
  if (stats) *stats = st;
  return out;
}

}  // namespace bodybench
