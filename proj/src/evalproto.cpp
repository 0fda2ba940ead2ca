#include "bodybench/evalproto.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>

namespace bodybench {

const char* part_name(Part part) {
  switch (part) {
    case Part::kBody: return "B";
    case Part::kLeftHand: return "LH";
    case Part::kRightHand: return "RH";
    case Part::kFace: return "F";
  }
  return "?";
}

const char* bin_kind_name(BinKind kind) {
  switch (kind) {
    case BinKind::kOcclusion: return "occlusion";
    case BinKind::kCenter: return "center";
    case BinKind::kYaw: return "yaw";
  }
  return "?";
}

void SceneTruth::validate(const BodyModel& model, double tolerance) const {
  camera.validate();
  require(width == camera.width && height == camera.height, "scene image size differs from its camera");
  if (!masks.labels.empty())
    require(masks.width == width && masks.height == height, "scene masks differ in size from the image");
  std::set<int> ids;
  for (const auto& p : persons) {
    require(p.id > 0, "person ids must be positive");
    require(ids.insert(p.id).second, "person ids must be unique");
    p.params.validate(model);
    const PosedBody posed = forward(model, p.params);
    const Points3d kp = keypoints(model, posed);
    require(p.keypoints.rows() == kp.rows() && p.vertices.rows() == posed.vertices.rows(),
            "person geometry has the wrong shape");
    require((p.keypoints - kp).cwiseAbs().maxCoeff() <= tolerance, "person keypoints differ from forward(params)");
    require((p.vertices - posed.vertices).cwiseAbs().maxCoeff() <= tolerance,
            "person vertices differ from forward(params)");
  }
}

void SceneTruth::regenerate(const BodyModel& model) {
  for (auto& p : persons) {
    const PosedBody posed = forward(model, p.params);
    p.keypoints = keypoints(model, posed);
    p.vertices = posed.vertices;
  }
}

namespace {

Points3d rows_of(const Points3d& pts, const std::vector<int>& idx) {
  Points3d out(static_cast<Eigen::Index>(idx.size()), 3);
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts.row(idx[i]);
  return out;
}

Points3d to_camera_frame(const Camera& cam, const Points3d& world) {
  Points3d out = (world * cam.rotation.transpose()).rowwise() + cam.translation.transpose();
  return out;
}

// Valid rows of a projection.
Points2d valid_pixels(const Projection& proj) {
  Points2d out(proj.pixels.rows(), 2);
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < proj.pixels.rows(); ++i)
    if (proj.valid[static_cast<std::size_t>(i)]) out.row(n++) = proj.pixels.row(i);
  out.conservativeResize(n, 2);
  return out;
}

// Largest cardinality, then least cost, over the allowed rows and columns.
struct Optimum {
  int pairs = 0;
  double cost = 0.0;
  std::vector<int> col_of_row;  // indexed like the full matrix
};

// Square-or-wide Hungarian (rows <= cols), potentials form. Returns the
// column of each row.
std::vector<int> hungarian(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) col[p[j] - 1] = j - 1;
  return col;
}

Optimum solve(const Eigen::MatrixXd& cost, const std::vector<int>& rows, const std::vector<int>& cols) {
  Optimum out;
  out.col_of_row.assign(static_cast<std::size_t>(cost.rows()), -1);
  if (rows.empty() || cols.empty()) return out;
  double max_cost = 0.0;
  for (int r : rows)
    for (int c : cols)
      if (!std::isnan(cost(r, c))) max_cost = std::max(max_cost, cost(r, c));
  const auto k = static_cast<double>(std::min(rows.size(), cols.size()));
  const double big = (k + 1.0) * (max_cost + 1.0);
  const bool flip = rows.size() > cols.size();
  const auto nr = static_cast<Eigen::Index>(flip ? cols.size() : rows.size());
  const auto nc = static_cast<Eigen::Index>(flip ? rows.size() : cols.size());
  Eigen::MatrixXd a(nr, nc);
  for (Eigen::Index i = 0; i < nr; ++i)
    for (Eigen::Index j = 0; j < nc; ++j) {
      const int r = flip ? rows[static_cast<std::size_t>(j)] : rows[static_cast<std::size_t>(i)];
      const int c = flip ? cols[static_cast<std::size_t>(i)] : cols[static_cast<std::size_t>(j)];
      a(i, j) = std::isnan(cost(r, c)) ? big : cost(r, c);
    }
  const std::vector<int> sol = hungarian(a);
  for (Eigen::Index i = 0; i < nr; ++i) {
    const int j = sol[static_cast<std::size_t>(i)];
    if (j < 0) continue;
    const int r = flip ? rows[static_cast<std::size_t>(j)] : rows[static_cast<std::size_t>(i)];
    const int c = flip ? cols[static_cast<std::size_t>(i)] : cols[static_cast<std::size_t>(j)];
    if (std::isnan(cost(r, c))) continue;
    out.col_of_row[static_cast<std::size_t>(r)] = c;
    ++out.pairs;
    out.cost += cost(r, c);
  }
  return out;
}

bool same_optimum(const Optimum& a, int pairs, double cost, double scale) {
  return a.pairs == pairs && std::abs(a.cost - cost) <= 1e-9 * scale;
}

}  // namespace

std::vector<int> assign_min_cost(const Eigen::MatrixXd& cost) {
  for (Eigen::Index i = 0; i < cost.size(); ++i)
    require(std::isnan(cost.data()[i]) || (std::isfinite(cost.data()[i]) && cost.data()[i] >= 0.0),
            "assignment costs must be finite and non-negative, or NaN for forbidden");
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  std::vector<int> rows(static_cast<std::size_t>(n)), cols(static_cast<std::size_t>(m));
  for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
  for (int j = 0; j < m; ++j) cols[static_cast<std::size_t>(j)] = j;
  const Optimum best = solve(cost, rows, cols);
  double scale = 1.0;
  for (Eigen::Index i = 0; i < cost.size(); ++i)
    if (!std::isnan(cost.data()[i])) scale += cost.data()[i];

  // Canonical optimum: fix rows in order, each to the earliest column (then
  // to nothing) that still admits an optimal completion.
  std::vector<int> result(static_cast<std::size_t>(n), -1);
  int fixed_pairs = 0;
  double fixed_cost = 0.0;
  std::vector<int> free_cols = cols;
  for (int r = 0; r < n; ++r) {
    std::vector<int> rest_rows(rows.begin() + r + 1, rows.end());
    bool placed = false;
    for (int c : free_cols) {
      if (std::isnan(cost(r, c))) continue;
      std::vector<int> rest_cols;
      for (int c2 : free_cols)
        if (c2 != c) rest_cols.push_back(c2);
      const Optimum rest = solve(cost, rest_rows, rest_cols);
      if (same_optimum(best, fixed_pairs + 1 + rest.pairs, fixed_cost + cost(r, c) + rest.cost, scale)) {
        result[static_cast<std::size_t>(r)] = c;
        ++fixed_pairs;
        fixed_cost += cost(r, c);
        free_cols = rest_cols;
        placed = true;
        break;
      }
    }
    if (!placed) result[static_cast<std::size_t>(r)] = -1;
  }
  return result;
}

ProjectedScene project_scene(const BodyModel& model, const SceneTruth& scene, const ScenePrediction& preds) {
  const auto& body = model.parts.body_joints;
  ProjectedScene out;
  for (const auto& p : scene.persons) {
    require(p.keypoints.rows() == model.num_keypoints(), "truth keypoints have the wrong number of rows");
    out.truth.push_back(valid_pixels(project(scene.camera, rows_of(p.keypoints, body))));
  }
  for (const auto& p : preds.persons) {
    require(p.keypoints.rows() == model.num_keypoints(), "predicted keypoints have the wrong number of rows");
    out.pred.push_back(valid_pixels(project_camera_frame(p.camera, rows_of(p.keypoints, body))));
  }
  return out;
}

MatchOutcome match(const BodyModel& model, const SceneTruth& scene, const ScenePrediction& preds, double tau) {
  require(tau > 0.0 && tau < 1.0, "tau must lie in (0, 1)");
  const auto& body = model.parts.body_joints;

  std::vector<int> gt_order(scene.persons.size()), pred_order(preds.persons.size());
  for (std::size_t i = 0; i < gt_order.size(); ++i) gt_order[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < pred_order.size(); ++i) pred_order[i] = static_cast<int>(i);
  std::sort(gt_order.begin(), gt_order.end(),
            [&](int a, int b) { return scene.persons[static_cast<std::size_t>(a)].id < scene.persons[static_cast<std::size_t>(b)].id; });
  std::sort(pred_order.begin(), pred_order.end(),
            [&](int a, int b) { return preds.persons[static_cast<std::size_t>(a)].id < preds.persons[static_cast<std::size_t>(b)].id; });
  std::set<int> pred_ids;
  for (const auto& p : preds.persons) require(pred_ids.insert(p.id).second, "prediction ids must be unique");

  std::vector<Projection> gt_proj, pred_proj;
  for (int g : gt_order) {
    const auto& p = scene.persons[static_cast<std::size_t>(g)];
    require(p.keypoints.rows() == model.num_keypoints(), "truth keypoints have the wrong number of rows");
    gt_proj.push_back(project(scene.camera, rows_of(p.keypoints, body)));
  }
  for (int q : pred_order) {
    const auto& p = preds.persons[static_cast<std::size_t>(q)];
    require(p.keypoints.rows() == model.num_keypoints(), "predicted keypoints have the wrong number of rows");
    pred_proj.push_back(project_camera_frame(p.camera, rows_of(p.keypoints, body)));
  }

  const auto ng = static_cast<Eigen::Index>(gt_order.size());
  const auto np = static_cast<Eigen::Index>(pred_order.size());
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(ng, np, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index g = 0; g < ng; ++g) {
    const Projection& a = gt_proj[static_cast<std::size_t>(g)];
    const Points2d av = valid_pixels(a);
    if (av.rows() == 0) continue;
    for (Eigen::Index q = 0; q < np; ++q) {
      const Projection& b = pred_proj[static_cast<std::size_t>(q)];
      const Points2d bv = valid_pixels(b);
      if (bv.rows() == 0) continue;
      const IouResult iou = aabb_iou(av, bv);
      if (iou.degenerate || iou.iou < tau) continue;
      double sum = 0.0;
      int n = 0;
      for (Eigen::Index j = 0; j < a.pixels.rows(); ++j) {
        if (!a.valid[static_cast<std::size_t>(j)] || !b.valid[static_cast<std::size_t>(j)]) continue;
        sum += (a.pixels.row(j) - b.pixels.row(j)).norm();
        ++n;
      }
      if (n > 0) cost(g, q) = sum / n;
    }
  }

  const std::vector<int> assigned = assign_min_cost(cost);
  MatchOutcome out;
  std::vector<char> pred_used(static_cast<std::size_t>(np), 0);
  for (Eigen::Index g = 0; g < ng; ++g) {
    const int gt_id = scene.persons[static_cast<std::size_t>(gt_order[static_cast<std::size_t>(g)])].id;
    const int q = assigned[static_cast<std::size_t>(g)];
    if (q < 0) {
      out.false_negatives.push_back(gt_id);
      continue;
    }
    pred_used[static_cast<std::size_t>(q)] = 1;
    out.pairs.push_back({preds.persons[static_cast<std::size_t>(pred_order[static_cast<std::size_t>(q)])].id, gt_id, cost(g, q)});
  }
  for (Eigen::Index q = 0; q < np; ++q)
    if (!pred_used[static_cast<std::size_t>(q)])
      out.false_positives.push_back(preds.persons[static_cast<std::size_t>(pred_order[static_cast<std::size_t>(q)])].id);
  return out;
}

std::vector<int> part_keypoints(const BodyModel& model, Part part) {
  switch (part) {
    case Part::kBody: return model.parts.body_joints;
    case Part::kLeftHand: return model.parts.left_hand_joints;
    case Part::kRightHand: return model.parts.right_hand_joints;
    case Part::kFace: {
      std::vector<int> rows;
      for (std::size_t i = 0; i < model.parts.face_landmarks.size(); ++i)
        rows.push_back(model.num_joints() + static_cast<int>(i));
      return rows;
    }
  }
  return {};
}

const std::vector<int>& part_vertices(const BodyModel& model, Part part) {
  switch (part) {
    case Part::kBody: return model.parts.body_vertices;
    case Part::kLeftHand: return model.parts.left_hand_vertices;
    case Part::kRightHand: return model.parts.right_hand_vertices;
    case Part::kFace: return model.parts.face_vertices;
  }
  return model.parts.body_vertices;
}

int part_anchor(const BodyModel& model, Part part) {
  switch (part) {
    case Part::kBody: return model.parts.pelvis;
    case Part::kLeftHand: return model.parts.left_wrist;
    case Part::kRightHand: return model.parts.right_wrist;
    case Part::kFace: return model.parts.neck;
  }
  return model.parts.pelvis;
}

namespace {

double aligned_mean_mm(const Points3d& pred, const Points3d& gt, const std::vector<int>& idx,
                       const Eigen::RowVector3d& pred_anchor, const Eigen::RowVector3d& gt_anchor) {
  require(!idx.empty(), "part has no points");
  double sum = 0.0;
  for (int i : idx) sum += ((pred.row(i) - pred_anchor) - (gt.row(i) - gt_anchor)).norm();
  return 1000.0 * sum / static_cast<double>(idx.size());
}

}  // namespace

double part_mpjpe(const BodyModel& model, const Points3d& pred, const Points3d& gt, Part part) {
  require(pred.rows() == model.num_keypoints() && gt.rows() == model.num_keypoints(),
          "keypoint arrays must have one row per model keypoint");
  const int a = part_anchor(model, part);
  return aligned_mean_mm(pred, gt, part_keypoints(model, part), pred.row(a), gt.row(a));
}

double part_mve(const BodyModel& model, const Points3d& pred_vertices, const Points3d& pred_keypoints,
                const Points3d& gt_vertices, const Points3d& gt_keypoints, Part part) {
  require(pred_vertices.rows() == model.num_vertices() && gt_vertices.rows() == model.num_vertices(),
          "vertex arrays must have one row per model vertex");
  require(pred_keypoints.rows() == model.num_keypoints() && gt_keypoints.rows() == model.num_keypoints(),
          "keypoint arrays must have one row per model keypoint");
  const int a = part_anchor(model, part);
  return aligned_mean_mm(pred_vertices, gt_vertices, part_vertices(model, part), pred_keypoints.row(a),
                         gt_keypoints.row(a));
}

double fb_error(double b, double lh, double rh, double f) {
  require(std::isfinite(b) && std::isfinite(lh) && std::isfinite(rh) && std::isfinite(f), "FB inputs must be finite");
  return b + (lh + rh + f) / 3.0;
}

DetectionScores detection_scores(const std::vector<MatchOutcome>& outcomes) {
  DetectionScores s;
  for (const auto& o : outcomes) {
    s.tp += static_cast<int>(o.pairs.size());
    s.fp += static_cast<int>(o.false_positives.size());
    s.fn += static_cast<int>(o.false_negatives.size());
  }
  require(s.tp + s.fn > 0, "detection scores need at least one ground-truth person");
  s.precision = s.tp + s.fp > 0 ? static_cast<double>(s.tp) / (s.tp + s.fp) : 0.0;
  s.recall = static_cast<double>(s.tp) / (s.tp + s.fn);
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

NormalizedErrors normalized_errors(double mpjpe, std::optional<double> mve, double f1) {
  require(f1 >= 0.0 && f1 <= 1.0, "F1 must lie in [0, 1]");
  NormalizedErrors out;
  if (f1 == 0.0) return out;
  out.nmje = mpjpe / f1;
  if (mve) out.nmve = *mve / f1;
  return out;
}

std::optional<double> occlusion_percent(const MaskImage& masks, int person_id) {
  require(masks.labels.size() == static_cast<std::size_t>(masks.width) * static_cast<std::size_t>(masks.height),
          "mask label buffer does not match its size");
  const int idx = masks.person_index(person_id);
  if (idx < 0) return std::nullopt;
  require(masks.unoccluded[static_cast<std::size_t>(idx)].size() == masks.labels.size(),
          "unoccluded mask differs in size from the full mask");
  const int unoccluded = masks.unoccluded_count(person_id);
  if (unoccluded == 0) return std::nullopt;
  const int visible = masks.count_label(person_id);
  return 100.0 * (1.0 - static_cast<double>(visible) / unoccluded);
}

double yaw_degrees(const BodyModel& model, const TruthPerson& person, const Camera& camera) {
  require(person.params.body_pose.size() >= 3, "person has no global orientation");
  const Eigen::Matrix3d r = rodrigues<double>(person.params.body_pose.head<3>());
  Eigen::Vector3d forward = r * Eigen::Vector3d::UnitZ();
  const Eigen::Vector3d root = person.keypoints.rows() > model.parts.pelvis
                                   ? Eigen::Vector3d(person.keypoints.row(model.parts.pelvis).transpose())
                                   : person.params.trans;
  Eigen::Vector3d to_cam = camera.center() - root;
  forward.y() = 0.0;
  to_cam.y() = 0.0;
  if (forward.norm() < 1e-12 || to_cam.norm() < 1e-12) return 0.0;
  const double c = std::clamp(forward.normalized().dot(to_cam.normalized()), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

std::vector<BinRow> binned_analysis(const std::vector<PersonRecord>& records, BinKind kind, int bins) {
  if (kind == BinKind::kOcclusion) {
    require(bins == 0 || bins == 10, "occlusion uses ten bins");
    bins = 10;
  } else if (bins == 0) {
    bins = kind == BinKind::kCenter ? 8 : 12;
  }
  require(bins >= 1, "bin count must be positive");

  double top = 100.0;
  if (kind == BinKind::kYaw) top = 180.0;
  if (kind == BinKind::kCenter) {
    top = 0.0;
    for (const auto& r : records) {
      require(r.image_width > 0.0, "center binning needs the image width");
      require(top == 0.0 || top == 0.5 * r.image_width, "center binning needs one image width");
      top = 0.5 * r.image_width;
    }
    if (top == 0.0) top = 1.0;
  }

  std::vector<BinRow> rows(static_cast<std::size_t>(bins));
  std::vector<double> sums(static_cast<std::size_t>(bins), 0.0);
  for (int b = 0; b < bins; ++b) {
    rows[static_cast<std::size_t>(b)].lo = top * b / bins;
    rows[static_cast<std::size_t>(b)].hi = top * (b + 1) / bins;
  }
  for (const auto& r : records) {
    double x = 0.0;
    if (kind == BinKind::kOcclusion) {
      if (!r.occlusion) continue;
      x = *r.occlusion;
    } else if (kind == BinKind::kCenter) {
      x = r.center_distance;
    } else {
      x = r.yaw;
    }
    require(std::isfinite(x) && x >= 0.0, "bin covariate must be finite and non-negative");
    const int b = std::min(bins - 1, static_cast<int>(std::floor(x / top * bins)));
    auto& row = rows[static_cast<std::size_t>(b)];
    ++row.count;
    if (r.matched) {
      ++row.matched;
      sums[static_cast<std::size_t>(b)] += r.b_mpjpe;
    }
  }
  for (int b = 0; b < bins; ++b) {
    auto& row = rows[static_cast<std::size_t>(b)];
    if (row.count == 0) continue;
    const double recall = static_cast<double>(row.matched) / row.count;
    row.miss_rate = 1.0 - recall;
    if (row.matched == 0) continue;
    row.mean_b_mpjpe = sums[static_cast<std::size_t>(b)] / row.matched;
    row.recall_nmje = *row.mean_b_mpjpe / recall;
  }
  return rows;
}

namespace {

struct Accumulator {
  double sum = 0.0;
  int n = 0;
  void add(double x) {
    sum += x;
    ++n;
  }
  std::optional<double> mean() const { return n > 0 ? std::optional<double>(sum / n) : std::nullopt; }
};

bool has_part(const EvalOptions& o, Part p) { return std::find(o.parts.begin(), o.parts.end(), p) != o.parts.end(); }

}  // namespace

EvalReport evaluate(const BodyModel& model, const std::vector<SceneTruth>& scenes,
                    const std::vector<ScenePrediction>& predictions, const EvalOptions& options) {
  std::map<std::string, const ScenePrediction*> by_name;
  for (const auto& p : predictions) require(by_name.emplace(p.scene, &p).second, "duplicate scene in predictions");
  std::set<std::string> names;
  for (const auto& s : scenes) require(names.insert(s.name).second, "duplicate scene in corpus");
  for (const auto& p : predictions) require(names.count(p.scene) > 0, "prediction for an unknown scene");

  const std::array<Part, 4> all = {Part::kBody, Part::kLeftHand, Part::kRightHand, Part::kFace};
  std::array<Accumulator, 4> joint_acc, vert_acc;
  Accumulator fb_joint, fb_vert;
  bool all_vertices = true;
  int matched_total = 0;

  EvalReport report;
  for (const auto& scene : scenes) {
    ScenePrediction empty;
    empty.scene = scene.name;
    const auto it = by_name.find(scene.name);
    const ScenePrediction& preds = it == by_name.end() ? empty : *it->second;
    MatchOutcome outcome = match(model, scene, preds, options.tau);

    std::map<int, const PredictedPerson*> pred_by_id;
    for (const auto& p : preds.persons) pred_by_id[p.id] = &p;
    std::map<int, const MatchedPair*> pair_by_gt;
    for (const auto& pr : outcome.pairs) pair_by_gt[pr.gt] = &pr;

    for (const auto& gt : scene.persons) {
      PersonRecord rec;
      rec.scene = scene.name;
      rec.gt = gt.id;
      rec.image_width = scene.width;
      rec.yaw = yaw_degrees(model, gt, scene.camera);
      if (!scene.masks.labels.empty()) rec.occlusion = occlusion_percent(scene.masks, gt.id);
      const Points2d px = valid_pixels(project(scene.camera, rows_of(gt.keypoints, model.parts.body_joints)));
      if (px.rows() > 0) {
        const Box2 box = bounding_box(px);
        rec.center_distance = std::abs(0.5 * (box.lo.x() + box.hi.x()) - 0.5 * scene.width);
      }

      const auto pit = pair_by_gt.find(gt.id);
      if (pit != pair_by_gt.end()) {
        const PredictedPerson& pred = *pred_by_id.at(pit->second->pred);
        const Points3d gk = to_camera_frame(scene.camera, gt.keypoints);
        const Points3d gv = to_camera_frame(scene.camera, gt.vertices);
        std::array<double, 4> pj{}, pv{};
        for (std::size_t k = 0; k < all.size(); ++k) {
          if (k > 0 && !gt.bfh) break;
          if (!has_part(options, all[k])) continue;
          pj[k] = part_mpjpe(model, pred.keypoints, gk, all[k]);
          joint_acc[k].add(pj[k]);
          if (pred.vertices) {
            pv[k] = part_mve(model, *pred.vertices, pred.keypoints, gv, gk, all[k]);
            vert_acc[k].add(pv[k]);
          }
        }
        if (!pred.vertices) all_vertices = false;
        ++matched_total;
        rec.matched = true;
        rec.b_mpjpe = has_part(options, Part::kBody) ? pj[0] : part_mpjpe(model, pred.keypoints, gk, Part::kBody);
        const bool full = gt.bfh && std::all_of(all.begin(), all.end(), [&](Part p) { return has_part(options, p); });
        if (full) {
          fb_joint.add(fb_error(pj[0], pj[1], pj[2], pj[3]));
          if (pred.vertices) fb_vert.add(fb_error(pv[0], pv[1], pv[2], pv[3]));
        }
      }
      report.records.push_back(rec);
    }
    report.outcomes.push_back(std::move(outcome));
  }

  report.detection = detection_scores(report.outcomes);
  std::array<PartErrors*, 4> dst = {&report.body, &report.left_hand, &report.right_hand, &report.face};
  const bool use_vertices = all_vertices && matched_total > 0;
  for (std::size_t k = 0; k < all.size(); ++k) {
    dst[k]->mpjpe = joint_acc[k].mean();
    if (use_vertices) dst[k]->mve = vert_acc[k].mean();
  }
  report.full_body.mpjpe = fb_joint.mean();
  if (use_vertices) report.full_body.mve = fb_vert.mean();
  if (report.body.mpjpe)
    report.body_normalized = normalized_errors(*report.body.mpjpe, report.body.mve, report.detection.f1);
  if (report.full_body.mpjpe)
    report.full_body_normalized =
        normalized_errors(*report.full_body.mpjpe, report.full_body.mve, report.detection.f1);
  return report;
}

ScenePrediction truth_as_prediction(const SceneTruth& scene) {
  ScenePrediction out;
  out.scene = scene.name;
  for (const auto& p : scene.persons) {
    PredictedPerson q;
    q.id = p.id;
    q.keypoints = to_camera_frame(scene.camera, p.keypoints);
    q.vertices = to_camera_frame(scene.camera, p.vertices);
    q.camera = scene.camera;
    out.persons.push_back(std::move(q));
  }
  return out;
}

}  // namespace bodybench
