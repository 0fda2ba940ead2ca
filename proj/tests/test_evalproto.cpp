#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numbers>
#include <numeric>

#include <bodybench/evalproto.hpp>

#include "test_util.hpp"

using namespace bodybench;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

Camera scene_camera() { return Camera::look_at({0.0, 1.5, 0.0}, {0.0, 1.0, 10.0}, 500.0, 640, 360); }

TruthPerson make_person(const BodyModel& model, int id, const Eigen::Vector3d& where, double yaw, CounterRng& rng,
                        bool bfh = true) {
  TruthPerson p;
  p.id = id;
  p.bfh = bfh;
  p.params = testutil::random_params(model, rng, 0.1);
  p.params.alpha = 1.0;
  p.params.body_pose.head<3>() = Eigen::Vector3d(0.0, yaw, 0.0);
  p.params.trans = where;
  const PosedBody posed = forward(model, p.params);
  p.keypoints = keypoints(model, posed);
  p.vertices = posed.vertices;
  return p;
}

SceneTruth make_scene(const BodyModel& model, std::vector<TruthPerson> persons, const std::string& name = "s") {
  SceneTruth s;
  s.name = name;
  s.camera = scene_camera();
  s.width = s.camera.width;
  s.height = s.camera.height;
  s.persons = std::move(persons);
  std::vector<TriMesh> meshes;
  meshes.reserve(s.persons.size());
  for (const auto& p : s.persons) meshes.push_back(TriMesh{p.vertices, model.faces});
  std::vector<RasterItem> items;
  for (std::size_t i = 0; i < meshes.size(); ++i) items.push_back({&meshes[i], s.persons[i].id});
  s.masks = rasterize(items, s.camera);
  return s;
}

// Two people side by side at depth 8.
SceneTruth pair_scene(const BodyModel& model, std::uint64_t seed, bool second_bfh = true) {
  CounterRng rng(seed);
  std::vector<TruthPerson> ps;
  ps.push_back(make_person(model, 1, {-1.2, 0.98, 8.0}, std::numbers::pi, rng));
  ps.push_back(make_person(model, 2, {1.2, 0.98, 8.0}, std::numbers::pi, rng, second_bfh));
  return make_scene(model, std::move(ps));
}

// Lexicographic reference: most pairs, then least cost (1e-9 relative),
// then the smallest row-to-column vector with "unassigned" ordered last.
std::vector<int> exhaustive_assign(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  double scale = 1.0;
  for (Eigen::Index i = 0; i < cost.size(); ++i)
    if (!std::isnan(cost.data()[i])) scale += cost.data()[i];
  std::vector<int> best;
  int best_pairs = -1;
  double best_cost = 0.0;
  std::vector<int> cur(static_cast<std::size_t>(n), -1);
  std::vector<char> used(static_cast<std::size_t>(m), 0);
  auto key = [&](const std::vector<int>& v) {
    std::vector<int> k(v);
    for (int& x : k)
      if (x < 0) x = m;
    return k;
  };
  auto rec = [&](auto&& self, int r, int pairs, double c) -> void {
    if (r == n) {
      const bool better = pairs > best_pairs || (pairs == best_pairs && c < best_cost - 1e-9 * scale);
      const bool tie = pairs == best_pairs && std::abs(c - best_cost) <= 1e-9 * scale;
      if (better || (tie && key(cur) < key(best))) {
        best = cur;
        best_pairs = pairs;
        best_cost = c;
      }
      return;
    }
    for (int j = 0; j < m; ++j) {
      if (used[static_cast<std::size_t>(j)] || std::isnan(cost(r, j))) continue;
      used[static_cast<std::size_t>(j)] = 1;
      cur[static_cast<std::size_t>(r)] = j;
      self(self, r + 1, pairs + 1, c + cost(r, j));
      used[static_cast<std::size_t>(j)] = 0;
    }
    cur[static_cast<std::size_t>(r)] = -1;
    self(self, r + 1, pairs, c);
  };
  rec(rec, 0, 0, 0.0);
  return best;
}

PersonRecord record(bool matched, double err, double occ, double center = 0.0, double yaw = 0.0) {
  PersonRecord r;
  r.matched = matched;
  r.b_mpjpe = err;
  r.occlusion = occ;
  r.center_distance = center;
  r.image_width = 640;
  r.yaw = yaw;
  return r;
}

MatchOutcome outcome(int tp, int fp, int fn) {
  MatchOutcome o;
  for (int i = 0; i < tp; ++i) o.pairs.push_back({i + 1, i + 1, 0.0});
  for (int i = 0; i < fp; ++i) o.false_positives.push_back(100 + i);
  for (int i = 0; i < fn; ++i) o.false_negatives.push_back(200 + i);
  return o;
}

}  // namespace

TEST_CASE("fb_error: table cells and zero") {
  CHECK(std::abs(fb_error(150.4, 72.5, 68.8, 55.2) - 215.9) <= 0.05);
  CHECK(std::abs(fb_error(182.1, 46.5, 49.6, 52.9) - 231.8) <= 0.05);
  CHECK(fb_error(0, 0, 0, 0) == 0.0);
  CHECK_THROWS_AS(fb_error(kNaN, 0, 0, 0), ContractError);
}

TEST_CASE("detection_scores: counting examples") {
  DetectionScores s = detection_scores({outcome(4, 0, 0)});
  CHECK(s.precision == 1.0);
  CHECK(s.recall == 1.0);
  CHECK(s.f1 == 1.0);

  s = detection_scores({outcome(2, 0, 1), outcome(0, 0, 1)});
  CHECK(s.precision == 1.0);
  CHECK(s.recall == 0.5);
  CHECK(s.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  s = detection_scores({outcome(3, 1, 1)});
  CHECK(s.precision == 0.75);
  CHECK(s.recall == 0.75);
  CHECK(s.f1 == doctest::Approx(0.75).epsilon(1e-15));

  s = detection_scores({outcome(0, 3, 2)});
  CHECK(s.f1 == 0.0);
  CHECK_THROWS_AS(detection_scores({outcome(0, 2, 0)}), ContractError);
}

TEST_CASE("normalized_errors: table cells, identity, F1 zero") {
  NormalizedErrors e = normalized_errors(153.4, 148.9, 0.77);
  CHECK(std::abs(*e.nmje - 199.2) <= 0.05);
  CHECK(std::abs(*e.nmve - 193.4) <= 0.05);
  e = normalized_errors(150.4, 151.5, 0.82);
  CHECK(std::abs(*e.nmje - 183.4) <= 0.05);
  CHECK(std::abs(*e.nmve - 184.8) <= 0.05);
  e = normalized_errors(87.0, std::nullopt, 1.0);
  CHECK(*e.nmje == 87.0);
  CHECK_FALSE(e.nmve.has_value());
  e = normalized_errors(87.0, 90.0, 0.0);
  CHECK_FALSE(e.nmje.has_value());
  CHECK_FALSE(e.nmve.has_value());
  CHECK_THROWS_AS(normalized_errors(1.0, 1.0, 1.5), ContractError);
}

TEST_CASE("part sets: sizes and anchors") {
  const BodyModel& model = testutil::toy_model();
  CHECK(part_keypoints(model, Part::kBody).size() == 22);
  CHECK(part_keypoints(model, Part::kLeftHand).size() == 15);
  CHECK(part_keypoints(model, Part::kRightHand).size() == 15);
  CHECK(part_keypoints(model, Part::kFace).size() == 51);
  CHECK(part_keypoints(model, Part::kFace).front() == model.num_joints());
  CHECK(part_anchor(model, Part::kBody) == 0);
  CHECK(part_anchor(model, Part::kLeftHand) == 20);
  CHECK(part_anchor(model, Part::kRightHand) == 21);
  CHECK(part_anchor(model, Part::kFace) == 12);
  CHECK(std::string(part_name(Part::kRightHand)) == "RH");
}

TEST_CASE("part_mpjpe: identity, translations, single joint offset") {
  const BodyModel& model = testutil::toy_model();
  CounterRng rng(3);
  const BodyParams p = testutil::random_params(model, rng);
  const Points3d gt = keypoints(model, forward(model, p));
  for (Part part : {Part::kBody, Part::kLeftHand, Part::kRightHand, Part::kFace}) {
    CHECK(part_mpjpe(model, gt, gt, part) == 0.0);
    const Points3d moved = gt.rowwise() + Eigen::RowVector3d(0.3, -2.0, 5.0);
    CHECK(part_mpjpe(model, moved, gt, part) <= 1e-9);
    const Points3d other = gt.rowwise() + Eigen::RowVector3d(-1.0, 0.5, 0.25);
    CHECK(std::abs(part_mpjpe(model, moved, other, part) - part_mpjpe(model, gt, gt, part)) <= 1e-9);
  }
  Points3d pred = gt;
  pred.row(5) += Eigen::RowVector3d(0.0, 0.022, 0.0);
  CHECK(part_mpjpe(model, pred, gt, Part::kBody) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(part_mpjpe(model, pred, gt, Part::kFace) == 0.0);

  Points3d face = gt;
  face.row(model.num_joints() + 7) += Eigen::RowVector3d(0.051, 0.0, 0.0);
  CHECK(part_mpjpe(model, face, gt, Part::kFace) == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(part_mpjpe(model, gt.topRows(22), gt, Part::kBody), ContractError);
}

TEST_CASE("part_mve: identity, translation, single vertex offset") {
  const BodyModel& model = testutil::toy_model();
  CounterRng rng(4);
  const BodyParams p = testutil::random_params(model, rng);
  const PosedBody posed = forward(model, p);
  const Points3d k = keypoints(model, posed);
  const Points3d& v = posed.vertices;
  CHECK(part_mve(model, v, k, v, k, Part::kBody) == 0.0);
  const Eigen::RowVector3d t(1.0, 2.0, -3.0);
  const Points3d vt = v.rowwise() + t;
  const Points3d kt = k.rowwise() + t;
  for (Part part : {Part::kBody, Part::kLeftHand, Part::kRightHand, Part::kFace})
    CHECK(part_mve(model, vt, kt, v, k, part) <= 1e-9);

  for (Part part : {Part::kBody, Part::kLeftHand, Part::kFace}) {
    const auto& ids = part_vertices(model, part);
    Points3d off = v;
    off.row(ids[ids.size() / 2]) += Eigen::RowVector3d(0.0, 0.0, 0.001 * static_cast<double>(ids.size()));
    CHECK(part_mve(model, off, k, v, k, part) == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK_THROWS_AS(part_mve(model, v.topRows(10), k, v, k, Part::kBody), ContractError);
}

TEST_CASE("assign_min_cost: equals exhaustive search, including ties and forbidden pairs") {
  CounterRng rng(11);
  int with_forbidden = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const int n = rng.uniform_int(0, 5);
    const int m = rng.uniform_int(0, 5);
    Eigen::MatrixXd c(n, m);
    const bool integer = trial % 2 == 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        if (rng.bernoulli(0.3)) {
          c(i, j) = kNaN;
          ++with_forbidden;
        } else {
          c(i, j) = integer ? static_cast<double>(rng.uniform_int(0, 3)) : rng.uniform(0.0, 50.0);
        }
      }
    const std::vector<int> got = assign_min_cost(c);
    const std::vector<int> want = exhaustive_assign(c);
    REQUIRE(got.size() == static_cast<std::size_t>(n));
    CHECK(got == want);
  }
  CHECK(with_forbidden > 0);
}

TEST_CASE("assign_min_cost: more pairs beat lower cost") {
  Eigen::MatrixXd c(2, 2);
  c << 0.0, 1000.0, kNaN, kNaN;
  CHECK(assign_min_cost(c) == std::vector<int>{0, -1});
  c << 1.0, 0.0, kNaN, 1000.0;
  CHECK(assign_min_cost(c) == std::vector<int>{0, 1});
  c << 5.0, 5.0, 5.0, 5.0;
  CHECK(assign_min_cost(c) == std::vector<int>{0, 1});
  CHECK_THROWS_AS(assign_min_cost(Eigen::MatrixXd::Constant(1, 1, -1.0)), ContractError);
}

TEST_CASE("match: truth as prediction pairs everyone at zero error") {
  const BodyModel& model = testutil::toy_model();
  const SceneTruth scene = pair_scene(model, 5);
  CHECK_NOTHROW(scene.validate(model));
  const MatchOutcome m = match(model, scene, truth_as_prediction(scene));
  REQUIRE(m.pairs.size() == 2);
  for (const auto& p : m.pairs) {
    CHECK(p.pred == p.gt);
    CHECK(p.error_px <= 1e-9);
  }
  CHECK(m.false_positives.empty());
  CHECK(m.false_negatives.empty());
}

TEST_CASE("match: below the IoU gate gives one FP and one FN") {
  const BodyModel& model = testutil::toy_model();
  CounterRng rng(6);
  SceneTruth scene = make_scene(model, {make_person(model, 1, {0.0, 0.98, 8.0}, std::numbers::pi, rng)});
  ScenePrediction pred = truth_as_prediction(scene);

  const Points2d gt_px = project(scene.camera, scene.persons[0].keypoints).pixels.topRows(22);
  const Box2 box = bounding_box(gt_px);
  // Shift right until the box IoU is 0.05: overlap width w satisfies
  // w / (2 W - w) = 0.05.
  const double width = box.hi.x() - box.lo.x();
  const double overlap = 2.0 * width * 0.05 / 1.05;
  const double shift_px = width - overlap;
  Points3d moved = pred.persons[0].keypoints;
  const Projection before = project_camera_frame(scene.camera, moved);
  for (Eigen::Index i = 0; i < moved.rows(); ++i) moved(i, 0) += shift_px * moved(i, 2) / scene.camera.focal;
  const Projection after = project_camera_frame(scene.camera, moved);
  CHECK((after.pixels.col(0) - before.pixels.col(0)).array().abs().maxCoeff() ==
        doctest::Approx(shift_px).epsilon(1e-9));
  pred.persons[0].keypoints = moved;
  CHECK(aabb_iou(gt_px, after.pixels.topRows(22)).iou == doctest::Approx(0.05).epsilon(1e-9));

  const MatchOutcome m = match(model, scene, pred, 0.1);
  CHECK(m.pairs.empty());
  CHECK(m.false_positives == std::vector<int>{1});
  CHECK(m.false_negatives == std::vector<int>{1});
  // A looser gate admits the pair.
  CHECK(match(model, scene, pred, 0.04).pairs.size() == 1);
}

TEST_CASE("match: empty scene makes every prediction a false positive") {
  const BodyModel& model = testutil::toy_model();
  const SceneTruth full = pair_scene(model, 7);
  SceneTruth empty = full;
  empty.persons.clear();
  const MatchOutcome m = match(model, empty, truth_as_prediction(full));
  CHECK(m.pairs.empty());
  CHECK(m.false_negatives.empty());
  CHECK(m.false_positives == std::vector<int>{1, 2});
  CHECK_THROWS_AS(match(model, full, truth_as_prediction(full), 0.0), ContractError);
}

TEST_CASE("match: three people with crossed offsets follow the exhaustive optimum, in any order") {
  const BodyModel& model = testutil::toy_model();
  CounterRng rng(8);
  std::vector<TruthPerson> ps;
  // Close together so every box pair clears the gate.
  ps.push_back(make_person(model, 1, {-0.35, 0.98, 8.0}, std::numbers::pi, rng));
  ps.push_back(make_person(model, 2, {0.0, 0.98, 9.0}, std::numbers::pi, rng));
  ps.push_back(make_person(model, 3, {0.35, 0.98, 10.0}, std::numbers::pi, rng));
  const SceneTruth scene = make_scene(model, ps);
  ScenePrediction pred = truth_as_prediction(scene);
  const double f = scene.camera.focal;
  const std::array<double, 3> shifts = {40.0, -25.0, 10.0};
  for (std::size_t i = 0; i < 3; ++i) {
    auto& kp = pred.persons[i].keypoints;
    for (Eigen::Index r = 0; r < kp.rows(); ++r) kp(r, 0) += shifts[i] * kp(r, 2) / f;
    pred.persons[i].id = 10 + static_cast<int>(i);
  }

  const ProjectedScene proj = project_scene(model, scene, pred);
  Eigen::MatrixXd cost(3, 3);
  for (int g = 0; g < 3; ++g)
    for (int q = 0; q < 3; ++q) {
      const auto& a = proj.truth[static_cast<std::size_t>(g)];
      const auto& b = proj.pred[static_cast<std::size_t>(q)];
      cost(g, q) = aabb_iou(a, b).iou >= 0.1 ? (a - b).rowwise().norm().mean() : kNaN;
    }
  const std::vector<int> want = exhaustive_assign(cost);

  auto pair_set = [](const MatchOutcome& m) {
    std::vector<std::pair<int, int>> s;
    for (const auto& p : m.pairs) s.emplace_back(p.pred, p.gt);
    std::sort(s.begin(), s.end());
    return s;
  };
  const MatchOutcome m = match(model, scene, pred);
  std::vector<std::pair<int, int>> expect;
  for (int g = 0; g < 3; ++g)
    if (want[static_cast<std::size_t>(g)] >= 0) expect.emplace_back(10 + want[static_cast<std::size_t>(g)], g + 1);
  std::sort(expect.begin(), expect.end());
  CHECK(pair_set(m) == expect);
  for (const auto& p : m.pairs)
    CHECK(p.error_px == doctest::Approx(cost(p.gt - 1, p.pred - 10)).epsilon(1e-12));

  SceneTruth shuffled = scene;
  std::reverse(shuffled.persons.begin(), shuffled.persons.end());
  ScenePrediction pshuf = pred;
  std::rotate(pshuf.persons.begin(), pshuf.persons.begin() + 1, pshuf.persons.end());
  CHECK(pair_set(match(model, shuffled, pshuf)) == pair_set(m));
}

TEST_CASE("occlusion_percent: constructed depth-ordered quads give 0, 40 and 100 percent") {
  Camera cam;
  cam.focal = 100.0;
  cam.principal = Eigen::Vector2d(50.0, 50.0);
  cam.width = 100;
  cam.height = 100;
  // Far person: columns 25..49, rows 30..69 (1000 px) at depth 10.
  const TriMesh far = testutil::quad(-2.5, 0.0, -2.0, 2.0, 10.0);
  // Near person: columns 25..34 over the same rows at depth 5 (400 px).
  const TriMesh near = testutil::quad(-1.25, -0.75, -1.0, 1.0, 5.0);
  // Near cover: the whole far region at depth 5.
  const TriMesh cover = testutil::quad(-1.25, 0.0, -1.0, 1.0, 5.0);

  std::vector<RasterItem> items = {{&far, 2}, {&near, 1}};
  const MaskImage m = rasterize(items, cam);
  CHECK(m.unoccluded_count(2) == 1000);
  CHECK(m.count_label(2) == 600);
  CHECK(*occlusion_percent(m, 1) == 0.0);
  CHECK(*occlusion_percent(m, 2) == doctest::Approx(40.0).epsilon(1e-12));

  std::vector<RasterItem> hidden = {{&far, 2}, {&cover, 1}};
  const MaskImage h = rasterize(hidden, cam);
  CHECK(*occlusion_percent(h, 2) == 100.0);
  CHECK(*occlusion_percent(h, 1) == 0.0);

  std::vector<RasterItem> boxed = {{&far, 2}, {&near, 0}};
  CHECK(*occlusion_percent(rasterize(boxed, cam), 2) == doctest::Approx(40.0).epsilon(1e-12));
  CHECK_FALSE(occlusion_percent(m, 9).has_value());
}

TEST_CASE("occlusion_percent: hand-built masks") {
  MaskImage m;
  m.width = 50;
  m.height = 40;
  m.labels.assign(2000, 0);
  m.person_ids = {3, 4};
  m.unoccluded.assign(2, std::vector<std::uint8_t>(2000, 0));
  for (int i = 0; i < 1000; ++i) m.unoccluded[0][static_cast<std::size_t>(i)] = 1;
  for (int i = 0; i < 600; ++i) m.labels[static_cast<std::size_t>(i)] = 3;
  CHECK(*occlusion_percent(m, 3) == doctest::Approx(40.0).epsilon(1e-12));
  CHECK_FALSE(occlusion_percent(m, 4).has_value());
}

TEST_CASE("yaw_degrees: facing, sideways, away, folded") {
  const BodyModel& model = testutil::toy_model();
  CounterRng rng(9);
  const Camera cam = scene_camera();
  // The camera sits at the origin looking along +z, the rest body faces +z.
  const TruthPerson facing = make_person(model, 1, {0.0, 0.98, 8.0}, std::numbers::pi, rng);
  CHECK(yaw_degrees(model, facing, cam) == doctest::Approx(0.0).epsilon(1e-9));
  const TruthPerson away = make_person(model, 1, {0.0, 0.98, 8.0}, 0.0, rng);
  CHECK(yaw_degrees(model, away, cam) == doctest::Approx(180.0).epsilon(1e-9));
  const TruthPerson left = make_person(model, 1, {0.0, 0.98, 8.0}, std::numbers::pi / 2, rng);
  const TruthPerson right = make_person(model, 1, {0.0, 0.98, 8.0}, -std::numbers::pi / 2, rng);
  CHECK(yaw_degrees(model, left, cam) == doctest::Approx(90.0).epsilon(1e-9));
  CHECK(yaw_degrees(model, right, cam) == doctest::Approx(90.0).epsilon(1e-9));
  const TruthPerson a = make_person(model, 1, {0.0, 0.98, 8.0}, std::numbers::pi - 0.5, rng);
  const TruthPerson b = make_person(model, 1, {0.0, 0.98, 8.0}, std::numbers::pi + 0.5, rng);
  CHECK(yaw_degrees(model, a, cam) == doctest::Approx(0.5 * 180.0 / std::numbers::pi).epsilon(1e-9));
  CHECK(yaw_degrees(model, b, cam) == doctest::Approx(yaw_degrees(model, a, cam)).epsilon(1e-9));
}

TEST_CASE("binned_analysis: worked examples") {
  std::vector<PersonRecord> all = {record(true, 10, 5), record(true, 20, 7), record(true, 60, 3)};
  auto rows = binned_analysis(all, BinKind::kOcclusion);
  REQUIRE(rows.size() == 10);
  CHECK(rows[0].count == 3);
  CHECK(*rows[0].mean_b_mpjpe == doctest::Approx(30.0));
  CHECK(*rows[0].recall_nmje == *rows[0].mean_b_mpjpe);
  CHECK(*rows[0].miss_rate == 0.0);
  for (int b = 1; b < 10; ++b) {
    CHECK(rows[static_cast<std::size_t>(b)].count == 0);
    CHECK_FALSE(rows[static_cast<std::size_t>(b)].mean_b_mpjpe.has_value());
    CHECK_FALSE(rows[static_cast<std::size_t>(b)].miss_rate.has_value());
  }

  std::vector<PersonRecord> half = {record(true, 100, 45), record(true, 200, 41), record(false, 0, 42),
                                    record(false, 0, 49.9)};
  rows = binned_analysis(half, BinKind::kOcclusion);
  CHECK(rows[4].count == 4);
  CHECK(*rows[4].mean_b_mpjpe == 150.0);
  CHECK(*rows[4].miss_rate == 0.5);
  CHECK(*rows[4].recall_nmje == 300.0);

  // Only-missed bin: miss rate present, errors absent.
  rows = binned_analysis({record(false, 0, 55)}, BinKind::kOcclusion);
  CHECK(*rows[5].miss_rate == 1.0);
  CHECK_FALSE(rows[5].recall_nmje.has_value());
}

TEST_CASE("binned_analysis: decile edges, centre clamp, yaw range") {
  const std::vector<double> occ = {0.0, 9.999, 10.0, 39.5, 40.0, 99.9, 100.0};
  const std::vector<int> bin = {0, 0, 1, 3, 4, 9, 9};
  for (std::size_t i = 0; i < occ.size(); ++i) {
    const auto rows = binned_analysis({record(true, 1, occ[i])}, BinKind::kOcclusion);
    CHECK(rows[static_cast<std::size_t>(bin[i])].count == 1);
  }
  auto rows = binned_analysis({record(true, 1, 0, 400.0), record(true, 1, 0, 320.0), record(true, 1, 0, 39.9)},
                              BinKind::kCenter);
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].hi == 40.0);
  CHECK(rows[7].hi == 320.0);
  CHECK(rows[7].count == 2);
  CHECK(rows[0].count == 1);
  rows = binned_analysis({record(true, 1, 0, 0, 180.0), record(true, 1, 0, 0, 14.9)}, BinKind::kYaw);
  REQUIRE(rows.size() == 12);
  CHECK(rows[11].count == 1);
  CHECK(rows[0].count == 1);
  CHECK(binned_analysis({}, BinKind::kYaw, 6).size() == 6);
  PersonRecord no_occ = record(true, 1, 0);
  no_occ.occlusion.reset();
  rows = binned_analysis({no_occ}, BinKind::kOcclusion);
  CHECK(std::all_of(rows.begin(), rows.end(), [](const BinRow& r) { return r.count == 0; }));
}

TEST_CASE("binned_analysis: equals filtering then averaging by hand") {
  CounterRng rng(12);
  std::vector<PersonRecord> recs;
  for (int i = 0; i < 10; ++i)
    recs.push_back(record(rng.bernoulli(0.7), rng.uniform(20, 200), rng.uniform(0, 100), rng.uniform(0, 330),
                          rng.uniform(0, 180)));
  for (BinKind kind : {BinKind::kOcclusion, BinKind::kCenter, BinKind::kYaw}) {
    const auto rows = binned_analysis(recs, kind);
    for (const auto& row : rows) {
      const bool last = &row == &rows.back();
      int count = 0, matched = 0;
      double sum = 0.0;
      for (const auto& r : recs) {
        const double x = kind == BinKind::kOcclusion ? *r.occlusion : kind == BinKind::kCenter ? r.center_distance : r.yaw;
        if (x < row.lo || (x >= row.hi && !last)) continue;
        ++count;
        if (r.matched) {
          ++matched;
          sum += r.b_mpjpe;
        }
      }
      CHECK(row.count == count);
      CHECK(row.matched == matched);
      if (matched > 0) {
        CHECK(*row.mean_b_mpjpe == doctest::Approx(sum / matched).epsilon(1e-12));
        CHECK(*row.recall_nmje == doctest::Approx((sum / matched) / (static_cast<double>(matched) / count)).epsilon(1e-12));
      } else {
        CHECK_FALSE(row.mean_b_mpjpe.has_value());
      }
    }
  }
}

TEST_CASE("evaluate: truth as prediction is error free") {
  const BodyModel& model = testutil::toy_model();
  std::vector<SceneTruth> scenes = {pair_scene(model, 13), pair_scene(model, 14)};
  scenes[1].name = "t";
  const EvalReport r = evaluate(model, scenes, {truth_as_prediction(scenes[0]), truth_as_prediction(scenes[1])});
  CHECK(r.detection.f1 == 1.0);
  for (const PartErrors* e : {&r.body, &r.left_hand, &r.right_hand, &r.face, &r.full_body}) {
    CHECK(*e->mpjpe <= 1e-9);
    CHECK(*e->mve <= 1e-9);
  }
  CHECK(*r.body_normalized.nmje <= 1e-9);
  CHECK(r.records.size() == 4);
  for (const auto& rec : r.records) {
    CHECK(rec.matched);
    CHECK(rec.occlusion.has_value());
    // Facing -z, off the optical axis by atan(1.2 / 8) plus the pelvis offset.
    CHECK(std::abs(rec.yaw - std::atan(1.2 / 8.0) * 180.0 / std::numbers::pi) < 0.1);
  }
}

TEST_CASE("evaluate: body-only people contribute no hand or face error") {
  const BodyModel& model = testutil::toy_model();
  const SceneTruth scene = pair_scene(model, 15, false);
  ScenePrediction pred = truth_as_prediction(scene);
  // Person 1 (BFH): one left-hand joint off by 15 mm -> LH 1 mm; body joint 3 off by 44 mm -> B 2 mm.
  pred.persons[0].keypoints.row(model.parts.left_hand_joints[4]) += Eigen::RowVector3d(0.015, 0, 0);
  pred.persons[0].keypoints.row(3) += Eigen::RowVector3d(0, 0.044, 0);
  // Person 2 (body only): large hand and face errors, body joint 3 off by 88 mm -> B 4 mm.
  pred.persons[1].keypoints.row(model.parts.left_hand_joints[4]) += Eigen::RowVector3d(0.5, 0, 0);
  pred.persons[1].keypoints.row(model.num_joints() + 2) += Eigen::RowVector3d(0.5, 0, 0);
  pred.persons[1].keypoints.row(3) += Eigen::RowVector3d(0, 0.088, 0);
  pred.persons[0].vertices.reset();

  const EvalReport r = evaluate(model, {scene}, {pred});
  CHECK(r.detection.tp == 2);
  CHECK(*r.body.mpjpe == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(*r.left_hand.mpjpe == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(*r.face.mpjpe <= 1e-9);
  CHECK(*r.full_body.mpjpe == doctest::Approx(2.0 + 1.0 / 3.0).epsilon(1e-9));
  CHECK_FALSE(r.body.mve.has_value());
  CHECK(*r.body_normalized.nmje == *r.body.mpjpe);

  // Dropping a prediction lowers F1 and lifts NMJE above MPJPE.
  pred.persons.pop_back();
  const EvalReport miss = evaluate(model, {scene}, {pred});
  CHECK(miss.detection.recall == 0.5);
  CHECK(*miss.body_normalized.nmje > *miss.body.mpjpe);
  CHECK(*miss.body_normalized.nmje == doctest::Approx(*miss.body.mpjpe / miss.detection.f1).epsilon(1e-12));
  CHECK(miss.records[1].matched == false);

  EvalOptions body_only;
  body_only.parts = {Part::kBody};
  const EvalReport b = evaluate(model, {scene}, {truth_as_prediction(scene)}, body_only);
  CHECK(b.body.mpjpe.has_value());
  CHECK_FALSE(b.left_hand.mpjpe.has_value());
  CHECK_FALSE(b.full_body.mpjpe.has_value());
}

TEST_CASE("evaluate: missing and unknown scenes") {
  const BodyModel& model = testutil::toy_model();
  const SceneTruth scene = pair_scene(model, 16);
  const EvalReport r = evaluate(model, {scene}, {});
  CHECK(r.detection.fn == 2);
  CHECK(r.detection.f1 == 0.0);
  CHECK_FALSE(r.body.mpjpe.has_value());
  ScenePrediction stray = truth_as_prediction(scene);
  stray.scene = "nope";
  CHECK_THROWS_AS(evaluate(model, {scene}, {stray}), ContractError);
}

TEST_CASE("SceneTruth::validate catches inconsistent geometry") {
  const BodyModel& model = testutil::toy_model();
  SceneTruth scene = pair_scene(model, 17);
  CHECK_NOTHROW(scene.validate(model));
  scene.persons[0].vertices(0, 0) += 1e-3;
  CHECK_THROWS_AS(scene.validate(model), ContractError);
  scene.regenerate(model);
  CHECK_NOTHROW(scene.validate(model));
  scene.persons[1].id = scene.persons[0].id;
  CHECK_THROWS_AS(scene.validate(model), ContractError);
}
