#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include <bodybench/io.hpp>
#include <bodybench/synthgen.hpp>

#include "test_util.hpp"

using namespace bodybench;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("bodybench_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

bool same_params(const BodyParams& a, const BodyParams& b) {
  return a.identity == b.identity && a.beta == b.beta && a.body_pose == b.body_pose && a.left_hand == b.left_hand &&
         a.right_hand == b.right_hand && a.expression == b.expression && a.alpha == b.alpha && a.trans == b.trans;
}

std::string submission_error(const std::string& text) {
  try {
    parse_submission(text, testutil::toy_model(), "sub.txt");
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("fnv1a64 reference values") {
  CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
  CHECK(hex64(fnv1a64("foobar")) == "85944171f73967e8");
}

TEST_CASE("fmt round-trips doubles exactly") {
  CounterRng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform_int(-8, 8));
    CHECK(std::stod(fmt(v)) == v);
  }
  CHECK(fmt(0.1) == "0.1");
  CHECK(fmt(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("params json round trip") {
  const BodyModel& model = testutil::toy_model();
  CounterRng rng(11);
  BodyParams p = testutil::random_params(model, rng);
  p.identity = "subject_07";
  CHECK(same_params(params_from_json(params_to_json(p), model, "x"), p));
  CHECK_THROWS_AS(params_from_json("{\"identity\": 3}", model, "x"), FormatError);
  CHECK_THROWS_AS(params_from_json("not json", model, "x"), FormatError);
}

TEST_CASE("PGM round trip and header checks") {
  TempDir dir;
  std::vector<std::uint16_t> a = {0, 1, 300, 65535, 7, 0};
  write_pgm16(dir.path / "a.pgm", 3, 2, a);
  int w = 0, h = 0;
  CHECK(read_pgm16(dir.path / "a.pgm", &w, &h) == a);
  CHECK(w == 3);
  CHECK(h == 2);
  std::vector<std::uint8_t> b = {0, 255, 255, 0};
  write_pgm8(dir.path / "b.pgm", 2, 2, b);
  CHECK(read_pgm8(dir.path / "b.pgm", &w, &h) == b);
  CHECK_THROWS_AS(read_pgm8(dir.path / "a.pgm", &w, &h), FormatError);
  write_file(dir.path / "c.pgm", "P5\n2 2\n255\n\x01");
  CHECK_THROWS_AS(read_pgm8(dir.path / "c.pgm", &w, &h), FormatError);
}

TEST_CASE("scene round trip regenerates identical geometry and masks") {
  const BodyModel& model = testutil::toy_model();
  GenSpec spec;
  CounterRng rng(5);
  SceneTruth s = gen_scene(model, spec, rng, "scene_0000");
  TempDir dir;
  write_scene(dir.path / "scenes" / s.name, s);
  const SceneTruth r = read_scene(dir.path / "scenes" / s.name, model);
  CHECK(r.name == s.name);
  CHECK(r.camera.rotation == s.camera.rotation);
  CHECK(r.camera.translation == s.camera.translation);
  CHECK(r.camera.focal == s.camera.focal);
  REQUIRE(r.persons.size() == s.persons.size());
  for (std::size_t i = 0; i < s.persons.size(); ++i) {
    CHECK(r.persons[i].id == s.persons[i].id);
    CHECK(r.persons[i].bfh == s.persons[i].bfh);
    CHECK(r.persons[i].is_child == s.persons[i].is_child);
    CHECK(same_params(r.persons[i].params, s.persons[i].params));
    CHECK(r.persons[i].keypoints == s.persons[i].keypoints);
  }
  REQUIRE(r.occluders.size() == s.occluders.size());
  for (std::size_t i = 0; i < s.occluders.size(); ++i) CHECK(r.occluders[i].min() == s.occluders[i].min());
  CHECK(r.masks.labels == s.masks.labels);
  CHECK(r.masks.person_ids == s.masks.person_ids);
  CHECK(r.masks.unoccluded == s.masks.unoccluded);
  CHECK(list_scenes(dir.path) == std::vector<std::string>{"scene_0000"});
}

TEST_CASE("scan round trip") {
  const BodyModel& model = testutil::toy_model();
  GenSpec spec;
  spec.label_noise = 0.1;
  CounterRng rng(9);
  GenScan g = gen_scan(model, spec, rng, "id_0");
  ScanRecord rec{"id_0_scan0", g.scan, {}, g.truth};
  rec.landmarks = synthesize_landmarks(model, g.truth, scan_cameras(g.scan, 3), 0.5, rng);
  rec.landmarks[1].confidence[4] = 0.0;
  rec.landmarks[1].points(4, 0) = std::numeric_limits<double>::quiet_NaN();
  TempDir dir;
  write_scan(dir.path, rec);
  const ScanRecord r = read_scan(dir.path, rec.name, model);
  CHECK(r.scan.mesh.positions == rec.scan.mesh.positions);
  CHECK(r.scan.mesh.triangles == rec.scan.mesh.triangles);
  CHECK(r.scan.p_skin == rec.scan.p_skin);
  CHECK(r.scan.p_cloth == rec.scan.p_cloth);
  CHECK(r.scan.p_other == rec.scan.p_other);
  CHECK(r.scan.identity == "id_0");
  CHECK(r.scan.is_child == rec.scan.is_child);
  REQUIRE(r.truth);
  CHECK(same_params(*r.truth, *rec.truth));
  REQUIRE(r.landmarks.size() == 3);
  CHECK(std::isnan(r.landmarks[1].points(4, 0)));
  CHECK(r.landmarks[2].points == rec.landmarks[2].points);
  CHECK(r.landmarks[0].camera.rotation == rec.landmarks[0].camera.rotation);
  CHECK(list_scans(dir.path) == std::vector<std::string>{"id_0_scan0"});

  write_file(dir.path / "scans" / "id_0_scan0.labels.txt", "0.5 0.5\n");
  CHECK_THROWS_AS(read_scan(dir.path, rec.name, model), FormatError);
}

TEST_CASE("manifest is deterministic, excludes itself and detects changes") {
  TempDir dir;
  fs::create_directories(dir.path / "scenes" / "b");
  write_file(dir.path / "scenes" / "b" / "x.txt", "hello");
  write_file(dir.path / "a.txt", "");
  Manifest m = build_manifest(dir.path, 1, 42);
  write_manifest(dir.path, m);
  const Manifest again = build_manifest(dir.path, 1, 42);
  REQUIRE(again.entries.size() == 2);
  CHECK(again.entries[0].path == "a.txt");
  CHECK(again.entries[1].path == "scenes/b/x.txt");
  CHECK(again.entries[1].hash == fnv1a64("hello"));
  CHECK(again.entries[1].size == 5);
  const Manifest read = read_manifest(dir.path);
  CHECK(read.seed == 42);
  CHECK(read.model_seed == 1);
  REQUIRE(read.entries.size() == 2);
  CHECK(read.entries[1].hash == m.entries[1].hash);
  CHECK(verify_manifest(dir.path, read).empty());
  write_file(dir.path / "scenes" / "b" / "x.txt", "hellO");
  CHECK(verify_manifest(dir.path, read) == std::vector<std::string>{"scenes/b/x.txt"});
  fs::remove(dir.path / "a.txt");
  CHECK(verify_manifest(dir.path, read).size() == 2);

  TempDir empty;
  write_manifest(empty.path, build_manifest(empty.path, 1, 0));
  CHECK(read_manifest(empty.path).entries.empty());
}

TEST_CASE("submission round trip in metres and millimetres") {
  const BodyModel& model = testutil::toy_model();
  GenSpec spec;
  CounterRng rng(21);
  const SceneTruth s = gen_scene(model, spec, rng, "scene_0001");
  DegradeSpec d;
  d.noise_mm = 10.0;
  d.fp_rate = 0.5;
  ScenePrediction p = degrade_predictions(model, s, d, rng);
  p.persons.front().vertices.reset();
  const std::vector<ScenePrediction> subs = {p, {"empty_scene", {}}};

  const auto back = parse_submission(format_submission(subs), model, "m.txt");
  REQUIRE(back.size() == 2);
  CHECK(back[1].scene == "empty_scene");
  CHECK(back[1].persons.empty());
  REQUIRE(back[0].persons.size() == p.persons.size());
  for (std::size_t i = 0; i < p.persons.size(); ++i) {
    CHECK(back[0].persons[i].id == p.persons[i].id);
    CHECK(back[0].persons[i].keypoints == p.persons[i].keypoints);
    CHECK(back[0].persons[i].vertices.has_value() == p.persons[i].vertices.has_value());
    CHECK(back[0].persons[i].camera.focal == p.persons[i].camera.focal);
  }

  const auto mm = parse_submission(format_submission(subs, Units::kMillimetres), model, "mm.txt");
  REQUIRE(mm[0].persons.size() == p.persons.size());
  for (std::size_t i = 0; i < p.persons.size(); ++i) {
    CHECK((mm[0].persons[i].keypoints - p.persons[i].keypoints).cwiseAbs().maxCoeff() < 1e-12);
    if (p.persons[i].vertices)
      CHECK((*mm[0].persons[i].vertices - *p.persons[i].vertices).cwiseAbs().maxCoeff() < 1e-12);
  }

  // Evaluating the parsed submission equals evaluating the in-memory one.
  const EvalReport a = evaluate(model, {s}, {p});
  const EvalReport b = evaluate(model, {s}, {back[0]});
  CHECK(a.detection.f1 == b.detection.f1);
  CHECK(*a.body.mpjpe == *b.body.mpjpe);
}

TEST_CASE("submission errors name the offending line") {
  const BodyModel& model = testutil::toy_model();
  const std::string header = "# bodybench-submission v1\nunits m\n";
  CHECK(submission_error("units m\n").find(":1:") != std::string::npos);
  CHECK(submission_error("# bodybench-submission v1\nunits km\n").find(":2:") != std::string::npos);
  CHECK(submission_error(header + "person 1 joints 3\n").find(":3:") != std::string::npos);
  CHECK(submission_error(header + "scene s\ncamera 500 320 180 640 360\nperson 1 joints 2\n").find(":5:") !=
        std::string::npos);

  std::string good = header + "scene s\ncamera 500 320 180 640 360\nperson 1 joints " +
                     std::to_string(model.num_keypoints()) + "\n";
  for (int i = 0; i < model.num_keypoints(); ++i) good += "0 0 5\n";
  CHECK(submission_error(good + "end\n").empty());
  const int end_line = 6 + model.num_keypoints();
  CHECK(submission_error(good + "fin\n").find(":" + std::to_string(end_line) + ":") != std::string::npos);
  std::string bad = good;
  bad.replace(bad.rfind("0 0 5"), 5, "0 x 5");
  CHECK(submission_error(bad + "end\n").find(":" + std::to_string(end_line - 1) + ":") != std::string::npos);
  CHECK(submission_error(good + "end\nscene s\n").find("twice") != std::string::npos);
  CHECK(submission_error(good + "end\nbogus\n").find("unknown record") != std::string::npos);
}

TEST_CASE("eval outputs are written") {
  const BodyModel& model = testutil::toy_model();
  GenSpec spec;
  CounterRng rng(2);
  const SceneTruth s = gen_scene(model, spec, rng, "scene_0000");
  const EvalReport rep = evaluate(model, {s}, {truth_as_prediction(s)});
  TempDir dir;
  write_eval_outputs(dir.path, rep, EvalOptions{}, BinSettings{});
  for (const char* f : {"parts.csv", "detection.csv", "persons.csv", "bins_occlusion.csv", "bins_center.csv",
                        "bins_yaw.csv", "summary.json"})
    CHECK(fs::is_regular_file(dir.path / f));
  const std::string det = read_file(dir.path / "detection.csv");
  CHECK(det == "tp,fp,fn,precision,recall,f1\n" + std::to_string(s.persons.size()) + ",0,0,1,1,1\n");
  const std::string parts = read_file(dir.path / "parts.csv");
  CHECK(parts.find("B,0,0,0,0\n") != std::string::npos);
}

TEST_CASE("io errors are FormatError") {
  CHECK_THROWS_AS(read_file("/nonexistent/bodybench/x"), FormatError);
  CHECK_THROWS_AS(write_file("/nonexistent/bodybench/x", "y"), FormatError);
  CHECK_THROWS_AS(read_manifest("/nonexistent/bodybench"), FormatError);
}
