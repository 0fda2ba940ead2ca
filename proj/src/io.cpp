#include "bodybench/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace bodybench {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string fmt(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), 0, "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw FormatError(path.string(), 0, "read failed");
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string(), 0, "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path.string(), 0, "write failed");
}

namespace {

// Whitespace-separated tokens of one line.
std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

struct LineReader {
  std::string origin;
  std::string_view text;
  std::size_t pos = 0;
  int line = 0;

  bool next(std::string_view* out) {
    if (pos >= text.size()) return false;
    const std::size_t end = text.find('\n', pos);
    *out = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    if (!out->empty() && out->back() == '\r') out->remove_suffix(1);
    pos = end == std::string_view::npos ? text.size() : end + 1;
    ++line;
    return true;
  }
  // Next line that is neither blank nor a comment.
  bool next_content(std::vector<std::string_view>* toks) {
    std::string_view l;
    while (next(&l)) {
      *toks = tokens(l);
      if (toks->empty() || toks->front().front() == '#') continue;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) const { throw FormatError(origin, line, what); }

  double number(std::string_view tok) const {
    double v = 0.0;
    if (tok == "nan") return std::numeric_limits<double>::quiet_NaN();
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) fail("not a number: '" + std::string(tok) + "'");
    return v;
  }
  long long integer(std::string_view tok) const {
    long long v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) fail("not an integer: '" + std::string(tok) + "'");
    return v;
  }
};

std::string rel(const fs::path& root, const fs::path& p) { return fs::relative(p, root).generic_string(); }

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd json_vec(const json& a, const std::string& origin, const char* what) {
  if (!a.is_array()) throw FormatError(origin, 0, std::string(what) + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw FormatError(origin, 0, std::string(what) + " must hold numbers");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

json params_json(const BodyParams& p) {
  return json{{"identity", p.identity},         {"beta", vec_json(p.beta)},
              {"body_pose", vec_json(p.body_pose)}, {"left_hand", vec_json(p.left_hand)},
              {"right_hand", vec_json(p.right_hand)}, {"expression", vec_json(p.expression)},
              {"alpha", p.alpha},               {"trans", vec_json(p.trans)}};
}

BodyParams json_params(const json& j, const BodyModel& model, const std::string& origin) {
  try {
    BodyParams p;
    p.identity = j.at("identity").get<std::string>();
    p.beta = json_vec(j.at("beta"), origin, "beta");
    p.body_pose = json_vec(j.at("body_pose"), origin, "body_pose");
    p.left_hand = json_vec(j.at("left_hand"), origin, "left_hand");
    p.right_hand = json_vec(j.at("right_hand"), origin, "right_hand");
    p.expression = json_vec(j.at("expression"), origin, "expression");
    p.alpha = j.at("alpha").get<double>();
    const Eigen::VectorXd t = json_vec(j.at("trans"), origin, "trans");
    if (t.size() != 3) throw FormatError(origin, 0, "trans must have 3 entries");
    p.trans = t;
    try {
      p.validate(model);
    } catch (const ContractError& e) {
      throw FormatError(origin, 0, e.what());
    }
    return p;
  } catch (const json::exception& e) {
    throw FormatError(origin, 0, e.what());
  }
}

json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(origin, 0, e.what());
  }
}

json camera_json(const Camera& c) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(c.rotation(i, k));
  return json{{"focal", c.focal},
              {"principal", {c.principal.x(), c.principal.y()}},
              {"width", c.width},
              {"height", c.height},
              {"rotation", r},
              {"translation", vec_json(c.translation)}};
}

Camera json_camera(const json& j, const std::string& origin) {
  Camera c;
  c.focal = j.at("focal").get<double>();
  const Eigen::VectorXd pp = json_vec(j.at("principal"), origin, "principal");
  const Eigen::VectorXd r = json_vec(j.at("rotation"), origin, "rotation");
  const Eigen::VectorXd t = json_vec(j.at("translation"), origin, "translation");
  if (pp.size() != 2 || r.size() != 9 || t.size() != 3) throw FormatError(origin, 0, "camera has wrong sizes");
  c.principal = pp;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) c.rotation(i, k) = r[3 * i + k];
  c.translation = t;
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw FormatError(origin, 0, e.what());
  }
  return c;
}

std::string pgm_header(int width, int height, int maxval) {
  return "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n" + std::to_string(maxval) + "\n";
}

// Returns the raster payload; checks magic and maxval.
std::string_view read_pgm(const std::string& bytes, const fs::path& path, int maxval, int* width, int* height) {
  std::size_t pos = 0;
  std::vector<long long> fields;
  std::string magic;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto word = [&] {
    skip_space();
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (word() != "P5") throw FormatError(path.string(), 1, "not a binary PGM (P5)");
  for (int i = 0; i < 3; ++i) {
    const std::string w = word();
    long long v = 0;
    const auto res = std::from_chars(w.data(), w.data() + w.size(), v);
    if (res.ec != std::errc() || w.empty()) throw FormatError(path.string(), 0, "bad PGM header field '" + w + "'");
    fields.push_back(v);
  }
  ++pos;  // single whitespace before the raster
  if (fields[2] != maxval) throw FormatError(path.string(), 0, "unexpected PGM maxval " + std::to_string(fields[2]));
  *width = static_cast<int>(fields[0]);
  *height = static_cast<int>(fields[1]);
  const std::size_t need =
      static_cast<std::size_t>(*width) * static_cast<std::size_t>(*height) * (maxval > 255 ? 2u : 1u);
  if (*width < 0 || *height < 0 || pos + need != bytes.size())
    throw FormatError(path.string(), 0, "PGM raster size does not match its header");
  return std::string_view(bytes).substr(pos);
}

}  // namespace

Manifest build_manifest(const fs::path& root, std::uint64_t model_seed, std::uint64_t seed) {
  Manifest m;
  m.model_seed = model_seed;
  m.seed = seed;
  if (fs::exists(root)) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (!e.is_regular_file()) continue;
      const std::string path = rel(root, e.path());
      if (path == "manifest.txt") continue;
      const std::string bytes = read_file(e.path());
      m.entries.push_back({path, bytes.size(), fnv1a64(bytes)});
    }
  }
  std::sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  return m;
}

void write_manifest(const fs::path& root, const Manifest& m) {
  std::string out = "# bodybench-corpus v1\n# model_seed " + std::to_string(m.model_seed) + "\n# seed " +
                    std::to_string(m.seed) + "\n";
  for (const auto& e : m.entries) out += e.path + " " + std::to_string(e.size) + " " + hex64(e.hash) + "\n";
  write_file(root / "manifest.txt", out);
}

Manifest read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.txt";
  const std::string text = read_file(path);
  LineReader r{path.string(), text};
  Manifest m;
  std::string_view l;
  if (!r.next(&l) || l != "# bodybench-corpus v1") r.fail("missing '# bodybench-corpus v1' header");
  while (r.next(&l)) {
    const auto t = tokens(l);
    if (t.empty()) continue;
    if (t[0] == "#") {
      if (t.size() == 3 && t[1] == "model_seed") m.model_seed = static_cast<std::uint64_t>(r.integer(t[2]));
      if (t.size() == 3 && t[1] == "seed") m.seed = static_cast<std::uint64_t>(r.integer(t[2]));
      continue;
    }
    if (t.size() != 3 || t[2].size() != 16) r.fail("expected '<path> <bytes> <hash>'");
    ManifestEntry e;
    e.path = std::string(t[0]);
    e.size = static_cast<std::uintmax_t>(r.integer(t[1]));
    std::uint64_t h = 0;
    const auto res = std::from_chars(t[2].data(), t[2].data() + t[2].size(), h, 16);
    if (res.ec != std::errc() || res.ptr != t[2].data() + t[2].size()) r.fail("bad hash");
    e.hash = h;
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::vector<std::string> verify_manifest(const fs::path& root, const Manifest& manifest) {
  std::vector<std::string> bad;
  for (const auto& e : manifest.entries) {
    const fs::path p = root / e.path;
    if (!fs::is_regular_file(p)) {
      bad.push_back(e.path);
      continue;
    }
    const std::string bytes = read_file(p);
    if (bytes.size() != e.size || fnv1a64(bytes) != e.hash) bad.push_back(e.path);
  }
  return bad;
}

void write_pgm16(const fs::path& path, int width, int height, const std::vector<std::uint16_t>& pixels) {
  require(pixels.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height), "PGM size mismatch");
  std::string out = pgm_header(width, height, 65535);
  for (std::uint16_t v : pixels) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  write_file(path, out);
}

std::vector<std::uint16_t> read_pgm16(const fs::path& path, int* width, int* height) {
  const std::string bytes = read_file(path);
  const std::string_view raster = read_pgm(bytes, path, 65535, width, height);
  std::vector<std::uint16_t> px(raster.size() / 2);
  for (std::size_t i = 0; i < px.size(); ++i)
    px[i] = static_cast<std::uint16_t>((static_cast<unsigned char>(raster[2 * i]) << 8) |
                                       static_cast<unsigned char>(raster[2 * i + 1]));
  return px;
}

void write_pgm8(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& pixels) {
  require(pixels.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height), "PGM size mismatch");
  std::string out = pgm_header(width, height, 255);
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  write_file(path, out);
}

std::vector<std::uint8_t> read_pgm8(const fs::path& path, int* width, int* height) {
  const std::string bytes = read_file(path);
  const std::string_view raster = read_pgm(bytes, path, 255, width, height);
  return std::vector<std::uint8_t>(raster.begin(), raster.end());
}

std::string params_to_json(const BodyParams& params) { return params_json(params).dump(1) + "\n"; }

BodyParams params_from_json(const std::string& text, const BodyModel& model, const std::string& origin) {
  return json_params(parse_json(text, origin), model, origin);
}

void write_scene(const fs::path& dir, const SceneTruth& scene) {
  fs::create_directories(dir);
  json j;
  j["name"] = scene.name;
  j["width"] = scene.width;
  j["height"] = scene.height;
  j["camera"] = camera_json(scene.camera);
  json persons = json::array();
  for (const auto& p : scene.persons)
    persons.push_back({{"id", p.id}, {"is_child", p.is_child}, {"bfh", p.bfh}, {"params", params_json(p.params)}});
  j["persons"] = persons;
  json occ = json::array();
  for (const auto& b : scene.occluders) occ.push_back({{"min", vec_json(b.min())}, {"max", vec_json(b.max())}});
  j["occluders"] = occ;
  write_file(dir / "scene.json", j.dump(1) + "\n");

  if (scene.masks.labels.empty()) return;
  write_pgm16(dir / "full.pgm", scene.masks.width, scene.masks.height, scene.masks.labels);
  for (std::size_t i = 0; i < scene.masks.person_ids.size(); ++i) {
    std::vector<std::uint8_t> px(scene.masks.unoccluded[i]);
    for (auto& v : px) v = v ? 255 : 0;
    write_pgm8(dir / ("person_" + std::to_string(scene.masks.person_ids[i]) + ".pgm"), scene.masks.width,
               scene.masks.height, px);
  }
}

SceneTruth read_scene(const fs::path& dir, const BodyModel& model) {
  const fs::path path = dir / "scene.json";
  const std::string origin = path.string();
  const json j = parse_json(read_file(path), origin);
  SceneTruth s;
  try {
    s.name = j.at("name").get<std::string>();
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    s.camera = json_camera(j.at("camera"), origin);
    for (const auto& pj : j.at("persons")) {
      TruthPerson p;
      p.id = pj.at("id").get<int>();
      p.is_child = pj.at("is_child").get<bool>();
      p.bfh = pj.at("bfh").get<bool>();
      p.params = json_params(pj.at("params"), model, origin);
      s.persons.push_back(std::move(p));
    }
    for (const auto& oj : j.at("occluders")) {
      const Eigen::VectorXd lo = json_vec(oj.at("min"), origin, "min");
      const Eigen::VectorXd hi = json_vec(oj.at("max"), origin, "max");
      if (lo.size() != 3 || hi.size() != 3) throw FormatError(origin, 0, "occluder corners need 3 entries");
      s.occluders.emplace_back(Eigen::Vector3d(lo), Eigen::Vector3d(hi));
    }
  } catch (const json::exception& e) {
    throw FormatError(origin, 0, e.what());
  }
  s.regenerate(model);

  if (fs::exists(dir / "full.pgm")) {
    int w = 0, h = 0;
    s.masks.labels = read_pgm16(dir / "full.pgm", &w, &h);
    if (w != s.width || h != s.height) throw FormatError((dir / "full.pgm").string(), 0, "mask size differs from the image");
    s.masks.width = w;
    s.masks.height = h;
    for (const auto& p : s.persons) {
      const fs::path pp = dir / ("person_" + std::to_string(p.id) + ".pgm");
      int pw = 0, ph = 0;
      std::vector<std::uint8_t> px = read_pgm8(pp, &pw, &ph);
      if (pw != w || ph != h) throw FormatError(pp.string(), 0, "mask size differs from the image");
      for (auto& v : px) v = v ? 1 : 0;
      s.masks.person_ids.push_back(p.id);
      s.masks.unoccluded.push_back(std::move(px));
    }
  }
  try {
    s.validate(model);
  } catch (const ContractError& e) {
    throw FormatError(origin, 0, e.what());
  }
  return s;
}

std::vector<std::string> list_scenes(const fs::path& root) {
  std::vector<std::string> out;
  const fs::path dir = root / "scenes";
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "scene.json")) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

void write_obj(const fs::path& path, const TriMesh& mesh) {
  std::string out;
  for (Eigen::Index i = 0; i < mesh.positions.rows(); ++i)
    out += "v " + fmt(mesh.positions(i, 0)) + " " + fmt(mesh.positions(i, 1)) + " " + fmt(mesh.positions(i, 2)) + "\n";
  for (Eigen::Index f = 0; f < mesh.triangles.rows(); ++f)
    out += "f " + std::to_string(mesh.triangles(f, 0) + 1) + " " + std::to_string(mesh.triangles(f, 1) + 1) + " " +
           std::to_string(mesh.triangles(f, 2) + 1) + "\n";
  write_file(path, out);
}

TriMesh read_obj(const fs::path& path) {
  const std::string text = read_file(path);
  LineReader r{path.string(), text};
  std::vector<Eigen::Vector3d> v;
  std::vector<Eigen::Vector3i> f;
  std::vector<std::string_view> t;
  while (r.next_content(&t)) {
    if (t[0] == "v") {
      if (t.size() < 4) r.fail("vertex needs three coordinates");
      v.emplace_back(r.number(t[1]), r.number(t[2]), r.number(t[3]));
      if (!v.back().allFinite()) r.fail("non-finite vertex");
    } else if (t[0] == "f") {
      if (t.size() != 4) r.fail("only triangles are supported");
      Eigen::Vector3i tri;
      for (int k = 0; k < 3; ++k) {
        const std::string_view idx = t[static_cast<std::size_t>(k) + 1].substr(0, t[static_cast<std::size_t>(k) + 1].find('/'));
        const long long i = r.integer(idx);
        if (i < 1 || i > static_cast<long long>(v.size())) r.fail("face index out of range");
        tri[k] = static_cast<int>(i - 1);
      }
      f.push_back(tri);
    }
  }
  TriMesh m;
  m.positions.resize(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) m.positions.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  m.triangles.resize(static_cast<Eigen::Index>(f.size()), 3);
  for (std::size_t i = 0; i < f.size(); ++i) m.triangles.row(static_cast<Eigen::Index>(i)) = f[i].transpose();
  return m;
}

namespace {

std::string camera_line(const Camera& c) {
  std::string s = "camera " + fmt(c.focal) + " " + fmt(c.principal.x()) + " " + fmt(c.principal.y()) + " " +
                  std::to_string(c.width) + " " + std::to_string(c.height);
  return s;
}

std::string full_camera_line(const Camera& c) {
  std::string s = camera_line(c);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) s += " " + fmt(c.rotation(i, k));
  for (int i = 0; i < 3; ++i) s += " " + fmt(c.translation[i]);
  return s;
}

Camera parse_camera(const LineReader& r, const std::vector<std::string_view>& t, bool extrinsics) {
  const std::size_t need = extrinsics ? 18 : 6;
  if (t.size() != need || t[0] != "camera")
    r.fail(extrinsics ? "expected 'camera f cx cy w h' plus 9 rotation and 3 translation entries"
                      : "expected 'camera f cx cy w h'");
  Camera c;
  c.focal = r.number(t[1]);
  c.principal = Eigen::Vector2d(r.number(t[2]), r.number(t[3]));
  c.width = static_cast<int>(r.integer(t[4]));
  c.height = static_cast<int>(r.integer(t[5]));
  if (extrinsics) {
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) c.rotation(i, k) = r.number(t[static_cast<std::size_t>(6 + 3 * i + k)]);
    for (int i = 0; i < 3; ++i) c.translation[i] = r.number(t[static_cast<std::size_t>(15 + i)]);
  }
  try {
    c.validate();
  } catch (const ContractError& e) {
    r.fail(e.what());
  }
  return c;
}

}  // namespace

void write_scan(const fs::path& root, const ScanRecord& rec) {
  const fs::path dir = root / "scans";
  fs::create_directories(dir);
  write_obj(dir / (rec.name + ".obj"), rec.scan.mesh);

  std::string labels = "# p_skin p_cloth p_other\n";
  for (int i = 0; i < rec.scan.num_points(); ++i)
    labels += fmt(rec.scan.p_skin[i]) + " " + fmt(rec.scan.p_cloth[i]) + " " + fmt(rec.scan.p_other[i]) + "\n";
  write_file(dir / (rec.name + ".labels.txt"), labels);

  std::string lm = "# bodybench-landmarks v1\n";
  for (const auto& view : rec.landmarks) {
    lm += "view " + std::to_string(view.points.rows()) + "\n" + full_camera_line(view.camera) + "\n";
    for (Eigen::Index k = 0; k < view.points.rows(); ++k)
      lm += fmt(view.points(k, 0)) + " " + fmt(view.points(k, 1)) + " " + fmt(view.confidence[k]) + "\n";
  }
  write_file(dir / (rec.name + ".landmarks.txt"), lm);

  json j{{"identity", rec.scan.identity}, {"is_child", rec.scan.is_child}};
  if (rec.truth) j["truth"] = params_json(*rec.truth);
  write_file(dir / (rec.name + ".json"), j.dump(1) + "\n");
}

ScanRecord read_scan(const fs::path& root, const std::string& name, const BodyModel& model) {
  const fs::path dir = root / "scans";
  ScanRecord rec;
  rec.name = name;
  rec.scan.mesh = read_obj(dir / (name + ".obj"));
  const int n = rec.scan.num_points();
  if (n == 0) throw FormatError((dir / (name + ".obj")).string(), 0, "scan has no vertices");

  {
    const fs::path path = dir / (name + ".labels.txt");
    const std::string text = read_file(path);
    LineReader r{path.string(), text};
    rec.scan.p_skin.resize(n);
    rec.scan.p_cloth.resize(n);
    rec.scan.p_other.resize(n);
    std::vector<std::string_view> t;
    int i = 0;
    while (r.next_content(&t)) {
      if (i >= n) r.fail("more label rows than scan vertices");
      if (t.size() != 3) r.fail("expected 'p_skin p_cloth p_other'");
      rec.scan.p_skin[i] = r.number(t[0]);
      rec.scan.p_cloth[i] = r.number(t[1]);
      rec.scan.p_other[i] = r.number(t[2]);
      ++i;
    }
    if (i != n) r.fail("expected " + std::to_string(n) + " label rows, found " + std::to_string(i));
  }

  {
    const fs::path path = dir / (name + ".landmarks.txt");
    const std::string text = read_file(path);
    LineReader r{path.string(), text};
    std::vector<std::string_view> t;
    while (r.next_content(&t)) {
      if (t.size() != 2 || t[0] != "view") r.fail("expected 'view <keypoints>'");
      const long long k = r.integer(t[1]);
      if (k != model.num_keypoints()) r.fail("expected " + std::to_string(model.num_keypoints()) + " keypoints");
      LandmarkView view;
      if (!r.next_content(&t)) r.fail("missing camera line");
      view.camera = parse_camera(r, t, true);
      view.points.resize(k, 2);
      view.confidence.resize(k);
      for (long long i = 0; i < k; ++i) {
        if (!r.next_content(&t)) r.fail("missing landmark row");
        if (t.size() != 3) r.fail("expected 'u v confidence'");
        view.points(i, 0) = r.number(t[0]);
        view.points(i, 1) = r.number(t[1]);
        view.confidence[i] = r.number(t[2]);
      }
      rec.landmarks.push_back(std::move(view));
    }
  }

  {
    const fs::path path = dir / (name + ".json");
    const json j = parse_json(read_file(path), path.string());
    try {
      rec.scan.identity = j.at("identity").get<std::string>();
      rec.scan.is_child = j.at("is_child").get<bool>();
      if (j.contains("truth")) rec.truth = json_params(j.at("truth"), model, path.string());
    } catch (const json::exception& e) {
      throw FormatError(path.string(), 0, e.what());
    }
  }
  try {
    rec.scan.validate();
  } catch (const ContractError& e) {
    throw FormatError((dir / (name + ".obj")).string(), 0, e.what());
  }
  return rec;
}

std::vector<std::string> list_scans(const fs::path& root) {
  std::vector<std::string> out;
  const fs::path dir = root / "scans";
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".obj") out.push_back(e.path().stem().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::string format_submission(const std::vector<ScenePrediction>& scenes, Units units) {
  const double k = units == Units::kMillimetres ? 1000.0 : 1.0;
  std::string out = "# bodybench-submission v1\nunits ";
  out += units == Units::kMillimetres ? "mm\n" : "m\n";
  auto rows = [&](const Points3d& p) {
    std::string s;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      s += fmt(k * p(i, 0)) + " " + fmt(k * p(i, 1)) + " " + fmt(k * p(i, 2)) + "\n";
    return s;
  };
  for (const auto& sc : scenes) {
    out += "scene " + sc.scene + "\n";
    if (sc.persons.empty()) continue;
    const Camera& cam = sc.persons.front().camera;
    for (const auto& p : sc.persons)
      require(p.camera.focal == cam.focal && p.camera.principal == cam.principal && p.camera.width == cam.width &&
                  p.camera.height == cam.height,
              "persons of one scene must share the projection camera");
    out += camera_line(cam) + "\n";
    for (const auto& p : sc.persons) {
      out += "person " + std::to_string(p.id) + " joints " + std::to_string(p.keypoints.rows()) + "\n";
      out += rows(p.keypoints);
      if (p.vertices) out += "vertices " + std::to_string(p.vertices->rows()) + "\n" + rows(*p.vertices);
      out += "end\n";
    }
  }
  return out;
}

std::vector<ScenePrediction> parse_submission(const std::string& text, const BodyModel& model,
                                              const std::string& origin) {
  LineReader r{origin, text};
  std::string_view l;
  if (!r.next(&l) || tokens(l) != std::vector<std::string_view>{"#", "bodybench-submission", "v1"})
    r.fail("missing '# bodybench-submission v1' header");
  std::vector<std::string_view> t;
  if (!r.next_content(&t) || t.size() != 2 || t[0] != "units" || (t[1] != "m" && t[1] != "mm"))
    r.fail("expected 'units m' or 'units mm'");
  const double scale = t[1] == "mm" ? 1e-3 : 1.0;

  auto read_rows = [&](long long n) {
    Points3d p(n, 3);
    for (long long i = 0; i < n; ++i) {
      if (!r.next_content(&t)) r.fail("unexpected end of file inside a point block");
      if (t.size() != 3) r.fail("expected 'x y z'");
      for (int c = 0; c < 3; ++c) {
        p(i, c) = scale * r.number(t[static_cast<std::size_t>(c)]);
        if (!std::isfinite(p(i, c))) r.fail("non-finite coordinate");
      }
    }
    return p;
  };

  std::vector<ScenePrediction> out;
  std::set<std::string> seen;
  std::optional<Camera> cam;
  while (r.next_content(&t)) {
    if (t[0] == "scene") {
      if (t.size() != 2) r.fail("expected 'scene <name>'");
      if (!seen.insert(std::string(t[1])).second) r.fail("scene '" + std::string(t[1]) + "' listed twice");
      out.push_back({std::string(t[1]), {}});
      cam.reset();
    } else if (t[0] == "camera") {
      if (out.empty()) r.fail("camera before any scene");
      cam = parse_camera(r, t, false);
    } else if (t[0] == "person") {
      if (out.empty()) r.fail("person before any scene");
      if (!cam) r.fail("person before the scene's camera line");
      if (t.size() != 4 || t[2] != "joints") r.fail("expected 'person <id> joints <K>'");
      PredictedPerson p;
      p.id = static_cast<int>(r.integer(t[1]));
      for (const auto& q : out.back().persons)
        if (q.id == p.id) r.fail("person id " + std::to_string(p.id) + " repeated in scene");
      const long long k = r.integer(t[3]);
      if (k != model.num_keypoints())
        r.fail("expected " + std::to_string(model.num_keypoints()) + " joints, got " + std::to_string(k));
      p.camera = *cam;
      p.keypoints = read_rows(k);
      if (!r.next_content(&t)) r.fail("unexpected end of file inside a person block");
      if (t[0] == "vertices") {
        if (t.size() != 2) r.fail("expected 'vertices <V>'");
        const long long v = r.integer(t[1]);
        if (v != model.num_vertices())
          r.fail("expected " + std::to_string(model.num_vertices()) + " vertices, got " + std::to_string(v));
        p.vertices = read_rows(v);
        if (!r.next_content(&t)) r.fail("unexpected end of file inside a person block");
      }
      if (t.size() != 1 || t[0] != "end") r.fail("expected 'end'");
      out.back().persons.push_back(std::move(p));
    } else {
      r.fail("unknown record '" + std::string(t[0]) + "'");
    }
  }
  return out;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string bins_csv(const std::vector<BinRow>& rows) {
  std::string s = "lo,hi,count,matched,miss_rate,mean_b_mpjpe_mm,recall_nmje_mm\n";
  for (const auto& r : rows)
    s += fmt(r.lo) + "," + fmt(r.hi) + "," + std::to_string(r.count) + "," + std::to_string(r.matched) + "," +
         opt(r.miss_rate) + "," + opt(r.mean_b_mpjpe) + "," + opt(r.recall_nmje) + "\n";
  return s;
}

json bins_json(const std::vector<BinRow>& rows) {
  json a = json::array();
  for (const auto& r : rows)
    a.push_back({{"lo", r.lo},
                 {"hi", r.hi},
                 {"count", r.count},
                 {"matched", r.matched},
                 {"miss_rate", opt_json(r.miss_rate)},
                 {"mean_b_mpjpe_mm", opt_json(r.mean_b_mpjpe)},
                 {"recall_nmje_mm", opt_json(r.recall_nmje)}});
  return a;
}

}  // namespace

void write_eval_outputs(const fs::path& dir, const EvalReport& rep, const EvalOptions& options,
                        const BinSettings& bins) {
  fs::create_directories(dir);
  const std::array<std::pair<const char*, const PartErrors*>, 5> parts = {{{"B", &rep.body},
                                                                           {"LH", &rep.left_hand},
                                                                           {"RH", &rep.right_hand},
                                                                           {"F", &rep.face},
                                                                           {"FB", &rep.full_body}}};
  std::string pc = "part,mpjpe_mm,mve_mm,nmje_mm,nmve_mm\n";
  json pj = json::object();
  for (const auto& [name, e] : parts) {
    std::optional<double> nmje, nmve;
    if (e == &rep.body) {
      nmje = rep.body_normalized.nmje;
      nmve = rep.body_normalized.nmve;
    } else if (e == &rep.full_body) {
      nmje = rep.full_body_normalized.nmje;
      nmve = rep.full_body_normalized.nmve;
    }
    pc += std::string(name) + "," + opt(e->mpjpe) + "," + opt(e->mve) + "," + opt(nmje) + "," + opt(nmve) + "\n";
    pj[name] = {{"mpjpe_mm", opt_json(e->mpjpe)},
                {"mve_mm", opt_json(e->mve)},
                {"nmje_mm", opt_json(nmje)},
                {"nmve_mm", opt_json(nmve)}};
  }
  write_file(dir / "parts.csv", pc);

  const DetectionScores& d = rep.detection;
  write_file(dir / "detection.csv", "tp,fp,fn,precision,recall,f1\n" + std::to_string(d.tp) + "," +
                                        std::to_string(d.fp) + "," + std::to_string(d.fn) + "," + fmt(d.precision) +
                                        "," + fmt(d.recall) + "," + fmt(d.f1) + "\n");

  std::string persons = "scene,gt,matched,b_mpjpe_mm,occlusion_percent,center_distance_px,yaw_deg\n";
  for (const auto& r : rep.records)
    persons += r.scene + "," + std::to_string(r.gt) + "," + (r.matched ? "1" : "0") + "," +
               (r.matched ? fmt(r.b_mpjpe) : std::string()) + "," + opt(r.occlusion) + "," + fmt(r.center_distance) +
               "," + fmt(r.yaw) + "\n";
  write_file(dir / "persons.csv", persons);

  const auto occ = binned_analysis(rep.records, BinKind::kOcclusion);
  const auto cen = binned_analysis(rep.records, BinKind::kCenter, bins.center);
  const auto yaw = binned_analysis(rep.records, BinKind::kYaw, bins.yaw);
  write_file(dir / "bins_occlusion.csv", bins_csv(occ));
  write_file(dir / "bins_center.csv", bins_csv(cen));
  write_file(dir / "bins_yaw.csv", bins_csv(yaw));

  json parts_sel = json::array();
  for (Part p : options.parts) parts_sel.push_back(part_name(p));
  json j{{"tau", options.tau},
         {"parts_evaluated", parts_sel},
         {"detection",
          {{"tp", d.tp}, {"fp", d.fp}, {"fn", d.fn}, {"precision", d.precision}, {"recall", d.recall}, {"f1", d.f1}}},
         {"parts", pj},
         {"bins", {{"occlusion", bins_json(occ)}, {"center", bins_json(cen)}, {"yaw", bins_json(yaw)}}}};
  write_file(dir / "summary.json", j.dump(1) + "\n");
}

void write_fit_params(const fs::path& path, const std::string& name, const BodyParams& params,
                      const EnergyBreakdown& energy) {
  json j{{"scan", name},
         {"params", params_json(params)},
         {"energy",
          {{"landmark", energy.landmark},
           {"skin", energy.skin},
           {"cloth", energy.cloth},
           {"reg", energy.reg},
           {"total", energy.total()}}}};
  write_file(path, j.dump(1) + "\n");
}

}  // namespace bodybench
