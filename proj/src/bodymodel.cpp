#include "bodybench/bodymodel.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include <Eigen/QR>

#include "bodybench/geometry.hpp"
#include "bodybench/rng.hpp"

namespace bodybench {

void BodyModel::validate() const {
  const int nv = num_vertices();
  const int nj = num_joints();
  require(nv > 0 && nj > 0, "model has no vertices or joints");
  require(child_template.rows() == nv, "adult and child templates differ in vertex count");
  require(adult_template.allFinite() && child_template.allFinite(), "model templates are not finite");
  require(faces.rows() > 0 && faces.minCoeff() >= 0 && faces.maxCoeff() < nv, "model face index out of range");
  require(shape_basis.rows() == 3 * nv && expr_basis.rows() == 3 * nv, "blend basis row count must be 3V");
  require(joint_regressor.rows() == nj && joint_regressor.cols() == nv, "joint regressor must be J x V");
  require(skin_weights.rows() == nv && skin_weights.cols() == nj, "skin weights must be V x J");
  require(num_body_joints > 0 && num_body_joints <= nj, "body joint count out of range");

  int roots = 0;
  for (int j = 0; j < nj; ++j) {
    if (parents[j] < 0) {
      ++roots;
      require(j == 0, "root joint must come first");
    } else {
      require(parents[j] < j, "kinematic tree must list parents before children");
    }
  }
  require(roots == 1, "kinematic tree must have exactly one root");

  for (int v = 0; v < nv; ++v) {
    double sum = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(skin_weights, v); it; ++it) {
      require(it.value() >= 0.0, "negative skin weight");
      sum += it.value();
    }
    require(std::abs(sum - 1.0) <= 1e-6, "skin weight row does not sum to one");
  }
  for (int j = 0; j < nj; ++j) {
    double sum = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(joint_regressor, j); it; ++it) {
      require(it.value() >= 0.0, "negative joint regressor weight");
      sum += it.value();
    }
    require(std::abs(sum - 1.0) <= 1e-6, "joint regressor row does not sum to one");
  }

  for (Side side : {Side::kLeft, Side::kRight}) {
    const auto& joints = hand_joints(side);
    require(hand_basis(side).rows() == 3 * static_cast<Eigen::Index>(joints.size()), "hand basis rows must be 3 x hand joints");
    require(hand_basis(side).cols() == hand_latent_dim(), "hand bases differ in latent dimension");
    for (int j : joints) require(j >= num_body_joints && j < nj, "hand joint index out of range");
  }

  std::set<int> seen;
  for (const auto* set : {&parts.body_joints, &parts.left_hand_joints, &parts.right_hand_joints}) {
    for (int j : *set) {
      require(j >= 0 && j < nj, "part joint index out of range");
      require(seen.insert(j).second, "part joint sets overlap");
    }
  }
  for (const auto* set : {&parts.face_landmarks, &parts.body_vertices, &parts.left_hand_vertices,
                          &parts.right_hand_vertices, &parts.face_vertices}) {
    for (int v : *set) require(v >= 0 && v < nv, "part vertex index out of range");
  }
  for (int a : {parts.pelvis, parts.left_wrist, parts.right_wrist, parts.neck}) {
    require(a >= 0 && a < nj, "part anchor joint out of range");
  }
  for (const BendLimit& b : bend_limits) {
    require(b.joint >= 0 && b.joint < num_body_joints && b.axis >= 0 && b.axis < 3, "bend limit out of range");
  }
}

BodyParams BodyParams::zeros(const BodyModel& model) {
  BodyParams p;
  p.beta = Eigen::VectorXd::Zero(model.num_betas());
  p.body_pose = Eigen::VectorXd::Zero(3 * model.num_body_joints);
  p.left_hand = Eigen::VectorXd::Zero(model.hand_latent_dim());
  p.right_hand = Eigen::VectorXd::Zero(model.hand_latent_dim());
  p.expression = Eigen::VectorXd::Zero(model.num_expressions());
  p.alpha = 1.0;
  p.trans.setZero();
  return p;
}

void BodyParams::validate(const BodyModel& model) const {
  check_dimensions(model, static_cast<const PoseParams<double>&>(*this));
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  require(beta.allFinite() && body_pose.allFinite() && left_hand.allFinite() && right_hand.allFinite() &&
              expression.allFinite() && trans.allFinite(),
          "body parameters must be finite");
}

Points3d interpolate_template(const BodyModel& model, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::domain_error("template blend weight must lie in [0, 1]");
  return alpha * model.adult_template + (1.0 - alpha) * model.child_template;
}

TriMesh posed_mesh(const BodyModel& model, const PosedBody& posed) { return TriMesh{posed.vertices, model.faces}; }

namespace {

using Eigen::Vector3d;

constexpr int kBodyJoints = 22;
constexpr int kHandJoints = 15;

enum class Region { kTorso, kLeg, kArm, kHead, kLeftHand, kRightHand };

struct Skeleton {
  std::vector<Vector3d> joints;
  std::vector<double> radius;
  double head_length = 0.22;
  double head_radius = 0.09;
  double foot_length = 0.08;
  double tip_length = 0.022;
};

const std::array<int, kBodyJoints> kBodyParents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};

std::vector<int> full_parents() {
  std::vector<int> parents(kBodyParents.begin(), kBodyParents.end());
  for (int side = 0; side < 2; ++side) {
    const int wrist = side == 0 ? 20 : 21;
    const int base = kBodyJoints + side * kHandJoints;
    for (int f = 0; f < 5; ++f) {
      parents.push_back(wrist);
      parents.push_back(base + 3 * f);
      parents.push_back(base + 3 * f + 1);
    }
  }
  return parents;
}

Region region_of_joint(int j) {
  if (j >= kBodyJoints) return j < kBodyJoints + kHandJoints ? Region::kLeftHand : Region::kRightHand;
  switch (j) {
    case 1: case 2: case 4: case 5: case 7: case 8: case 10: case 11:
      return Region::kLeg;
    case 15:
      return Region::kHead;
    case 16: case 17: case 18: case 19:
      return Region::kArm;
    case 20:
      return Region::kLeftHand;
    case 21:
      return Region::kRightHand;
    default:
      return Region::kTorso;
  }
}

// Bone-length scale of the offset from a joint's parent, adult -> child.
double child_offset_scale(int j) {
  if (j >= kBodyJoints) return 0.6;
  switch (j) {
    case 1: case 2:
      return 0.7;
    case 4: case 5: case 7: case 8: case 10: case 11:
      return 0.5;
    case 15:
      return 0.7;
    case 16: case 17: case 18: case 19: case 20: case 21:
      return 0.55;
    default:
      return 0.62;
  }
}

Skeleton adult_skeleton() {
  Skeleton s;
  s.joints = {
      {0.0, 0.0, 0.0},     {0.09, -0.08, 0.0},  {-0.09, -0.08, 0.0}, {0.0, 0.11, 0.0},     {0.10, -0.48, 0.01},
      {-0.10, -0.48, 0.01}, {0.0, 0.24, 0.0},   {0.10, -0.88, -0.02}, {-0.10, -0.88, -0.02}, {0.0, 0.36, 0.0},
      {0.11, -0.94, 0.10}, {-0.11, -0.94, 0.10}, {0.0, 0.58, 0.0},    {0.07, 0.50, 0.0},     {-0.07, 0.50, 0.0},
      {0.0, 0.68, 0.02},   {0.18, 0.50, 0.0},   {-0.18, 0.50, 0.0},  {0.45, 0.50, -0.01},   {-0.45, 0.50, -0.01},
      {0.70, 0.50, 0.0},   {-0.70, 0.50, 0.0}};
  s.radius = {0.11, 0.08, 0.08, 0.12, 0.055, 0.055, 0.12, 0.04, 0.04, 0.12, 0.035,
              0.035, 0.05, 0.05, 0.05, 0.06, 0.05, 0.05, 0.04, 0.04, 0.03, 0.03};
  const std::array<Vector3d, 5> bases = {Vector3d(0.03, -0.015, 0.035), Vector3d(0.09, 0.0, 0.025),
                                         Vector3d(0.095, 0.0, 0.005), Vector3d(0.09, 0.0, -0.015),
                                         Vector3d(0.08, 0.0, -0.033)};
  const std::array<Vector3d, 5> dirs = {Vector3d(0.6, -0.2, 0.5).normalized(), Vector3d::UnitX(), Vector3d::UnitX(),
                                        Vector3d::UnitX(), Vector3d::UnitX()};
  for (int side = 0; side < 2; ++side) {
    const double mirror = side == 0 ? 1.0 : -1.0;
    const Vector3d wrist = s.joints[side == 0 ? 20 : 21];
    for (int f = 0; f < 5; ++f) {
      const double seg = f == 0 ? 0.026 : 0.03;
      for (int k = 0; k < 3; ++k) {
        Vector3d p = bases[f] + k * seg * dirs[f];
        p.x() *= mirror;
        s.joints.push_back(wrist + p);
        s.radius.push_back(k == 0 ? 0.01 : 0.009);
      }
    }
  }
  return s;
}

Skeleton child_skeleton(const Skeleton& adult, const std::vector<int>& parents) {
  Skeleton s = adult;
  for (std::size_t j = 1; j < adult.joints.size(); ++j) {
    const int p = parents[j];
    s.joints[j] = s.joints[p] + child_offset_scale(static_cast<int>(j)) * (adult.joints[j] - adult.joints[p]);
  }
  for (double& r : s.radius) r *= 0.62;
  s.head_length = adult.head_length * 0.85;
  s.head_radius = adult.head_radius * 0.85;
  s.foot_length = adult.foot_length * 0.55;
  s.tip_length = adult.tip_length * 0.6;
  return s;
}

struct Tube {
  int joint = 0;   // bone the tube rides on
  int child = -1;  // -1 for leaf extensions
  int rings = 2;
  int sides = 5;
  Region region = Region::kTorso;
  bool face = false;
};

Vector3d leaf_direction(int j, const Skeleton& s, const std::vector<int>& parents) {
  if (j == 15) return Vector3d::UnitY();
  if (j == 10 || j == 11) return Vector3d::UnitZ();
  return (s.joints[j] - s.joints[parents[j]]).normalized();
}

struct TubeGeometry {
  Vector3d start;
  Vector3d end;
  double r0;
  double r1;
};

TubeGeometry tube_geometry(const Tube& t, const Skeleton& s, const std::vector<int>& parents) {
  TubeGeometry g;
  g.start = s.joints[t.joint];
  g.r0 = s.radius[t.joint];
  if (t.child >= 0) {
    g.end = s.joints[t.child];
    g.r1 = s.radius[t.child];
  } else if (t.face) {
    g.r0 = s.head_radius;
    g.r1 = s.head_radius * 0.8;
    g.end = g.start + s.head_length * Vector3d::UnitY();
  } else {
    const double len = (t.joint == 10 || t.joint == 11) ? s.foot_length : s.tip_length;
    g.end = g.start + len * leaf_direction(t.joint, s, parents);
    g.r1 = 0.8 * s.radius[t.joint];
  }
  return g;
}

struct VertexInfo {
  int tube = 0;
  double t = 0.0;          // position along the tube axis in [0, 1]
  Vector3d radial;         // outward direction in the rest pose
};

struct Layout {
  std::vector<Tube> tubes;
  std::vector<int> first_vertex;  // per tube
  std::vector<VertexInfo> info;
  std::vector<std::array<int, 3>> faces;
};

// Ring-major vertices per tube followed by the start and end cap centres.
Layout build_layout(const Skeleton& s, const std::vector<int>& parents, const ToyModelOptions& opt) {
  Layout L;
  const int nj = static_cast<int>(parents.size());
  std::vector<std::vector<int>> children(static_cast<std::size_t>(nj));
  for (int j = 1; j < nj; ++j) children[static_cast<std::size_t>(parents[j])].push_back(j);
  for (int j = 0; j < nj; ++j) {
    const Region region = region_of_joint(j);
    const bool hand = region == Region::kLeftHand || region == Region::kRightHand;
    auto make = [&](int child, bool face) {
      Tube t;
      t.joint = j;
      t.child = child;
      t.region = face ? Region::kHead : region;
      t.face = face;
      t.rings = face ? 6 : (hand ? opt.hand_rings : opt.body_rings);
      t.sides = face ? 10 : (hand ? opt.hand_sides : opt.body_sides);
      return t;
    };
    if (children[static_cast<std::size_t>(j)].empty()) {
      L.tubes.push_back(make(-1, j == 15));
    } else {
      for (int c : children[static_cast<std::size_t>(j)]) L.tubes.push_back(make(c, false));
    }
  }
  int next = 0;
  for (std::size_t ti = 0; ti < L.tubes.size(); ++ti) {
    const Tube& t = L.tubes[ti];
    L.first_vertex.push_back(next);
    const TubeGeometry g = tube_geometry(t, s, parents);
    const Vector3d d = (g.end - g.start).normalized();
    Vector3d ref = std::abs(d.y()) < 0.9 ? Vector3d::UnitY() : Vector3d::UnitZ();
    const Vector3d u = (ref - ref.dot(d) * d).normalized();
    const Vector3d w = d.cross(u);
    for (int i = 0; i < t.rings; ++i) {
      for (int k = 0; k < t.sides; ++k) {
        const double phi = 2.0 * std::numbers::pi * k / t.sides;
        L.info.push_back({static_cast<int>(ti), static_cast<double>(i) / (t.rings - 1), std::cos(phi) * u + std::sin(phi) * w});
      }
    }
    L.info.push_back({static_cast<int>(ti), 0.0, -d});
    L.info.push_back({static_cast<int>(ti), 1.0, d});
    const int base = next;
    const int cap0 = base + t.rings * t.sides;
    const int cap1 = cap0 + 1;
    auto vid = [&](int i, int k) { return base + i * t.sides + (k % t.sides); };
    for (int i = 0; i + 1 < t.rings; ++i) {
      for (int k = 0; k < t.sides; ++k) {
        L.faces.push_back({vid(i, k), vid(i, k + 1), vid(i + 1, k)});
        L.faces.push_back({vid(i, k + 1), vid(i + 1, k + 1), vid(i + 1, k)});
      }
    }
    for (int k = 0; k < t.sides; ++k) {
      L.faces.push_back({cap0, vid(0, k + 1), vid(0, k)});
      L.faces.push_back({cap1, vid(t.rings - 1, k), vid(t.rings - 1, k + 1)});
    }
    next = cap1 + 1;
  }
  return L;
}

Points3d place_vertices(const Layout& L, const Skeleton& s, const std::vector<int>& parents) {
  Points3d out(static_cast<Eigen::Index>(L.info.size()), 3);
  for (std::size_t ti = 0; ti < L.tubes.size(); ++ti) {
    const Tube& t = L.tubes[ti];
    const TubeGeometry g = tube_geometry(t, s, parents);
    const Vector3d d = (g.end - g.start).normalized();
    Vector3d ref = std::abs(d.y()) < 0.9 ? Vector3d::UnitY() : Vector3d::UnitZ();
    const Vector3d u = (ref - ref.dot(d) * d).normalized();
    const Vector3d w = d.cross(u);
    const int base = L.first_vertex[ti];
    for (int i = 0; i < t.rings; ++i) {
      const double a = static_cast<double>(i) / (t.rings - 1);
      const Vector3d c = (1.0 - a) * g.start + a * g.end;
      const double r = (1.0 - a) * g.r0 + a * g.r1;
      for (int k = 0; k < t.sides; ++k) {
        const double phi = 2.0 * std::numbers::pi * k / t.sides;
        // Lopsided oval profile, so twist about the bone is visible on the surface.
        const double rk = r * (1.0 + 0.25 * std::cos(2.0 * phi) + 0.12 * std::sin(phi));
        out.row(base + i * t.sides + k) = (c + rk * (std::cos(phi) * u + std::sin(phi) * w)).transpose();
      }
    }
    // Caps sit slightly beyond the end rings so the tube stays closed and convex.
    out.row(base + t.rings * t.sides) = (g.start - 0.5 * g.r0 * d).transpose();
    out.row(base + t.rings * t.sides + 1) = (g.end + 0.5 * g.r1 * d).transpose();
  }
  return out;
}

Eigen::MatrixXd random_orthogonal(int n, CounterRng& rng) {
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  // Fix the sign ambiguity so the result depends on the draws only.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < n; ++i)
    if (r(i, i) < 0) q.col(i) *= -1.0;
  return q;
}

}  // namespace

BodyModel make_toy_model(std::uint64_t seed, const ToyModelOptions& opt) {
  require(opt.num_betas >= 1 && opt.num_betas <= 10, "toy model supports 1..10 shape components");
  require(opt.num_expressions >= 0 && opt.num_expressions <= 3, "toy model supports 0..3 expression components");
  require(opt.hand_latent_dim >= 1 && opt.hand_latent_dim <= 3 * kHandJoints, "hand latent dimension out of range");
  require(opt.body_rings >= 2 && opt.hand_rings >= 2 && opt.body_sides >= 3 && opt.hand_sides >= 3, "tube resolution too low");

  CounterRng rng(seed, 0x7079);
  const std::vector<int> parents = full_parents();
  const Skeleton adult = adult_skeleton();
  const Skeleton child = child_skeleton(adult, parents);
  const Layout L = build_layout(adult, parents, opt);
  const int nv = static_cast<int>(L.info.size());
  const int nj = static_cast<int>(parents.size());

  BodyModel m;
  m.parents = parents;
  m.num_body_joints = kBodyJoints;
  m.adult_template = place_vertices(L, adult, parents);
  m.child_template = place_vertices(L, child, parents);
  m.faces.resize(static_cast<Eigen::Index>(L.faces.size()), 3);
  for (std::size_t f = 0; f < L.faces.size(); ++f)
    for (int k = 0; k < 3; ++k) m.faces(static_cast<Eigen::Index>(f), k) = L.faces[f][static_cast<std::size_t>(k)];

  // Skin weights: each tube follows its bone, blending towards the parent
  // near its start and towards the child joint near its end.
  std::vector<Eigen::Triplet<double>> skin;
  for (int v = 0; v < nv; ++v) {
    const VertexInfo& vi = L.info[static_cast<std::size_t>(v)];
    const Tube& t = L.tubes[static_cast<std::size_t>(vi.tube)];
    double w_self = 1.0;
    const int p = parents[t.joint];
    if (p >= 0 && vi.t < 0.35) {
      const double w = 0.5 * (1.0 - vi.t / 0.35);
      skin.emplace_back(v, p, w);
      w_self -= w;
    }
    if (t.child >= 0 && vi.t > 0.65) {
      const double w = 0.5 * (vi.t - 0.65) / 0.35;
      skin.emplace_back(v, t.child, w);
      w_self -= w;
    }
    skin.emplace_back(v, t.joint, w_self);
  }
  m.skin_weights.resize(nv, nj);
  m.skin_weights.setFromTriplets(skin.begin(), skin.end());

  // Each joint is the mean of the first ring of its first outgoing tube.
  std::vector<Eigen::Triplet<double>> reg;
  std::vector<bool> done(static_cast<std::size_t>(nj), false);
  for (std::size_t ti = 0; ti < L.tubes.size(); ++ti) {
    const Tube& t = L.tubes[ti];
    if (done[static_cast<std::size_t>(t.joint)]) continue;
    done[static_cast<std::size_t>(t.joint)] = true;
    for (int k = 0; k < t.sides; ++k) reg.emplace_back(t.joint, L.first_vertex[ti] + k, 1.0 / t.sides);
  }
  m.joint_regressor.resize(nj, nv);
  m.joint_regressor.setFromTriplets(reg.begin(), reg.end());

  // Shape modes on the adult geometry, mixed by a seeded rotation.
  constexpr int kModes = 10;
  Eigen::MatrixXd modes = Eigen::MatrixXd::Zero(3 * nv, kModes);
  for (int v = 0; v < nv; ++v) {
    const VertexInfo& vi = L.info[static_cast<std::size_t>(v)];
    const Tube& t = L.tubes[static_cast<std::size_t>(vi.tube)];
    const Vector3d p = m.adult_template.row(v).transpose();
    const bool hand = t.region == Region::kLeftHand || t.region == Region::kRightHand;
    const double sx = p.x() >= 0.0 ? 1.0 : -1.0;
    auto set = [&](int mode, const Vector3d& d) { modes.block<3, 1>(3 * v, mode) += d; };
    set(0, 0.05 * p);
    set(1, (hand ? 0.002 : 0.012) * vi.radial);
    if (t.region == Region::kLeg) set(2, Vector3d(0.0, 0.07 * (p.y() + 0.08), 0.0));
    if ((t.region == Region::kArm || hand) && std::abs(p.x()) > 0.18) set(3, Vector3d(0.06 * (p.x() - sx * 0.18), 0.0, 0.0));
    if (t.region == Region::kTorso) {
      set(4, 0.02 * vi.radial);
      set(5, Vector3d(0.0, 0.0, 0.02 * std::max(0.0, vi.radial.z())));
    }
    if (p.y() > 0.4 && std::abs(p.x()) > 0.05 && t.region != Region::kHead) set(6, Vector3d(0.02 * sx, 0.0, 0.0));
    if (t.region == Region::kLeg || (t.joint == 0 && t.child >= 0 && t.child <= 2)) set(7, Vector3d(0.015 * sx, 0.0, 0.0));
    if (t.region == Region::kHead) set(8, 0.01 * vi.radial + Vector3d(0.0, 0.02 * vi.t, 0.0));
    if (t.region == Region::kArm || t.region == Region::kLeg) set(9, 0.008 * vi.radial);
  }
  const Eigen::MatrixXd mix = random_orthogonal(kModes, rng);
  m.shape_basis = modes * mix.leftCols(opt.num_betas);

  // Expressions deform the front of the face tube only.
  m.expr_basis = Eigen::MatrixXd::Zero(3 * nv, opt.num_expressions);
  for (int v = 0; v < nv; ++v) {
    const VertexInfo& vi = L.info[static_cast<std::size_t>(v)];
    if (!L.tubes[static_cast<std::size_t>(vi.tube)].face || vi.radial.z() <= 0.0) continue;
    const Vector3d e[3] = {Vector3d(0.0, 0.0, 0.01 * vi.radial.z()), Vector3d(0.0, -0.008 * (1.0 - vi.t), 0.0),
                           Vector3d(0.008 * vi.radial.x(), 0.0, 0.0)};
    for (int k = 0; k < opt.num_expressions; ++k) m.expr_basis.block<3, 1>(3 * v, k) = e[k];
  }

  // Hand pose basis; the right hand mirrors the left across the x = 0 plane.
  m.left_hand_basis.resize(3 * kHandJoints, opt.hand_latent_dim);
  for (int i = 0; i < 3 * kHandJoints; ++i)
    for (int k = 0; k < opt.hand_latent_dim; ++k) m.left_hand_basis(i, k) = 0.12 * rng.normal();
  m.right_hand_basis = m.left_hand_basis;
  for (int h = 0; h < kHandJoints; ++h) m.right_hand_basis.middleRows(3 * h + 1, 2) *= -1.0;

  PartSets& parts = m.parts;
  for (int j = 0; j < kBodyJoints; ++j) parts.body_joints.push_back(j);
  for (int h = 0; h < kHandJoints; ++h) {
    parts.left_hand_joints.push_back(kBodyJoints + h);
    parts.right_hand_joints.push_back(kBodyJoints + kHandJoints + h);
  }
  for (int v = 0; v < nv; ++v) {
    const Tube& t = L.tubes[static_cast<std::size_t>(L.info[static_cast<std::size_t>(v)].tube)];
    if (t.face) {
      parts.face_vertices.push_back(v);
      if (parts.face_landmarks.size() < 51) parts.face_landmarks.push_back(v);
    } else if (t.region == Region::kLeftHand) {
      parts.left_hand_vertices.push_back(v);
    } else if (t.region == Region::kRightHand) {
      parts.right_hand_vertices.push_back(v);
    } else {
      parts.body_vertices.push_back(v);
    }
  }
  parts.pelvis = 0;
  parts.left_wrist = 20;
  parts.right_wrist = 21;
  parts.neck = 12;

  m.bend_limits = {{18, 1, 1.0}, {19, 1, -1.0}, {4, 0, -1.0}, {5, 0, -1.0}};
  m.validate();
  return m;
}

}  // namespace bodybench
