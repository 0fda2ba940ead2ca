#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "bodybench/common.hpp"
#include "bodybench/rotation.hpp"

namespace bodybench {

enum class Side { kLeft, kRight };

// Hyper-extension limit for a hinge-like joint: the pose component
// `axis` of `joint`, multiplied by `sign`, must not become positive.
struct BendLimit {
  int joint = 0;
  int axis = 0;
  double sign = 1.0;
};

// Named index sets used by evaluation. Joint sets index into the joint
// array, vertex sets into the vertex array. Face landmarks are vertices.
struct PartSets {
  std::vector<int> body_joints;
  std::vector<int> left_hand_joints;
  std::vector<int> right_hand_joints;
  std::vector<int> face_landmarks;

  std::vector<int> body_vertices;
  std::vector<int> left_hand_vertices;
  std::vector<int> right_hand_vertices;
  std::vector<int> face_vertices;

  int pelvis = 0;
  int left_wrist = 20;
  int right_wrist = 21;
  int neck = 12;
};

// Parametric articulated mesh: interpolatable template, linear shape and
// expression spaces, linear blend skinning over a kinematic tree.
// Immutable after construction; all queries are const.
struct BodyModel {
  Points3d adult_template;
  Points3d child_template;
  Triangles faces;
  // Row 3 * v + c holds the displacement of coordinate c of vertex v.
  Eigen::MatrixXd shape_basis;
  Eigen::MatrixXd expr_basis;
  Eigen::SparseMatrix<double, Eigen::RowMajor> joint_regressor;  // J x V
  Eigen::SparseMatrix<double, Eigen::RowMajor> skin_weights;     // V x J
  // parents[0] == -1; parents[j] < j for every other joint.
  std::vector<int> parents;
  int num_body_joints = 22;
  // (3 * hand joints) x latent; row 3 * h + c is component c of the
  // axis-angle of parts.{left,right}_hand_joints[h].
  Eigen::MatrixXd left_hand_basis;
  Eigen::MatrixXd right_hand_basis;
  PartSets parts;
  std::vector<BendLimit> bend_limits;

  int num_vertices() const { return static_cast<int>(adult_template.rows()); }
  int num_joints() const { return static_cast<int>(parents.size()); }
  int num_betas() const { return static_cast<int>(shape_basis.cols()); }
  int num_expressions() const { return static_cast<int>(expr_basis.cols()); }
  int hand_latent_dim() const { return static_cast<int>(left_hand_basis.cols()); }
  int num_keypoints() const { return num_joints() + static_cast<int>(parts.face_landmarks.size()); }

  const Eigen::MatrixXd& hand_basis(Side side) const {
    return side == Side::kLeft ? left_hand_basis : right_hand_basis;
  }
  const std::vector<int>& hand_joints(Side side) const {
    return side == Side::kLeft ? parts.left_hand_joints : parts.right_hand_joints;
  }

  // Throws ContractError describing the first violated invariant.
  void validate() const;
};

template <typename T>
struct PoseParams {
  VecX<T> beta;
  VecX<T> body_pose;  // axis-angle per body joint, root (global orientation) first
  VecX<T> left_hand;  // hand latent
  VecX<T> right_hand;
  VecX<T> expression;
  T alpha = T(1);
  Vec3<T> trans = Vec3<T>::Zero();
};

struct BodyParams : PoseParams<double> {
  std::string identity;

  static BodyParams zeros(const BodyModel& model);

  template <typename T>
  PoseParams<T> cast() const {
    PoseParams<T> out;
    out.beta = beta.cast<T>();
    out.body_pose = body_pose.cast<T>();
    out.left_hand = left_hand.cast<T>();
    out.right_hand = right_hand.cast<T>();
    out.expression = expression.cast<T>();
    out.alpha = T(alpha);
    out.trans = trans.cast<T>();
    return out;
  }

  // Dimensions against the model, alpha in [0, 1], finite entries.
  void validate(const BodyModel& model) const;
};

template <typename T>
struct PosedBodyT {
  Points3<T> vertices;
  Points3<T> joints;
  // World transform of each joint, excluding the global translation.
  std::vector<Mat3<T>> rotations;
  std::vector<Vec3<T>> translations;
};
using PosedBody = PosedBodyT<double>;

// alpha * adult + (1 - alpha) * child. Throws std::domain_error outside [0, 1].
Points3d interpolate_template(const BodyModel& model, double alpha);

// Hand latent to per-joint axis-angle, one row per hand joint.
template <typename T>
Points3<T> expand_hand_pose(const BodyModel& model, Side side, const VecX<T>& latent) {
  const Eigen::MatrixXd& basis = model.hand_basis(side);
  require(latent.size() == basis.cols(), "hand latent dimension mismatch");
  const Eigen::Index n = basis.rows() / 3;
  Points3<T> out(n, 3);
  for (Eigen::Index h = 0; h < n; ++h) {
    for (int c = 0; c < 3; ++c) {
      T acc(0);
      for (Eigen::Index k = 0; k < basis.cols(); ++k) acc += basis(3 * h + c, k) * latent[k];
      out(h, c) = acc;
    }
  }
  return out;
}

// Shaped template (before posing) as a flat 3V vector.
template <typename T>
VecX<T> shaped_template(const BodyModel& model, const PoseParams<T>& params) {
  const Eigen::Index n = 3 * static_cast<Eigen::Index>(model.num_vertices());
  VecX<T> shaped(n);
  const T a = params.alpha;
  const T b = T(1) - params.alpha;
  for (Eigen::Index v = 0; v < model.num_vertices(); ++v) {
    for (int c = 0; c < 3; ++c) {
      shaped[3 * v + c] = a * model.adult_template(v, c) + b * model.child_template(v, c);
    }
  }
  for (Eigen::Index k = 0; k < model.shape_basis.cols(); ++k) {
    const double* col = model.shape_basis.col(k).data();
    const T& coeff = params.beta[k];
    for (Eigen::Index i = 0; i < n; ++i) shaped[i] += col[i] * coeff;
  }
  for (Eigen::Index k = 0; k < model.expr_basis.cols(); ++k) {
    const double* col = model.expr_basis.col(k).data();
    const T& coeff = params.expression[k];
    for (Eigen::Index i = 0; i < n; ++i) shaped[i] += col[i] * coeff;
  }
  return shaped;
}

template <typename T>
void check_dimensions(const BodyModel& model, const PoseParams<T>& params) {
  require(params.beta.size() == model.num_betas(), "beta dimension mismatch");
  require(params.expression.size() == model.num_expressions(), "expression dimension mismatch");
  require(params.body_pose.size() == 3 * model.num_body_joints, "body pose dimension mismatch");
  require(params.left_hand.size() == model.hand_latent_dim(), "left hand latent dimension mismatch");
  require(params.right_hand.size() == model.hand_latent_dim(), "right hand latent dimension mismatch");
}

namespace detail {

// Shaped (unposed) position of one vertex.
template <typename T>
Vec3<T> shaped_vertex(const BodyModel& model, const PoseParams<T>& params, Eigen::Index v) {
  Vec3<T> x;
  for (int c = 0; c < 3; ++c) {
    const Eigen::Index row = 3 * v + c;
    T acc = params.alpha * model.adult_template(v, c) + (T(1) - params.alpha) * model.child_template(v, c);
    for (Eigen::Index k = 0; k < model.shape_basis.cols(); ++k) acc += model.shape_basis(row, k) * params.beta[k];
    for (Eigen::Index k = 0; k < model.expr_basis.cols(); ++k) acc += model.expr_basis(row, k) * params.expression[k];
    x[c] = acc;
  }
  return x;
}

template <typename T>
PosedBodyT<T> forward_impl(const BodyModel& model, const PoseParams<T>& params, const std::vector<int>* subset) {
  check_dimensions(model, params);
  const int num_joints = model.num_joints();

  Points3<T> rest(num_joints, 3);
  for (int j = 0; j < num_joints; ++j) {
    Vec3<T> acc = Vec3<T>::Zero();
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.joint_regressor, j); it; ++it) {
      acc += it.value() * shaped_vertex(model, params, it.col());
    }
    rest.row(j) = acc.transpose();
  }

  std::vector<Mat3<T>> local(num_joints, Mat3<T>::Identity());
  for (int j = 0; j < model.num_body_joints; ++j) {
    local[j] = rodrigues<T>(params.body_pose.template segment<3>(3 * j));
  }
  for (Side side : {Side::kLeft, Side::kRight}) {
    const Points3<T> aa = expand_hand_pose<T>(model, side, side == Side::kLeft ? params.left_hand : params.right_hand);
    const std::vector<int>& joints = model.hand_joints(side);
    for (std::size_t h = 0; h < joints.size(); ++h) {
      local[joints[h]] = rodrigues<T>(aa.row(static_cast<Eigen::Index>(h)).transpose());
    }
  }

  PosedBodyT<T> out;
  out.rotations.resize(num_joints);
  out.translations.resize(num_joints);
  for (int j = 0; j < num_joints; ++j) {
    const int p = model.parents[j];
    const Vec3<T> rest_j = rest.row(j).transpose();
    if (p < 0) {
      out.rotations[j] = local[j];
      out.translations[j] = rest_j;
    } else {
      const Vec3<T> offset = rest_j - rest.row(p).transpose();
      out.rotations[j] = out.rotations[p] * local[j];
      out.translations[j] = out.rotations[p] * offset + out.translations[p];
    }
  }

  // Skinning transforms map rest-pose points to posed points.
  std::vector<Vec3<T>> skin_t(num_joints);
  for (int j = 0; j < num_joints; ++j) {
    skin_t[j] = out.translations[j] - out.rotations[j] * rest.row(j).transpose();
  }

  const int count = subset ? static_cast<int>(subset->size()) : model.num_vertices();
  out.vertices.resize(count, 3);
  for (int i = 0; i < count; ++i) {
    const int v = subset ? (*subset)[i] : i;
    const Vec3<T> x = shaped_vertex(model, params, v);
    Vec3<T> acc = Vec3<T>::Zero();
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.skin_weights, v); it; ++it) {
      const Eigen::Index j = it.col();
      acc += it.value() * (out.rotations[j] * x + skin_t[j]);
    }
    out.vertices.row(i) = (acc + params.trans).transpose();
  }

  out.joints.resize(num_joints, 3);
  for (int j = 0; j < num_joints; ++j) out.joints.row(j) = (out.translations[j] + params.trans).transpose();
  return out;
}

}  // namespace detail

// Shapes, poses and skins the model. Pure; generic over the scalar type.
template <typename T>
PosedBodyT<T> forward(const BodyModel& model, const PoseParams<T>& params) {
  return detail::forward_impl(model, params, nullptr);
}

// Joints plus only the listed vertices: row i of `vertices` is vertex subset[i].
template <typename T>
PosedBodyT<T> forward_subset(const BodyModel& model, const PoseParams<T>& params, const std::vector<int>& subset) {
  return detail::forward_impl(model, params, &subset);
}

inline PosedBody forward(const BodyModel& model, const BodyParams& params) {
  return forward<double>(model, static_cast<const PoseParams<double>&>(params));
}

// Evaluation keypoints: all joints followed by the face landmark vertices.
template <typename T>
Points3<T> keypoints(const BodyModel& model, const PosedBodyT<T>& posed) {
  const auto& lm = model.parts.face_landmarks;
  Points3<T> out(model.num_joints() + static_cast<int>(lm.size()), 3);
  out.topRows(model.num_joints()) = posed.joints;
  for (std::size_t i = 0; i < lm.size(); ++i) out.row(model.num_joints() + static_cast<Eigen::Index>(i)) = posed.vertices.row(lm[i]);
  return out;
}

// Model surface as a triangle mesh in the posed configuration.
struct TriMesh;
TriMesh posed_mesh(const BodyModel& model, const PosedBody& posed);

struct ToyModelOptions {
  int num_betas = 10;
  int num_expressions = 3;
  int hand_latent_dim = 6;
  // Rings and sides of each limb tube; hands use a coarser tube.
  int body_rings = 4;
  int body_sides = 8;
  int hand_rings = 2;
  int hand_sides = 5;
};

// Deterministic procedural humanoid: 22 body joints, 15 joints per hand,
// closed capsule-like tubes per bone, 51 face landmark vertices.
// The same seed always yields the same model.
BodyModel make_toy_model(std::uint64_t seed, const ToyModelOptions& options = {});

}  // namespace bodybench
