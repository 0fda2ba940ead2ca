#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "bodybench/common.hpp"

namespace bodybench {

// Pinhole camera. World points map to the camera frame by
// x_cam = rotation * x_world + translation; the camera looks along +z with
// +x right and +y down in the image.
struct Camera {
  double focal = 1000.0;
  Eigen::Vector2d principal = Eigen::Vector2d(320.0, 180.0);
  int width = 640;
  int height = 360;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  void validate() const;

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return rotation * world + translation; }
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

  // Camera looking at `target` from `eye`, with world +y up.
  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double focal, int width, int height);
};

// Projects a camera-frame point. Returns false (pixel untouched) when the
// point is not strictly in front of the camera.
template <typename T>
bool project_camera_point(const Camera& cam, const Vec3<T>& p, Vec2<T>* pixel) {
  if (!(p.z() > T(0))) return false;
  (*pixel)[0] = cam.focal * p.x() / p.z() + cam.principal.x();
  (*pixel)[1] = cam.focal * p.y() / p.z() + cam.principal.y();
  return true;
}

template <typename T>
bool project_world_point(const Camera& cam, const Vec3<T>& world, Vec2<T>* pixel) {
  const Vec3<T> p = cam.rotation.cast<T>() * world + cam.translation.cast<T>();
  return project_camera_point<T>(cam, p, pixel);
}

struct Projection {
  Points2d pixels;
  // valid[i] is false for points at or behind the camera plane; their
  // pixels are NaN rather than clamped.
  std::vector<bool> valid;

  int num_invalid() const;
};

Projection project(const Camera& cam, const Points3d& world);
// Points already expressed in the camera frame; extrinsics are ignored.
Projection project_camera_frame(const Camera& cam, const Points3d& cam_points);
Eigen::Vector3d unproject(const Camera& cam, const Eigen::Vector2d& pixel, double depth);

struct TriMesh {
  Points3d positions;
  Triangles triangles;

  // Drops triangles whose area is at most `min_area`. Returns the number removed.
  int filter_degenerate(double min_area = 1e-14);
  void validate() const;
  int num_triangles() const { return static_cast<int>(triangles.rows()); }
};

// Closed box with outward-facing triangles.
TriMesh box_mesh(const Eigen::AlignedBox3d& box);

enum class Feature : std::uint8_t { kVertex0, kVertex1, kVertex2, kEdge01, kEdge12, kEdge20, kFace };

struct ClosestPoint {
  double distance = 0.0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  int triangle = -1;
  Eigen::Vector3d barycentric = Eigen::Vector3d::Zero();
  Feature feature = Feature::kFace;
};

ClosestPoint closest_point_on_triangle(const Eigen::Vector3d& q, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                       const Eigen::Vector3d& c);

// Axis-aligned bounding volume hierarchy over the triangles of a mesh.
// Leaves hold at most kLeafSize triangles.
class Bvh {
 public:
  static constexpr int kLeafSize = 4;

  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1;  // child node indices; -1 for leaves
    int right = -1;
    int first = 0;  // range into triangle_order() for leaves
    int count = 0;
    bool is_leaf() const { return left < 0; }
  };

  Bvh() = default;
  explicit Bvh(const TriMesh& mesh);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<int>& triangle_order() const { return order_; }
  bool empty() const { return nodes_.empty(); }

 private:
  int build(const TriMesh& mesh, const std::vector<Eigen::AlignedBox3d>& boxes,
            const std::vector<Eigen::Vector3d>& centroids, int first, int count);

  std::vector<Node> nodes_;
  std::vector<int> order_;
};

// Exact nearest surface point. Ties between triangles resolve to the lowest
// triangle index so results match the exhaustive search bit for bit.
ClosestPoint closest_point(const TriMesh& mesh, const Bvh& bvh, const Eigen::Vector3d& q);
ClosestPoint closest_point_brute_force(const TriMesh& mesh, const Eigen::Vector3d& q);

// Angle-weighted pseudo-normals: face normals for interior points, the sum
// of incident face normals on edges, angle-weighted vertex normals at vertices.
class PseudoNormals {
 public:
  explicit PseudoNormals(const TriMesh& mesh);

  Eigen::Vector3d at(const ClosestPoint& cp) const;
  const Points3d& face_normals() const { return face_normals_; }
  const Points3d& vertex_normals() const { return vertex_normals_; }

 private:
  static std::uint64_t edge_key(int a, int b);

  const TriMesh* mesh_;
  Points3d face_normals_;
  Points3d vertex_normals_;
  std::unordered_map<std::uint64_t, Eigen::Vector3d> edge_normals_;
};

enum class SurfaceSide { kInside, kOutside };

// Inside iff <m - q, n> > 0. Exactly on the surface counts as outside.
SurfaceSide signed_side(const Eigen::Vector3d& q, const Eigen::Vector3d& nearest, const Eigen::Vector3d& normal);

// Label raster: 0 is background, k > 0 is person k. unoccluded[i] is the
// binary coverage of person_ids[i] rendered alone.
struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> labels;
  std::vector<int> person_ids;
  std::vector<std::vector<std::uint8_t>> unoccluded;

  std::uint16_t label(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  int count_label(int id) const;
  // Index into person_ids / unoccluded, or -1.
  int person_index(int id) const;
  int unoccluded_count(int id) const;
};

struct RasterItem {
  const TriMesh* mesh = nullptr;
  int person_id = 0;  // 0 renders as an occluder: writes depth, labels background
};

// Z-buffered rasterization sampling pixel centres with a top-left fill rule.
// Triangles touching or crossing the camera plane are skipped.
MaskImage rasterize(std::span<const RasterItem> items, const Camera& cam);

struct Box2 {
  Eigen::Vector2d lo;
  Eigen::Vector2d hi;
  double area() const { return std::max(0.0, hi.x() - lo.x()) * std::max(0.0, hi.y() - lo.y()); }
};

Box2 bounding_box(const Points2d& points);

struct IouResult {
  double iou = 0.0;
  bool degenerate = false;  // one of the boxes has zero area; iou is then 0
};

IouResult aabb_iou(const Points2d& a, const Points2d& b);
IouResult box_iou(const Box2& a, const Box2& b);

}  // namespace bodybench
