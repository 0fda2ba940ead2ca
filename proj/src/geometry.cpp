#include "bodybench/geometry.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace bodybench {

void Camera::validate() const {
  require(focal > 0.0 && std::isfinite(focal), "camera focal must be positive");
  require(width >= 1 && height >= 1, "camera image size must be at least 1x1");
  require(rotation.allFinite() && translation.allFinite() && principal.allFinite(), "camera has non-finite entries");
  const double err = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  require(err <= 1e-9, "camera rotation is not orthonormal");
  require(rotation.determinant() > 0.0, "camera rotation is a reflection");
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double focal, int width, int height) {
  const Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d x = z.cross(Eigen::Vector3d::UnitY());
  if (x.norm() < 1e-9) x = Eigen::Vector3d::UnitX();
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);  // image down
  Camera cam;
  cam.focal = focal;
  cam.width = width;
  cam.height = height;
  cam.principal = Eigen::Vector2d(0.5 * width, 0.5 * height);
  cam.rotation.row(0) = x.transpose();
  cam.rotation.row(1) = y.transpose();
  cam.rotation.row(2) = z.transpose();
  cam.translation = -cam.rotation * eye;
  return cam;
}

TriMesh box_mesh(const Eigen::AlignedBox3d& box) {
  const Eigen::Vector3d lo = box.min(), hi = box.max();
  TriMesh m;
  m.positions.resize(8, 3);
  for (int i = 0; i < 8; ++i)
    m.positions.row(i) << ((i & 1) ? hi.x() : lo.x()), ((i & 2) ? hi.y() : lo.y()), ((i & 4) ? hi.z() : lo.z());
  m.triangles.resize(12, 3);
  m.triangles << 0, 2, 1, 1, 2, 3, 4, 5, 6, 5, 7, 6, 0, 1, 4, 1, 5, 4, 2, 6, 3, 3, 6, 7, 0, 4, 2, 2, 4, 6, 1, 3, 5, 3,
      7, 5;
  return m;
}

int Projection::num_invalid() const {
  return static_cast<int>(std::count(valid.begin(), valid.end(), false));
}

Projection project_camera_frame(const Camera& cam, const Points3d& cam_points) {
  Projection out;
  out.pixels.resize(cam_points.rows(), 2);
  out.valid.assign(static_cast<std::size_t>(cam_points.rows()), false);
  for (Eigen::Index i = 0; i < cam_points.rows(); ++i) {
    Eigen::Vector2d px;
    const bool ok = project_camera_point<double>(cam, cam_points.row(i).transpose(), &px);
    out.valid[static_cast<std::size_t>(i)] = ok;
    if (ok) {
      out.pixels.row(i) = px.transpose();
    } else {
      out.pixels.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

Projection project(const Camera& cam, const Points3d& world) {
  Points3d local(world.rows(), 3);
  for (Eigen::Index i = 0; i < world.rows(); ++i) local.row(i) = cam.to_camera(world.row(i).transpose()).transpose();
  return project_camera_frame(cam, local);
}

Eigen::Vector3d unproject(const Camera& cam, const Eigen::Vector2d& pixel, double depth) {
  const Eigen::Vector3d local((pixel.x() - cam.principal.x()) * depth / cam.focal,
                              (pixel.y() - cam.principal.y()) * depth / cam.focal, depth);
  return cam.rotation.transpose() * (local - cam.translation);
}

namespace {

double triangle_area(const Points3d& p, int a, int b, int c) {
  const Eigen::Vector3d e1 = p.row(b) - p.row(a);
  const Eigen::Vector3d e2 = p.row(c) - p.row(a);
  return 0.5 * e1.cross(e2).norm();
}

}  // namespace

int TriMesh::filter_degenerate(double min_area) {
  Triangles kept(triangles.rows(), 3);
  Eigen::Index n = 0;
  for (Eigen::Index t = 0; t < triangles.rows(); ++t) {
    if (triangle_area(positions, triangles(t, 0), triangles(t, 1), triangles(t, 2)) > min_area) kept.row(n++) = triangles.row(t);
  }
  const int removed = static_cast<int>(triangles.rows() - n);
  kept.conservativeResize(n, 3);
  triangles = std::move(kept);
  return removed;
}

void TriMesh::validate() const {
  const Eigen::Index nv = positions.rows();
  require(positions.allFinite(), "mesh has non-finite positions");
  if (triangles.size() > 0) {
    require(triangles.minCoeff() >= 0 && triangles.maxCoeff() < nv, "mesh triangle index out of range");
  }
}

ClosestPoint closest_point_on_triangle(const Eigen::Vector3d& q, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                       const Eigen::Vector3d& c) {
  // Voronoi-region walk after Ericson, Real-Time Collision Detection 5.1.5.
  ClosestPoint out;
  const Eigen::Vector3d ab = b - a;
  const Eigen::Vector3d ac = c - a;
  const Eigen::Vector3d ap = q - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  auto finish = [&](const Eigen::Vector3d& bary, Feature f) {
    out.barycentric = bary;
    out.feature = f;
    out.point = bary[0] * a + bary[1] * b + bary[2] * c;
    // Exact vertex hits avoid round-off from the weighted sum.
    if (f == Feature::kVertex0) out.point = a;
    if (f == Feature::kVertex1) out.point = b;
    if (f == Feature::kVertex2) out.point = c;
    out.distance = (q - out.point).norm();
    return out;
  };
  if (d1 <= 0.0 && d2 <= 0.0) return finish({1, 0, 0}, Feature::kVertex0);

  const Eigen::Vector3d bp = q - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return finish({0, 1, 0}, Feature::kVertex1);

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return finish({1 - v, v, 0}, Feature::kEdge01);
  }

  const Eigen::Vector3d cp = q - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return finish({0, 0, 1}, Feature::kVertex2);

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return finish({1 - w, 0, w}, Feature::kEdge20);
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return finish({0, 1 - w, w}, Feature::kEdge12);
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return finish({1 - v - w, v, w}, Feature::kFace);
}

namespace {

ClosestPoint closest_on_mesh_triangle(const TriMesh& mesh, int t, const Eigen::Vector3d& q) {
  ClosestPoint cp = closest_point_on_triangle(q, mesh.positions.row(mesh.triangles(t, 0)).transpose(),
                                              mesh.positions.row(mesh.triangles(t, 1)).transpose(),
                                              mesh.positions.row(mesh.triangles(t, 2)).transpose());
  cp.triangle = t;
  return cp;
}

bool better(const ClosestPoint& cand, const ClosestPoint& best) {
  return best.triangle < 0 || cand.distance < best.distance ||
         (cand.distance == best.distance && cand.triangle < best.triangle);
}

}  // namespace

Bvh::Bvh(const TriMesh& mesh) {
  const int n = mesh.num_triangles();
  if (n == 0) return;
  std::vector<Eigen::AlignedBox3d> boxes(static_cast<std::size_t>(n));
  std::vector<Eigen::Vector3d> centroids(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    Eigen::AlignedBox3d box;
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector3d p = mesh.positions.row(mesh.triangles(t, k)).transpose();
      box.extend(p);
      sum += p;
    }
    boxes[static_cast<std::size_t>(t)] = box;
    centroids[static_cast<std::size_t>(t)] = sum / 3.0;
  }
  order_.resize(static_cast<std::size_t>(n));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(static_cast<std::size_t>(2 * n));
  build(mesh, boxes, centroids, 0, n);
}

int Bvh::build(const TriMesh& mesh, const std::vector<Eigen::AlignedBox3d>& boxes,
               const std::vector<Eigen::Vector3d>& centroids, int first, int count) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box;
  Eigen::AlignedBox3d centroid_box;
  for (int i = first; i < first + count; ++i) {
    const int t = order_[static_cast<std::size_t>(i)];
    box.extend(boxes[static_cast<std::size_t>(t)]);
    centroid_box.extend(centroids[static_cast<std::size_t>(t)]);
  }
  nodes_[static_cast<std::size_t>(index)].box = box;
  if (count <= kLeafSize) {
    nodes_[static_cast<std::size_t>(index)].first = first;
    nodes_[static_cast<std::size_t>(index)].count = count;
    return index;
  }
  int axis = 0;
  centroid_box.sizes().maxCoeff(&axis);
  const int mid = first + count / 2;
  auto begin = order_.begin() + first;
  std::nth_element(begin, order_.begin() + mid, begin + count, [&](int a, int b) {
    const double ca = centroids[static_cast<std::size_t>(a)][axis];
    const double cb = centroids[static_cast<std::size_t>(b)][axis];
    return ca < cb || (ca == cb && a < b);
  });
  const int left = build(mesh, boxes, centroids, first, mid - first);
  const int right = build(mesh, boxes, centroids, mid, first + count - mid);
  nodes_[static_cast<std::size_t>(index)].left = left;
  nodes_[static_cast<std::size_t>(index)].right = right;
  return index;
}

ClosestPoint closest_point_brute_force(const TriMesh& mesh, const Eigen::Vector3d& q) {
  require(mesh.num_triangles() > 0, "closest point query on an empty mesh");
  ClosestPoint best;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const ClosestPoint cp = closest_on_mesh_triangle(mesh, t, q);
    if (better(cp, best)) best = cp;
  }
  return best;
}

ClosestPoint closest_point(const TriMesh& mesh, const Bvh& bvh, const Eigen::Vector3d& q) {
  require(mesh.num_triangles() > 0 && !bvh.empty(), "closest point query on an empty mesh");
  ClosestPoint best;
  double best_d2 = std::numeric_limits<double>::infinity();
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  const auto& nodes = bvh.nodes();
  const auto& order = bvh.triangle_order();
  while (top > 0) {
    const Bvh::Node& node = nodes[static_cast<std::size_t>(stack[--top])];
    // Equal distance is kept so lower-index ties are still found.
    if (node.box.squaredExteriorDistance(q) > best_d2) continue;
    if (node.is_leaf()) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const ClosestPoint cp = closest_on_mesh_triangle(mesh, order[static_cast<std::size_t>(i)], q);
        if (better(cp, best)) {
          best = cp;
          best_d2 = cp.distance * cp.distance;
        }
      }
      continue;
    }
    const auto& l = nodes[static_cast<std::size_t>(node.left)];
    const auto& r = nodes[static_cast<std::size_t>(node.right)];
    const double dl = l.box.squaredExteriorDistance(q);
    const double dr = r.box.squaredExteriorDistance(q);
    // Push the farther child first so the nearer one is visited first.
    if (dl <= dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return best;
}

std::uint64_t PseudoNormals::edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

PseudoNormals::PseudoNormals(const TriMesh& mesh) : mesh_(&mesh) {
  const Eigen::Index nt = mesh.triangles.rows();
  face_normals_.setZero(nt, 3);
  vertex_normals_.setZero(mesh.positions.rows(), 3);
  for (Eigen::Index t = 0; t < nt; ++t) {
    const int idx[3] = {mesh.triangles(t, 0), mesh.triangles(t, 1), mesh.triangles(t, 2)};
    const Eigen::Vector3d p[3] = {mesh.positions.row(idx[0]).transpose(), mesh.positions.row(idx[1]).transpose(),
                                  mesh.positions.row(idx[2]).transpose()};
    const Eigen::Vector3d n = (p[1] - p[0]).cross(p[2] - p[0]).normalized();
    face_normals_.row(t) = n.transpose();
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector3d e1 = (p[(k + 1) % 3] - p[k]).normalized();
      const Eigen::Vector3d e2 = (p[(k + 2) % 3] - p[k]).normalized();
      const double angle = std::acos(std::clamp(e1.dot(e2), -1.0, 1.0));
      vertex_normals_.row(idx[k]) += angle * n.transpose();
      auto [it, inserted] = edge_normals_.try_emplace(edge_key(idx[k], idx[(k + 1) % 3]), n);
      if (!inserted) it->second += n;
    }
  }
}

Eigen::Vector3d PseudoNormals::at(const ClosestPoint& cp) const {
  const int t = cp.triangle;
  const auto& tri = mesh_->triangles;
  switch (cp.feature) {
    case Feature::kVertex0:
      return vertex_normals_.row(tri(t, 0)).transpose();
    case Feature::kVertex1:
      return vertex_normals_.row(tri(t, 1)).transpose();
    case Feature::kVertex2:
      return vertex_normals_.row(tri(t, 2)).transpose();
    case Feature::kEdge01:
      return edge_normals_.at(edge_key(tri(t, 0), tri(t, 1)));
    case Feature::kEdge12:
      return edge_normals_.at(edge_key(tri(t, 1), tri(t, 2)));
    case Feature::kEdge20:
      return edge_normals_.at(edge_key(tri(t, 2), tri(t, 0)));
    case Feature::kFace:
      break;
  }
  return face_normals_.row(t).transpose();
}

SurfaceSide signed_side(const Eigen::Vector3d& q, const Eigen::Vector3d& nearest, const Eigen::Vector3d& normal) {
  require(normal.squaredNorm() > 0.0, "signed_side needs a nonzero normal");
  return (nearest - q).dot(normal) > 0.0 ? SurfaceSide::kInside : SurfaceSide::kOutside;
}

int MaskImage::count_label(int id) const {
  return static_cast<int>(std::count(labels.begin(), labels.end(), static_cast<std::uint16_t>(id)));
}

int MaskImage::person_index(int id) const {
  const auto it = std::find(person_ids.begin(), person_ids.end(), id);
  return it == person_ids.end() ? -1 : static_cast<int>(it - person_ids.begin());
}

int MaskImage::unoccluded_count(int id) const {
  const int idx = person_index(id);
  if (idx < 0) return 0;
  const auto& m = unoccluded[static_cast<std::size_t>(idx)];
  return static_cast<int>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

namespace {

struct ScreenVertex {
  double x;
  double y;
  double z;
};

// Signed doubled area of (a, b, p) in image coordinates.
double edge_fn(const ScreenVertex& a, const ScreenVertex& b, double px, double py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

// With the orientation normalized so edge_fn is positive inside (y down),
// top edges run horizontally in +x and left edges run upward.
bool top_left(const ScreenVertex& a, const ScreenVertex& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  return dy < 0.0 || (dy == 0.0 && dx > 0.0);
}

constexpr double kNearPlane = 1e-9;

template <typename Visit>
void scan_triangles(const TriMesh& mesh, const Camera& cam, Visit&& visit) {
  const Eigen::Index nv = mesh.positions.rows();
  std::vector<ScreenVertex> sv(static_cast<std::size_t>(nv));
  for (Eigen::Index i = 0; i < nv; ++i) {
    const Eigen::Vector3d p = cam.to_camera(mesh.positions.row(i).transpose());
    sv[static_cast<std::size_t>(i)] = {cam.focal * p.x() / p.z() + cam.principal.x(),
                                       cam.focal * p.y() / p.z() + cam.principal.y(), p.z()};
  }
  for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t) {
    ScreenVertex a = sv[static_cast<std::size_t>(mesh.triangles(t, 0))];
    ScreenVertex b = sv[static_cast<std::size_t>(mesh.triangles(t, 1))];
    ScreenVertex c = sv[static_cast<std::size_t>(mesh.triangles(t, 2))];
    if (a.z <= kNearPlane || b.z <= kNearPlane || c.z <= kNearPlane) continue;
    double area = edge_fn(a, b, c.x, c.y);
    if (area == 0.0 || !std::isfinite(area)) continue;
    if (area < 0.0) {
      std::swap(b, c);
      area = -area;
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}) - 0.5)));
    const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}) - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}) - 0.5)));
    const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}) - 0.5)));
    const bool tl_bc = top_left(b, c);
    const bool tl_ca = top_left(c, a);
    const bool tl_ab = top_left(a, b);
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double w0 = edge_fn(b, c, px, py);
        const double w1 = edge_fn(c, a, px, py);
        const double w2 = edge_fn(a, b, px, py);
        const bool in0 = w0 > 0.0 || (w0 == 0.0 && tl_bc);
        const bool in1 = w1 > 0.0 || (w1 == 0.0 && tl_ca);
        const bool in2 = w2 > 0.0 || (w2 == 0.0 && tl_ab);
        if (!(in0 && in1 && in2)) continue;
        // Perspective-correct depth: 1/z is affine in screen space.
        const double inv_z = (w0 / a.z + w1 / b.z + w2 / c.z) / area;
        visit(x, y, 1.0 / inv_z);
      }
    }
  }
}

}  // namespace

MaskImage rasterize(std::span<const RasterItem> items, const Camera& cam) {
  cam.validate();
  MaskImage out;
  out.width = cam.width;
  out.height = cam.height;
  const std::size_t npix = static_cast<std::size_t>(cam.width) * static_cast<std::size_t>(cam.height);
  out.labels.assign(npix, 0);
  std::vector<double> depth(npix, std::numeric_limits<double>::infinity());
  for (const RasterItem& item : items) {
    require(item.mesh != nullptr, "raster item without mesh");
    require(item.person_id >= 0 && item.person_id <= 0xFFFF, "person id out of label range");
    const auto label = static_cast<std::uint16_t>(item.person_id);
    scan_triangles(*item.mesh, cam, [&](int x, int y, double z) {
      const std::size_t i = static_cast<std::size_t>(y) * cam.width + x;
      if (z < depth[i]) {
        depth[i] = z;
        out.labels[i] = label;
      }
    });
    if (item.person_id > 0) {
      require(out.person_index(item.person_id) < 0, "duplicate person id in raster items");
      std::vector<std::uint8_t> alone(npix, 0);
      scan_triangles(*item.mesh, cam, [&](int x, int y, double) { alone[static_cast<std::size_t>(y) * cam.width + x] = 1; });
      out.person_ids.push_back(item.person_id);
      out.unoccluded.push_back(std::move(alone));
    }
  }
  return out;
}

Box2 bounding_box(const Points2d& points) {
  require(points.rows() > 0, "bounding box of an empty point set");
  return {points.colwise().minCoeff().transpose(), points.colwise().maxCoeff().transpose()};
}

IouResult box_iou(const Box2& a, const Box2& b) {
  IouResult out;
  const double area_a = a.area();
  const double area_b = b.area();
  if (!(area_a > 0.0) || !(area_b > 0.0)) {
    out.degenerate = true;
    return out;
  }
  const Box2 inter{a.lo.cwiseMax(b.lo), a.hi.cwiseMin(b.hi)};
  const double i = inter.area();
  out.iou = i / (area_a + area_b - i);
  return out;
}

IouResult aabb_iou(const Points2d& a, const Points2d& b) { return box_iou(bounding_box(a), bounding_box(b)); }

}  // namespace bodybench
