#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bodybench/bodymodel.hpp"
#include "bodybench/geometry.hpp"

namespace bodybench {

// Scan surface with per-vertex skin / cloth / other probabilities.
struct LabeledScan {
  TriMesh mesh;
  Eigen::VectorXd p_skin;
  Eigen::VectorXd p_cloth;
  Eigen::VectorXd p_other;
  std::string identity;
  bool is_child = false;

  int num_points() const { return static_cast<int>(mesh.positions.rows()); }
  void validate() const;
};

// 2D landmark detections in one calibrated view. Row k corresponds to
// keypoint k of the model (joints, then face landmarks).
struct LandmarkView {
  Camera camera;
  Points2d points;
  Eigen::VectorXd confidence;
};
using LandmarkSet = std::vector<LandmarkView>;

struct FitWeights {
  double landmark = 1.0;  // lambda_J
  double skin = 1.0;
  double cloth = 1.0;
  double interbeta = 1.0;
  double inner = 1.0;  // penalty on cloth points inside the body
  double body_pose = 1e-3;
  double hand_pose = 1e-3;
  double shape = 1e-3;
  double expression = 1e-3;
  double bend = 1e-2;
};

struct SolverSettings {
  int max_iterations = 100;
  double gradient_tolerance = 1e-12;
  double function_tolerance = 1e-12;
  double parameter_tolerance = 1e-12;
  double initial_trust_region = 1e4;
};

struct FitConfig {
  // Landmark-only initialization; landmark residuals in pixels.
  FitWeights init;
  // Joint 2D + 3D refinement.
  FitWeights refine;
  double landmark_sigma = 100.0;  // pixels
  double surface_sigma = 0.05;    // metres
  int num_cameras = 4;
  SolverSettings init_solver;
  int warmup_iterations = 30;        // cap for the first two initialization stages
  double warmup_prior_scale = 100.0;  // pose prior multiplier in those stages
  SolverSettings inner_solver;
  int outer_iterations = 40;
  int prealign_iterations = 10;  // leading iterations that also pull model vertices onto the scan
  int max_backtracks = 6;  // step halvings tried when an outer step raises the energy
  double outer_tolerance = 1e-9;  // relative energy decrease that ends refinement

  static FitConfig defaults();
  void validate() const;
};

// Geman-McClure: sigma^2 x^2 / (sigma^2 + x^2). Throws std::domain_error for sigma <= 0.
double geman_mcclure(double x, double sigma);

// Sum over views and keypoints of conf * rho(|project(kp) - obs|). Keypoints
// that do not project (behind the camera) are skipped and counted in
// `excluded`. Throws ContractError if no landmark is usable.
double landmark_energy(const BodyModel& model, const PosedBody& posed, const LandmarkSet& views, double sigma,
                       int* excluded = nullptr);

// Model surface with its acceleration structure and pseudo-normals.
class SurfaceIndex {
 public:
  explicit SurfaceIndex(TriMesh mesh);
  SurfaceIndex(const SurfaceIndex&) = delete;
  SurfaceIndex& operator=(const SurfaceIndex&) = delete;

  const TriMesh& mesh() const { return mesh_; }
  const Bvh& bvh() const { return bvh_; }
  const PseudoNormals& normals() const { return normals_; }

  ClosestPoint closest(const Eigen::Vector3d& q) const { return closest_point(mesh_, bvh_, q); }
  SurfaceSide side(const Eigen::Vector3d& q, const ClosestPoint& cp) const {
    return signed_side(q, cp.point, normals_.at(cp));
  }

 private:
  TriMesh mesh_;
  Bvh bvh_;
  PseudoNormals normals_;
};

double skin_energy(const LabeledScan& scan, const SurfaceIndex& surface, double sigma);

struct ClothEnergy {
  double outside = 0.0;  // sum of rho(sqrt(p) d) over cloth points outside the body
  double inside = 0.0;   // sum of p d^2 over penetrating cloth points, before lambda_inner
  int num_inside = 0;
  double total(double lambda_inner) const { return outside + lambda_inner * inside; }
};

ClothEnergy cloth_energy(const LabeledScan& scan, const SurfaceIndex& surface, double sigma);

// Sum over pairs i < j of |beta_i - beta_j|^2.
double interbeta_energy(const std::vector<Eigen::VectorXd>& betas);

// Bend penalty for one pose component beyond its limit: (exp(max(x, 0)) - 1)^2.
double bend_barrier(double signed_angle);

// Weighted L2 priors plus the elbow/knee bend barrier. Global orientation is
// not penalized.
double regularizer(const BodyModel& model, const PoseParams<double>& params, const FitWeights& weights);

struct EnergyBreakdown {
  double landmark = 0.0;  // weighted
  double skin = 0.0;      // weighted
  double cloth = 0.0;     // weighted, inner penalty included
  double reg = 0.0;
  double interbeta = 0.0;
  double total() const { return landmark + skin + cloth + reg + interbeta; }
};

// Virtual cameras evenly spaced on a horizontal ring around `target`.
std::vector<Camera> make_camera_rig(const Eigen::Vector3d& target, int count, double radius = 3.0,
                                    double focal = 900.0, int width = 640, int height = 640);

struct InitResult {
  BodyParams params;
  double initial_energy = 0.0;
  double final_energy = 0.0;
  int iterations = 0;
  int excluded_projections = 0;
  bool converged = false;
  std::string message;
};

// Multi-view landmark fit from the rest pose in three stages (global
// orientation and translation; + body pose; + shape, hands, expression and
// child blend). Requires at least 6 valid landmarks across all views.
InitResult fit_multiview_init(const BodyModel& model, const LabeledScan& scan, const LandmarkSet& landmarks,
                              const FitConfig& config);

struct IterationRecord {
  int iteration = 0;
  EnergyBreakdown energy;
  bool accepted = true;
};

struct ScanFit {
  BodyParams params;
  EnergyBreakdown energy;  // this scan's terms at the final parameters (interbeta excluded)
};

struct FitResult {
  std::vector<ScanFit> scans;
  std::vector<IterationRecord> log;
  double final_energy = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

// Joint refinement of all scans of one identity against landmarks and scan
// surfaces, with the inter-shape coupling and a shared child blend for
// child scans. Outer-iteration energies are non-increasing.
FitResult fit_refine(const BodyModel& model, const std::vector<LabeledScan>& scans,
                     const std::vector<LandmarkSet>& landmarks, const std::vector<BodyParams>& init,
                     const FitConfig& config);

// Objective of fit_refine evaluated with live closest points.
EnergyBreakdown refine_energy(const BodyModel& model, const std::vector<LabeledScan>& scans,
                              const std::vector<LandmarkSet>& landmarks, const std::vector<BodyParams>& params,
                              const FitConfig& config, std::vector<EnergyBreakdown>* per_scan = nullptr);

enum class RefineTerm { kLandmark, kSkin, kCloth, kRegularizer };

struct TermGradient {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

// Parameters as one vector: translation, body pose, left hand, right hand,
// shape, expression, then alpha for child scans.
Eigen::VectorXd flatten_params(const BodyParams& params, bool child);
BodyParams unflatten_params(const BodyModel& model, const Eigen::VectorXd& x, bool child, const std::string& identity);

// One weighted refinement term as fit_refine assembles it for a single scan,
// with correspondences taken at `params`. The gradient uses the
// flatten_params layout; a child alpha must lie strictly inside (0, 1).
TermGradient refine_term_gradient(const BodyModel& model, const LabeledScan& scan, const LandmarkSet& landmarks,
                                  const BodyParams& params, const FitConfig& config, RefineTerm term);

// Weighted inter-shape term; the gradient stacks the betas in order.
TermGradient interbeta_gradient(const std::vector<Eigen::VectorXd>& betas, double weight);

// p_skin-weighted mean distance from scan points to the fitted surface, in mm.
// Absent when the scan carries no skin probability.
std::optional<double> skin_error(const LabeledScan& scan, const SurfaceIndex& fitted);

struct PenetrationError {
  std::optional<double> percent;  // p_cloth-weighted share of cloth points inside the body
  std::optional<double> mean_mm;  // p-weighted mean distance of the penetrating points
};

PenetrationError cloth_penetration_error(const LabeledScan& scan, const SurfaceIndex& fitted);

}  // namespace bodybench
