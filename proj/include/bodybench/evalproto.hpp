#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bodybench/bodymodel.hpp"
#include "bodybench/geometry.hpp"

namespace bodybench {

enum class Part { kBody, kLeftHand, kRightHand, kFace };

const char* part_name(Part part);  // "B", "LH", "RH", "F"

struct TruthPerson {
  int id = 0;
  BodyParams params;
  Points3d keypoints;  // world frame: joints then face landmarks
  Points3d vertices;   // world frame
  bool is_child = false;
  bool bfh = true;  // body, face and hands reliable; false means body only
};

struct SceneTruth {
  std::string name;
  int width = 0;
  int height = 0;
  Camera camera;
  std::vector<TruthPerson> persons;
  std::vector<Eigen::AlignedBox3d> occluders;  // world-frame boxes, rendered as background
  MaskImage masks;

  // Ids unique, image size matches the camera and masks, geometry matches
  // forward(params) within `tolerance`.
  void validate(const BodyModel& model, double tolerance = 1e-6) const;
  // Recomputes keypoints and vertices of every person from its parameters.
  void regenerate(const BodyModel& model);
};

// Keypoints (and optionally vertices) in the camera frame of `camera`, whose
// intrinsics are used to project them.
struct PredictedPerson {
  int id = 0;
  Points3d keypoints;
  std::optional<Points3d> vertices;
  Camera camera;
};

struct ScenePrediction {
  std::string scene;
  std::vector<PredictedPerson> persons;
};

struct MatchedPair {
  int pred = 0;
  int gt = 0;
  double error_px = 0.0;  // mean 2D body joint error
};

struct MatchOutcome {
  std::vector<MatchedPair> pairs;  // sorted by gt id
  std::vector<int> false_positives;
  std::vector<int> false_negatives;
};

// Projected body joints of every truth person and prediction.
struct ProjectedScene {
  std::vector<Points2d> truth;
  std::vector<Points2d> pred;
};
ProjectedScene project_scene(const BodyModel& model, const SceneTruth& scene, const ScenePrediction& preds);

// Optimal one-to-one assignment on a cost matrix where NaN marks a
// forbidden pair: most pairs first, then least total cost. Returns the
// column per row, -1 when unassigned. Rows and columns are taken in order;
// among equal optima earlier columns win.
std::vector<int> assign_min_cost(const Eigen::MatrixXd& cost);

// Pairs need projected body-joint box IoU >= tau; cost is the mean 2D body
// joint error. Invariant under reordering of either list.
MatchOutcome match(const BodyModel& model, const SceneTruth& scene, const ScenePrediction& preds, double tau = 0.1);

// Rows of the keypoint array for a part, and the row of its anchor joint.
std::vector<int> part_keypoints(const BodyModel& model, Part part);
const std::vector<int>& part_vertices(const BodyModel& model, Part part);
int part_anchor(const BodyModel& model, Part part);

// Mean anchor-aligned distance in mm over the part's keypoints. Inputs in metres.
double part_mpjpe(const BodyModel& model, const Points3d& pred, const Points3d& gt, Part part);
// Same over the part's vertices, anchored at the keypoint anchors.
double part_mve(const BodyModel& model, const Points3d& pred_vertices, const Points3d& pred_keypoints,
                const Points3d& gt_vertices, const Points3d& gt_keypoints, Part part);

double fb_error(double b, double lh, double rh, double f);

struct DetectionScores {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

DetectionScores detection_scores(const std::vector<MatchOutcome>& outcomes);

struct NormalizedErrors {
  std::optional<double> nmje;
  std::optional<double> nmve;
};

// Absent when f1 is 0; throws ContractError outside [0, 1].
NormalizedErrors normalized_errors(double mpjpe, std::optional<double> mve, double f1);

// 100 (1 - visible / unoccluded) for one person. Absent when the person's
// unoccluded render is empty.
std::optional<double> occlusion_percent(const MaskImage& masks, int person_id);

// Horizontal angle between the body's forward direction and the direction
// to the camera, in [0, 180] degrees; 0 faces the camera.
double yaw_degrees(const BodyModel& model, const TruthPerson& person, const Camera& camera);

struct PersonRecord {
  std::string scene;
  int gt = 0;
  bool matched = false;
  double b_mpjpe = 0.0;  // mm, meaningful when matched
  std::optional<double> occlusion;  // percent
  double center_distance = 0.0;     // px, horizontal, from the image centre
  double image_width = 0.0;
  double yaw = 0.0;  // degrees
};

enum class BinKind { kOcclusion, kCenter, kYaw };

const char* bin_kind_name(BinKind kind);  // "occlusion", "center", "yaw"

struct BinRow {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  int matched = 0;
  std::optional<double> miss_rate;
  std::optional<double> mean_b_mpjpe;
  std::optional<double> recall_nmje;
};

// Occlusion: ten 10% bins. Centre distance: `bins` equal bins over
// [0, W/2] (default 8; beyond W/2 joins the last). Yaw: `bins` equal bins
// over [0, 180] (default 12). Records without the covariate are skipped.
std::vector<BinRow> binned_analysis(const std::vector<PersonRecord>& records, BinKind kind, int bins = 0);

struct PartErrors {
  std::optional<double> mpjpe;  // mm
  std::optional<double> mve;    // mm
};

struct EvalReport {
  DetectionScores detection;
  PartErrors body, left_hand, right_hand, face, full_body;
  NormalizedErrors body_normalized;
  NormalizedErrors full_body_normalized;
  std::vector<PersonRecord> records;
  std::vector<MatchOutcome> outcomes;
};

struct EvalOptions {
  double tau = 0.1;
  std::vector<Part> parts = {Part::kBody, Part::kLeftHand, Part::kRightHand, Part::kFace};
};

// Matches every scene (predictions paired by scene name; missing means none),
// and aggregates. Body errors average over matched persons; hand, face and
// full-body errors over matched BFH persons only.
EvalReport evaluate(const BodyModel& model, const std::vector<SceneTruth>& scenes,
                    const std::vector<ScenePrediction>& predictions, const EvalOptions& options = {});

// Predictions equal to the truth, in the scene camera frame.
ScenePrediction truth_as_prediction(const SceneTruth& scene);

}  // namespace bodybench
