#pragma once

#include <cstdint>
#include <vector>

#include "bodybench/bodymodel.hpp"
#include "bodybench/evalproto.hpp"
#include "bodybench/fitter.hpp"
#include "bodybench/geometry.hpp"
#include "bodybench/rng.hpp"

namespace bodybench {

struct GenSpec {
  std::uint64_t seed = 0;
  int num_scenes = 4;
  int min_persons = 5;
  int max_persons = 15;

  // Parameter sampling; standard deviations unless noted.
  double pose_sd = 0.2;  // radians, body joints below the root
  double hand_sd = 0.5;
  double beta_sd = 1.0;
  double expr_sd = 0.5;
  double scan_max_yaw = 0.5;  // radians, scans face roughly +z
  double child_probability = 0.2;
  double child_alpha_min = 0.0;
  double child_alpha_max = 0.6;

  // Clothing: outward normal offsets (metres) on torso and leg regions.
  bool clothed = true;
  double cloth_offset_min = 0.002;
  double cloth_offset_max = 0.010;
  double label_noise = 0.0;  // probability mass moved off the dominant label, at most this

  // Scenes.
  std::vector<double> focal_mm = {18.0, 28.0, 50.0};
  int image_width = 640;
  int image_height = 360;
  double min_depth = 4.0;
  double max_depth = 14.0;
  double max_overlap = 0.3;  // allowed ground-plane box overlap between persons, as IoU
  double occluder_probability = 0.3;
  double bfh_probability = 0.7;
  int placement_retries = 50;

  void validate() const;
};

// Random shape, pose, hands, expression for one person. Elbow and knee
// components are kept on the anatomically valid side.
BodyParams sample_params(const BodyModel& model, const GenSpec& spec, CounterRng& rng, bool child);
// Replaces the pose (body pose below the root, hands, expression) in place.
void sample_pose(const BodyModel& model, const GenSpec& spec, CounterRng& rng, BodyParams& params);

struct GenScan {
  LabeledScan scan;
  BodyParams truth;
};

// Vertices belonging to the clothing region (torso, upper arms, legs).
std::vector<int> clothing_region(const BodyModel& model);

// Scan from known parameters. Clothed vertices move outward along the vertex
// normal; a displacement that would not land outside the body at the
// intended distance is dropped and the vertex stays skin.
LabeledScan make_scan(const BodyModel& model, const BodyParams& truth, const GenSpec& spec, CounterRng& rng,
                      const std::string& identity, bool is_child);

GenScan gen_scan(const BodyModel& model, const GenSpec& spec, CounterRng& rng, const std::string& identity);

// Several scans of one identity: shared shape and child blend, separate poses.
std::vector<GenScan> gen_identity_scans(const BodyModel& model, const GenSpec& spec, CounterRng& rng,
                                        const std::string& identity, int count);

// Detections from projecting the true keypoints into each camera, with
// isotropic pixel noise.
LandmarkSet synthesize_landmarks(const BodyModel& model, const BodyParams& truth, const std::vector<Camera>& cameras,
                                 double noise_px, CounterRng& rng);

// Default camera ring around a scan.
std::vector<Camera> scan_cameras(const LabeledScan& scan, int count);

// Pixel focal length for a lens on a 36 mm wide sensor.
double focal_pixels(double focal_mm, int image_width);

// Camera at eye height 1.5 m above the origin looking horizontally along +z.
Camera scene_camera(double focal_px, int width, int height);

// Rasterizes the persons (by id) and occluder boxes of a scene.
MaskImage render_masks(const SceneTruth& scene, const BodyModel& model);

struct SceneLog {
  int requested = 0;  // person count drawn before placement
  int restarts = 0;   // placement failures, each retried with one person fewer
};

// Persons standing on the ground plane y = 0 at random depth, horizontal
// image position and heading; ground-plane footprints of any two overlap by
// at most spec.max_overlap (IoU). Ids run 1..N.
SceneTruth gen_scene(const BodyModel& model, const GenSpec& spec, CounterRng& rng, const std::string& name,
                     SceneLog* log = nullptr);

struct DegradeSpec {
  double noise_mm = 0.0;  // isotropic per-coordinate standard deviation
  double miss_rate = 0.0;
  double fp_rate = 0.0;  // expected spurious detections per truth person
  double tau = 0.1;      // spurious boxes keep IoU below this against every truth box
  bool vertices = true;

  void validate() const;
};

struct DegradeStats {
  int kept = 0;
  int dropped = 0;
  int injected = 0;
  int fp_placement_failures = 0;
};

// Truth in the scene camera frame with Gaussian noise, persons dropped with
// probability miss_rate, and per truth person a spurious detection with
// probability fp_rate: a copy of a random truth body moved to a spot whose
// projected box stays below tau IoU with every truth box. Kept persons keep
// their truth id; spurious ones get ids from 1001.
ScenePrediction degrade_predictions(const BodyModel& model, const SceneTruth& scene, const DegradeSpec& spec,
                                    CounterRng& rng, DegradeStats* stats = nullptr);

}  // namespace bodybench
