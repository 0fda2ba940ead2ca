#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bodybench/evalproto.hpp"
#include "bodybench/fitter.hpp"

namespace bodybench {

namespace fs = std::filesystem;

// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

// Whole-file read and write. Both throw FormatError naming the path.
std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view bytes);

// Corpus layout under a root directory:
//   manifest.txt                      header comments, then "<path> <bytes> <fnv1a64>" per artifact
//   scenes/<name>/scene.json          camera, occluders, per-person parameters and flags
//   scenes/<name>/full.pgm            16-bit person-id labels (0 background)
//   scenes/<name>/person_<id>.pgm     8-bit unoccluded coverage (0 or 255)
//   scans/<name>.obj                  scan mesh
//   scans/<name>.labels.txt           p_skin p_cloth p_other per vertex
//   scans/<name>.landmarks.txt        views: camera then one "u v confidence" row per keypoint
//   scans/<name>.json                 identity, child flag, optional true parameters
// Geometry is never stored: it is rebuilt from the parameters and the body
// model, which itself is rebuilt from the seed in the manifest header.
struct ManifestEntry {
  std::string path;  // relative, '/' separated
  std::uintmax_t size = 0;
  std::uint64_t hash = 0;
};

struct Manifest {
  std::uint64_t model_seed = 1;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;  // sorted by path
};

// Lists every regular file below root except the manifest itself.
Manifest build_manifest(const fs::path& root, std::uint64_t model_seed, std::uint64_t seed);
void write_manifest(const fs::path& root, const Manifest& manifest);
Manifest read_manifest(const fs::path& root);
// Paths whose size or hash differ from the manifest, or that are missing.
std::vector<std::string> verify_manifest(const fs::path& root, const Manifest& manifest);

void write_pgm16(const fs::path& path, int width, int height, const std::vector<std::uint16_t>& pixels);
std::vector<std::uint16_t> read_pgm16(const fs::path& path, int* width, int* height);
void write_pgm8(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& pixels);
std::vector<std::uint8_t> read_pgm8(const fs::path& path, int* width, int* height);

std::string params_to_json(const BodyParams& params);
BodyParams params_from_json(const std::string& text, const BodyModel& model, const std::string& origin);

void write_scene(const fs::path& dir, const SceneTruth& scene);
// Reads parameters and masks and regenerates keypoints and vertices.
SceneTruth read_scene(const fs::path& dir, const BodyModel& model);
std::vector<std::string> list_scenes(const fs::path& root);

struct ScanRecord {
  std::string name;
  LabeledScan scan;
  LandmarkSet landmarks;
  std::optional<BodyParams> truth;
};

void write_scan(const fs::path& root, const ScanRecord& record);
ScanRecord read_scan(const fs::path& root, const std::string& name, const BodyModel& model);
std::vector<std::string> list_scans(const fs::path& root);

void write_obj(const fs::path& path, const TriMesh& mesh);
TriMesh read_obj(const fs::path& path);

// Submission text format, one file for all scenes:
//   # bodybench-submission v1
//   units m|mm
//   scene <name>
//   camera <focal> <cx> <cy> <width> <height>
//   person <id> joints <K>
//   <x> <y> <z>                        K rows, camera frame
//   vertices <V>                       optional, then V rows
//   end
// Blank lines and lines starting with '#' are ignored after the header.
// Persons belong to the latest scene line and use its camera.
enum class Units { kMetres, kMillimetres };

std::string format_submission(const std::vector<ScenePrediction>& scenes, Units units = Units::kMetres);
// Returns coordinates in metres. FormatError carries the offending line.
std::vector<ScenePrediction> parse_submission(const std::string& text, const BodyModel& model,
                                              const std::string& origin);

// Evaluation outputs: parts.csv, detection.csv, persons.csv,
// bins_occlusion.csv, bins_center.csv, bins_yaw.csv and summary.json.
struct BinSettings {
  int center = 8;
  int yaw = 12;
};
void write_eval_outputs(const fs::path& dir, const EvalReport& report, const EvalOptions& options,
                        const BinSettings& bins);

// Fit outputs for one scan.
void write_fit_params(const fs::path& path, const std::string& name, const BodyParams& params,
                      const EnergyBreakdown& energy);

// Formats doubles so they parse back bit for bit.
std::string fmt(double value);

}  // namespace bodybench
