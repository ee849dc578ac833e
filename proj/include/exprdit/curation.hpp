#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "exprdit/evalsuite.hpp"

namespace exprdit {

using PersonBox = std::array<double, 4>;  // x0, y0, x1, y1 normalized

struct ClipManifestRecord {
  std::string clip_id;
  std::size_t frame_count = 0;
  double fps = 25.0;
  std::vector<std::vector<PersonBox>> boxes;  // per frame
  std::vector<LandmarkTrack> landmarks;       // per person
  std::optional<std::string> caption;
  std::optional<std::string> clip_path;  // FPVC file, relative to the manifest

  // Filled by the pipeline.
  std::optional<double> blur_score;
  std::optional<std::size_t> person_count;
  std::optional<double> motion_score;
  std::optional<double> angular_score;
  bool accepted = false;
  std::optional<std::string> reject_reason;

  // Unrecognised input fields, written back untouched.
  nlohmann::json extra = nlohmann::json::object();
};

// Throws MalformedManifestError on missing fields or bad boxes.
ClipManifestRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const ClipManifestRecord& r);

struct CurationConfig {
  std::size_t min_persons = 2;
  double blur_threshold = 1e-4;
  double motion_threshold = 0.005;
  double angle_threshold = 2.0;  // degrees
  std::size_t blur_sample_frames = 8;
  std::array<std::size_t, 2> angle_pair{8, 9};  // eye centres
};

struct StageResult {
  bool accepted = false;
  double score = 0.0;
};

// Min over frames of the number of boxes.
StageResult person_count_filter(const ClipManifestRecord& rec, std::size_t min_count = 2);

// Variance of the 3x3 Laplacian response of an H x W frame, reflect-101 borders.
double blur_score(const Tensor<double>& frame);
// Min of blur_score over up to `samples` evenly spaced channel-mean frames.
double clip_blur_score(const VideoClip& clip, std::size_t samples = 8);

struct ExpressivenessScores {
  double motion = 0.0;
  double angular = 0.0;
  bool accepted = false;
};

// motion: mean over points of the population std-dev of inter-frame displacement
// magnitudes. angular: population std-dev (degrees) of the orientation of the
// segment between landmarks angle_pair[0] -> angle_pair[1].
ExpressivenessScores expressive_select(const LandmarkTrack& track, const CurationConfig& cfg);

struct CurationSummary {
  std::size_t read = 0;
  std::size_t accepted = 0;
  std::map<std::string, std::size_t> rejected_by_stage;
  std::vector<std::string> errors;  // one per malformed line
};

// Stages in order: person_count, blur, expressiveness. All scores are filled;
// reject_reason is the first failing stage.
void curate_record(ClipManifestRecord& rec, const CurationConfig& cfg, const std::filesystem::path& base_dir);

CurationSummary curate_manifest(const std::filesystem::path& in_path, const std::filesystem::path& out_path,
                                const CurationConfig& cfg);

}  // namespace exprdit
