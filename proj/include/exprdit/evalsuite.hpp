#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "exprdit/codec.hpp"

namespace exprdit {

// f x L x 2 normalized image coordinates (x, y).
struct LandmarkTrack {
  Tensor<double> points;
};

// f x 2 (yaw, pitch) in degrees.
struct GazeTrack {
  Tensor<double> angles;
};

// f x d feature vectors.
struct ExprFeatTrack {
  Tensor<double> vectors;
};

struct PoseTrack {
  Tensor<double> vectors;
};

inline constexpr double kPsnrCap = 99.0;

// 10 log10(1 / mse), capped at 99 dB.
double psnr_from_mse(double mse);
// Per-frame PSNR with MAX = 1, averaged over frames.
double psnr(const VideoClip& a, const VideoClip& b);
// 7x7 uniform-window SSIM on the channel-mean gray image, valid windows only,
// sample (N - 1) statistics, averaged over windows then frames.
double ssim(const VideoClip& a, const VideoClip& b);
double lmd(const LandmarkTrack& pred, const LandmarkTrack& gt);
double mae_angular(const GazeTrack& pred, const GazeTrack& gt);
double aed(const ExprFeatTrack& pred, const ExprFeatTrack& gt);
double apd(const PoseTrack& pred, const PoseTrack& gt);

// Ground-truth or recovered tracks of one character.
struct CharacterTracks {
  int character_id = 0;
  std::optional<LandmarkTrack> landmarks;
  std::optional<GazeTrack> gaze;
  std::optional<ExprFeatTrack> expression;
  std::optional<PoseTrack> pose;
};

enum class ReenactMode { kSelf, kCross };
std::string to_string(ReenactMode mode);
ReenactMode parse_mode(const std::string& s);

struct ReenactmentItem {
  std::string clip_id;
  VideoClip driving;
  VideoClip source;  // frame 0 is the source image
  std::string source_id;
  std::vector<CharacterTracks> driving_tracks;
};

struct ReportRecord {
  std::string clip_id;
  ReenactMode mode = ReenactMode::kSelf;
  std::map<std::string, double> metrics;
};

struct Report {
  ReenactMode mode = ReenactMode::kSelf;
  std::vector<ReportRecord> records;  // sorted by clip_id
  std::map<std::string, double> aggregate;

  std::string to_jsonl() const;
  void write(const std::filesystem::path& path) const;
};

using GenerateFn = std::function<VideoClip(const ReenactmentItem&)>;
// Recovers per-character tracks from a generated clip.
using EstimateFn = std::function<std::vector<CharacterTracks>(const VideoClip&, const ReenactmentItem&)>;

// Self mode: PSNR / SSIM against the driving clip plus LMD / MAE between
// recovered and driving tracks. Cross mode: AED / APD / MAE between recovered
// and driving tracks. Character metrics are averaged over characters.
Report run_reenactment(ReenactMode mode, const std::vector<ReenactmentItem>& items, const GenerateFn& generate,
                       const EstimateFn& estimate);

}  // namespace exprdit
