#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "exprdit/curation.hpp"
#include "exprdit/evalsuite.hpp"
#include "exprdit/expression.hpp"
#include "exprdit/flow.hpp"

namespace exprdit {

// Renderer parameters of one face in one frame.
enum FaceParam : std::size_t {
  kDx = 0,  // pixels
  kDy,
  kRoll,  // degrees
  kEmo,
  kEyeOpen,
  kYaw,  // gaze, degrees
  kPitch,
  kMouthOpen,
  kMouthWidth,
  kNumFaceParams
};
using FaceParams = std::array<double, kNumFaceParams>;

inline constexpr std::size_t kGridLevels = 5;

struct CharacterLayout {
  int character_id = 0;
  std::size_t col0 = 0, col1 = 0;  // column [col0, col1)
  double cx = 0, cy = 0;
  double scale = 0;       // face half-width s
  double amplitude = 0;   // max translation A
  double brightness = 0;  // identity
};

struct SceneTemplate {
  std::size_t height = 32, width = 32;
  double background = 0.1;
  std::vector<CharacterLayout> characters;
};

struct ParamRange {
  double lo, hi;
};
ParamRange param_range(const CharacterLayout& c, std::size_t k);
double grid_value(const CharacterLayout& c, std::size_t k, std::size_t level);
double grid_step(const CharacterLayout& c, std::size_t k);

// Pixel value of character c's column at pixel (x, y), 2x2 supersampled.
double render_pixel(const SceneTemplate& tmpl, const CharacterLayout& c, const FaceParams& p, std::size_t x,
                    std::size_t y);
// One gray channel. params[i][t] drives tmpl.characters[i].
VideoClip render_scene(const SceneTemplate& tmpl, const std::vector<std::vector<FaceParams>>& params);

struct CharacterScene {
  int character_id = 0;
  std::vector<FaceParams> params;
  ImplicitExpressionTrack implicit;
  FaceMaskTrack mask;
  LandmarkTrack landmarks;  // 16 points: outline 0-7, eyes 8-9, pupils 10-11, mouth 12-15
  GazeTrack gaze;
  PoseTrack pose;             // dx / W, dy / H, roll
  ExprFeatTrack expression;  // mouth_open, mouth_width, eye_open, emo
};

// Derives every track of one character from its parameters.
CharacterScene describe_character(const SceneTemplate& tmpl, std::size_t index, std::vector<FaceParams> params);
CharacterTracks to_character_tracks(const CharacterScene& c);

struct SceneOptions {
  std::uint64_t seed = 0;
  std::size_t n_characters = 1;
  std::size_t frames = 16;
  std::size_t height = 32, width = 32;
  double amplitude = 1.0;  // 0 gives a static clip
  bool snap_to_grid = true;
};

struct SyntheticScene {
  SceneOptions options;
  SceneTemplate layout;
  VideoClip clip;
  std::vector<CharacterScene> characters;

  std::vector<ImplicitExpressionTrack> implicit_tracks() const;
  std::vector<FaceMaskTrack> masks() const;
  std::vector<CharacterTracks> tracks() const;
};

// Columns of width W / n; throws PlacementError when faces cannot fit.
SceneTemplate make_template(const SceneOptions& opts);
SyntheticScene generate_synthetic_scene(const SceneOptions& opts);

struct FitResult {
  std::vector<CharacterScene> characters;
  double mse = 0;  // over the whole clip
};

// Per frame and character, exhaustive search over the 5-level grid of all nine
// parameters minimising pixel squared error; ties go to the lowest index.
FitResult fit_scene_parameters(const VideoClip& clip, const SceneTemplate& tmpl);

// Training item for the flow model: latent clip, frame-0 reference, tracks, masks.
TrainingExample make_training_example(const SyntheticScene& scene);

// Manifest record for curation (boxes from masks, landmarks per character).
ClipManifestRecord make_manifest_record(const SyntheticScene& scene, const std::string& clip_id,
                                        const std::string& clip_path);

nlohmann::json scene_options_to_json(const SceneOptions& o);
SceneOptions scene_options_from_json(const nlohmann::json& j);

}  // namespace exprdit
