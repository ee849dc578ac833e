#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "exprdit/checkpoint.hpp"
#include "exprdit/scene.hpp"

namespace exprdit {

struct SynthRequest {
  std::filesystem::path out_dir;
  std::size_t clips = 4;
  SceneOptions scene;  // scene.seed is the root seed; clip i uses derive_seed(seed, "synth", i)
};

struct BenchClip {
  std::string clip_id;
  SyntheticScene scene;
};

// Writes <id>.fpvc, scenes.jsonl (generation options), tracks.jsonl and
// manifest.jsonl. Clip ids are clip0000, clip0001, ...
std::vector<BenchClip> write_synthetic_dataset(const SynthRequest& req);
// Regenerates scenes from scenes.jsonl, sorted by clip id. The stored clips
// must match the regenerated ones.
std::vector<BenchClip> load_bench(const std::filesystem::path& dir);

using StepLogger = std::function<void(std::uint64_t step, double loss)>;

// Runs optimizer steps until state.step == until_step. Step k uses the clips
// (k * batch_size + i) mod n, i < batch_size. Saves a checkpoint every
// cfg.checkpoint_every steps when ckpt_path is non-empty.
void run_training(TrainState<float>& state, const std::vector<TrainingExample>& data, const RunConfig& cfg,
                  std::uint64_t until_step, const StepLogger& log = {}, const std::filesystem::path& ckpt_path = {});

// Animates the source clip's frame 0 with the driving scene's tracks and masks.
VideoClip sample_clip(const PortraitModel<float>& model, const SyntheticScene& driving, const VideoClip& source,
                      const FlowConfig& flow, std::uint64_t seed);

enum class Oracle { kNone, kVerbatim, kGray };
Oracle parse_oracle(const std::string& s);

struct EvalRequest {
  ReenactMode mode = ReenactMode::kSelf;
  std::filesystem::path bench_dir;
  const PortraitModel<float>* model = nullptr;  // used when oracle == kNone
  Oracle oracle = Oracle::kNone;
  FlowConfig flow;
  std::uint64_t seed = 0;
};

// Self mode: source is the driving clip. Cross mode: source is the next clip
// in sorted order (wrapping). Recovered tracks come from fitting the renderer
// with the source clip's layout.
Report run_evaluation(const EvalRequest& req);

}  // namespace exprdit
