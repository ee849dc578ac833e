#include "exprdit/harness.hpp"

#include <fmt/format.h>

#include <fstream>
#include <map>

#include "exprdit/rng.hpp"

namespace exprdit {

namespace {

using nlohmann::json;

std::string clip_name(std::size_t i) { return fmt::format("clip{:04d}", i); }

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::vector<BenchClip> write_synthetic_dataset(const SynthRequest& req) {
  std::filesystem::create_directories(req.out_dir);
  std::vector<BenchClip> clips;
  std::vector<std::string> scenes, manifest;
  std::vector<TrackRecord> tracks;
  for (std::size_t i = 0; i < req.clips; ++i) {
    SceneOptions o = req.scene;
    o.seed = derive_seed(req.scene.seed, "synth", i);
    BenchClip bc{clip_name(i), generate_synthetic_scene(o)};
    const std::string file = bc.clip_id + ".fpvc";
    write_clip(req.out_dir / file, bc.scene.clip);
    json sj = scene_options_to_json(o);
    sj["clip_id"] = bc.clip_id;
    scenes.push_back(sj.dump());
    tracks.push_back({bc.clip_id, bc.scene.clip.frame_rate, bc.scene.implicit_tracks()});
    manifest.push_back(record_to_json(make_manifest_record(bc.scene, bc.clip_id, file)).dump());
    clips.push_back(std::move(bc));
  }
  write_lines(req.out_dir / "scenes.jsonl", scenes);
  write_lines(req.out_dir / "manifest.jsonl", manifest);
  write_tracks(req.out_dir / "tracks.jsonl", tracks);
  return clips;
}

std::vector<BenchClip> load_bench(const std::filesystem::path& dir) {
  const auto path = dir / "scenes.jsonl";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, BenchClip> by_id;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IncompleteInputError(fmt::format("{} line {}: {}", path.string(), n, e.what()));
    }
    if (!j.contains("clip_id")) throw IncompleteInputError(fmt::format("{} line {}: missing clip_id", path.string(), n));
    BenchClip bc{j.at("clip_id").get<std::string>(), generate_synthetic_scene(scene_options_from_json(j))};
    const auto stored = read_clip(dir / (bc.clip_id + ".fpvc"));
    if (!(stored.frames == bc.scene.clip.frames)) {
      throw IncompleteInputError(fmt::format("clip {} does not match its scene description", bc.clip_id));
    }
    if (!by_id.emplace(bc.clip_id, std::move(bc)).second) {
      throw DuplicateIdentityError(fmt::format("{}: duplicate clip id", path.string()));
    }
  }
  std::vector<BenchClip> out;
  for (auto& [id, bc] : by_id) out.push_back(std::move(bc));
  if (out.empty()) throw EmptyTrackError("no clips in " + path.string());
  return out;
}

void run_training(TrainState<float>& state, const std::vector<TrainingExample>& data, const RunConfig& cfg,
                  std::uint64_t until_step, const StepLogger& log, const std::filesystem::path& ckpt_path) {
  if (data.empty()) throw EmptyTrackError("run_training: no training clips");
  std::vector<TrainingExample> batch(cfg.batch_size);
  while (state.step < until_step) {
    const std::uint64_t k = state.step;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) batch[i] = data[(k * cfg.batch_size + i) % data.size()];
    const double loss = train_step(state, batch, cfg.flow);
    if (log) log(k, loss);
    if (!ckpt_path.empty() && cfg.checkpoint_every && state.step % cfg.checkpoint_every == 0) {
      save_checkpoint(state, cfg, ckpt_path);
    }
  }
}

VideoClip sample_clip(const PortraitModel<float>& model, const SyntheticScene& driving, const VideoClip& source,
                      const FlowConfig& flow, std::uint64_t seed) {
  const LatentClip src = encode(source);
  const LatentClip drv = encode(driving.clip);
  if (src.height() != drv.height() || src.width() != drv.width()) {
    throw InvalidShapeError(fmt::format("source {}x{} does not match driving {}x{}", source.height(), source.width(),
                                        driving.clip.height(), driving.clip.width()));
  }
  const std::size_t h = src.height(), w = src.width(), c = src.channels();
  Tensor<double> reference(Shape{h, w, c});
  std::copy_n(src.tokens.data(), h * w * c, reference.data());
  const Dims3 dims{drv.num_frames(), h, w};
  const LatentMaskSet masks = build_latent_mask(driving.masks(), dims);
  LatentClip out{generate_latent(model, driving.implicit_tracks(), masks, reference, dims, flow, seed)};
  VideoClip clip = decode(out);
  clip.frame_rate = driving.clip.frame_rate;
  return clip;
}

Oracle parse_oracle(const std::string& s) {
  if (s == "verbatim") return Oracle::kVerbatim;
  if (s == "gray") return Oracle::kGray;
  throw ConfigError("unknown oracle '" + s + "' (expected verbatim or gray)");
}

Report run_evaluation(const EvalRequest& req) {
  if (req.oracle == Oracle::kNone && req.model == nullptr) throw ConfigError("evaluation needs a model or an oracle");
  const auto bench = load_bench(req.bench_dir);
  std::map<std::string, const BenchClip*> by_id;
  std::vector<ReenactmentItem> items;
  for (std::size_t i = 0; i < bench.size(); ++i) {
    const auto& d = bench[i];
    const auto& s = req.mode == ReenactMode::kSelf ? d : bench[(i + 1) % bench.size()];
    if (s.scene.layout.characters.size() != d.scene.layout.characters.size()) {
      throw InvalidShapeError(fmt::format("clips {} and {} have different character counts", d.clip_id, s.clip_id));
    }
    by_id[d.clip_id] = &d;
    ReenactmentItem it;
    it.clip_id = d.clip_id;
    it.driving = d.scene.clip;
    it.source = s.scene.clip;
    it.source_id = s.clip_id;
    it.driving_tracks = d.scene.tracks();
    items.push_back(std::move(it));
  }
  std::map<std::string, const BenchClip*> all;
  for (const auto& b : bench) all[b.clip_id] = &b;

  GenerateFn generate = [&](const ReenactmentItem& it) -> VideoClip {
    switch (req.oracle) {
      case Oracle::kVerbatim: return it.driving;
      case Oracle::kGray: return VideoClip{Tensor<float>(it.driving.frames.shape(), 0.5f), it.driving.frame_rate};
      case Oracle::kNone: break;
    }
    const std::uint64_t seed = derive_seed(req.seed, it.clip_id);
    return sample_clip(*req.model, by_id.at(it.clip_id)->scene, it.source, req.flow, seed);
  };
  EstimateFn estimate = [&](const VideoClip& clip, const ReenactmentItem& it) {
    const auto fit = fit_scene_parameters(clip, all.at(it.source_id)->scene.layout);
    std::vector<CharacterTracks> out;
    for (const auto& c : fit.characters) out.push_back(to_character_tracks(c));
    return out;
  };
  return run_reenactment(req.mode, items, generate, estimate);
}

}  // namespace exprdit
