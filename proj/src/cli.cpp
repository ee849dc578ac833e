#include "exprdit/cli.hpp"

#include <fmt/format.h>

#include <CLI/CLI.hpp>
#include <ostream>

#include "exprdit/harness.hpp"

namespace exprdit {

namespace {

struct SynthArgs {
  std::string out;
  std::size_t clips = 4, characters = 1, frames = 16, height = 32, width = 32;
  double amplitude = 1.0;
  std::uint64_t seed = 0;
  bool no_snap = false;
};

struct TrainArgs {
  std::string config, resume, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  bool quiet = false;
};

struct SampleArgs {
  std::string ckpt, driving, source, out;
  std::size_t steps = FlowConfig{}.steps;
  double cfg = FlowConfig{}.cfg_scale;
  std::uint64_t seed = 0;
};

struct EvalArgs {
  std::string mode, ckpt, oracle, bench_dir, report;
  std::size_t steps = FlowConfig{}.steps;
  double cfg = FlowConfig{}.cfg_scale;
  std::uint64_t seed = 0;
};

struct CurateArgs {
  std::string in, out;
  CurationConfig cfg;
};

int do_synth(const SynthArgs& a, std::ostream& out) {
  SynthRequest req;
  req.out_dir = a.out;
  req.clips = a.clips;
  req.scene.seed = a.seed;
  req.scene.n_characters = a.characters;
  req.scene.frames = a.frames;
  req.scene.height = a.height;
  req.scene.width = a.width;
  req.scene.amplitude = a.amplitude;
  req.scene.snap_to_grid = !a.no_snap;
  const auto clips = write_synthetic_dataset(req);
  out << fmt::format("wrote {} clips to {}\n", clips.size(), a.out);
  return 0;
}

int do_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = RunConfig::load(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.steps) cfg.train_steps = *a.steps;
  if (!a.out.empty()) cfg.checkpoint = a.out;
  cfg.validate();
  std::vector<TrainingExample> data;
  for (const auto& bc : load_bench(cfg.data_dir)) data.push_back(make_training_example(bc.scene));

  TrainState<float> state = TrainState<float>::init(cfg.seed, cfg.model);
  if (!a.resume.empty()) {
    auto ck = load_checkpoint(a.resume);
    if (ck.state.seed != cfg.seed) throw ConfigError("resume checkpoint was trained with a different seed");
    for (const auto& kd : RunConfig::documented_keys()) {
      if (!kd.key.starts_with("model.") && !kd.key.starts_with("expression.")) continue;
      if (ck.config.get(kd.key) != cfg.get(kd.key)) {
        throw ConfigError(fmt::format("resume checkpoint has {} = {}, config has {}", kd.key, ck.config.get(kd.key),
                                      cfg.get(kd.key)));
      }
    }
    state = std::move(ck.state);
  }
  StepLogger log;
  if (!a.quiet && cfg.log_every) {
    log = [&](std::uint64_t k, double loss) {
      if (k % cfg.log_every == 0 || k + 1 == cfg.train_steps) out << fmt::format("step {} loss {:.6g}\n", k, loss);
    };
  }
  run_training(state, data, cfg, cfg.train_steps, log, cfg.checkpoint);
  save_checkpoint(state, cfg, cfg.checkpoint);
  out << fmt::format("saved {} at step {}\n", cfg.checkpoint, state.step);
  return 0;
}

const BenchClip& find_clip(const std::vector<BenchClip>& bench, const std::string& id) {
  for (const auto& b : bench)
    if (b.clip_id == id) return b;
  throw IncompleteInputError("no scene description for clip " + id);
}

int do_sample(const SampleArgs& a, std::ostream& out) {
  const auto ck = load_checkpoint(a.ckpt);
  const std::filesystem::path driving(a.driving);
  const auto bench = load_bench(driving.parent_path().empty() ? "." : driving.parent_path());
  const auto& d = find_clip(bench, driving.stem().string());
  FlowConfig flow = ck.config.flow;
  flow.steps = a.steps;
  flow.cfg_scale = a.cfg;
  const VideoClip clip = sample_clip(ck.state.model, d.scene, read_clip(a.source), flow, a.seed);
  write_clip(a.out, clip);
  out << fmt::format("wrote {} ({} frames, {} steps, cfg {})\n", a.out, clip.num_frames(), flow.steps, flow.cfg_scale);
  return 0;
}

int do_eval(const EvalArgs& a, std::ostream& out) {
  EvalRequest req;
  req.mode = parse_mode(a.mode);
  req.bench_dir = a.bench_dir;
  req.seed = a.seed;
  std::optional<Checkpoint> ck;
  if (!a.oracle.empty()) {
    req.oracle = parse_oracle(a.oracle);
  } else {
    ck = load_checkpoint(a.ckpt);
    req.model = &ck->state.model;
    req.flow = ck->config.flow;
  }
  req.flow.steps = a.steps;
  req.flow.cfg_scale = a.cfg;
  const Report report = run_evaluation(req);
  report.write(a.report);
  std::string summary;
  for (const auto& [k, v] : report.aggregate) summary += fmt::format(" {}={:.6g}", k, v);
  out << fmt::format("{} clips, mode {}:{}\n", report.records.size(), to_string(report.mode), summary);
  return 0;
}

int do_curate(const CurateArgs& a, std::ostream& out, std::ostream& err) {
  const auto s = curate_manifest(a.in, a.out, a.cfg);
  for (const auto& e : s.errors) err << e << '\n';
  out << nlohmann::json{{"read", s.read}, {"accepted", s.accepted}, {"rejected_by_stage", s.rejected_by_stage}}.dump()
      << '\n';
  return 0;
}

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Expression-conditioned portrait video diffusion toolkit", "exprdit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "render synthetic scenes with tracks and manifests");
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_option("--clips", sa.clips, "number of clips")->capture_default_str();
  synth->add_option("--characters", sa.characters, "characters per clip")->capture_default_str();
  synth->add_option("--frames", sa.frames, "frames per clip")->capture_default_str();
  synth->add_option("--height", sa.height, "frame height")->capture_default_str();
  synth->add_option("--width", sa.width, "frame width")->capture_default_str();
  synth->add_option("--amplitude", sa.amplitude, "motion amplitude (0: static)")->capture_default_str();
  synth->add_option("--seed", sa.seed, "root seed")->capture_default_str();
  synth->add_flag("--no-snap", sa.no_snap, "keep off-grid renderer parameters");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model on a synthetic dataset");
  train->add_option("--config", ta.config, "key = value config file")->required();
  train->add_option("--seed", ta.seed, "override the config seed");
  train->add_option("--steps", ta.steps, "override train.steps");
  train->add_option("--resume", ta.resume, "continue from this checkpoint");
  train->add_option("--out", ta.out, "override the checkpoint path");
  train->add_flag("--quiet", ta.quiet, "no loss log");

  SampleArgs pa;
  auto* sample = app.add_subcommand("sample", "animate a source frame with a driving clip's tracks");
  sample->add_option("--ckpt", pa.ckpt, "checkpoint")->required();
  sample->add_option("--driving", pa.driving, "driving clip (.fpvc next to its scenes.jsonl)")->required();
  sample->add_option("--source", pa.source, "source clip; frame 0 is used")->required();
  sample->add_option("--steps", pa.steps, "Euler steps")->capture_default_str();
  sample->add_option("--cfg", pa.cfg, "guidance scale")->capture_default_str();
  sample->add_option("--seed", pa.seed, "sampling seed")->capture_default_str();
  sample->add_option("--out", pa.out, "output clip (.fpvc)")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "self / cross reenactment metrics over a synthetic bench");
  eval->add_option("--mode", ea.mode, "self or cross")->required()->check(CLI::IsMember({"self", "cross"}));
  auto* ck_opt = eval->add_option("--ckpt", ea.ckpt, "checkpoint");
  auto* or_opt = eval->add_option("--oracle", ea.oracle, "verbatim or gray instead of a model")
                     ->check(CLI::IsMember({"verbatim", "gray"}));
  ck_opt->excludes(or_opt);
  eval->add_option("--bench-dir", ea.bench_dir, "directory written by synth")->required();
  eval->add_option("--report", ea.report, "JSON Lines report path")->required();
  eval->add_option("--steps", ea.steps, "Euler steps")->capture_default_str();
  eval->add_option("--cfg", ea.cfg, "guidance scale")->capture_default_str();
  eval->add_option("--seed", ea.seed, "sampling seed")->capture_default_str();

  CurateArgs ca;
  auto* curate = app.add_subcommand("curate", "filter a clip manifest");
  curate->add_option("--in", ca.in, "input manifest (JSON Lines)")->required();
  curate->add_option("--out", ca.out, "output manifest")->required();
  curate->add_option("--blur-th", ca.cfg.blur_threshold, "minimum blur score")->capture_default_str();
  curate->add_option("--motion-th", ca.cfg.motion_threshold, "motion score threshold")->capture_default_str();
  curate->add_option("--angle-th", ca.cfg.angle_threshold, "angle threshold, degrees")->capture_default_str();
  curate->add_option("--min-persons", ca.cfg.min_persons, "minimum persons per frame")->capture_default_str();

  auto* config = app.add_subcommand("config", "print the default config with key documentation");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
    if (eval->parsed() && ea.ckpt.empty() && ea.oracle.empty()) {
      throw CLI::ValidationError("eval", "one of --ckpt or --oracle is required");
    }
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (synth->parsed()) return do_synth(sa, out);
    if (train->parsed()) return do_train(ta, out);
    if (sample->parsed()) return do_sample(pa, out);
    if (eval->parsed()) return do_eval(ea, out);
    if (curate->parsed()) return do_curate(ca, out, err);
    if (config->parsed()) {
      const RunConfig defaults;
      for (const auto& kd : RunConfig::documented_keys()) {
        out << "# " << kd.doc << '\n' << kd.key << " = " << defaults.get(kd.key) << '\n';
      }
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 2;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace exprdit
