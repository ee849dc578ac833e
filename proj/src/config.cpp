#include "exprdit/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace exprdit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(fmt::format("{}: cannot parse '{}'", key, v));
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, v));
}

struct Entry {
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename T, typename Field>
Entry number(std::string doc, Field field) {
  return {std::move(doc), [field](const RunConfig& c) { return fmt::format("{}", field(const_cast<RunConfig&>(c))); },
          [field](RunConfig& c, const std::string& k, const std::string& v) { field(c) = parse_number<T>(k, v); }};
}

template <typename Field>
Entry boolean(std::string doc, Field field) {
  return {std::move(doc), [field](const RunConfig& c) { return field(const_cast<RunConfig&>(c)) ? "true" : "false"; },
          [field](RunConfig& c, const std::string& k, const std::string& v) { field(c) = parse_bool(k, v); }};
}

template <typename Field>
Entry text(std::string doc, Field field) {
  return {std::move(doc), [field](const RunConfig& c) { return field(const_cast<RunConfig&>(c)); },
          [field](RunConfig& c, const std::string&, const std::string& v) { field(c) = v; }};
}

#define FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::map<std::string, Entry>& registry() {
  static const std::map<std::string, Entry> r = [] {
    std::map<std::string, Entry> m;
    m["seed"] = number<std::uint64_t>("root seed for init, training noise and sampling", FIELD(seed));
    m["data_dir"] = text("directory written by `synth`", FIELD(data_dir));
    m["checkpoint"] = text("checkpoint path written by `train`", FIELD(checkpoint));
    m["train.steps"] = number<std::size_t>("optimizer steps", FIELD(train_steps));
    m["train.batch_size"] = number<std::size_t>("clips per step, taken round-robin", FIELD(batch_size));
    m["train.log_every"] = number<std::size_t>("loss log interval (0 disables)", FIELD(log_every));
    m["train.checkpoint_every"] = number<std::size_t>("intermediate checkpoint interval (0 disables)",
                                                      FIELD(checkpoint_every));

    m["model.layers"] = number<std::size_t>("DiT blocks", FIELD(model.denoiser.layers));
    m["model.width"] = number<std::size_t>("hidden width", FIELD(model.denoiser.width));
    m["model.heads"] = number<std::size_t>("self-attention heads", FIELD(model.denoiser.heads));
    m["model.patch"] = number<std::size_t>("spatial patch size in latent sites", FIELD(model.denoiser.patch));
    m["model.ffn_mult"] = number<std::size_t>("feed-forward expansion", FIELD(model.denoiser.ffn_mult));
    m["model.time_features"] = number<std::size_t>("sinusoidal timestep features", FIELD(model.denoiser.time_features));
    m["model.latent_channels"] = number<std::size_t>("latent channels", FIELD(model.denoiser.latent_channels));
    m["model.max_frames"] = number<std::size_t>("position table frames", FIELD(model.denoiser.max_frames));
    m["model.max_height"] = number<std::size_t>("position table rows (latent sites)", FIELD(model.denoiser.max_height));
    m["model.max_width"] = number<std::size_t>("position table columns (latent sites)", FIELD(model.denoiser.max_width));
    m["model.context_dim"] = number<std::size_t>("context token width (0 disables)", FIELD(model.denoiser.context_dim));
    m["model.use_mca"] = boolean("masked cross-attention; false keeps only frame alignment", FIELD(model.denoiser.use_mca));
    m["model.use_reference"] = boolean("concatenate the reference latent per token", FIELD(model.denoiser.use_reference));
    m["model.use_eal"] = {"expression-augmented lip/emotion tokens",
                          [](const RunConfig& c) { return c.model.expression.use_eal ? "true" : "false"; },
                          [](RunConfig& c, const std::string& k, const std::string& v) {
                            c.model.expression.use_eal = c.model.denoiser.use_eal = parse_bool(k, v);
                          }};
    m["model.motion_width"] = {"motion token width c",
                               [](const RunConfig& c) { return fmt::format("{}", c.model.expression.width); },
                               [](RunConfig& c, const std::string& k, const std::string& v) {
                                 c.model.expression.width = c.model.denoiser.motion_width = parse_number<std::size_t>(k, v);
                               }};
    m["expression.k_emo"] = number<std::size_t>("learned emotion sub-tokens", FIELD(model.expression.k_emo));
    m["expression.k_lip"] = number<std::size_t>("learned lip sub-tokens", FIELD(model.expression.k_lip));
    m["expression.heads"] = number<std::size_t>("augmentation attention heads", FIELD(model.expression.heads));
    m["expression.kv_tokens"] = number<std::size_t>("key/value tokens per feature row", FIELD(model.expression.kv_tokens));

    m["flow.steps"] = number<std::size_t>("Euler sampling steps", FIELD(flow.steps));
    m["flow.cfg_scale"] = number<double>("classifier-free guidance scale", FIELD(flow.cfg_scale));
    m["flow.t_mu"] = number<double>("logit-normal timestep mean", FIELD(flow.t_mu));
    m["flow.t_sigma"] = number<double>("logit-normal timestep std", FIELD(flow.t_sigma));
    m["flow.lr"] = number<double>("Adam learning rate", FIELD(flow.lr));
    m["flow.dropout_p"] = number<double>("condition dropout probability", FIELD(flow.dropout_p));
    m["flow.beta1"] = number<double>("Adam beta1", FIELD(flow.beta1));
    m["flow.beta2"] = number<double>("Adam beta2", FIELD(flow.beta2));
    m["flow.adam_eps"] = number<double>("Adam epsilon", FIELD(flow.adam_eps));

    m["curation.min_persons"] = number<std::size_t>("minimum persons in every frame", FIELD(curation.min_persons));
    m["curation.blur_threshold"] = number<double>("minimum Laplacian variance", FIELD(curation.blur_threshold));
    m["curation.motion_threshold"] = number<double>("motion score threshold", FIELD(curation.motion_threshold));
    m["curation.angle_threshold"] = number<double>("eye-line angle std threshold, degrees",
                                                   FIELD(curation.angle_threshold));
    return m;
  }();
  return r;
}

#undef FIELD

const Entry& entry(const std::string& key) {
  const auto& r = registry();
  auto it = r.find(key);
  if (it == r.end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
  return it->second;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  flow.validate();
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (curation.blur_sample_frames == 0) throw ConfigError("curation needs at least one blur sample frame");
}

void RunConfig::set(const std::string& key, const std::string& value) { entry(key).set(*this, key, value); }

std::string RunConfig::get(const std::string& key) const { return entry(key).get(*this); }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, e] : registry()) out += k + " = " + e.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("config line {}: expected key = value", n));
    c.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_text();
}

std::vector<RunConfig::KeyDoc> RunConfig::documented_keys() {
  std::vector<KeyDoc> out;
  for (const auto& [k, e] : registry()) out.push_back({k, e.doc});
  return out;
}

}  // namespace exprdit
