#include "exprdit/checkpoint.hpp"

#include <fmt/format.h>

#include <fstream>
#include <map>
#include <sstream>

#include "binary_io.hpp"

namespace exprdit {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

std::map<std::string, const Tensor<float>*> collect(const TrainState<float>& st) {
  std::map<std::string, const Tensor<float>*> arrays;
  auto& model = const_cast<PortraitModel<float>&>(st.model);
  for (auto& [name, p] : model.named_params()) arrays.emplace("param/" + name, &p.value());
  for (const auto& [name, t] : st.adam_m) arrays.emplace("adam_m/" + name, &t);
  for (const auto& [name, t] : st.adam_v) arrays.emplace("adam_v/" + name, &t);
  return arrays;
}

[[noreturn]] void corrupt(const std::string& why) { throw CorruptCheckpointError("corrupt checkpoint: " + why); }

}  // namespace

std::string serialize_checkpoint(const TrainState<float>& state, const RunConfig& config) {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, 4);
  binio::write_u32(out, kVersion);
  binio::write_string(out, config.to_text());
  binio::write_u64(out, state.step);
  binio::write_u64(out, state.seed);
  const auto arrays = collect(state);
  binio::write_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays) {
    binio::write_string(out, name);
    binio::write_u32(out, static_cast<std::uint32_t>(t->rank()));
    for (auto d : t->shape()) binio::write_u64(out, d);
    binio::write_f32_array(out, t->flat());
  }
  return out.str();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) corrupt("bad magic");
  const auto version = binio::read_u32(in);
  if (!version) corrupt("truncated header");
  if (*version != kVersion) corrupt(fmt::format("unsupported version {}", *version));
  const auto text = binio::read_string(in);
  const auto step = binio::read_u64(in);
  const auto seed = binio::read_u64(in);
  const auto count = binio::read_u32(in);
  if (!text || !step || !seed || !count) corrupt("truncated header");

  RunConfig config;
  try {
    config = RunConfig::parse(*text);
  } catch (const ConfigError& e) {
    corrupt(std::string("config block: ") + e.what());
  }
  std::map<std::string, Tensor<float>> loaded;
  for (std::uint32_t i = 0; i < *count; ++i) {
    const auto name = binio::read_string(in, 4096);
    const auto ndim = binio::read_u32(in);
    if (!name || !ndim || *ndim > 8) corrupt(fmt::format("truncated array header {}", i));
    Shape shape(*ndim);
    std::size_t n = 1;
    for (auto& d : shape) {
      const auto v = binio::read_u64(in);
      if (!v || *v > (1ull << 32)) corrupt(fmt::format("bad dims for {}", *name));
      d = *v;
      n *= d;
    }
    if (n > bytes.size()) corrupt(fmt::format("array {} larger than file", *name));
    Tensor<float> t(shape);
    if (!binio::read_f32_array(in, t.flat())) corrupt(fmt::format("truncated data for {}", *name));
    if (!loaded.emplace(*name, std::move(t)).second) corrupt(fmt::format("duplicate array {}", *name));
  }
  if (in.peek() != std::char_traits<char>::eof()) corrupt("trailing bytes");

  Checkpoint ck{config, TrainState<float>::init(*seed, config.model)};
  ck.state.step = *step;
  auto take = [&](const std::string& key, Tensor<float>& dst) {
    auto it = loaded.find(key);
    if (it == loaded.end()) throw IncompleteCheckpointError(fmt::format("checkpoint is missing array {}", key));
    if (it->second.shape() != dst.shape()) {
      corrupt(fmt::format("array {} has shape {}, expected {}", key, shape_str(it->second.shape()), shape_str(dst.shape())));
    }
    dst = std::move(it->second);
    loaded.erase(it);
  };
  for (auto& [name, p] : ck.state.model.named_params()) take("param/" + name, p.mutable_value());
  for (auto& [name, t] : ck.state.adam_m) take("adam_m/" + name, t);
  for (auto& [name, t] : ck.state.adam_v) take("adam_v/" + name, t);
  if (!loaded.empty()) corrupt(fmt::format("unexpected array {}", loaded.begin()->first));
  return ck;
}

void save_checkpoint(const TrainState<float>& state, const RunConfig& config, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(state, config);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace exprdit
