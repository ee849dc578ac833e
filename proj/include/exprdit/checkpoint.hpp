#pragma once

#include <filesystem>
#include <string>

#include "exprdit/config.hpp"
#include "exprdit/flow.hpp"

namespace exprdit {

// FPCK1 container, little-endian:
//   "FPCK" u32 version=1
//   string config (RunConfig::to_text)
//   u64 step, u64 seed, u32 n_arrays
//   n_arrays x { string name, u32 ndim, u64 dims[ndim], float32 data }
// Arrays are sorted by name: param/<p>, adam_m/<p>, adam_v/<p>.
// Strings are u32 length + bytes.
struct Checkpoint {
  RunConfig config;
  TrainState<float> state;
};

std::string serialize_checkpoint(const TrainState<float>& state, const RunConfig& config);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const TrainState<float>& state, const RunConfig& config, const std::filesystem::path& path);
// Throws CorruptCheckpointError on bad magic, version, truncation or shape
// mismatch and IncompleteCheckpointError naming the first missing array.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace exprdit
