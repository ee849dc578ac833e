#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "exprdit/curation.hpp"
#include "exprdit/flow.hpp"

namespace exprdit {

// Everything a CLI run depends on. Serialized as flat `key = value` lines;
// every key has a default and unknown keys are rejected.
struct RunConfig {
  ModelConfig model;
  FlowConfig flow;
  CurationConfig curation;
  std::uint64_t seed = 0;
  std::string data_dir = "data";
  std::string checkpoint = "model.fpck";
  std::size_t train_steps = 2000;
  std::size_t batch_size = 1;
  std::size_t log_every = 100;
  std::size_t checkpoint_every = 0;  // 0: only at the end

  void validate() const;
  // Sorted key = value lines; parse(to_text()) reproduces the config exactly.
  std::string to_text() const;
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  struct KeyDoc {
    std::string key, doc;
  };
  static std::vector<KeyDoc> documented_keys();

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
};

}  // namespace exprdit
