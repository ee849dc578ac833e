#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace exprdit {

// Counter-based seed derivation: one root seed is split into independent
// streams per subsystem ("scene", "noise", "dropout", ...) and per counter
// (step index, scene index). Streams never share state.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t counter = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t root, std::string_view stream, std::uint64_t counter = 0)
      : engine_(derive_seed(root, stream, counter)) {}

  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  double normal() { return normal_(engine_); }
  double normal(double mu, double sigma) { return mu + sigma * normal_(engine_); }
  bool bernoulli(double p) { return uniform_(engine_) < p; }
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace exprdit
