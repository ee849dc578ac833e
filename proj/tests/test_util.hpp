#pragma once

#include <cstdint>
#include <random>

#include "exprdit/tensor.hpp"

namespace exprdit::testing_util {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(nd(gen));
  return t;
}

template <typename T>
Tensor<T> uniform_tensor(Shape shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ud(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(ud(gen));
  return t;
}

}  // namespace exprdit::testing_util
