#pragma once

#include <cmath>
#include <string>

#include "exprdit/autodiff.hpp"
#include "exprdit/rng.hpp"

namespace exprdit {

// Parameter structs expose visit(prefix, fn) which calls fn(name, Var&) for
// every learned tensor in a fixed order. Names are dotted paths.
template <typename T>
ad::Var<T> normal_param(Rng& rng, Shape shape, double stddev) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(rng.normal(0.0, stddev));
  return ad::Var<T>::parameter(std::move(t));
}

template <typename T>
ad::Var<T> zeros_param(Shape shape) {
  return ad::Var<T>::parameter(Tensor<T>(std::move(shape)));
}

// Fan-in scaled normal weight for a d_in x d_out projection.
template <typename T>
ad::Var<T> weight_param(Rng& rng, std::size_t d_in, std::size_t d_out, double gain = 1.0) {
  return normal_param<T>(rng, {d_in, d_out}, gain / std::sqrt(static_cast<double>(d_in)));
}

}  // namespace exprdit
