#pragma once

#include <array>
#include <cstddef>

#include "exprdit/autodiff.hpp"

namespace exprdit {

using Dims3 = std::array<std::size_t, 3>;

// Trilinear resampling of an f x h x w volume with align-corners sampling:
// output index i maps to source coordinate i * (in - 1) / (out - 1), so
// corner samples land on corner samples. Each output value is a convex
// combination of the 8 neighbouring source samples.
template <typename T>
Tensor<T> trilinear_resample(const Tensor<T>& vol, const Dims3& out_dims);

namespace ad {
template <typename T>
Var<T> trilinear_resample(const Var<T>& vol, const Dims3& out_dims);
}  // namespace ad

}  // namespace exprdit
