#pragma once

#include <Eigen/Core>

#include "exprdit/tensor.hpp"

namespace exprdit {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<RowMat<T>> map_mat(Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return Eigen::Map<RowMat<T>>(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
Eigen::Map<const RowMat<T>> cmap_mat(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return Eigen::Map<const RowMat<T>>(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace exprdit
