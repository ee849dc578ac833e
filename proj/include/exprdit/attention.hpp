#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "exprdit/autodiff.hpp"

namespace exprdit {

// Binary query x key matrix. Bit 1 lets query r attend to key c.
class PairMask {
 public:
  PairMask() = default;
  PairMask(std::size_t rows, std::size_t cols, bool value = false)
      : rows_(rows), cols_(cols), bits_(rows * cols, value ? 1 : 0) {}

  static PairMask ones(std::size_t rows, std::size_t cols) { return PairMask(rows, cols, true); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { bits_[r * cols_ + c] = v ? 1 : 0; }
  bool row_empty(std::size_t r) const;
  std::size_t count() const;

  friend bool operator==(const PairMask&, const PairMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

namespace ad {

// Row-wise softmax with per-row max subtraction.
template <typename T>
Var<T> softmax_rows(const Var<T>& x);

// Multi-head scaled dot-product attention. q is r x d, k and v are s x d with
// d = heads * d_head; logits are scaled by 1/sqrt(d_head).
//
// With a mask, pairs whose bit is 0 receive a -1e9 logit bias before the
// softmax. Such entries underflow to exactly zero weight, so they are skipped
// outright. Query rows with no enabled key produce an all-zero output row.
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads,
                 const PairMask* mask = nullptr);

}  // namespace ad

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

// Single-head convenience over plain tensors.
template <typename T>
Tensor<T> masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const PairMask& mask);

template <typename T>
Tensor<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);

}  // namespace exprdit
