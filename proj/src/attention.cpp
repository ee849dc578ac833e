#include "exprdit/attention.hpp"

#include <algorithm>
#include <cmath>

#include "eigen_map.hpp"

namespace exprdit {

bool PairMask::row_empty(std::size_t r) const {
  const auto* row = bits_.data() + r * cols_;
  return std::none_of(row, row + cols_, [](std::uint8_t b) { return b != 0; });
}

std::size_t PairMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

namespace ad {

namespace {

template <typename T>
void softmax_inplace(T* row, std::size_t n) {
  T mx = row[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  T s = 0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    s += row[j];
  }
  const T inv = T(1) / s;
  for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
}

struct Csr {
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> keys;
};

Csr to_csr(const PairMask& m) {
  Csr csr;
  csr.offsets.reserve(m.rows() + 1);
  csr.offsets.push_back(0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c)
      if (m(r, c)) csr.keys.push_back(c);
    csr.offsets.push_back(csr.keys.size());
  }
  return csr;
}

template <typename T>
void check_attention_shapes(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads,
                            const PairMask* mask) {
  const auto& qs = q.shape();
  const auto& ks = k.shape();
  const auto& vs = v.shape();
  if (qs.size() != 2 || ks.size() != 2 || vs.size() != 2) {
    throw InvalidShapeError("attention: q, k, v must be 2-D");
  }
  if (qs[1] != ks[1] || ks != vs) {
    throw InvalidShapeError("attention: q " + shape_str(qs) + ", k " + shape_str(ks) + ", v " + shape_str(vs));
  }
  if (heads == 0 || qs[1] % heads != 0) {
    throw InvalidShapeError("attention: width " + std::to_string(qs[1]) + " not divisible by " +
                            std::to_string(heads) + " heads");
  }
  if (mask && (mask->rows() != qs[0] || mask->cols() != ks[0])) {
    throw InvalidShapeError("attention: mask " + std::to_string(mask->rows()) + "x" + std::to_string(mask->cols()) +
                            " for " + std::to_string(qs[0]) + " queries and " + std::to_string(ks[0]) + " keys");
  }
}

template <typename T>
Var<T> dense_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads) {
  const std::size_t r = q.shape()[0], s = k.shape()[0], d = q.shape()[1], dh = d / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  const auto Q = cmap_mat(q.value(), r, d);
  const auto K = cmap_mat(k.value(), s, d);
  const auto V = cmap_mat(v.value(), s, d);
  Tensor<T> out(Shape{r, d});
  auto O = map_mat(out, r, d);
  std::vector<Tensor<T>> probs;
  probs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h * dh);
    const auto w = static_cast<Eigen::Index>(dh);
    Tensor<T> p(Shape{r, s});
    auto P = map_mat(p, r, s);
    P.noalias() = Q.middleCols(c0, w) * K.middleCols(c0, w).transpose();
    P *= sc;
    for (std::size_t i = 0; i < r; ++i) softmax_inplace(p.data() + i * s, s);
    O.middleCols(c0, w).noalias() = P * V.middleCols(c0, w);
    probs.push_back(std::move(p));
  }
  return make_result<T>(std::move(out), {q, k, v}, [r, s, d, dh, heads, sc, probs = std::move(probs)](Node<T>& n) {
    const auto Q = cmap_mat(n.inputs[0]->value, r, d);
    const auto K = cmap_mat(n.inputs[1]->value, s, d);
    const auto V = cmap_mat(n.inputs[2]->value, s, d);
    const auto dO = cmap_mat(n.grad, r, d);
    RowMat<T> dS(r, s);
    for (std::size_t h = 0; h < heads; ++h) {
      const auto c0 = static_cast<Eigen::Index>(h * dh);
      const auto w = static_cast<Eigen::Index>(dh);
      const auto P = cmap_mat(probs[h], r, s);
      if (n.inputs[2]->requires_grad) {
        map_mat(n.inputs[2]->grad_buffer(), s, d).middleCols(c0, w).noalias() += P.transpose() * dO.middleCols(c0, w);
      }
      if (!n.inputs[0]->requires_grad && !n.inputs[1]->requires_grad) continue;
      dS.noalias() = dO.middleCols(c0, w) * V.middleCols(c0, w).transpose();
      for (std::size_t i = 0; i < r; ++i) {
        T dot = 0;
        for (std::size_t j = 0; j < s; ++j) dot += dS(i, j) * P(i, j);
        for (std::size_t j = 0; j < s; ++j) dS(i, j) = P(i, j) * (dS(i, j) - dot) * sc;
      }
      if (n.inputs[0]->requires_grad) {
        map_mat(n.inputs[0]->grad_buffer(), r, d).middleCols(c0, w).noalias() += dS * K.middleCols(c0, w);
      }
      if (n.inputs[1]->requires_grad) {
        map_mat(n.inputs[1]->grad_buffer(), s, d).middleCols(c0, w).noalias() += dS.transpose() * Q.middleCols(c0, w);
      }
    }
  });
}

template <typename T>
Var<T> sparse_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads, const PairMask& mask) {
  const std::size_t r = q.shape()[0], d = q.shape()[1], dh = d / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  Csr csr = to_csr(mask);
  const std::size_t nnz = csr.keys.size();
  std::vector<T> probs(heads * nnz);
  Tensor<T> out(Shape{r, d});
  const T* qv = q.value().data();
  const T* kv = k.value().data();
  const T* vv = v.value().data();
  for (std::size_t h = 0; h < heads; ++h) {
    T* ph = probs.data() + h * nnz;
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t b = csr.offsets[i], e = csr.offsets[i + 1];
      if (b == e) continue;
      const T* qi = qv + i * d + h * dh;
      for (std::size_t t = b; t < e; ++t) {
        const T* kj = kv + csr.keys[t] * d + h * dh;
        T dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += qi[c] * kj[c];
        ph[t] = dot * sc;
      }
      softmax_inplace(ph + b, e - b);
      T* oi = out.data() + i * d + h * dh;
      for (std::size_t t = b; t < e; ++t) {
        const T* vj = vv + csr.keys[t] * d + h * dh;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += ph[t] * vj[c];
      }
    }
  }
  return make_result<T>(std::move(out), {q, k, v},
                        [r, d, dh, heads, sc, csr = std::move(csr), probs = std::move(probs)](Node<T>& n) {
    const std::size_t nnz = csr.keys.size();
    const T* qv = n.inputs[0]->value.data();
    const T* kv = n.inputs[1]->value.data();
    const T* vv = n.inputs[2]->value.data();
    T* gq = n.inputs[0]->requires_grad ? n.inputs[0]->grad_buffer().data() : nullptr;
    T* gk = n.inputs[1]->requires_grad ? n.inputs[1]->grad_buffer().data() : nullptr;
    T* gv = n.inputs[2]->requires_grad ? n.inputs[2]->grad_buffer().data() : nullptr;
    std::vector<T> ds;
    for (std::size_t h = 0; h < heads; ++h) {
      const T* ph = probs.data() + h * nnz;
      for (std::size_t i = 0; i < r; ++i) {
        const std::size_t b = csr.offsets[i], e = csr.offsets[i + 1];
        if (b == e) continue;
        const T* doi = n.grad.data() + i * d + h * dh;
        ds.assign(e - b, T(0));
        T dot = 0;
        for (std::size_t t = b; t < e; ++t) {
          const std::size_t j = csr.keys[t];
          const T* vj = vv + j * d + h * dh;
          T dp = 0;
          for (std::size_t c = 0; c < dh; ++c) dp += doi[c] * vj[c];
          ds[t - b] = dp;
          dot += dp * ph[t];
          if (gv) {
            T* gvj = gv + j * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) gvj[c] += ph[t] * doi[c];
          }
        }
        const T* qi = qv + i * d + h * dh;
        for (std::size_t t = b; t < e; ++t) {
          const T g = ph[t] * (ds[t - b] - dot) * sc;
          const std::size_t j = csr.keys[t];
          if (gq) {
            const T* kj = kv + j * d + h * dh;
            T* gqi = gq + i * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) gqi[c] += g * kj[c];
          }
          if (gk) {
            T* gkj = gk + j * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) gkj[c] += g * qi[c];
          }
        }
      }
    }
  });
}

}  // namespace

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  if (x.value().rank() != 2) throw InvalidShapeError("softmax_rows: expected 2-D input, got " + shape_str(x.shape()));
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < r; ++i) softmax_inplace(out.data() + i * c, c);
  Tensor<T> y = out;
  return make_result<T>(std::move(out), {x}, [r, c, y = std::move(y)](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += n.grad[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[i * c + j] * (n.grad[i * c + j] - dot);
    }
  });
}

template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads, const PairMask* mask) {
  check_attention_shapes(q, k, v, heads, mask);
  return mask ? sparse_attention(q, k, v, heads, *mask) : dense_attention(q, k, v, heads);
}

template Var<float> softmax_rows<float>(const Var<float>&);
template Var<double> softmax_rows<double>(const Var<double>&);
template Var<float> attention<float>(const Var<float>&, const Var<float>&, const Var<float>&, std::size_t,
                                     const PairMask*);
template Var<double> attention<double>(const Var<double>&, const Var<double>&, const Var<double>&, std::size_t,
                                       const PairMask*);

}  // namespace ad

namespace {
template <typename T>
void require_finite(const char* op, const Tensor<T>& t) {
  if (!t.all_finite()) throw EvaluationError(std::string(op) + ": non-finite input");
}
}  // namespace

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_finite("softmax_rows", x);
  return ad::softmax_rows(ad::Var<T>::constant(x)).value();
}

template <typename T>
Tensor<T> masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const PairMask& mask) {
  using V = ad::Var<T>;
  require_finite("masked_attention", q);
  require_finite("masked_attention", k);
  require_finite("masked_attention", v);
  return ad::attention(V::constant(q), V::constant(k), V::constant(v), 1, &mask).value();
}

template <typename T>
Tensor<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  using V = ad::Var<T>;
  return ad::attention(V::constant(q), V::constant(k), V::constant(v), 1, nullptr).value();
}

template Tensor<float> softmax_rows<float>(const Tensor<float>&);
template Tensor<double> softmax_rows<double>(const Tensor<double>&);
template Tensor<float> masked_attention<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                               const PairMask&);
template Tensor<double> masked_attention<double>(const Tensor<double>&, const Tensor<double>&,
                                                 const Tensor<double>&, const PairMask&);
template Tensor<float> scaled_dot_product_attention<float>(const Tensor<float>&, const Tensor<float>&,
                                                           const Tensor<float>&);
template Tensor<double> scaled_dot_product_attention<double>(const Tensor<double>&, const Tensor<double>&,
                                                             const Tensor<double>&);

}  // namespace exprdit
