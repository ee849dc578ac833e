#include "exprdit/autodiff.hpp"

#include <Eigen/Core>
#include <cmath>
#include <unordered_set>

#include "eigen_map.hpp"

namespace exprdit::ad {

namespace {

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw InvalidShapeError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
  }
}

template <typename T>
void require_row(const char* op, const Var<T>& x, const Var<T>& row) {
  if (row.size() != x.value().cols()) {
    throw InvalidShapeError(std::string(op) + ": row of " + std::to_string(row.size()) +
                            " elements does not match " + std::to_string(x.value().cols()) + " columns");
  }
}

template <typename T>
void accumulate(Node<T>& n, std::size_t input, const Tensor<T>& g) {
  auto& in = *n.inputs[input];
  if (!in.requires_grad) return;
  auto& buf = in.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

template <typename T>
std::size_t col_count(const Tensor<T>& t) {
  return t.rank() == 1 ? t.size() : t.cols();
}

}  // namespace

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (auto& in : inputs) n->inputs.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Var<T>(std::move(n));
}

template <typename T>
void backward(const Var<T>& root) {
  if (root.size() != 1) {
    throw InvalidShapeError("backward: root must be a scalar, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;
  // Iterative post-order DFS gives a topological order without recursion.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>& n = **it;
    if (n.backward && n.has_grad) n.backward(n);
  }
}

// ---- elementwise ------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape("add", a, b);
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    accumulate(n, 0, n.grad);
    accumulate(n, 1, n.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape("sub", a, b);
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    accumulate(n, 0, n.grad);
    if (n.inputs[1]->requires_grad) {
      auto& g = n.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape("mul", a, b);
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    const auto& av = n.inputs[0]->value;
    const auto& bv = n.inputs[1]->value;
    if (n.inputs[0]->requires_grad) {
      auto& g = n.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (n.inputs[1]->requires_grad) {
      auto& g = n.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v *= s;
  return make_result<T>(std::move(out), {a}, [s](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
  });
}

template <typename T>
Var<T> silu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) v = v / (T(1) + std::exp(-v));
  return make_result<T>(std::move(out), {x}, [](Node<T>& n) {
    const auto& xv = n.inputs[0]->value;
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      T s = T(1) / (T(1) + std::exp(-xv[i]));
      g[i] += n.grad[i] * s * (T(1) + xv[i] * (T(1) - s));
    }
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) v = T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v)));
  return make_result<T>(std::move(out), {x}, [](Node<T>& n) {
    const auto& xv = n.inputs[0]->value;
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      T v = xv[i];
      T th = std::tanh(kC * (v + kA * v * v * v));
      T d = T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * kC * (T(1) + T(3) * kA * v * v);
      g[i] += n.grad[i] * d;
    }
  });
}

// ---- row broadcast ------------------------------------------------------------

template <typename T>
Var<T> add_row(const Var<T>& x, const Var<T>& row) {
  require_row("add_row", x, row);
  Tensor<T> out = x.value();
  const std::size_t c = row.size(), r = out.size() / c;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += row.value()[j];
  return make_result<T>(std::move(out), {x, row}, [r, c](Node<T>& n) {
    accumulate(n, 0, n.grad);
    if (n.inputs[1]->requires_grad) {
      auto& g = n.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j];
    }
  });
}

template <typename T>
Var<T> mul_row(const Var<T>& x, const Var<T>& row) {
  require_row("mul_row", x, row);
  Tensor<T> out = x.value();
  const std::size_t c = row.size(), r = out.size() / c;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= row.value()[j];
  return make_result<T>(std::move(out), {x, row}, [r, c](Node<T>& n) {
    const auto& xv = n.inputs[0]->value;
    const auto& rv = n.inputs[1]->value;
    if (n.inputs[0]->requires_grad) {
      auto& g = n.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[i * c + j] * rv[j];
    }
    if (n.inputs[1]->requires_grad) {
      auto& g = n.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j] * xv[i * c + j];
    }
  });
}

template <typename T>
Var<T> modulate(const Var<T>& x, const Var<T>& shift, const Var<T>& scale_row) {
  require_row("modulate", x, shift);
  require_row("modulate", x, scale_row);
  Tensor<T> out = x.value();
  const std::size_t c = shift.size(), r = out.size() / c;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = out[i * c + j] * (T(1) + scale_row.value()[j]) + shift.value()[j];
  return make_result<T>(std::move(out), {x, shift, scale_row}, [r, c](Node<T>& n) {
    const auto& xv = n.inputs[0]->value;
    const auto& sc = n.inputs[2]->value;
    if (n.inputs[0]->requires_grad) {
      auto& g = n.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[i * c + j] * (T(1) + sc[j]);
    }
    if (n.inputs[1]->requires_grad) {
      auto& g = n.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j];
    }
    if (n.inputs[2]->requires_grad) {
      auto& g = n.inputs[2]->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j] * xv[i * c + j];
    }
  });
}

// ---- matrix -------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  return linear(a, b, Var<T>());
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  if (w.value().rank() != 2) throw InvalidShapeError("linear: weight must be 2-D, got " + shape_str(w.shape()));
  const std::size_t k = w.value().dim(0), m = w.value().dim(1);
  const std::size_t r = x.value().dim(0);
  if (x.value().cols() != k) {
    throw InvalidShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                            shape_str(w.shape()));
  }
  if (bias.defined() && bias.size() != m) {
    throw InvalidShapeError("linear: bias of " + std::to_string(bias.size()) + " for " + std::to_string(m) +
                            " outputs");
  }
  Tensor<T> out(Shape{r, m});
  {
    auto o = map_mat(out, r, m);
    o.noalias() = cmap_mat(x.value(), r, k) * cmap_mat(w.value(), k, m);
    if (bias.defined()) o.rowwise() += cmap_mat(bias.value(), 1, m).row(0);
  }
  std::vector<Var<T>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(std::move(out), std::move(inputs), [r, k, m](Node<T>& n) {
    auto dy = cmap_mat(n.grad, r, m);
    if (n.inputs[0]->requires_grad) {
      map_mat(n.inputs[0]->grad_buffer(), r, k).noalias() += dy * cmap_mat(n.inputs[1]->value, k, m).transpose();
    }
    if (n.inputs[1]->requires_grad) {
      map_mat(n.inputs[1]->grad_buffer(), k, m).noalias() += cmap_mat(n.inputs[0]->value, r, k).transpose() * dy;
    }
    if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
      // fixed row order; Eigen's reduction splits on buffer alignment
      T* gb = n.inputs[2]->grad_buffer().data();
      const T* g = n.grad.data();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, T eps) {
  const std::size_t c = col_count(x.value()), r = x.size() / c;
  Tensor<T> out = x.value();
  std::vector<T> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    T* row = out.data() + i * c;
    T mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= T(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= T(c);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) row[j] = (row[j] - mu) * inv_std[i];
  }
  Tensor<T> normalized = out;
  return make_result<T>(std::move(out), {x}, [r, c, inv_std = std::move(inv_std),
                                              y = std::move(normalized)](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      const T* dy = n.grad.data() + i * c;
      const T* yr = y.data() + i * c;
      T mean_dy = 0, mean_dyy = 0;
      for (std::size_t j = 0; j < c; ++j) {
        mean_dy += dy[j];
        mean_dyy += dy[j] * yr[j];
      }
      mean_dy /= T(c);
      mean_dyy /= T(c);
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += inv_std[i] * (dy[j] - mean_dy - yr[j] * mean_dyy);
    }
  });
}

// ---- layout -------------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return make_result<T>(std::move(out), {x}, [](Node<T>& n) { accumulate(n, 0, n.grad); });
}

template <typename T>
Var<T> gather(const Var<T>& x, std::vector<std::size_t> index, Shape shape) {
  if (shape_numel(shape) != index.size()) {
    throw InvalidShapeError("gather: " + std::to_string(index.size()) + " indices for shape " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape));
  const auto& xv = x.value();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.size()) throw InvalidShapeError("gather: index out of range");
    out[i] = xv[index[i]];
  }
  return make_result<T>(std::move(out), {x}, [index = std::move(index)](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += n.grad[i];
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw InvalidShapeError("concat_rows: no parts");
  const std::size_t c = col_count(parts[0].value());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (col_count(p.value()) != c) throw InvalidShapeError("concat_rows: column mismatch");
    rows += p.size() / c;
  }
  std::vector<T> data;
  data.reserve(rows * c);
  for (const auto& p : parts) data.insert(data.end(), p.value().storage().begin(), p.value().storage().end());
  return make_result<T>(Tensor<T>(Shape{rows, c}, std::move(data)), parts, [](Node<T>& n) {
    std::size_t off = 0;
    for (auto& in : n.inputs) {
      const std::size_t sz = in->value.size();
      if (in->requires_grad) {
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < sz; ++i) g[i] += n.grad[off + i];
      }
      off += sz;
    }
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw InvalidShapeError("concat_cols: no parts");
  const std::size_t r = parts[0].value().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().dim(0) != r) throw InvalidShapeError("concat_cols: row mismatch");
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor<T> out(Shape{r, total});
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < widths[p]; ++j) out[i * total + off + j] = parts[p].value()[i * widths[p] + j];
    off += widths[p];
  }
  return make_result<T>(std::move(out), parts, [r, total, widths = std::move(widths)](Node<T>& n) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < n.inputs.size(); ++p) {
      if (n.inputs[p]->requires_grad) {
        auto& g = n.inputs[p]->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < widths[p]; ++j) g[i * widths[p] + j] += n.grad[i * total + off + j];
      }
      off += widths[p];
    }
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t end) {
  const std::size_t c = col_count(x.value()), r = x.size() / c;
  if (begin >= end || end > r) throw InvalidShapeError("slice_rows: bad range");
  std::vector<T> data(x.value().storage().begin() + begin * c, x.value().storage().begin() + end * c);
  return make_result<T>(Tensor<T>(Shape{end - begin, c}, std::move(data)), {x}, [begin, c](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[begin * c + i] += n.grad[i];
  });
}

template <typename T>
Var<T> repeat_rows(const Var<T>& x, std::size_t times) {
  if (times == 0) throw InvalidShapeError("repeat_rows: zero repeats");
  const std::size_t c = col_count(x.value()), r = x.size() / c;
  std::vector<T> data;
  data.reserve(times * x.size());
  for (std::size_t t = 0; t < times; ++t)
    data.insert(data.end(), x.value().storage().begin(), x.value().storage().end());
  return make_result<T>(Tensor<T>(Shape{times * r, c}, std::move(data)), {x}, [times](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    const std::size_t sz = g.size();
    for (std::size_t t = 0; t < times; ++t)
      for (std::size_t i = 0; i < sz; ++i) g[i] += n.grad[t * sz + i];
  });
}

// ---- reductions ------------------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& x) {
  T s = 0;
  for (T v : x.value().storage()) s += v;
  return make_result<T>(Tensor<T>::scalar(s), {x}, [](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (auto& v : g.storage()) v += n.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / T(x.size()));
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& w) {
  if (w.size() != x.size()) throw InvalidShapeError("weighted_sum: weight size mismatch");
  T s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += x.value()[i] * w[i];
  return make_result<T>(Tensor<T>::scalar(s), {x}, [w](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < w.size(); ++i) g[i] += n.grad[0] * w[i];
  });
}

template <typename T>
Var<T> mse(const Var<T>& pred, const Var<T>& target) {
  require_same_shape("mse", pred, target);
  const std::size_t n_el = pred.size();
  T s = 0;
  for (std::size_t i = 0; i < n_el; ++i) {
    T d = pred.value()[i] - target.value()[i];
    s += d * d;
  }
  return make_result<T>(Tensor<T>::scalar(s / T(n_el)), {pred, target}, [n_el](Node<T>& n) {
    const auto& p = n.inputs[0]->value;
    const auto& t = n.inputs[1]->value;
    const T k = T(2) * n.grad[0] / T(n_el);
    if (n.inputs[0]->requires_grad) {
      auto& g = n.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < n_el; ++i) g[i] += k * (p[i] - t[i]);
    }
    if (n.inputs[1]->requires_grad) {
      auto& g = n.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < n_el; ++i) g[i] -= k * (p[i] - t[i]);
    }
  });
}

#define EXPRDIT_INSTANTIATE(T)                                                                    \
  template Var<T> make_result<T>(Tensor<T>, std::vector<Var<T>>, std::function<void(Node<T>&)>); \
  template void backward<T>(const Var<T>&);                                                       \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                           \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                           \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                           \
  template Var<T> scale<T>(const Var<T>&, T);                                                     \
  template Var<T> silu<T>(const Var<T>&);                                                         \
  template Var<T> gelu<T>(const Var<T>&);                                                         \
  template Var<T> add_row<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> mul_row<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> modulate<T>(const Var<T>&, const Var<T>&, const Var<T>&);                       \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                         \
  template Var<T> layer_norm<T>(const Var<T>&, T);                                                \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                               \
  template Var<T> gather<T>(const Var<T>&, std::vector<std::size_t>, Shape);                      \
  template Var<T> concat_rows<T>(const std::vector<Var<T>>&);                                     \
  template Var<T> concat_cols<T>(const std::vector<Var<T>>&);                                     \
  template Var<T> slice_rows<T>(const Var<T>&, std::size_t, std::size_t);                         \
  template Var<T> repeat_rows<T>(const Var<T>&, std::size_t);                                     \
  template Var<T> sum<T>(const Var<T>&);                                                          \
  template Var<T> mean<T>(const Var<T>&);                                                         \
  template Var<T> weighted_sum<T>(const Var<T>&, const Tensor<T>&);                               \
  template Var<T> mse<T>(const Var<T>&, const Var<T>&);

EXPRDIT_INSTANTIATE(float)
EXPRDIT_INSTANTIATE(double)

}  // namespace exprdit::ad
