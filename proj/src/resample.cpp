#include "exprdit/resample.hpp"

#include <cmath>

namespace exprdit {

namespace {

// Source index pair and interpolation fraction along one axis.
struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> axis_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    if (out == 1 || in == 1) {
      taps[i] = {0, 0, 0.0};
      continue;
    }
    // Exact integer numerator keeps out == in an identity map.
    const std::size_t num = i * (in - 1);
    const std::size_t lo = num / (out - 1);
    const double frac = static_cast<double>(num % (out - 1)) / static_cast<double>(out - 1);
    taps[i] = {lo, std::min(lo + 1, in - 1), frac};
  }
  return taps;
}

void check_dims(const Shape& in, const Dims3& out) {
  if (in.size() != 3) throw InvalidShapeError("trilinear_resample: expected f x h x w volume, got " + shape_str(in));
  for (auto e : out) {
    if (e == 0) throw InvalidShapeError("trilinear_resample: zero output extent");
  }
}

// Calls visit(out_index, src_index, weight) for each nonzero contribution.
template <typename F>
void for_each_tap(const Shape& in, const Dims3& out, F&& visit) {
  const auto tf = axis_taps(in[0], out[0]);
  const auto ty = axis_taps(in[1], out[1]);
  const auto tx = axis_taps(in[2], out[2]);
  const std::size_t ih = in[1], iw = in[2];
  std::size_t o = 0;
  for (std::size_t f = 0; f < out[0]; ++f) {
    for (std::size_t y = 0; y < out[1]; ++y) {
      for (std::size_t x = 0; x < out[2]; ++x, ++o) {
        const std::size_t fs[2] = {tf[f].lo, tf[f].hi};
        const std::size_t ys[2] = {ty[y].lo, ty[y].hi};
        const std::size_t xs[2] = {tx[x].lo, tx[x].hi};
        const double wf[2] = {1.0 - tf[f].frac, tf[f].frac};
        const double wy[2] = {1.0 - ty[y].frac, ty[y].frac};
        const double wx[2] = {1.0 - tx[x].frac, tx[x].frac};
        for (int a = 0; a < 2; ++a) {
          if (wf[a] == 0.0) continue;
          for (int b = 0; b < 2; ++b) {
            if (wy[b] == 0.0) continue;
            for (int c = 0; c < 2; ++c) {
              if (wx[c] == 0.0) continue;
              visit(o, (fs[a] * ih + ys[b]) * iw + xs[c], wf[a] * wy[b] * wx[c]);
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> trilinear_resample(const Tensor<T>& vol, const Dims3& out_dims) {
  if (!vol.all_finite()) throw EvaluationError("trilinear_resample: non-finite input");
  return ad::trilinear_resample(ad::Var<T>::constant(vol), out_dims).value();
}

namespace ad {

template <typename T>
Var<T> trilinear_resample(const Var<T>& vol, const Dims3& out_dims) {
  check_dims(vol.shape(), out_dims);
  Shape in = vol.shape();
  Tensor<T> out(Shape{out_dims[0], out_dims[1], out_dims[2]});
  const auto& src = vol.value();
  for_each_tap(in, out_dims, [&](std::size_t o, std::size_t s, double w) { out[o] += static_cast<T>(w) * src[s]; });
  return make_result<T>(std::move(out), {vol}, [in, out_dims](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for_each_tap(in, out_dims, [&](std::size_t o, std::size_t s, double w) { g[s] += static_cast<T>(w) * n.grad[o]; });
  });
}

template Var<float> trilinear_resample<float>(const Var<float>&, const Dims3&);
template Var<double> trilinear_resample<double>(const Var<double>&, const Dims3&);

}  // namespace ad

template Tensor<float> trilinear_resample<float>(const Tensor<float>&, const Dims3&);
template Tensor<double> trilinear_resample<double>(const Tensor<double>&, const Dims3&);

}  // namespace exprdit
