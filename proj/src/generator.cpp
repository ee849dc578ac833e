#include "exprdit/generator.hpp"

#include <fmt/format.h>

#include <cmath>
#include <set>

#include "exprdit/codec.hpp"

namespace exprdit {

using ad::Var;

const Tensor<float>* LatentMaskSet::find(int character_id) const {
  for (std::size_t i = 0; i < character_ids.size(); ++i)
    if (character_ids[i] == character_id) return &masks[i];
  return nullptr;
}

LatentMaskSet build_latent_mask(const std::vector<FaceMaskTrack>& masks, const Dims3& latent_dims) {
  LatentMaskSet out;
  out.dims = latent_dims;
  std::set<int> seen;
  for (const auto& m : masks) {
    const auto& s = m.mask.shape();
    if (s.size() != 3 || s[0] != latent_dims[0] || s[1] != latent_dims[1] * kSpatialFold ||
        s[2] != latent_dims[2] * kSpatialFold) {
      throw InvalidShapeError(fmt::format("face mask of character {} is {}, latent dims {}x{}x{} need {}x{}x{}",
                                          m.character_id, shape_str(s), latent_dims[0], latent_dims[1],
                                          latent_dims[2], latent_dims[0], latent_dims[1] * kSpatialFold,
                                          latent_dims[2] * kSpatialFold));
    }
    if (!seen.insert(m.character_id).second) {
      throw DuplicateIdentityError(fmt::format("two face masks for character {}", m.character_id));
    }
    Tensor<float> lat = trilinear_resample(m.mask, latent_dims);
    for (auto& v : lat.storage()) v = v >= 0.5f ? 1.0f : 0.0f;
    out.character_ids.push_back(m.character_id);
    out.masks.push_back(std::move(lat));
  }
  return out;
}

namespace {

// 1 when any latent site of the token is set.
std::vector<std::uint8_t> pooled_occupancy(const Tensor<float>& mask, const TokenGrid& g) {
  std::vector<std::uint8_t> occ(g.count(), 0);
  const std::size_t p = g.patch;
  for (std::size_t t = 0; t < g.frames; ++t)
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x)
        if (mask[(t * g.height + y) * g.width + x] != 0.0f) occ[(t * g.hp() + y / p) * g.wp() + x / p] = 1;
  return occ;
}

void check_grid(const TokenGrid& g) {
  if (g.patch == 0 || g.height % g.patch != 0 || g.width % g.patch != 0) {
    throw InvalidShapeError(fmt::format("latent {}x{} not divisible by patch {}", g.height, g.width, g.patch));
  }
}

}  // namespace

PairMask build_pair_mask(const LatentMaskSet& mset, const std::vector<int>& char_of_key, std::size_t key_frames,
                         const TokenGrid& grid) {
  check_grid(grid);
  if (mset.dims != Dims3{grid.frames, grid.height, grid.width}) {
    throw InvalidShapeError(fmt::format("latent masks are {}x{}x{}, token grid {}x{}x{}", mset.dims[0], mset.dims[1],
                                        mset.dims[2], grid.frames, grid.height, grid.width));
  }
  if (key_frames != grid.frames) {
    throw InvalidShapeError(fmt::format("condition has {} frames, latent has {}", key_frames, grid.frames));
  }
  const std::size_t per = char_of_key.size(), n_tok = grid.count(), tok_per_frame = grid.hp() * grid.wp();
  PairMask m(n_tok, key_frames * per);
  for (std::size_t j = 0; j < per; ++j) {
    const Tensor<float>* cm = mset.find(char_of_key[j]);
    if (!cm) continue;
    const auto occ = pooled_occupancy(*cm, grid);
    for (std::size_t q = 0; q < n_tok; ++q)
      if (occ[q]) m.set(q, (q / tok_per_frame) * per + j, true);
  }
  return m;
}

PairMask frame_pair_mask(std::size_t keys_per_frame, std::size_t key_frames, const TokenGrid& grid) {
  check_grid(grid);
  if (key_frames != grid.frames) {
    throw InvalidShapeError(fmt::format("condition has {} frames, latent has {}", key_frames, grid.frames));
  }
  PairMask m(grid.count(), key_frames * keys_per_frame);
  for (std::size_t q = 0; q < grid.count(); ++q) {
    const std::size_t t = grid.frame_of(q);
    for (std::size_t j = 0; j < keys_per_frame; ++j) m.set(q, t * keys_per_frame + j, true);
  }
  return m;
}

void DenoiserConfig::validate() const {
  if (layers == 0) throw ConfigError("denoiser needs at least one layer");
  if (width == 0 || heads == 0 || width % heads != 0) {
    throw ConfigError(fmt::format("model width {} must be a positive multiple of heads {}", width, heads));
  }
  if (patch == 0 || max_height % patch != 0 || max_width % patch != 0) {
    throw ConfigError(fmt::format("latent {}x{} not divisible by patch {}", max_height, max_width, patch));
  }
  if (motion_width == 0 || latent_channels == 0 || max_frames == 0) throw ConfigError("zero-sized denoiser dimension");
  if (time_features < 2 || time_features % 2 != 0) throw ConfigError("time_features must be even and >= 2");
}

template <typename T>
CrossAttnParams<T> CrossAttnParams<T>::init(Rng& rng, std::size_t width, std::size_t kv_dim) {
  CrossAttnParams p;
  p.wq = weight_param<T>(rng, width, width);
  p.wk = weight_param<T>(rng, kv_dim, width);
  p.wv = weight_param<T>(rng, kv_dim, width);
  p.wo = weight_param<T>(rng, width, width);
  return p;
}

template <typename T>
DenoiserParams<T> DenoiserParams<T>::init(Rng& rng, const DenoiserConfig& cfg, InitScheme scheme) {
  cfg.validate();
  const bool random = scheme == InitScheme::kRandom;
  const std::size_t w = cfg.width;
  auto maybe_zero = [&](std::size_t d_in, std::size_t d_out, double gain) {
    return random ? weight_param<T>(rng, d_in, d_out, gain) : zeros_param<T>({d_in, d_out});
  };
  auto bias = [&](std::size_t n) { return random ? normal_param<T>(rng, {n}, 0.1) : zeros_param<T>({n}); };

  DenoiserParams p;
  p.cfg = cfg;
  const std::size_t in_dim = cfg.patch_dim() * (cfg.use_reference ? 2 : 1);
  p.patch_w = weight_param<T>(rng, in_dim, w);
  p.patch_b = zeros_param<T>({w});
  p.pos_t = normal_param<T>(rng, {cfg.max_frames, w}, 0.02);
  p.pos_y = normal_param<T>(rng, {cfg.max_height / cfg.patch, w}, 0.02);
  p.pos_x = normal_param<T>(rng, {cfg.max_width / cfg.patch, w}, 0.02);
  p.time_w1 = weight_param<T>(rng, cfg.time_features, w);
  p.time_b1 = zeros_param<T>({w});
  p.time_w2 = weight_param<T>(rng, w, w);
  p.time_b2 = zeros_param<T>({w});
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    BlockParams<T> b;
    b.ada_w = maybe_zero(w, 6 * w, 0.5);
    b.ada_b = bias(6 * w);
    b.wq = weight_param<T>(rng, w, w);
    b.bq = zeros_param<T>({w});
    b.wk = weight_param<T>(rng, w, w);
    b.wv = weight_param<T>(rng, w, w);
    b.bv = zeros_param<T>({w});
    b.wo = weight_param<T>(rng, w, w);
    b.bo = zeros_param<T>({w});
    b.cross = CrossAttnParams<T>::init(rng, w, cfg.motion_width);
    if (cfg.context_dim > 0) {
      b.context = CrossAttnParams<T>::init(rng, w, cfg.context_dim);
      b.has_context = true;
    }
    b.ff_w1 = weight_param<T>(rng, w, cfg.ffn_mult * w);
    b.ff_b1 = zeros_param<T>({cfg.ffn_mult * w});
    b.ff_w2 = weight_param<T>(rng, cfg.ffn_mult * w, w);
    b.ff_b2 = zeros_param<T>({w});
    p.blocks.push_back(std::move(b));
  }
  p.final_ada_w = maybe_zero(w, 2 * w, 0.5);
  p.final_ada_b = bias(2 * w);
  p.out_w = maybe_zero(w, cfg.patch_dim(), 1.0);
  p.out_b = zeros_param<T>({cfg.patch_dim()});
  return p;
}

template <typename T>
Var<T> masked_cross_attention_block(const Var<T>& z, const Var<T>& keys_src, const PairMask* mask,
                                    const CrossAttnParams<T>& params, std::size_t heads) {
  const std::size_t width = params.wq.value().dim(0);
  if (z.value().rank() != 2 || z.value().dim(1) != width) {
    throw InvalidShapeError(fmt::format("cross-attention: hidden state {} does not match width {}", shape_str(z.shape()), width));
  }
  if (keys_src.value().rank() != 2 || keys_src.value().dim(1) != params.wk.value().dim(0)) {
    throw InvalidShapeError(fmt::format("cross-attention: condition {} does not match key input dim {}",
                                        shape_str(keys_src.shape()), params.wk.value().dim(0)));
  }
  if (mask && (mask->rows() != z.value().dim(0) || mask->cols() != keys_src.value().dim(0))) {
    throw InvalidShapeError(fmt::format("cross-attention: mask {}x{} for {} queries and {} keys", mask->rows(),
                                        mask->cols(), z.value().dim(0), keys_src.value().dim(0)));
  }
  Var<T> q = ad::matmul(z, params.wq);
  Var<T> k = ad::matmul(keys_src, params.wk);
  Var<T> v = ad::matmul(keys_src, params.wv);
  Var<T> a = ad::attention(q, k, v, heads, mask);
  return ad::add(z, ad::matmul(a, params.wo));
}

template <typename T>
Tensor<T> timestep_features(T t, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor<T> out(Shape{1, dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    const double arg = static_cast<double>(t) * 1000.0 * freq;
    out[i] = static_cast<T>(std::cos(arg));
    out[half + i] = static_cast<T>(std::sin(arg));
  }
  return out;
}

namespace {

// Flat gather index that maps an f x h x w x C latent to patch tokens.
std::vector<std::size_t> patch_index(const TokenGrid& g, std::size_t ch) {
  const std::size_t p = g.patch;
  std::vector<std::size_t> idx;
  idx.reserve(g.count() * p * p * ch);
  for (std::size_t t = 0; t < g.frames; ++t)
    for (std::size_t y = 0; y < g.hp(); ++y)
      for (std::size_t x = 0; x < g.wp(); ++x)
        for (std::size_t dy = 0; dy < p; ++dy)
          for (std::size_t dx = 0; dx < p; ++dx)
            for (std::size_t c = 0; c < ch; ++c)
              idx.push_back(((t * g.height + y * p + dy) * g.width + x * p + dx) * ch + c);
  return idx;
}

std::vector<std::size_t> inverse_index(const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> inv(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) inv[idx[i]] = i;
  return inv;
}

template <typename T>
Var<T> rows_from_table(const Var<T>& table, const std::vector<std::size_t>& rows) {
  const std::size_t w = table.value().dim(1);
  std::vector<std::size_t> idx;
  idx.reserve(rows.size() * w);
  for (auto r : rows)
    for (std::size_t j = 0; j < w; ++j) idx.push_back(r * w + j);
  return ad::gather(table, std::move(idx), Shape{rows.size(), w});
}

template <typename T>
std::vector<Var<T>> split_rows(const Var<T>& x, std::size_t n) {
  std::vector<Var<T>> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(ad::slice_rows(x, i, i + 1));
  return out;
}

}  // namespace

template <typename T>
Var<T> denoiser_forward(const DenoiserInput<T>& in, const DenoiserParams<T>& params) {
  const auto& cfg = params.cfg;
  const auto& zs = in.z_t.shape();
  if (zs.size() != 4 || zs[3] != cfg.latent_channels) {
    throw InvalidShapeError(fmt::format("denoiser input must be f x h x w x {}, got {}", cfg.latent_channels, shape_str(zs)));
  }
  const TokenGrid grid{zs[0], zs[1], zs[2], cfg.patch};
  check_grid(grid);
  if (grid.frames > cfg.max_frames || grid.height > cfg.max_height || grid.width > cfg.max_width) {
    throw InvalidShapeError(fmt::format("latent {} exceeds configured maximum {}x{}x{}", shape_str(zs), cfg.max_frames,
                                        cfg.max_height, cfg.max_width));
  }
  if (!in.z_t.value().all_finite() || !std::isfinite(static_cast<double>(in.t))) {
    throw EvaluationError("denoiser input holds non-finite values");
  }
  if (!in.em) throw IncompleteInputError("denoiser needs a condition (use the null condition for none)");
  const auto& em = *in.em;
  if (em.frames != grid.frames) {
    throw InvalidShapeError(fmt::format("condition has {} frames, latent has {}", em.frames, grid.frames));
  }

  const std::size_t n_tok = grid.count(), w = cfg.width;
  const auto pidx = patch_index(grid, cfg.latent_channels);
  Var<T> tokens = ad::gather(in.z_t, pidx, Shape{n_tok, cfg.patch_dim()});
  if (cfg.use_reference) {
    const TokenGrid one{1, grid.height, grid.width, grid.patch};
    Tensor<T> ref(Shape{grid.height, grid.width, cfg.latent_channels});
    if (in.reference) {
      if (in.reference->shape() != ref.shape()) {
        throw InvalidShapeError(fmt::format("reference latent {} does not match {}", shape_str(in.reference->shape()),
                                            shape_str(ref.shape())));
      }
      ref = *in.reference;
    }
    Var<T> ref_tok = ad::gather(Var<T>::constant(std::move(ref)), patch_index(one, cfg.latent_channels),
                                Shape{one.count(), cfg.patch_dim()});
    tokens = ad::concat_cols(std::vector<Var<T>>{tokens, ad::repeat_rows(ref_tok, grid.frames)});
  }
  Var<T> x = ad::linear(tokens, params.patch_w, params.patch_b);

  std::vector<std::size_t> rt, ry, rx;
  for (std::size_t q = 0; q < n_tok; ++q) {
    rt.push_back(q / (grid.hp() * grid.wp()));
    ry.push_back((q / grid.wp()) % grid.hp());
    rx.push_back(q % grid.wp());
  }
  x = ad::add(x, ad::add(rows_from_table(params.pos_t, rt),
                         ad::add(rows_from_table(params.pos_y, ry), rows_from_table(params.pos_x, rx))));

  Var<T> tf = Var<T>::constant(timestep_features(in.t, cfg.time_features));
  Var<T> temb = ad::linear(ad::silu(ad::linear(tf, params.time_w1, params.time_b1)), params.time_w2, params.time_b2);
  Var<T> cond = ad::silu(temb);

  PairMask frame_mask;
  const PairMask* mask = in.mask;
  if (!cfg.use_mca || !mask) {
    frame_mask = frame_pair_mask(em.keys_per_frame(), em.frames, grid);
    mask = &frame_mask;
  }

  for (const auto& b : params.blocks) {
    auto mod = split_rows(ad::reshape(ad::linear(cond, b.ada_w, b.ada_b), Shape{6, w}), 6);
    Var<T> h = ad::modulate(ad::layer_norm(x), mod[0], mod[1]);
    Var<T> att = ad::attention(ad::linear(h, b.wq, b.bq), ad::matmul(h, b.wk), ad::linear(h, b.wv, b.bv), cfg.heads);
    x = ad::add(x, ad::mul_row(ad::linear(att, b.wo, b.bo), mod[2]));

    x = masked_cross_attention_block(x, em.tokens, mask, b.cross, cfg.heads);
    if (b.has_context && in.context) x = masked_cross_attention_block(x, *in.context, nullptr, b.context, cfg.heads);

    Var<T> h2 = ad::modulate(ad::layer_norm(x), mod[3], mod[4]);
    Var<T> ff = ad::linear(ad::gelu(ad::linear(h2, b.ff_w1, b.ff_b1)), b.ff_w2, b.ff_b2);
    x = ad::add(x, ad::mul_row(ff, mod[5]));
  }

  auto fmod = split_rows(ad::reshape(ad::linear(cond, params.final_ada_w, params.final_ada_b), Shape{2, w}), 2);
  Var<T> out = ad::linear(ad::modulate(ad::layer_norm(x), fmod[0], fmod[1]), params.out_w, params.out_b);
  return ad::gather(out, inverse_index(pidx), zs);
}

#define EXPRDIT_INSTANTIATE(T)                                                                                 \
  template struct CrossAttnParams<T>;                                                                          \
  template struct DenoiserParams<T>;                                                                           \
  template Var<T> masked_cross_attention_block<T>(const Var<T>&, const Var<T>&, const PairMask*,               \
                                                  const CrossAttnParams<T>&, std::size_t);                    \
  template Var<T> denoiser_forward<T>(const DenoiserInput<T>&, const DenoiserParams<T>&);                      \
  template Tensor<T> timestep_features<T>(T, std::size_t);

EXPRDIT_INSTANTIATE(float)
EXPRDIT_INSTANTIATE(double)

}  // namespace exprdit
