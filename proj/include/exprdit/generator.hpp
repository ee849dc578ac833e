#pragma once

#include <optional>
#include <string>
#include <vector>

#include "exprdit/attention.hpp"
#include "exprdit/expression.hpp"
#include "exprdit/resample.hpp"

namespace exprdit {

// Binary face mask of one character over pixel space, f x H x W.
struct FaceMaskTrack {
  int character_id = 0;
  Tensor<float> mask;
};

// Per-character occupancy over latent space-time, each f x h x w in {0, 1}.
struct LatentMaskSet {
  Dims3 dims{};
  std::vector<int> character_ids;
  std::vector<Tensor<float>> masks;

  // nullptr when the character has no mask.
  const Tensor<float>* find(int character_id) const;
};

// Trilinear resampling to latent dims, then threshold at 0.5. Pixel dims must
// be the latent dims scaled by the codec fold (frames unchanged).
LatentMaskSet build_latent_mask(const std::vector<FaceMaskTrack>& masks, const Dims3& latent_dims);

// Token layout of a patchified latent: token index (t * hp + y) * wp + x.
struct TokenGrid {
  std::size_t frames = 0, height = 0, width = 0, patch = 1;

  std::size_t hp() const { return height / patch; }
  std::size_t wp() const { return width / patch; }
  std::size_t count() const { return frames * hp() * wp(); }
  std::size_t frame_of(std::size_t token) const { return token / (hp() * wp()); }
};

// M[q, k] = 1 iff the latent mask of char_of_key(k) covers q's site and k's
// frame equals q's frame. With patch > 1 a token is covered when any latent
// site inside it is. Characters without a mask enable nothing.
PairMask build_pair_mask(const LatentMaskSet& mset, const std::vector<int>& char_of_key, std::size_t key_frames,
                         const TokenGrid& grid);

// Frame alignment only: every query sees all keys of its own frame.
PairMask frame_pair_mask(std::size_t keys_per_frame, std::size_t key_frames, const TokenGrid& grid);

enum class InitScheme {
  kAdaLnZero,  // modulation and output head start at zero
  kRandom,     // every tensor random; used by property tests
};

struct DenoiserConfig {
  std::size_t layers = 4;
  std::size_t width = 128;
  std::size_t heads = 4;
  std::size_t motion_width = 64;
  std::size_t patch = 1;
  std::size_t latent_channels = 4;
  std::size_t max_frames = 16;
  std::size_t max_height = 16;  // latent sites
  std::size_t max_width = 16;
  std::size_t ffn_mult = 4;
  std::size_t time_features = 64;
  std::size_t context_dim = 0;  // 0 disables context-token cross-attention
  bool use_mca = true;
  bool use_eal = true;
  bool use_reference = true;

  void validate() const;
  std::size_t patch_dim() const { return patch * patch * latent_channels; }
};

template <typename T>
struct CrossAttnParams {
  ad::Var<T> wq, wk, wv, wo;

  static CrossAttnParams init(Rng& rng, std::size_t width, std::size_t kv_dim);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".wq", wq);
    f(prefix + ".wk", wk);
    f(prefix + ".wv", wv);
    f(prefix + ".wo", wo);
  }
};

template <typename T>
struct BlockParams {
  ad::Var<T> ada_w, ada_b;  // width x 6*width: shift/scale/gate for attention and ffn
  ad::Var<T> wq, bq, wk, wv, bv, wo, bo;  // no key bias
  CrossAttnParams<T> cross;
  CrossAttnParams<T> context;  // only when context_dim > 0
  ad::Var<T> ff_w1, ff_b1, ff_w2, ff_b2;
  bool has_context = false;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".ada_w", ada_w);
    f(prefix + ".ada_b", ada_b);
    f(prefix + ".wq", wq);
    f(prefix + ".bq", bq);
    f(prefix + ".wk", wk);
    f(prefix + ".wv", wv);
    f(prefix + ".bv", bv);
    f(prefix + ".wo", wo);
    f(prefix + ".bo", bo);
    cross.visit(prefix + ".cross", f);
    if (has_context) context.visit(prefix + ".context", f);
    f(prefix + ".ff_w1", ff_w1);
    f(prefix + ".ff_b1", ff_b1);
    f(prefix + ".ff_w2", ff_w2);
    f(prefix + ".ff_b2", ff_b2);
  }
};

template <typename T>
struct DenoiserParams {
  DenoiserConfig cfg;
  ad::Var<T> patch_w, patch_b;
  ad::Var<T> pos_t, pos_y, pos_x;
  ad::Var<T> time_w1, time_b1, time_w2, time_b2;
  std::vector<BlockParams<T>> blocks;
  ad::Var<T> final_ada_w, final_ada_b;
  ad::Var<T> out_w, out_b;

  static DenoiserParams init(Rng& rng, const DenoiserConfig& cfg, InitScheme scheme = InitScheme::kAdaLnZero);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".patch_w", patch_w);
    f(prefix + ".patch_b", patch_b);
    f(prefix + ".pos_t", pos_t);
    f(prefix + ".pos_y", pos_y);
    f(prefix + ".pos_x", pos_x);
    f(prefix + ".time_w1", time_w1);
    f(prefix + ".time_b1", time_b1);
    f(prefix + ".time_w2", time_w2);
    f(prefix + ".time_b2", time_b2);
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(prefix + ".block" + std::to_string(i), f);
    f(prefix + ".final_ada_w", final_ada_w);
    f(prefix + ".final_ada_b", final_ada_b);
    f(prefix + ".out_w", out_w);
    f(prefix + ".out_b", out_b);
  }
};

// Z + (masked_attention(Z Wq, em Wk, em Wv, M) Wo), multi-head. mask may be
// nullptr for unmasked attention.
template <typename T>
ad::Var<T> masked_cross_attention_block(const ad::Var<T>& z, const ad::Var<T>& keys_src, const PairMask* mask,
                                        const CrossAttnParams<T>& params, std::size_t heads);

template <typename T>
struct DenoiserInput {
  ad::Var<T> z_t;                   // f x h x w x C latent
  T t = T(0);
  const MultiMotionEmbedding<T>* em = nullptr;
  const PairMask* mask = nullptr;   // character mask; nullptr means all keys of the aligned frame
  std::optional<Tensor<T>> reference;  // h x w x C source latent
  std::optional<ad::Var<T>> context;   // n x context_dim
};

// Velocity prediction with the shape of z_t.
template <typename T>
ad::Var<T> denoiser_forward(const DenoiserInput<T>& in, const DenoiserParams<T>& params);

// Sinusoidal timestep features, 1 x dim.
template <typename T>
Tensor<T> timestep_features(T t, std::size_t dim);

}  // namespace exprdit
