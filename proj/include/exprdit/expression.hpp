#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "exprdit/attention.hpp"
#include "exprdit/params.hpp"

namespace exprdit {

struct ExpressionConfig {
  std::size_t d_lip = 16;
  std::size_t d_eye = 6;
  std::size_t d_head = 6;
  std::size_t d_emo = 16;
  std::size_t width = 64;     // motion width c
  std::size_t k_emo = 8;
  std::size_t k_lip = 8;
  std::size_t heads = 4;      // H_a
  std::size_t kv_tokens = 4;  // key/value tokens split from each feature row
  bool use_eal = true;

  // Tokens per character per frame, l.
  std::size_t tokens_per_character() const { return use_eal ? k_emo + k_lip + 2 : 4; }
  void validate() const;
};

// Implicit features of one character, one row per frame.
struct ImplicitExpressionTrack {
  int character_id = 0;
  Tensor<double> e_lip;
  Tensor<double> e_eye;
  Tensor<double> e_head;
  Tensor<double> e_emo;

  std::size_t num_frames() const { return e_lip.dim(0); }
  void validate(const ExpressionConfig& cfg) const;
};

template <typename T>
struct AugmentParams {
  ad::Var<T> token_bank;  // K x c
  ad::Var<T> w_split;     // d x (kv_tokens * c)
  ad::Var<T> b_split;
  ad::Var<T> wq, wk, wv, wo;
  std::size_t heads = 1;
  std::size_t kv_tokens = 1;

  static AugmentParams init(Rng& rng, std::size_t d_in, std::size_t k, std::size_t c, std::size_t heads,
                            std::size_t kv_tokens);

  std::size_t num_tokens() const { return token_bank.value().dim(0); }
  std::size_t width() const { return token_bank.value().dim(1); }
  std::size_t input_dim() const { return w_split.value().dim(0); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".token_bank", token_bank);
    f(prefix + ".w_split", w_split);
    f(prefix + ".b_split", b_split);
    f(prefix + ".wq", wq);
    f(prefix + ".wk", wk);
    f(prefix + ".wv", wv);
    f(prefix + ".wo", wo);
  }
};

// Expression-augmented encoder E_a. feat is f x d; the result holds K tokens
// per frame as an (f*K) x c matrix, frame-major.
template <typename T>
ad::Var<T> expression_augment_rows(const ad::Var<T>& feat, const AugmentParams<T>& params);

// Same, reshaped to f x K x c.
template <typename T>
ad::Var<T> expression_augment(const ad::Var<T>& feat, const AugmentParams<T>& params);

// Everything that turns a track into motion tokens, plus the learned null
// condition used by dropout and guidance.
template <typename T>
struct MotionEncoderParams {
  ExpressionConfig cfg;
  AugmentParams<T> aug_emo;  // EAL only
  AugmentParams<T> aug_lip;
  ad::Var<T> emo_w, emo_b;   // without EAL
  ad::Var<T> lip_w, lip_b;
  ad::Var<T> head_w, head_b;
  ad::Var<T> eye_w, eye_b;
  ad::Var<T> null_tokens;    // l x c

  static MotionEncoderParams init(Rng& rng, const ExpressionConfig& cfg);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    if (cfg.use_eal) {
      aug_emo.visit(prefix + ".aug_emo", f);
      aug_lip.visit(prefix + ".aug_lip", f);
    } else {
      f(prefix + ".emo_w", emo_w);
      f(prefix + ".emo_b", emo_b);
      f(prefix + ".lip_w", lip_w);
      f(prefix + ".lip_b", lip_b);
    }
    f(prefix + ".head_w", head_w);
    f(prefix + ".head_b", head_b);
    f(prefix + ".eye_w", eye_w);
    f(prefix + ".eye_b", eye_b);
    f(prefix + ".null_tokens", null_tokens);
  }
};

// Per-character motion tokens, (f*l) x c, frame-major.
template <typename T>
struct MotionEmbedding {
  ad::Var<T> tokens;
  int character_id = 0;
  std::size_t frames = 0;
  std::size_t per_frame = 0;  // l
};

// Concatenated condition, (f*N*l) x c: frame-major, then character block.
// char_of_key maps a position within one frame's N*l keys to a character id.
template <typename T>
struct MultiMotionEmbedding {
  ad::Var<T> tokens;
  std::vector<int> char_of_key;
  std::size_t frames = 0;
  bool is_null = false;

  std::size_t keys_per_frame() const { return char_of_key.size(); }
  std::size_t total_keys() const { return frames * char_of_key.size(); }
  std::size_t frame_of_key(std::size_t k) const { return k / char_of_key.size(); }
  int character_of_key(std::size_t k) const { return char_of_key[k % char_of_key.size()]; }
  // tokens viewed as f x (N*l) x c
  Tensor<T> as_tensor() const;
};

// [E_a(e_emo) | E_a(e_lip) | head | eye] per frame; without EAL the first two
// segments are single linear tokens.
template <typename T>
MotionEmbedding<T> build_motion_embedding(const ImplicitExpressionTrack& track, const MotionEncoderParams<T>& enc);

template <typename T>
MultiMotionEmbedding<T> concat_multi_portrait(const std::vector<MotionEmbedding<T>>& embeddings);

// Learned null sequence with the same layout as em.
template <typename T>
MultiMotionEmbedding<T> null_condition(const MultiMotionEmbedding<T>& em, const MotionEncoderParams<T>& enc);

// With probability p the whole condition becomes the null sequence.
template <typename T>
MultiMotionEmbedding<T> apply_condition_dropout(const MultiMotionEmbedding<T>& em, double p, Rng& rng,
                                                const MotionEncoderParams<T>& enc);

// Track files: JSON Lines, one clip per line.
struct TrackRecord {
  std::string clip_id;
  double fps = 25.0;
  std::vector<ImplicitExpressionTrack> characters;
};

void write_tracks(const std::filesystem::path& path, const std::vector<TrackRecord>& records);
std::vector<TrackRecord> read_tracks(const std::filesystem::path& path);
std::string track_record_to_json(const TrackRecord& rec);
TrackRecord track_record_from_json(const std::string& line);

}  // namespace exprdit
