#include "exprdit/expression.hpp"

#include <fmt/format.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

namespace exprdit {

using ad::Var;
using nlohmann::json;

void ExpressionConfig::validate() const {
  if (width == 0 || heads == 0 || width % heads != 0) {
    throw ConfigError(fmt::format("motion width {} must be a positive multiple of heads {}", width, heads));
  }
  if (k_emo == 0 || k_lip == 0 || kv_tokens == 0) throw ConfigError("token counts must be at least 1");
  if (d_lip == 0 || d_eye == 0 || d_head == 0 || d_emo == 0) throw ConfigError("feature dims must be at least 1");
}

void ImplicitExpressionTrack::validate(const ExpressionConfig& cfg) const {
  struct Field {
    const char* name;
    const Tensor<double>* t;
    std::size_t d;
  };
  const Field fields[] = {
      {"e_lip", &e_lip, cfg.d_lip}, {"e_eye", &e_eye, cfg.d_eye}, {"e_head", &e_head, cfg.d_head}, {"e_emo", &e_emo, cfg.d_emo}};
  const std::size_t f = e_lip.dim(0);
  for (const auto& fd : fields) {
    if (fd.t->rank() != 2) throw InvalidShapeError(fmt::format("{} must be frames x dim, got {}", fd.name, shape_str(fd.t->shape())));
    if (fd.t->dim(0) != f) {
      throw InvalidShapeError(fmt::format("character {}: {} has {} frames, e_lip has {}", character_id, fd.name, fd.t->dim(0), f));
    }
    if (fd.t->dim(1) != fd.d) {
      throw InvalidShapeError(fmt::format("character {}: {} width {} != configured {}", character_id, fd.name, fd.t->dim(1), fd.d));
    }
    if (!fd.t->all_finite()) throw EvaluationError(fmt::format("character {}: {} has non-finite values", character_id, fd.name));
  }
}

template <typename T>
AugmentParams<T> AugmentParams<T>::init(Rng& rng, std::size_t d_in, std::size_t k, std::size_t c, std::size_t heads,
                                        std::size_t kv_tokens) {
  if (k == 0 || c == 0 || heads == 0 || c % heads != 0) {
    throw InvalidShapeError(fmt::format("augment params: K={} c={} heads={}", k, c, heads));
  }
  AugmentParams p;
  p.token_bank = normal_param<T>(rng, {k, c}, 1.0);
  p.w_split = weight_param<T>(rng, d_in, kv_tokens * c);
  p.b_split = zeros_param<T>({kv_tokens * c});
  p.wq = weight_param<T>(rng, c, c);
  p.wk = weight_param<T>(rng, c, c);
  p.wv = weight_param<T>(rng, c, c);
  p.wo = weight_param<T>(rng, c, c);
  p.heads = heads;
  p.kv_tokens = kv_tokens;
  return p;
}

namespace {

// Block-diagonal mask: query block t sees key block t only.
PairMask frame_block_mask(std::size_t frames, std::size_t q_per, std::size_t k_per) {
  PairMask m(frames * q_per, frames * k_per);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < q_per; ++i)
      for (std::size_t j = 0; j < k_per; ++j) m.set(t * q_per + i, t * k_per + j, true);
  return m;
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<std::size_t>& rows) {
  const std::size_t c = x.value().cols();
  std::vector<std::size_t> index;
  index.reserve(rows.size() * c);
  for (std::size_t r : rows)
    for (std::size_t j = 0; j < c; ++j) index.push_back(r * c + j);
  return ad::gather(x, std::move(index), Shape{rows.size(), c});
}

template <typename T>
Var<T> as_const(const Tensor<double>& t) {
  return Var<T>::constant(t.cast<T>());
}

}  // namespace

template <typename T>
Var<T> expression_augment_rows(const Var<T>& feat, const AugmentParams<T>& params) {
  if (feat.value().rank() != 2 || feat.value().dim(1) != params.input_dim()) {
    throw InvalidShapeError(fmt::format("expression_augment: features {} do not match input dim {}",
                                        shape_str(feat.shape()), params.input_dim()));
  }
  const std::size_t f = feat.value().dim(0), c = params.width(), k = params.num_tokens(), s = params.kv_tokens;
  Var<T> kv = ad::reshape(ad::linear(feat, params.w_split, params.b_split), Shape{f * s, c});
  Var<T> keys = ad::matmul(kv, params.wk);
  Var<T> values = ad::matmul(kv, params.wv);
  Var<T> q = ad::repeat_rows(ad::matmul(params.token_bank, params.wq), f);
  const PairMask mask = frame_block_mask(f, k, s);
  Var<T> att = ad::attention(q, keys, values, params.heads, &mask);
  return ad::add(ad::matmul(att, params.wo), ad::repeat_rows(params.token_bank, f));
}

template <typename T>
Var<T> expression_augment(const Var<T>& feat, const AugmentParams<T>& params) {
  Var<T> rows = expression_augment_rows(feat, params);
  return ad::reshape(rows, Shape{feat.value().dim(0), params.num_tokens(), params.width()});
}

template <typename T>
MotionEncoderParams<T> MotionEncoderParams<T>::init(Rng& rng, const ExpressionConfig& cfg) {
  cfg.validate();
  MotionEncoderParams p;
  p.cfg = cfg;
  const std::size_t c = cfg.width;
  if (cfg.use_eal) {
    p.aug_emo = AugmentParams<T>::init(rng, cfg.d_emo, cfg.k_emo, c, cfg.heads, cfg.kv_tokens);
    p.aug_lip = AugmentParams<T>::init(rng, cfg.d_lip, cfg.k_lip, c, cfg.heads, cfg.kv_tokens);
  } else {
    p.emo_w = weight_param<T>(rng, cfg.d_emo, c);
    p.emo_b = zeros_param<T>({c});
    p.lip_w = weight_param<T>(rng, cfg.d_lip, c);
    p.lip_b = zeros_param<T>({c});
  }
  p.head_w = weight_param<T>(rng, cfg.d_head, c);
  p.head_b = zeros_param<T>({c});
  p.eye_w = weight_param<T>(rng, cfg.d_eye, c);
  p.eye_b = zeros_param<T>({c});
  p.null_tokens = normal_param<T>(rng, {cfg.tokens_per_character(), c}, 1.0);
  return p;
}

template <typename T>
Tensor<T> MultiMotionEmbedding<T>::as_tensor() const {
  return tokens.value().reshaped(Shape{frames, keys_per_frame(), tokens.value().dim(1)});
}

template <typename T>
MotionEmbedding<T> build_motion_embedding(const ImplicitExpressionTrack& track, const MotionEncoderParams<T>& enc) {
  const auto& cfg = enc.cfg;
  if (track.e_lip.size() == 0 || track.e_lip.rank() == 0) throw EmptyTrackError("track has no frames");
  track.validate(cfg);
  const std::size_t f = track.num_frames();

  Var<T> emo, lip;
  std::size_t ke = 1, kl = 1;
  if (cfg.use_eal) {
    emo = expression_augment_rows(as_const<T>(track.e_emo), enc.aug_emo);
    lip = expression_augment_rows(as_const<T>(track.e_lip), enc.aug_lip);
    ke = cfg.k_emo;
    kl = cfg.k_lip;
  } else {
    emo = ad::linear(as_const<T>(track.e_emo), enc.emo_w, enc.emo_b);
    lip = ad::linear(as_const<T>(track.e_lip), enc.lip_w, enc.lip_b);
  }
  Var<T> head = ad::linear(as_const<T>(track.e_head), enc.head_w, enc.head_b);
  Var<T> eye = ad::linear(as_const<T>(track.e_eye), enc.eye_w, enc.eye_b);
  Var<T> stacked = ad::concat_rows(std::vector<Var<T>>{emo, lip, head, eye});

  const std::size_t l = ke + kl + 2;
  const std::size_t lip_off = f * ke, head_off = lip_off + f * kl, eye_off = head_off + f;
  std::vector<std::size_t> order;
  order.reserve(f * l);
  for (std::size_t t = 0; t < f; ++t) {
    for (std::size_t j = 0; j < ke; ++j) order.push_back(t * ke + j);
    for (std::size_t j = 0; j < kl; ++j) order.push_back(lip_off + t * kl + j);
    order.push_back(head_off + t);
    order.push_back(eye_off + t);
  }
  return {gather_rows(stacked, order), track.character_id, f, l};
}

template <typename T>
MultiMotionEmbedding<T> concat_multi_portrait(const std::vector<MotionEmbedding<T>>& embeddings) {
  if (embeddings.empty()) throw InvalidShapeError("concat_multi_portrait: no embeddings");
  const auto& first = embeddings.front();
  const std::size_t f = first.frames, l = first.per_frame, c = first.tokens.value().dim(1);
  std::set<int> ids;
  for (const auto& e : embeddings) {
    if (e.frames != f) {
      throw InvalidShapeError(fmt::format("character {} has {} frames, expected {}", e.character_id, e.frames, f));
    }
    if (e.per_frame != l || e.tokens.value().dim(1) != c) {
      throw InvalidShapeError(fmt::format("character {} token layout {}x{} differs from {}x{}", e.character_id,
                                          e.per_frame, e.tokens.value().dim(1), l, c));
    }
    if (!ids.insert(e.character_id).second) {
      throw DuplicateIdentityError(fmt::format("character id {} appears twice", e.character_id));
    }
  }
  MultiMotionEmbedding<T> out;
  out.frames = f;
  for (const auto& e : embeddings) out.char_of_key.insert(out.char_of_key.end(), l, e.character_id);
  if (embeddings.size() == 1) {
    out.tokens = first.tokens;
    return out;
  }
  std::vector<Var<T>> parts;
  for (const auto& e : embeddings) parts.push_back(e.tokens);
  Var<T> stacked = ad::concat_rows(parts);
  const std::size_t n = embeddings.size();
  std::vector<std::size_t> order;
  order.reserve(f * n * l);
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < l; ++j) order.push_back(i * f * l + t * l + j);
  out.tokens = gather_rows(stacked, order);
  return out;
}

template <typename T>
MultiMotionEmbedding<T> null_condition(const MultiMotionEmbedding<T>& em, const MotionEncoderParams<T>& enc) {
  const std::size_t l = enc.null_tokens.value().dim(0);
  if (em.keys_per_frame() % l != 0 || em.tokens.value().dim(1) != enc.null_tokens.value().dim(1)) {
    throw InvalidShapeError("null condition layout does not match the embedding");
  }
  MultiMotionEmbedding<T> out = em;
  out.tokens = ad::repeat_rows(enc.null_tokens, em.frames * (em.keys_per_frame() / l));
  out.is_null = true;
  return out;
}

template <typename T>
MultiMotionEmbedding<T> apply_condition_dropout(const MultiMotionEmbedding<T>& em, double p, Rng& rng,
                                                const MotionEncoderParams<T>& enc) {
  // One draw per call keeps the stream aligned regardless of p.
  const bool drop = rng.uniform() < p;
  return drop ? null_condition(em, enc) : em;
}

// ---- track files -------------------------------------------------------------

namespace {

json matrix_json(const Tensor<double>& t) {
  json rows = json::array();
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < t.dim(1); ++c) row.push_back(t.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Tensor<double> matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw InvalidShapeError(what + " must be an array of rows");
  if (j.empty()) throw EmptyTrackError(what + " has no frames");
  std::size_t width = 0;
  std::vector<double> data;
  for (const auto& row : j) {
    if (!row.is_array() || row.empty()) throw InvalidShapeError(what + " rows must be non-empty arrays");
    if (width == 0) width = row.size();
    if (row.size() != width) throw InvalidShapeError(what + " has ragged rows");
    for (const auto& v : row) {
      if (!v.is_number()) throw InvalidShapeError(what + " holds a non-numeric value");
      data.push_back(v.get<double>());
    }
  }
  return Tensor<double>(Shape{j.size(), width}, std::move(data));
}

}  // namespace

std::string track_record_to_json(const TrackRecord& rec) {
  json chars = json::array();
  for (const auto& ch : rec.characters) {
    chars.push_back({{"character_id", ch.character_id},
                     {"e_lip", matrix_json(ch.e_lip)},
                     {"e_eye", matrix_json(ch.e_eye)},
                     {"e_head", matrix_json(ch.e_head)},
                     {"e_emo", matrix_json(ch.e_emo)}});
  }
  json j = {{"clip_id", rec.clip_id}, {"fps", rec.fps}, {"characters", std::move(chars)}};
  return j.dump();
}

TrackRecord track_record_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("track record is not valid JSON: ") + e.what());
  }
  std::vector<std::string> missing;
  for (const char* key : {"clip_id", "fps", "characters"})
    if (!j.contains(key)) missing.emplace_back(key);
  if (!missing.empty()) throw IncompleteInputError(fmt::format("track record missing: {}", fmt::join(missing, ", ")));

  TrackRecord rec;
  rec.clip_id = j.at("clip_id").get<std::string>();
  rec.fps = j.at("fps").get<double>();
  for (const auto& cj : j.at("characters")) {
    for (const char* key : {"character_id", "e_lip", "e_eye", "e_head", "e_emo"})
      if (!cj.contains(key)) missing.emplace_back(key);
    if (!missing.empty()) {
      throw IncompleteInputError(
          fmt::format("clip {}: character record missing: {}", rec.clip_id, fmt::join(missing, ", ")));
    }
    ImplicitExpressionTrack tr;
    tr.character_id = cj.at("character_id").get<int>();
    const std::string where = fmt::format("clip {} character {} ", rec.clip_id, tr.character_id);
    tr.e_lip = matrix_from_json(cj.at("e_lip"), where + "e_lip");
    tr.e_eye = matrix_from_json(cj.at("e_eye"), where + "e_eye");
    tr.e_head = matrix_from_json(cj.at("e_head"), where + "e_head");
    tr.e_emo = matrix_from_json(cj.at("e_emo"), where + "e_emo");
    rec.characters.push_back(std::move(tr));
  }
  return rec;
}

void write_tracks(const std::filesystem::path& path, const std::vector<TrackRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& rec : records) out << track_record_to_json(rec) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<TrackRecord> read_tracks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<TrackRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(track_record_from_json(line));
    } catch (const IoError& e) {
      throw IoError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

#define EXPRDIT_INSTANTIATE(T)                                                                                    \
  template struct AugmentParams<T>;                                                                               \
  template struct MotionEncoderParams<T>;                                                                         \
  template struct MultiMotionEmbedding<T>;                                                                        \
  template Var<T> expression_augment_rows<T>(const Var<T>&, const AugmentParams<T>&);                             \
  template Var<T> expression_augment<T>(const Var<T>&, const AugmentParams<T>&);                                  \
  template MotionEmbedding<T> build_motion_embedding<T>(const ImplicitExpressionTrack&, const MotionEncoderParams<T>&); \
  template MultiMotionEmbedding<T> concat_multi_portrait<T>(const std::vector<MotionEmbedding<T>>&);              \
  template MultiMotionEmbedding<T> null_condition<T>(const MultiMotionEmbedding<T>&, const MotionEncoderParams<T>&); \
  template MultiMotionEmbedding<T> apply_condition_dropout<T>(const MultiMotionEmbedding<T>&, double, Rng&,        \
                                                              const MotionEncoderParams<T>&);

EXPRDIT_INSTANTIATE(float)
EXPRDIT_INSTANTIATE(double)

}  // namespace exprdit
