#include "exprdit/flow.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

namespace exprdit {

using ad::Var;

void FlowConfig::validate() const {
  if (steps < 1) throw ConfigError("sampling steps must be at least 1");
  if (!(t_sigma >= 0.0)) throw ConfigError(fmt::format("t_sigma must be >= 0, got {}", t_sigma));
  if (!(dropout_p >= 0.0 && dropout_p <= 1.0)) throw ConfigError(fmt::format("dropout_p must be in [0, 1], got {}", dropout_p));
  if (!(lr >= 0.0)) throw ConfigError(fmt::format("lr must be >= 0, got {}", lr));
  if (!std::isfinite(cfg_scale)) throw ConfigError("cfg_scale must be finite");
}

double sample_t(Rng& rng, double mu, double sigma) {
  const double n = rng.normal(mu, sigma);
  double t = 1.0 / (1.0 + std::exp(-n));
  if (t <= 0.0) t = std::numeric_limits<double>::denorm_min();
  if (t >= 1.0) t = std::nextafter(1.0, 0.0);
  return t;
}

namespace {

template <typename T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw InvalidShapeError(fmt::format("{}: shapes {} and {} differ", op, shape_str(a.shape()), shape_str(b.shape())));
  }
}

}  // namespace

template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_training_pair(const Tensor<T>& z_data, const Tensor<T>& z_noise, T t) {
  require_same("make_training_pair", z_data, z_noise);
  Tensor<T> zt(z_data.shape()), v(z_data.shape());
  for (std::size_t i = 0; i < zt.size(); ++i) {
    zt[i] = (T(1) - t) * z_data[i] + t * z_noise[i];
    v[i] = z_noise[i] - z_data[i];
  }
  return {std::move(zt), std::move(v)};
}

template <typename T>
double fm_loss(const Tensor<T>& v_pred, const Tensor<T>& v_target) {
  require_same("fm_loss", v_pred, v_target);
  double acc = 0.0;
  for (std::size_t i = 0; i < v_pred.size(); ++i) {
    const double d = static_cast<double>(v_pred[i]) - static_cast<double>(v_target[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(v_pred.size());
}

template <typename T>
Tensor<T> cfg_velocity(const Tensor<T>& v_cond, const Tensor<T>& v_uncond, T s) {
  require_same("cfg_velocity", v_cond, v_uncond);
  Tensor<T> out(v_cond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v_uncond[i] + s * (v_cond[i] - v_uncond[i]);
  return out;
}

Tensor<double> euler_sample(const VelocityFn& velocity, const Shape& shape, const FlowConfig& cfg, Rng& rng) {
  cfg.validate();
  Tensor<double> z(shape);
  for (auto& v : z.storage()) v = rng.normal();
  const double n = static_cast<double>(cfg.steps), dt = 1.0 / n;
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const double t = (n - static_cast<double>(k)) / n;
    const auto vc = velocity(z, t, true);
    const auto vu = velocity(z, t, false);
    const auto v = cfg_velocity(vc, vu, cfg.cfg_scale);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] -= dt * v[i];
    if (!z.all_finite()) throw DivergedError(fmt::format("sampling diverged at step {}", k));
  }
  return z;
}

void ModelConfig::validate() const {
  denoiser.validate();
  expression.validate();
  if (denoiser.motion_width != expression.width) {
    throw ConfigError(fmt::format("denoiser motion width {} != expression width {}", denoiser.motion_width,
                                  expression.width));
  }
  if (denoiser.use_eal != expression.use_eal) throw ConfigError("use_eal differs between denoiser and expression config");
}

template <typename T>
PortraitModel<T> PortraitModel<T>::init(std::uint64_t seed, const ModelConfig& cfg, InitScheme scheme) {
  cfg.validate();
  PortraitModel m;
  m.cfg = cfg;
  Rng den_rng(seed, "init.denoiser");
  m.denoiser = DenoiserParams<T>::init(den_rng, cfg.denoiser, scheme);
  Rng enc_rng(seed, "init.encoder");
  m.encoder = MotionEncoderParams<T>::init(enc_rng, cfg.expression);
  return m;
}

template <typename T>
std::map<std::string, Var<T>> PortraitModel<T>::named_params() {
  std::map<std::string, Var<T>> out;
  visit([&](const std::string& name, Var<T>& v) { out.emplace(name, v); });
  return out;
}

template <typename T>
Conditioning<T> build_conditioning(const PortraitModel<T>& model, const std::vector<ImplicitExpressionTrack>& tracks,
                                   const LatentMaskSet& masks, const TokenGrid& grid) {
  std::vector<MotionEmbedding<T>> ems;
  ems.reserve(tracks.size());
  for (const auto& tr : tracks) ems.push_back(build_motion_embedding(tr, model.encoder));
  Conditioning<T> c;
  c.em = concat_multi_portrait(ems);
  c.mask = build_pair_mask(masks, c.em.char_of_key, c.em.frames, grid);
  return c;
}

template <typename T>
Var<T> training_loss(const PortraitModel<T>& model, const TrainingExample& ex, double t, const Tensor<double>& noise,
                     bool drop_condition) {
  const auto& s = ex.latent.shape();
  if (s.size() != 4) throw InvalidShapeError("training latent must be f x h x w x C, got " + shape_str(s));
  const TokenGrid grid{s[0], s[1], s[2], model.cfg.denoiser.patch};
  auto [zt, v] = make_training_pair(ex.latent, noise, t);
  Conditioning<T> c = build_conditioning(model, ex.tracks, ex.masks, grid);
  if (drop_condition) c.em = null_condition(c.em, model.encoder);
  DenoiserInput<T> in;
  in.z_t = Var<T>::constant(zt.template cast<T>());
  in.t = static_cast<T>(t);
  in.em = &c.em;
  in.mask = &c.mask;
  in.reference = ex.reference.cast<T>();
  return ad::mse(denoiser_forward(in, model.denoiser), Var<T>::constant(v.template cast<T>()));
}

template <typename T>
TrainState<T> TrainState<T>::init(std::uint64_t seed, const ModelConfig& cfg) {
  TrainState s;
  s.model = PortraitModel<T>::init(seed, cfg);
  s.seed = seed;
  for (auto& [name, p] : s.model.named_params()) {
    s.adam_m.emplace(name, Tensor<T>(p.shape()));
    s.adam_v.emplace(name, Tensor<T>(p.shape()));
  }
  return s;
}

template <typename T>
double train_step(TrainState<T>& state, const std::vector<TrainingExample>& batch, const FlowConfig& cfg) {
  cfg.validate();
  if (batch.empty()) throw InvalidShapeError("train_step: empty batch");
  Rng rng(state.seed, "train", state.step);
  Var<T> total;
  for (const auto& ex : batch) {
    const double t = sample_t(rng, cfg.t_mu, cfg.t_sigma);
    const bool drop = rng.uniform() < cfg.dropout_p;
    Tensor<double> noise(ex.latent.shape());
    for (auto& v : noise.storage()) v = rng.normal();
    Var<T> l = training_loss(state.model, ex, t, noise, drop);
    total = total.defined() ? ad::add(total, l) : l;
  }
  if (batch.size() > 1) total = ad::scale(total, static_cast<T>(1.0 / static_cast<double>(batch.size())));
  const double loss = static_cast<double>(total.value()[0]);
  if (!std::isfinite(loss)) throw DivergedError(fmt::format("training diverged at step {}: loss {}", state.step, loss));
  ad::backward(total);

  const double k = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(cfg.beta1, k), c2 = 1.0 - std::pow(cfg.beta2, k);
  for (auto& [name, p] : state.model.named_params()) {
    const Tensor<T> g = p.grad();
    auto& m = state.adam_m.at(name);
    auto& v = state.adam_v.at(name);
    auto& w = p.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.adam_eps);
      w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
    }
    p.zero_grad();
  }
  ++state.step;
  return loss;
}

template <typename T>
Tensor<double> generate_latent(const PortraitModel<T>& model, const std::vector<ImplicitExpressionTrack>& tracks,
                               const LatentMaskSet& masks, const Tensor<double>& reference, const Dims3& latent_dims,
                               const FlowConfig& cfg, std::uint64_t seed) {
  const TokenGrid grid{latent_dims[0], latent_dims[1], latent_dims[2], model.cfg.denoiser.patch};
  const Conditioning<T> cond = build_conditioning(model, tracks, masks, grid);
  const MultiMotionEmbedding<T> null = null_condition(cond.em, model.encoder);
  const Tensor<T> ref = reference.cast<T>();
  VelocityFn velocity = [&](const Tensor<double>& z, double t, bool conditional) {
    DenoiserInput<T> in;
    in.z_t = Var<T>::constant(z.cast<T>());
    in.t = static_cast<T>(t);
    in.em = conditional ? &cond.em : &null;
    in.mask = &cond.mask;
    in.reference = ref;
    return denoiser_forward(in, model.denoiser).value().template cast<double>();
  };
  Rng rng(seed, "sample");
  return euler_sample(velocity, Shape{latent_dims[0], latent_dims[1], latent_dims[2], model.cfg.denoiser.latent_channels},
                      cfg, rng);
}

#define EXPRDIT_INSTANTIATE(T)                                                                                  \
  template std::pair<Tensor<T>, Tensor<T>> make_training_pair<T>(const Tensor<T>&, const Tensor<T>&, T);       \
  template double fm_loss<T>(const Tensor<T>&, const Tensor<T>&);                                               \
  template Tensor<T> cfg_velocity<T>(const Tensor<T>&, const Tensor<T>&, T);                                    \
  template struct PortraitModel<T>;                                                                             \
  template struct TrainState<T>;                                                                                \
  template Conditioning<T> build_conditioning<T>(const PortraitModel<T>&, const std::vector<ImplicitExpressionTrack>&, \
                                                 const LatentMaskSet&, const TokenGrid&);                       \
  template Var<T> training_loss<T>(const PortraitModel<T>&, const TrainingExample&, double, const Tensor<double>&, bool); \
  template double train_step<T>(TrainState<T>&, const std::vector<TrainingExample>&, const FlowConfig&);        \
  template Tensor<double> generate_latent<T>(const PortraitModel<T>&, const std::vector<ImplicitExpressionTrack>&, \
                                             const LatentMaskSet&, const Tensor<double>&, const Dims3&,          \
                                             const FlowConfig&, std::uint64_t);

EXPRDIT_INSTANTIATE(float)
EXPRDIT_INSTANTIATE(double)

}  // namespace exprdit
