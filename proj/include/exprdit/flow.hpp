#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "exprdit/generator.hpp"

namespace exprdit {

struct FlowConfig {
  std::size_t steps = 30;
  double cfg_scale = 4.5;
  double t_mu = 0.0;
  double t_sigma = 1.0;
  double lr = 1e-4;
  double dropout_p = 0.2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// Logistic of a Normal(mu, sigma) draw, kept strictly inside (0, 1).
double sample_t(Rng& rng, double mu, double sigma);

// z_t = (1 - t) z_data + t z_noise, v_target = z_noise - z_data.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_training_pair(const Tensor<T>& z_data, const Tensor<T>& z_noise, T t);

template <typename T>
double fm_loss(const Tensor<T>& v_pred, const Tensor<T>& v_target);

template <typename T>
Tensor<T> cfg_velocity(const Tensor<T>& v_cond, const Tensor<T>& v_uncond, T s);

// v(z, t, conditional) evaluated by the sampler.
using VelocityFn = std::function<Tensor<double>(const Tensor<double>& z, double t, bool conditional)>;

// Starts from standard normal noise at t = 1 and takes `steps` uniform Euler
// steps of dz/dt = v_uncond + s (v_cond - v_uncond) down to t = 0.
Tensor<double> euler_sample(const VelocityFn& velocity, const Shape& shape, const FlowConfig& cfg, Rng& rng);

struct ModelConfig {
  DenoiserConfig denoiser;
  ExpressionConfig expression;

  void validate() const;
};

template <typename T>
struct PortraitModel {
  ModelConfig cfg;
  DenoiserParams<T> denoiser;
  MotionEncoderParams<T> encoder;

  static PortraitModel init(std::uint64_t seed, const ModelConfig& cfg, InitScheme scheme = InitScheme::kAdaLnZero);

  template <typename F>
  void visit(F&& f) {
    denoiser.visit("denoiser", f);
    encoder.visit("encoder", f);
  }
  std::map<std::string, ad::Var<T>> named_params();
};

// One training item: a clean latent clip with its reference frame, driving
// tracks and latent masks.
struct TrainingExample {
  Tensor<double> latent;     // f x h x w x C
  Tensor<double> reference;  // h x w x C
  std::vector<ImplicitExpressionTrack> tracks;
  LatentMaskSet masks;
};

// Conditioning assembled for one clip: embedding plus pair mask.
template <typename T>
struct Conditioning {
  MultiMotionEmbedding<T> em;
  PairMask mask;
};

template <typename T>
Conditioning<T> build_conditioning(const PortraitModel<T>& model, const std::vector<ImplicitExpressionTrack>& tracks,
                                   const LatentMaskSet& masks, const TokenGrid& grid);

// Flow-matching loss of one item for fixed t, noise and dropout decision.
template <typename T>
ad::Var<T> training_loss(const PortraitModel<T>& model, const TrainingExample& ex, double t,
                         const Tensor<double>& noise, bool drop_condition);

template <typename T>
struct TrainState {
  PortraitModel<T> model;
  std::map<std::string, Tensor<T>> adam_m;
  std::map<std::string, Tensor<T>> adam_v;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;

  static TrainState init(std::uint64_t seed, const ModelConfig& cfg);
};

// One optimizer step over the batch. Randomness for step k comes from the
// (seed, k) stream only, so a run resumed at step k continues identically.
template <typename T>
double train_step(TrainState<T>& state, const std::vector<TrainingExample>& batch, const FlowConfig& cfg);

// Conditional sampling with guidance against the learned null condition.
template <typename T>
Tensor<double> generate_latent(const PortraitModel<T>& model, const std::vector<ImplicitExpressionTrack>& tracks,
                               const LatentMaskSet& masks, const Tensor<double>& reference, const Dims3& latent_dims,
                               const FlowConfig& cfg, std::uint64_t seed);

}  // namespace exprdit
