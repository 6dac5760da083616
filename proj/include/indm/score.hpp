// SPDX-License-Identifier: Apache-2.0
//
// Score fields s(z, t) on the latent space: the trainable network and the
// analytic fields used as oracles.

#pragma once

#include "indm/autodiff.hpp"
#include "indm/nn.hpp"
#include "indm/rng.hpp"
#include "indm/sde.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace indm {

class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual Index dim() const = 0;

  /// Score at rows of z (n x d) with per-row times t (n x 1).
  virtual ad::Value eval(const ad::Value& z, const Tensor& t, bool use_ema = false) const = 0;
  /// Score and its directional derivative (dz . grad_z) s per row.
  virtual std::pair<ad::Value, ad::Value> eval_jvp(const ad::Value& z, const ad::Value& dz,
                                                   const Tensor& t, bool use_ema = false) const = 0;

  /// Trainable parameters, or nullptr for fixed fields.
  virtual ParameterSet* params() { return nullptr; }

  Tensor eval_data(const Tensor& z, const Tensor& t, bool use_ema = false) const;
  Tensor eval_data(const Tensor& z, double t, bool use_ema = false) const;
};

/// Exact divergence per row by one JVP per coordinate (n x 1).
Tensor divergence(const ScoreModel& s, const Tensor& z, const Tensor& t, bool use_ema = false);

/// Hutchinson estimate of the divergence at a single point with Rademacher
/// probes: returns {mean, standard error}.
std::pair<double, double> hutchinson_divergence(const ScoreModel& s, const Tensor& z, double t,
                                                int probes, Rng& rng, bool use_ema = false);

struct ScoreNetConfig {
  int hidden_layers = 4;
  Index hidden = 128;
  Index embed_dim = 64;
  Activation activation = Activation::Swish;
  /// Divides the network output by sigma(t).
  bool scale_by_sigma = true;
  double ema_rate = 0.9999;
};

class ScoreNet : public ScoreModel {
 public:
  ScoreNet(Index d, const Schedule& schedule, const ScoreNetConfig& cfg, Rng& rng);

  Index dim() const override { return d_; }
  ad::Value eval(const ad::Value& z, const Tensor& t, bool use_ema = false) const override;
  std::pair<ad::Value, ad::Value> eval_jvp(const ad::Value& z, const ad::Value& dz,
                                           const Tensor& t, bool use_ema = false) const override;
  ParameterSet* params() override { return &params_; }
  const ParameterSet& parameters() const { return params_; }

  /// Sinusoidal time features (n x embed_dim).
  Tensor embed(const Tensor& t) const;

  /// shadow <- rate shadow + (1 - rate) params.
  void ema_update();
  double ema_rate() const { return cfg_.ema_rate; }
  void set_ema_rate(double r) { cfg_.ema_rate = r; }
  std::vector<Tensor> ema_snapshot() const;
  void ema_restore(const std::vector<Tensor>& values);
  /// Copies the current parameters into the shadow.
  void ema_reset();

  const ScoreNetConfig& config() const { return cfg_; }

 private:
  const std::vector<ad::Value>& weights(bool use_ema) const;
  Tensor output_scale(const Tensor& t) const;

  Index d_;
  Schedule schedule_;
  ScoreNetConfig cfg_;
  ParameterSet params_;
  Mlp trunk_;
  std::vector<ad::Value> ema_;
};

/// Affine field s(z, t) = A(t) z + b(t). Its value does not propagate
/// gradients to z; the JVP is exact.
class LinearScore : public ScoreModel {
 public:
  using Coefficients = std::function<void(double t, Tensor& A, Tensor& b)>;
  LinearScore(Index d, Coefficients coef);

  /// Forward score of N(mean, var I) data under the schedule.
  static LinearScore gaussian(const Schedule& s, Index d, double mean = 0.0, double var = 1.0);
  /// Gaussian score plus the divergence-free rotation c [-z2, z1] (d = 2).
  static LinearScore rotated_gaussian(const Schedule& s, double c);
  /// Time-independent s(z) = A z.
  static LinearScore constant(const Tensor& A);

  Index dim() const override { return d_; }
  ad::Value eval(const ad::Value& z, const Tensor& t, bool use_ema = false) const override;
  std::pair<ad::Value, ad::Value> eval_jvp(const ad::Value& z, const ad::Value& dz,
                                           const Tensor& t, bool use_ema = false) const override;

 private:
  Tensor apply(const Tensor& z, const Tensor& t, bool affine) const;
  Index d_;
  Coefficients coef_;
};

/// Isotropic Gaussian mixture in data space.
struct GaussianMixture {
  std::vector<double> weights;
  Tensor means;  // k x d
  std::vector<double> vars;

  Index dim() const { return means.cols(); }
  Tensor sample(Index n, Rng& rng) const;
  Tensor logdensity(const Tensor& x) const;
};

/// Exact forward score of a Gaussian mixture after the latent map z = a x.
class MixtureScore : public ScoreModel {
 public:
  MixtureScore(const Schedule& s, GaussianMixture mix, double scale = 1.0);

  Index dim() const override { return mix_.dim(); }
  ad::Value eval(const ad::Value& z, const Tensor& t, bool use_ema = false) const override;
  std::pair<ad::Value, ad::Value> eval_jvp(const ad::Value& z, const ad::Value& dz,
                                           const Tensor& t, bool use_ema = false) const override;

 private:
  Tensor compute(const Tensor& z, const Tensor& t, const Tensor* dz, Tensor* jvp) const;
  Schedule schedule_;
  GaussianMixture mix_;
  double scale_;
};

}  // namespace indm
