// SPDX-License-Identifier: Apache-2.0
//
// Linear latent SDEs (VP and VE): coefficients, Gaussian transition kernels,
// the prior at T, the lambda-family of reverse drifts and importance-sampled
// diffusion time.

#pragma once

#include "indm/autodiff.hpp"
#include "indm/rng.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace indm {

enum class SdeKind { VP, VE };

SdeKind parse_sde_kind(const std::string& name);
std::string sde_kind_name(SdeKind k);

struct SdeConfig {
  SdeKind kind = SdeKind::VP;
  double beta_min = 0.1;
  double beta_max = 20.0;
  double sigma_min = 1e-2;
  double sigma_max = 50.0;
  double eps = 1e-5;
  double T = 1.0;
};

class Schedule {
 public:
  Schedule() = default;
  explicit Schedule(SdeConfig cfg);

  const SdeConfig& config() const { return cfg_; }
  SdeKind kind() const { return cfg_.kind; }
  double eps() const { return cfg_.eps; }
  double T() const { return cfg_.T; }

  double beta(double t) const;
  /// Integral of beta over [0, t], closed form.
  double int_beta(double t) const;
  double g2(double t) const;
  /// Transition mean coefficient: z_t = mean_coef(t) z_0 + sigma(t) n.
  double mean_coef(double t) const;
  double var(double t) const;
  double sigma(double t) const { return std::sqrt(var(t)); }
  /// Variance of the analytic prior at T (1 for VP, sigma_max^2 for VE).
  double prior_var() const;

  /// Throws unless t lies in [eps, T] (with rounding slack).
  void check_time(double t) const;

  /// Column vector helpers over a batch of times.
  Tensor mean_coef(const Tensor& t) const;
  Tensor sigma(const Tensor& t) const;

  /// z_t = mean_coef(t) z0 + sigma(t) noise, rows indexed by sample.
  Tensor transition_sample(const Tensor& z0, const Tensor& t, const Tensor& noise) const;
  /// Gradient of log p_0t(z_t | z0).
  Tensor transition_score(const Tensor& zt, const Tensor& z0, const Tensor& t) const;

  /// Reverse drift of the lambda family given a score: -1/2 beta z - (1+lambda^2)/2 g^2 s.
  Tensor reverse_drift(const Tensor& z, double t, const Tensor& score, double lambda) const;

  /// (d/2) * integral over [eps, T] of beta - g^2/sigma^2, closed form.
  double const_term(Index d) const;

  // Importance sampling of t with density g^2/sigma^2 / Z on [eps, T] (VP).
  // For VE the ratio is constant, so the density is uniform.

  /// Antiderivative of g^2/sigma^2 (VP: log(e^{B(t)} - 1)).
  double is_antiderivative(double t) const;
  double is_normalizer() const;
  double is_cdf(double t) const;
  double is_inverse_cdf(double u) const;
  double is_density(double t) const;
  Tensor importance_sample_time(const Tensor& u) const;

 private:
  SdeConfig cfg_;
};

enum class PriorKind { StandardNormal, Empirical };

/// Prior over z_T: the analytic Gaussian N(0, prior_var I) or an empirical
/// bank of forward latents (sampling only).
class Prior {
 public:
  static Prior analytic(const Schedule& s, Index d);
  static Prior empirical(Tensor bank);

  PriorKind kind() const { return kind_; }
  Index dim() const { return d_; }
  double variance() const { return var_; }

  /// Per-row log density (n x 1). Empirical priors throw.
  Tensor logdensity(const Tensor& z) const;
  Tensor sample(Index n, Rng& rng) const;

 private:
  PriorKind kind_ = PriorKind::StandardNormal;
  Index d_ = 0;
  double var_ = 1.0;
  std::shared_ptr<const Tensor> bank_;
};

/// Per-row log density of N(0, var I).
Tensor gaussian_logdensity(const Tensor& z, double var);

}  // namespace indm
