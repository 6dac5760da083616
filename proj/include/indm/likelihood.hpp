// SPDX-License-Identifier: Apache-2.0
//
// Exact likelihoods through the probability-flow ODE, the truncation
// residual and the combined evaluation report.

#pragma once

#include "indm/flow.hpp"
#include "indm/loss.hpp"
#include "indm/ode.hpp"
#include "indm/score.hpp"
#include "indm/sde.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace indm {

enum class StartAt { X0, XEps };

struct OdeLikelihoodOptions {
  OdeOptions ode{.rtol = 1e-5};
  bool use_ema = false;
  Index chunk = 256;
};

/// Latent log p_eps(z) per row by integrating the probability-flow ODE with
/// the instantaneous change of variables from eps to T.
Tensor latent_ode_logp(const ScoreModel& score, const Schedule& schedule, const Tensor& z_eps,
                       const OdeLikelihoodOptions& opts = {}, OdeStats* stats = nullptr);

/// Data-space log-likelihood per sample. StartAt::X0 integrates from h(x0);
/// StartAt::XEps first perturbs h(x0) by one transition step to eps using
/// `noise` (n x d, standard normal).
Tensor ode_loglikelihood(const Flow& flow, const ScoreModel& score, const Schedule& schedule,
                         const Tensor& x0, StartAt start, const Tensor& noise,
                         const OdeLikelihoodOptions& opts = {});

enum class ResidualVariance {
  /// sigma^2(eps) / mean_coef^2(eps) around the denoised mean.
  Scaled,
  /// sigma^2(eps), the discrete-time convention.
  Ddpm,
};

/// Per-sample -log(p(z0 | z_eps) / p_0eps(z_eps | z0)) in the latent space,
/// where z_eps = mean_coef(eps) z0 + sigma(eps) noise and the reverse
/// Gaussian is centred at (z_eps + sigma^2 s(z_eps, eps)) / mean_coef(eps).
Tensor residual_term(const ScoreModel& score, const Schedule& schedule, const Tensor& z0,
                     const Tensor& noise, ResidualVariance var = ResidualVariance::Scaled,
                     bool use_ema = false);

struct EvalOptions {
  Index n_eval = 10000;
  std::uint64_t seed = 0;
  OdeLikelihoodOptions ode;
  LossOptions loss;
  /// Adds log(256) nats per dimension, the offset for 8-bit data rescaled to [0, 1].
  bool dequantization_offset = false;
};

struct EvalReport {
  double nll_corrected = 0.0;
  double nll_uncorrected = 0.0;
  double nelbo_with_residual = 0.0;
  double nelbo_without_residual = 0.0;
  double gap = 0.0;
  double residual_term = 0.0;
  double bpd_nll_corrected = 0.0;
  double bpd_nll_uncorrected = 0.0;
  double bpd_nelbo_with_residual = 0.0;
  double bpd_nelbo_without_residual = 0.0;
  NelboBreakdown nelbo;
  Tensor per_sample_nll_corrected;
  Tensor per_sample_nll_uncorrected;
  Tensor per_sample_residual;
  Index dim = 0;

  /// key=value lines.
  std::string to_text() const;
};

double nats_to_bpd(double nats, Index d, bool dequantization_offset = false);

EvalReport evaluate(const Flow& flow, const ScoreModel& score, const Schedule& schedule,
                    const Tensor& data, const EvalOptions& opts = {});

}  // namespace indm
