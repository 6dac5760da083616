// SPDX-License-Identifier: Apache-2.0
//
// The INDM variational bound: flow log-det, weighted denoising score
// matching on the latent diffusion, prior cross-entropy and the closed-form
// constant, plus the Jacobian-asymmetry penalty.

#pragma once

#include "indm/autodiff.hpp"
#include "indm/flow.hpp"
#include "indm/rng.hpp"
#include "indm/score.hpp"
#include "indm/sde.hpp"

#include <cstdint>
#include <string>

namespace indm {

enum class Weighting { Likelihood, Variance };

Weighting parse_weighting(const std::string& name);
std::string weighting_name(Weighting w);

struct LossOptions {
  /// Weighting of the score loss; the flow loss always uses g^2.
  Weighting weighting = Weighting::Likelihood;
  /// Diffusion times per data point.
  int n_t = 1;
  /// Draw t with density proportional to g^2/sigma^2 (uniform otherwise).
  bool importance_sampling = true;
  /// Replace |n|^2/sigma^2 in the denoising residual by its mean d/sigma^2.
  bool control_variate = true;
  /// Use the closed-form expectation of the prior term over the noise.
  bool analytic_prior = true;
  /// Pair every noise draw with its negation.
  bool antithetic = false;
  bool use_ema = false;
};

/// Differentiable NELBO pieces for one batch, all in nats per data point.
struct NelboTerms {
  ad::Value flow_term;   // -E log|det dh/dx|
  ad::Value dsm_term;    // 1/2 E[g^2 |s - grad log p_0t|^2]
  ad::Value prior_term;  // -E log pi(z_T)
  double const_term = 0.0;
  ad::Value total;       // flow + dsm + prior + const
  ad::Value score_loss;  // lambda-weighted denoising loss
  Tensor per_sample;     // per-data-point NELBO estimate (n x 1)
};

NelboTerms nelbo_terms(const Flow& flow, const ScoreModel& score, const Schedule& schedule,
                       const Tensor& x0, Rng& rng, const LossOptions& opts = {});

struct NelboBreakdown {
  double flow_term = 0.0;
  double dsm_term = 0.0;
  double prior_term = 0.0;
  double const_term = 0.0;
  double total = 0.0;
  double stderr_total = 0.0;
  Tensor per_sample;
};

/// Gradient-free NELBO over a dataset, chunked and parallel; deterministic in seed.
NelboBreakdown estimate_nelbo(const Flow& flow, const ScoreModel& score, const Schedule& schedule,
                              const Tensor& x0, std::uint64_t seed, const LossOptions& opts = {});

/// Per-sample denoising integrand estimate (the dsm term before averaging)
/// for a given time sampler; used to compare estimator variances.
Tensor dsm_estimates(const ScoreModel& score, const Schedule& schedule, const Tensor& z0, Rng& rng,
                     const LossOptions& opts);

enum class ProbeKind { Rademacher, Gaussian };

/// Per-row unbiased estimate of |J - J^T|_F^2 for J = grad_z s(z, t):
/// (e2 . J e1 - e1 . J e2)^2 with independent probes e1, e2.
ad::Value symmetry_penalty(const ScoreModel& score, const ad::Value& z, const Tensor& t,
                           ProbeKind probes, Rng& rng);

}  // namespace indm
