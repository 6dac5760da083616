// SPDX-License-Identifier: Apache-2.0
//
// Latent-space generation: predictor-corrector and probability-flow ODE
// samplers followed by a single inversion of the flow.

#pragma once

#include "indm/flow.hpp"
#include "indm/ode.hpp"
#include "indm/score.hpp"
#include "indm/sde.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace indm {

enum class SamplerMethod { PC, ODE };
enum class PredictorKind { EulerMaruyama, ReverseDiffusion, None };

SamplerMethod parse_sampler_method(const std::string& name);
PredictorKind parse_predictor(const std::string& name);

struct SamplerConfig {
  SamplerMethod method = SamplerMethod::PC;
  PredictorKind predictor = PredictorKind::EulerMaruyama;
  int n_steps = 1000;
  double snr = 0.14;
  /// Langevin steps per predictor step; negative picks 1 for VE and 0 for VP.
  int corrector_steps = -1;
  double temperature = 1.0;
  /// Final time of the reverse process; negative means eps.
  double t_min = -1.0;
  /// Variance-scale target of the last reverse-diffusion step; negative means
  /// sigma(t_min), zero denoises fully.
  double final_sigma = -1.0;
  /// Drop the noise of the last predictor step.
  bool denoise_final = true;
  double ode_rtol = 1e-5;
  bool use_ema = true;
  std::optional<Prior> prior;  // analytic Gaussian when empty
};

enum class Space { Latent, Data };

struct TrajectoryBatch {
  std::vector<double> times;  // decreasing for generation, increasing for forward paths
  std::vector<Tensor> states;
  Space space = Space::Latent;
};

/// z + gamma (1/2 beta z + g^2 s) + g sqrt(gamma) noise, with s evaluated at t.
Tensor predictor_step_em(const Schedule& schedule, const ScoreModel& score, const Tensor& z, double t,
                         double gamma, const Tensor& noise, bool use_ema = true);

/// z + (sigma_next^2 - sigma_prev^2) s + sqrt(sigma_next^2 - sigma_prev^2) noise,
/// where sigma_next is the scale at the current time t and sigma_prev at the
/// next (earlier) time.
Tensor predictor_step_reverse_diffusion(const ScoreModel& score, const Tensor& z, double t,
                                        double sigma_prev, double sigma_next, const Tensor& noise,
                                        bool use_ema = true);

/// Ancestral step for a general linear SDE from t to t_prev: with
/// z_t = a z_prev + b n, returns (z + b^2 s) / a + b noise. Reduces to the
/// reverse-diffusion step above when a = 1.
Tensor predictor_step_ancestral(const Schedule& schedule, const ScoreModel& score, const Tensor& z,
                                double t, double t_prev, double var_prev, const Tensor& noise,
                                bool use_ema = true);

/// Langevin correction with step 2 (snr |noise| / |s|)^2, the norms averaged
/// over rows. A batch with zero score is left unchanged and its rows counted
/// in `skipped`.
Tensor corrector_step_langevin(const ScoreModel& score, const Tensor& z, double t, double snr,
                               const Tensor& noise, bool use_ema = true, Index* skipped = nullptr);

struct SampleResult {
  Tensor x;       // data space
  Tensor latent;  // final latent state
  OdeStats ode_stats;
  Index skipped_corrections = 0;
};

/// Draws n samples. `trajectory`, when given, receives latent states at
/// `n_checkpoints` + 1 evenly spaced times from T to t_min.
SampleResult sample(const Flow& flow, const ScoreModel& score, const Schedule& schedule,
                    const SamplerConfig& cfg, Index n, std::uint64_t seed,
                    TrajectoryBatch* trajectory = nullptr, int n_checkpoints = 10);

/// Empirical bank of forward latents z_T = mean_coef(T) h(x) + sigma(T) n.
Prior latent_prior_bank(const Flow& flow, const Schedule& schedule, const Tensor& data, Rng& rng);

enum class Metric { SlicedWasserstein, EnergyDistance };

Metric parse_metric(const std::string& name);
double sample_metric(Metric m, const Tensor& a, const Tensor& b);

struct CurvePoint {
  int n_steps = 0;
  double value = 0.0;
};

/// Sample quality against `target` as the number of predictor steps varies.
std::vector<CurvePoint> discretization_sensitivity(const Flow& flow, const ScoreModel& score,
                                                   const Schedule& schedule, SamplerConfig cfg,
                                                   const std::vector<int>& step_counts,
                                                   const Tensor& target, Metric metric, Index n,
                                                   std::uint64_t seed);

}  // namespace indm
