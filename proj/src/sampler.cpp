// SPDX-License-Identifier: Apache-2.0

#include "indm/sampler.hpp"

#include "indm/metrics.hpp"
#include "indm/parallel.hpp"

#include <cmath>
#include <mutex>

namespace indm {

SamplerMethod parse_sampler_method(const std::string& name) {
  if (name == "pc") return SamplerMethod::PC;
  if (name == "ode") return SamplerMethod::ODE;
  throw Error("unknown sampler method '" + name + "' (valid: pc, ode)");
}

PredictorKind parse_predictor(const std::string& name) {
  if (name == "euler-maruyama" || name == "em") return PredictorKind::EulerMaruyama;
  if (name == "reverse-diffusion") return PredictorKind::ReverseDiffusion;
  if (name == "none") return PredictorKind::None;
  throw Error("unknown predictor '" + name + "' (valid: euler-maruyama, reverse-diffusion, none)");
}

Tensor predictor_step_em(const Schedule& schedule, const ScoreModel& score, const Tensor& z, double t,
                         double gamma, const Tensor& noise, bool use_ema) {
  if (!(gamma > 0.0)) throw Error("predictor_step_em: step must be positive");
  Tensor s = score.eval_data(z, t, use_ema);
  return z + gamma * (0.5 * schedule.beta(t) * z + schedule.g2(t) * s) +
         std::sqrt(schedule.g2(t) * gamma) * noise;
}

Tensor predictor_step_reverse_diffusion(const ScoreModel& score, const Tensor& z, double t,
                                        double sigma_prev, double sigma_next, const Tensor& noise,
                                        bool use_ema) {
  if (sigma_prev < 0.0 || sigma_next < sigma_prev) {
    throw Error("predictor_step_reverse_diffusion: need 0 <= sigma_prev <= sigma_next");
  }
  const double dv = sigma_next * sigma_next - sigma_prev * sigma_prev;
  if (dv == 0.0) return z;
  Tensor s = score.eval_data(z, t, use_ema);
  return z + dv * s + std::sqrt(dv) * noise;
}

Tensor predictor_step_ancestral(const Schedule& schedule, const ScoreModel& score, const Tensor& z,
                                double t, double t_prev, double var_prev, const Tensor& noise,
                                bool use_ema) {
  const double a = schedule.mean_coef(t) / schedule.mean_coef(t_prev);
  const double b2 = schedule.var(t) - a * a * var_prev;
  if (b2 < 0.0) throw Error("predictor_step_ancestral: negative step variance");
  Tensor s = score.eval_data(z, t, use_ema);
  return (z + b2 * s) / a + std::sqrt(b2) * noise;
}

Tensor corrector_step_langevin(const ScoreModel& score, const Tensor& z, double t, double snr,
                               const Tensor& noise, bool use_ema, Index* skipped) {
  Tensor s = score.eval_data(z, t, use_ema);
  const double s_norm = s.rowwise().norm().mean();
  if (s_norm == 0.0) {
    if (skipped) *skipped += z.rows();
    return z;
  }
  const double ratio = snr * noise.rowwise().norm().mean() / s_norm;
  const double step = 2.0 * ratio * ratio;
  return z + step * s + std::sqrt(2.0 * step) * noise;
}

namespace {

struct ChunkResult {
  Tensor z;
  std::vector<Tensor> states;
  OdeStats stats;
  Index skipped = 0;
};

}  // namespace

SampleResult sample(const Flow& flow, const ScoreModel& score, const Schedule& schedule,
                    const SamplerConfig& cfg, Index n, std::uint64_t seed,
                    TrajectoryBatch* trajectory, int n_checkpoints) {
  const double T = schedule.T();
  const double t_min = cfg.t_min < 0.0 ? schedule.eps() : cfg.t_min;
  if (!(cfg.temperature > 0.0)) throw Error("sampler: temperature must be positive");
  if (!(cfg.snr > 0.0)) throw Error("sampler: snr must be positive");
  if (!(t_min >= 0.0 && t_min < T)) throw Error("sampler: need 0 <= t_min < T");
  if (schedule.kind() == SdeKind::VP && t_min == 0.0) throw Error("sampler: VP needs t_min > 0");
  if (cfg.n_steps < 0) throw Error("sampler: n_steps must be non-negative");
  const Index d = flow.dim();
  const Prior prior = cfg.prior.value_or(Prior::analytic(schedule, d));
  const int correctors = cfg.corrector_steps >= 0 ? cfg.corrector_steps
                                                  : (schedule.kind() == SdeKind::VE ? 1 : 0);
  const int n_ck = std::max(1, n_checkpoints);
  std::vector<double> ck_times;
  for (int k = 0; k <= n_ck; ++k) ck_times.push_back(T - (T - t_min) * k / n_ck);

  const Index chunk = 512;
  const std::size_t chunks = static_cast<std::size_t>((n + chunk - 1) / chunk);
  std::vector<ChunkResult> parts(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    ad::NoGradGuard guard;
    const Index rows = std::min(chunk, n - static_cast<Index>(c) * chunk);
    Rng rng(seed, c);
    ChunkResult& out = parts[c];
    Tensor z = cfg.temperature * prior.sample(rows, rng);
    if (cfg.method == SamplerMethod::ODE) {
      auto rhs = [&](double t, const Tensor& y) {
        return schedule.reverse_drift(y, t, score.eval_data(y, t, cfg.use_ema), 0.0);
      };
      std::span<const double> cks;
      if (trajectory) cks = ck_times;
      auto res = dopri5(rhs, T, t_min, z, {.rtol = cfg.ode_rtol}, cks);
      out.z = res.y;
      out.states = std::move(res.checkpoints);
      out.stats = res.stats;
      return;
    }
    const int N = cfg.n_steps;
    auto time_at = [&](int k) { return t_min + (T - t_min) * k / std::max(1, N); };
    // Predictor index k maps to a checkpoint when it is the closest grid point.
    std::vector<int> ck_index;
    for (double tc : ck_times) ck_index.push_back(N == 0 ? 0 : static_cast<int>(std::lround((tc - t_min) / (T - t_min) * N)));
    auto record = [&](int k) {
      if (!trajectory) return;
      for (int idx : ck_index) {
        if (idx == k) out.states.push_back(z);
      }
    };
    record(N);
    for (int k = N; k >= 1; --k) {
      const double t = time_at(k);
      const double t_prev = time_at(k - 1);
      for (int c2 = 0; c2 < correctors; ++c2) {
        z = corrector_step_langevin(score, z, t, cfg.snr, rng.normal(rows, d), cfg.use_ema, &out.skipped);
      }
      Tensor noise = rng.normal(rows, d);
      const bool last = k == 1;
      if (last && cfg.denoise_final) noise.setZero();
      switch (cfg.predictor) {
        case PredictorKind::EulerMaruyama:
          z = predictor_step_em(schedule, score, z, t, t - t_prev, noise, cfg.use_ema);
          break;
        case PredictorKind::ReverseDiffusion: {
          double var_prev = schedule.var(t_prev);
          if (last && cfg.final_sigma >= 0.0) var_prev = cfg.final_sigma * cfg.final_sigma;
          z = predictor_step_ancestral(schedule, score, z, t, t_prev, var_prev, noise, cfg.use_ema);
          break;
        }
        case PredictorKind::None:
          break;
      }
      record(k - 1);
    }
    out.z = std::move(z);
  });

  SampleResult result;
  Tensor latent(n, d);
  for (std::size_t c = 0; c < chunks; ++c) {
    latent.middleRows(static_cast<Index>(c) * chunk, parts[c].z.rows()) = parts[c].z;
    result.ode_stats.accepted += parts[c].stats.accepted;
    result.ode_stats.rejected += parts[c].stats.rejected;
    result.ode_stats.evaluations += parts[c].stats.evaluations;
    result.skipped_corrections += parts[c].skipped;
  }
  if (trajectory) {
    trajectory->space = Space::Latent;
    trajectory->times = ck_times;
    trajectory->states.assign(ck_times.size(), Tensor(n, d));
    for (std::size_t c = 0; c < chunks; ++c) {
      for (std::size_t k = 0; k < parts[c].states.size() && k < ck_times.size(); ++k) {
        trajectory->states[k].middleRows(static_cast<Index>(c) * chunk, parts[c].states[k].rows()) =
            parts[c].states[k];
      }
    }
  }
  result.latent = latent;
  result.x = flow.inverse_data(latent);
  return result;
}

Prior latent_prior_bank(const Flow& flow, const Schedule& schedule, const Tensor& data, Rng& rng) {
  Tensor z0 = flow.forward_data(data);
  Tensor t = Tensor::Constant(z0.rows(), 1, schedule.T());
  return Prior::empirical(schedule.transition_sample(z0, t, rng.normal(z0.rows(), z0.cols())));
}

Metric parse_metric(const std::string& name) {
  if (name == "sliced-wasserstein" || name == "sw") return Metric::SlicedWasserstein;
  if (name == "energy" || name == "energy-distance") return Metric::EnergyDistance;
  throw Error("unknown metric '" + name + "' (valid: sliced-wasserstein, energy-distance)");
}

double sample_metric(Metric m, const Tensor& a, const Tensor& b) {
  return m == Metric::SlicedWasserstein ? sliced_wasserstein(a, b) : energy_distance(a, b);
}

std::vector<CurvePoint> discretization_sensitivity(const Flow& flow, const ScoreModel& score,
                                                   const Schedule& schedule, SamplerConfig cfg,
                                                   const std::vector<int>& step_counts,
                                                   const Tensor& target, Metric metric, Index n,
                                                   std::uint64_t seed) {
  cfg.method = SamplerMethod::PC;
  std::vector<CurvePoint> out;
  for (int steps : step_counts) {
    cfg.n_steps = steps;
    auto res = sample(flow, score, schedule, cfg, n, seed);
    out.push_back({steps, sample_metric(metric, res.x, target)});
  }
  return out;
}

}  // namespace indm
