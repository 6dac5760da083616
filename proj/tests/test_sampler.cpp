// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "indm/datasets.hpp"
#include "indm/metrics.hpp"
#include "indm/sampler.hpp"

#include <cmath>

using namespace indm;

namespace {

Schedule ve_schedule() {
  SdeConfig c;
  c.kind = SdeKind::VE;
  return Schedule(c);
}

double col_var(const Tensor& x, Index j) {
  const double m = x.col(j).mean();
  return (x.col(j).array() - m).square().sum() / static_cast<double>(x.rows() - 1);
}

}  // namespace

TEST_CASE("predictor steps reduce to the identity in degenerate cases") {
  Schedule ve = ve_schedule();
  LinearScore zero = LinearScore::constant(Tensor::Zero(2, 2));
  const Tensor z = Rng(1).normal(5, 2);
  const Tensor none = Tensor::Zero(5, 2);
  CHECK((predictor_step_em(ve, zero, z, 0.5, 0.01, none) - z).cwiseAbs().maxCoeff() == 0.0);

  LinearScore g = LinearScore::gaussian(ve, 2);
  const Tensor noise = Rng(2).normal(5, 2);
  CHECK((predictor_step_reverse_diffusion(g, z, 0.5, 0.7, 0.7, noise) - z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reverse diffusion and euler steps agree to second order") {
  Schedule ve = ve_schedule();
  LinearScore g = LinearScore::gaussian(ve, 2);
  const Tensor z = Rng(3).normal(4, 2) * 5.0;
  const Tensor none = Tensor::Zero(4, 2);
  auto diff = [&](double gamma) {
    const double t = 0.6;
    const Tensor em = predictor_step_em(ve, g, z, t, gamma, none);
    const Tensor rd = predictor_step_reverse_diffusion(g, z, t, ve.sigma(t - gamma), ve.sigma(t), none);
    const Tensor an = predictor_step_ancestral(ve, g, z, t, t - gamma, ve.var(t - gamma), none);
    CHECK((rd - an).cwiseAbs().maxCoeff() < 1e-12);
    return (em - rd).norm();
  };
  const double r = diff(0.02) / diff(0.01);
  CHECK(r == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("euler-maruyama with the exact score recovers a 1D gaussian") {
  Schedule s;
  const double v = 0.5;
  LinearScore g = LinearScore::gaussian(s, 1, 0.0, v);
  SamplerConfig cfg;
  cfg.n_steps = 1000;
  const SampleResult r = sample(Flow(1), g, s, cfg, 20000, 4);
  CHECK(col_var(r.x, 0) == doctest::Approx(v).epsilon(0.05));
  CHECK(std::abs(r.x.mean()) < 0.03);
}

TEST_CASE("refining the euler grid reduces the terminal error") {
  Schedule s;
  const double v = 0.25;
  LinearScore g = LinearScore::gaussian(s, 2, 0.0, v);
  auto err = [&](int n) {
    SamplerConfig cfg;
    cfg.n_steps = n;
    const SampleResult r = sample(Flow(2), g, s, cfg, 40000, 5);
    // W2 between the fitted and true isotropic gaussians.
    const double sd = std::sqrt(0.5 * (col_var(r.x, 0) + col_var(r.x, 1)));
    return std::abs(sd - std::sqrt(v));
  };
  const double e10 = err(10), e20 = err(20), e40 = err(40);
  CHECK(e20 < e10);
  CHECK(e40 < e20);
}

TEST_CASE("langevin correction") {
  Schedule s;
  LinearScore g = LinearScore::gaussian(s, 2);
  const Tensor z = Rng(6).normal(2000, 2) * 2.0;

  SUBCASE("vanishing snr is the identity") {
    const Tensor noise = Rng(7).normal(2000, 2);
    CHECK((corrector_step_langevin(g, z, 0.5, 1e-12, noise) - z).cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("repeated correction approaches the marginal") {
    // KL(N(0, v I) || N(0, I)) for the isotropic fit, d = 2.
    auto kl = [](const Tensor& x) {
      const double v = 0.5 * (col_var(x, 0) + col_var(x, 1));
      const double m2 = x.colwise().mean().squaredNorm();
      return v - 1.0 - std::log(v) + 0.5 * m2;
    };
    Rng rng(8);
    Tensor cur = z;
    const double start = kl(cur);
    for (int k = 0; k < 50; ++k) cur = corrector_step_langevin(g, cur, 0.5, 0.16, rng.normal(2000, 2));
    CHECK(kl(cur) < 0.25 * start);
  }

  SUBCASE("a zero score skips the batch") {
    LinearScore zero = LinearScore::constant(Tensor::Zero(2, 2));
    Index skipped = 0;
    const Tensor out = corrector_step_langevin(zero, z, 0.5, 0.16, Rng(9).normal(2000, 2), true, &skipped);
    CHECK(skipped == 2000);
    CHECK((out - z).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("temperature scales only the initial latent") {
  Schedule s;
  LinearScore g = LinearScore::gaussian(s, 2);
  Flow flow = Flow::scaling(2, 2.0);
  SamplerConfig cfg;
  cfg.n_steps = 0;
  const SampleResult a = sample(flow, g, s, cfg, 100, 10);
  cfg.temperature = 1.05;
  const SampleResult b = sample(flow, g, s, cfg, 100, 10);
  CHECK((b.x - 1.05 * a.x).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((2.0 * a.x - a.latent).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("the flow is inverted once per sample call and runs are reproducible") {
  Schedule s;
  LinearScore g = LinearScore::gaussian(s, 2);
  Flow flow = Flow::scaling(2, 1.5);
  SamplerConfig cfg;
  cfg.n_steps = 20;
  flow.reset_inverse_calls();
  const SampleResult a = sample(flow, g, s, cfg, 1500, 11);
  CHECK(flow.inverse_calls() == 1);
  const SampleResult b = sample(flow, g, s, cfg, 1500, 11);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
  cfg.method = SamplerMethod::ODE;
  flow.reset_inverse_calls();
  sample(flow, g, s, cfg, 700, 11);
  CHECK(flow.inverse_calls() == 1);
}

TEST_CASE("ode and pc samplers agree with the exact gaussian score") {
  Schedule s;
  const double v = 0.5, m = 1.0;
  LinearScore g = LinearScore::gaussian(s, 2, m, v);
  SamplerConfig pc;
  pc.n_steps = 1000;
  SamplerConfig ode;
  ode.method = SamplerMethod::ODE;
  const Index n = 20000;
  const SampleResult a = sample(Flow(2), g, s, pc, n, 12);
  const SampleResult b = sample(Flow(2), g, s, ode, n, 13);
  const Moments ma = sample_moments(a.x), mb = sample_moments(b.x);
  const double se_mean = std::sqrt(2.0 * v / n);
  const double se_var = v * std::sqrt(2.0 * 2.0 / n);
  for (Index j = 0; j < 2; ++j) {
    CHECK(std::abs(ma.mean(j) - mb.mean(j)) < 4 * se_mean);
    CHECK(std::abs(ma.cov(j, j) - mb.cov(j, j)) < 4 * se_var + 0.01);
    CHECK(mb.mean(j) == doctest::Approx(m).epsilon(0.02));
    CHECK(mb.cov(j, j) == doctest::Approx(v).epsilon(0.03));
  }
  CHECK(std::abs(ma.cov(0, 1) - mb.cov(0, 1)) < 4 * se_var);
  CHECK(b.ode_stats.accepted > 0);
}

TEST_CASE("ode sampler recovers a 1D gaussian") {
  Schedule s;
  LinearScore g = LinearScore::gaussian(s, 1, 0.5, 2.0);
  SamplerConfig ode;
  ode.method = SamplerMethod::ODE;
  const SampleResult r = sample(Flow(1), g, s, ode, 20000, 14);
  CHECK(r.x.mean() == doctest::Approx(0.5).epsilon(0.02).scale(1.0));
  CHECK(col_var(r.x, 0) == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("trajectory records decreasing times") {
  Schedule s;
  LinearScore g = LinearScore::gaussian(s, 2);
  SamplerConfig cfg;
  cfg.n_steps = 40;
  TrajectoryBatch traj;
  const SampleResult r = sample(Flow(2), g, s, cfg, 64, 15, &traj, 4);
  REQUIRE(traj.times.size() == 5);
  REQUIRE(traj.states.size() == 5);
  for (std::size_t k = 1; k < traj.times.size(); ++k) CHECK(traj.times[k] < traj.times[k - 1]);
  CHECK((traj.states.back() - r.latent).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("data-adaptive prior ties or improves on a VE mixture") {
  Schedule ve = ve_schedule();
  GaussianMixture mix = mixture_model();
  MixtureScore score(ve, mix);
  Rng rng(16);
  const Tensor data = mix.sample(4000, rng);
  const Tensor target = mix.sample(2000, rng);
  SamplerConfig cfg;
  cfg.n_steps = 300;
  cfg.predictor = PredictorKind::ReverseDiffusion;
  const double plain = sliced_wasserstein(sample(Flow(2), score, ve, cfg, 2000, 17).x, target);
  Rng bank_rng(18);
  cfg.prior = latent_prior_bank(Flow(2), ve, data, bank_rng);
  const double adaptive = sliced_wasserstein(sample(Flow(2), score, ve, cfg, 2000, 17).x, target);
  CHECK(adaptive <= plain * 1.1);
}

TEST_CASE("exact score at many steps reaches the sampling floor") {
  Schedule s;
  GaussianMixture mix = mixture_model();
  MixtureScore score(s, mix);
  Rng rng(19);
  const Tensor target = mix.sample(2000, rng);
  const double floor = sliced_wasserstein(mix.sample(2000, rng), target);
  SamplerConfig cfg;
  const auto curve = discretization_sensitivity(Flow(2), score, s, cfg, {8, 512}, target,
                                                Metric::SlicedWasserstein, 2000, 20);
  REQUIRE(curve.size() == 2);
  CHECK(curve[1].value < 1.5 * floor);
  CHECK(curve[0].value > curve[1].value);
}
