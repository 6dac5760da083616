// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "indm/likelihood.hpp"

#include <cmath>
#include <numbers>

using namespace indm;

namespace {

const double kGaussNll = 1.0 + std::log(2.0 * std::numbers::pi);

}  // namespace

TEST_CASE("ode likelihood matches the exact gaussian density per sample") {
  Schedule s;
  LinearScore g = LinearScore::gaussian(s, 2);
  const Tensor x = Rng(1).normal(200, 2);
  const Tensor lp = ode_loglikelihood(Flow(2), g, s, x, StartAt::X0, Tensor::Zero(200, 2));
  const Tensor exact = gaussian_logdensity(x, 1.0);
  CHECK((lp - exact).cwiseAbs().maxCoeff() < 1e-3);
  CHECK(-lp.mean() == doctest::Approx(-exact.mean()).epsilon(1e-4));
}

TEST_CASE("ode likelihood through a scaling flow includes the log-det") {
  // Data N(0, 1/4) mapped by h(x) = 2x onto N(0, 1).
  Schedule s;
  LinearScore g = LinearScore::gaussian(s, 2);
  const Tensor x = Rng(2).normal(100, 2) * 0.5;
  const Tensor lp = ode_loglikelihood(Flow::scaling(2, 2.0), g, s, x, StartAt::X0, Tensor::Zero(100, 2));
  const Tensor exact = gaussian_logdensity(x, 0.25);
  CHECK((lp - exact).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("with eps at T the likelihood is the prior density plus log-det") {
  SdeConfig c;
  c.eps = 1.0 - 1e-12;
  Schedule s(c);
  LinearScore g = LinearScore::gaussian(s, 2);
  const Tensor x = Rng(3).normal(10, 2);
  Flow flow = Flow::scaling(2, 1.7);
  const Tensor lp = ode_loglikelihood(flow, g, s, x, StartAt::X0, Tensor::Zero(10, 2));
  const Tensor expect = gaussian_logdensity(1.7 * x, s.prior_var()).array() + 2.0 * std::log(1.7);
  CHECK((lp - expect).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("ode likelihood is stable under tolerance refinement") {
  Schedule s;
  GaussianMixture mix;
  mix.weights = {0.5, 0.5};
  mix.means = Tensor(2, 2);
  mix.means << -1, 0, 1, 0.5;
  mix.vars = {0.1, 0.2};
  MixtureScore score(s, mix);
  Rng rng(4);
  const Tensor x = mix.sample(200, rng);
  OdeLikelihoodOptions a, b;
  a.ode.rtol = 1e-5;
  b.ode.rtol = 1e-6;
  const double la = latent_ode_logp(score, s, x, a).mean();
  const double lb = latent_ode_logp(score, s, x, b).mean();
  CHECK(std::abs(la - lb) < 1e-3);
  // And it is the exact mixture log-density at eps.
  CHECK(lb == doctest::Approx(mix.logdensity(x).mean()).epsilon(1e-3));
}

TEST_CASE("residual term closed forms") {
  Schedule s;
  const Tensor z0 = Rng(5).normal(50, 3);
  const Tensor noise = Rng(6).normal(50, 3);
  const double m = s.mean_coef(s.eps()), v = s.var(s.eps());

  SUBCASE("zero score gives -d log mean_coef(eps)") {
    LinearScore zero = LinearScore::constant(Tensor::Zero(3, 3));
    const Tensor r = residual_term(zero, s, z0, noise);
    CHECK((r.array() + 3.0 * std::log(m)).abs().maxCoeff() < 1e-12);
  }

  SUBCASE("the two variance conventions differ by the algebraic identity") {
    LinearScore g = LinearScore::gaussian(s, 3, 0.0, 2.0);
    const Tensor a = residual_term(g, s, z0, noise, ResidualVariance::Scaled);
    const Tensor b = residual_term(g, s, z0, noise, ResidualVariance::Ddpm);
    const Tensor z_eps = m * z0 + std::sqrt(v) * noise;
    const Tensor mean = (z_eps + v * g.eval_data(z_eps, s.eps())) / m;
    for (Index i = 0; i < 50; ++i) {
      const double r2 = (z0.row(i) - mean.row(i)).squaredNorm();
      // rev_ddpm - rev_scaled = -d log m + (m^2 - 1) r2 / (2 v); residual = -rev + fwd.
      const double expect = -(-3.0 * std::log(m) + (m * m - 1.0) * r2 / (2.0 * v));
      CHECK(b(i, 0) - a(i, 0) == doctest::Approx(expect).epsilon(1e-8));
    }
  }

  SUBCASE("exact score residual vanishes as eps shrinks") {
    double prev = 1e300;
    for (double eps : {1e-2, 1e-3, 1e-4, 1e-5}) {
      SdeConfig c;
      c.eps = eps;
      Schedule se(c);
      LinearScore g = LinearScore::gaussian(se, 3);
      const double r = std::abs(residual_term(g, se, z0, noise).mean());
      CHECK(r < prev);
      prev = r;
    }
    CHECK(prev < 1e-3);
  }
}

TEST_CASE("evaluation report on the gaussian oracle") {
  Schedule s;
  LinearScore g = LinearScore::gaussian(s, 2);
  const Tensor data = Rng(7).normal(4000, 2);
  EvalOptions eo;
  eo.n_eval = 4000;
  eo.seed = 8;
  const EvalReport r = evaluate(Flow(2), g, s, data, eo);
  CHECK(r.gap == r.nelbo_with_residual - r.nll_corrected);
  CHECK(std::isfinite(r.residual_term));
  CHECK(r.bpd_nll_corrected == doctest::Approx(r.nll_corrected / (2.0 * std::numbers::ln2)));
  CHECK(r.per_sample_nll_corrected.rows() == 4000);
  // The sample mean of the exact NLL on these points.
  const double exact = -gaussian_logdensity(data, 1.0).mean();
  CHECK(r.nll_uncorrected == doctest::Approx(exact).epsilon(1e-4));
  CHECK(std::abs(r.nll_corrected - exact) < 0.01);
  CHECK(std::abs(exact - kGaussNll) < 0.05);
  CHECK(r.gap > -4 * r.nelbo.stderr_total - 0.02);
  const std::string text = r.to_text();
  for (const char* key : {"nll_corrected=", "nll_uncorrected=", "nelbo_with_residual=", "nelbo_without_residual=",
                          "gap=", "residual_term=", "bpd_nll_corrected=", "likelihood_note="}) {
    CHECK(text.find(key) != std::string::npos);
  }
  CHECK(nats_to_bpd(0.0, 3, true) == doctest::Approx(8.0));
}
