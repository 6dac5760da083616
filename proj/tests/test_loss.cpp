// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "indm/loss.hpp"
#include "indm/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

using namespace indm;

namespace {

ScoreNet small_net(const Schedule& s, std::uint64_t seed) {
  ScoreNetConfig c;
  c.hidden_layers = 2;
  c.hidden = 16;
  c.embed_dim = 8;
  Rng rng(seed);
  return ScoreNet(2, s, c, rng);
}

double quadrature_const_term(const Schedule& s, Index d, int n) {
  // Midpoint rule in u = log t for (d/2) * integral of beta - g^2 / sigma^2
  // over [eps, T]; the integrand behaves like 1/t near eps.
  const double a = std::log(s.eps()), b = std::log(s.T()), h = (b - a) / n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = std::exp(a + (i + 0.5) * h);
    acc += (s.beta(t) - s.g2(t) / s.var(t)) * t;
  }
  return 0.5 * static_cast<double>(d) * acc * h;
}

}  // namespace

TEST_CASE("nelbo total is the exact sum of its terms") {
  Schedule s;
  ScoreNet net = small_net(s, 1);
  Rng frng(2);
  FlowConfig fc;
  fc.couplings = 2;
  fc.hidden = 8;
  Flow flow = Flow::coupling(2, fc, frng);
  const Tensor x0 = Rng(3).normal(64, 2);
  Rng rng(4);
  NelboTerms t = nelbo_terms(flow, net, s, x0, rng);
  CHECK(t.total.item() == t.flow_term.item() + t.dsm_term.item() + t.prior_term.item() + t.const_term);

  NelboBreakdown b = estimate_nelbo(flow, net, s, x0, 5);
  CHECK(b.total == b.flow_term + b.dsm_term + b.prior_term + b.const_term);
  CHECK(b.per_sample.rows() == 64);
}

TEST_CASE("constant term matches quadrature") {
  Schedule vp;
  CHECK(std::abs(vp.const_term(2) - quadrature_const_term(vp, 2, 1000000)) < 1e-6);
  // Regression value for the VP defaults.
  CHECK(vp.const_term(2) == doctest::Approx(-13.8145).epsilon(1e-4));
  SdeConfig ve;
  ve.kind = SdeKind::VE;
  Schedule s_ve(ve);
  CHECK(std::abs(s_ve.const_term(3) - quadrature_const_term(s_ve, 3, 1000000)) < 1e-6);
}

TEST_CASE("identity flow collapses to the linear diffusion bound") {
  Schedule s;
  ScoreNet net = small_net(s, 6);
  Rng frng(7);
  Flow coupling = Flow::coupling(2, FlowConfig{}, frng);
  Flow id(2);
  const Tensor x0 = Rng(8).normal(32, 2);
  Rng r1(9), r2(9);
  NelboTerms a = nelbo_terms(coupling, net, s, x0, r1);
  NelboTerms b = nelbo_terms(id, net, s, x0, r2);
  CHECK(a.flow_term.item() == 0.0);
  CHECK(b.flow_term.item() == 0.0);
  CHECK(a.dsm_term.item() == b.dsm_term.item());
  CHECK(a.prior_term.item() == b.prior_term.item());
  CHECK(a.total.item() == b.total.item());
  CHECK(a.score_loss.item() == b.score_loss.item());
}

TEST_CASE("likelihood weighting shares the denoising integrand") {
  Schedule s;
  ScoreNet net = small_net(s, 10);
  Flow id(2);
  const Tensor x0 = Rng(11).normal(16, 2);
  Rng rng(12);
  NelboTerms t = nelbo_terms(id, net, s, x0, rng);
  CHECK(t.score_loss.item() == doctest::Approx(t.dsm_term.item()).epsilon(1e-14));

  LossOptions var;
  var.weighting = Weighting::Variance;
  Rng rng2(12);
  NelboTerms v = nelbo_terms(id, net, s, x0, rng2, var);
  CHECK(v.dsm_term.item() == t.dsm_term.item());
  CHECK(v.score_loss.item() != t.score_loss.item());
}

TEST_CASE("nelbo rejects bad options and names non-finite terms") {
  Schedule s;
  ScoreNet net = small_net(s, 13);
  const Tensor x0 = Rng(14).normal(4, 2);
  Rng rng(15);
  LossOptions bad;
  bad.n_t = 0;
  CHECK_THROWS_AS(nelbo_terms(Flow(2), net, s, x0, rng, bad), Error);

  LinearScore huge = LinearScore::constant(Tensor::Identity(2, 2) * 1e300);
  try {
    nelbo_terms(Flow(2), huge, s, x0 * 1e10, rng);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("dsm") != std::string::npos);
  }
}

TEST_CASE("gaussian oracle nelbo is an unbiased bound at the analytic nll") {
  Schedule s;
  LinearScore score = LinearScore::gaussian(s, 2);
  const Tensor x0 = Rng(16).normal(400000, 2);
  NelboBreakdown b = estimate_nelbo(Flow(2), score, s, x0, 17);
  const double analytic = 1.0 + std::log(2.0 * std::numbers::pi);
  CHECK(std::abs(b.total - analytic) < 4 * b.stderr_total);
  CHECK(b.stderr_total < 0.05);
}

TEST_CASE("scaling flow: nelbo is minimised at the closed-form scale") {
  // Latent score of N(0, v I); data N(0, I); model density N(0, v / a^2).
  // NLL(a) = log(2 pi v / a^2) + a^2 / v in d = 2, minimised at a = sqrt(v).
  Schedule s;
  const double v = 4.0;
  LinearScore score = LinearScore::gaussian(s, 2, 0.0, v);
  const Tensor x0 = Rng(18).normal(200000, 2);
  double best_a = 0.0, best = 1e300;
  for (double a : {1.5, 1.75, 2.0, 2.25, 2.5}) {
    const double val = estimate_nelbo(Flow::scaling(2, a), score, s, x0, 19).total;
    const double exact = std::log(2.0 * std::numbers::pi * v / (a * a)) + a * a / v;
    CHECK(val == doctest::Approx(exact).epsilon(0.02));
    if (val < best) best = val, best_a = a;
  }
  CHECK(best_a == 2.0);
}

TEST_CASE("importance sampled loss has lower variance than uniform times") {
  Schedule s;
  LinearScore score = LinearScore::gaussian(s, 2);
  const Tensor z0 = Rng(20).normal(200000, 2);
  LossOptions is, uni;
  uni.importance_sampling = false;
  Rng r1(21), r2(22);
  const Tensor a = dsm_estimates(score, s, z0, r1, is);
  const Tensor b = dsm_estimates(score, s, z0, r2, uni);
  auto variance = [](const Tensor& x) { return (x.array() - x.mean()).square().mean(); };
  CHECK(variance(a) < variance(b));
  // Both estimate the same expectation.
  const double se = std::sqrt((variance(a) + variance(b)) / 200000.0);
  CHECK(std::abs(a.mean() - b.mean()) < 4 * se);
}

TEST_CASE("per-term transition estimator beats the single-path sum") {
  // Ten-step chain; the path estimator reuses one forward trajectory for all
  // terms, the per-term estimator samples each z_t from p_0t independently.
  Schedule s;
  LinearScore score = LinearScore::gaussian(s, 2, 0.0, 0.25);
  const int steps = 10, reps = 20000;
  Rng rng(23);
  std::vector<double> ts(steps);
  for (int k = 0; k < steps; ++k) ts[k] = s.eps() + (s.T() - s.eps()) * (k + 1) / steps;
  Tensor path_est(reps, 1), term_est(reps, 1);
  for (int r = 0; r < reps; ++r) {
    const Tensor z0 = rng.normal(1, 2);
    double path = 0.0, term = 0.0;
    Tensor z = z0;
    double t_prev = 0.0, var_prev = 0.0;
    for (int k = 0; k < steps; ++k) {
      const double t = ts[k];
      const double a = s.mean_coef(t) / (k == 0 ? 1.0 : s.mean_coef(t_prev));
      z = a * z + std::sqrt(s.var(t) - a * a * var_prev) * rng.normal(1, 2);
      auto loss_at = [&](const Tensor& zt) {
        const Tensor target = -(zt - s.mean_coef(t) * z0) / s.var(t);
        return 0.5 * s.g2(t) * (score.eval_data(zt, t) - target).squaredNorm();
      };
      path += loss_at(z);
      term += loss_at(s.mean_coef(t) * z0 + s.sigma(t) * rng.normal(1, 2));
      t_prev = t;
      var_prev = s.var(t);
    }
    path_est(r, 0) = path;
    term_est(r, 0) = term;
  }
  auto variance = [](const Tensor& x) { return (x.array() - x.mean()).square().mean(); };
  CHECK(variance(term_est) <= variance(path_est));
}

TEST_CASE("symmetry penalty") {
  Tensor A(2, 2);
  A << 0, 1, 0, 0;
  LinearScore lin = LinearScore::constant(A);
  const Index n = 100000;
  const Tensor z = Rng(24).normal(n, 2);
  const Tensor t = Tensor::Constant(n, 1, 0.5);

  SUBCASE("rademacher mean matches the Frobenius asymmetry") {
    Rng rng(25);
    const Tensor est = symmetry_penalty(lin, ad::Value::constant(z), t, ProbeKind::Rademacher, rng).data();
    const double mean = est.mean();
    const double se = std::sqrt((est.array() - mean).square().mean() / n);
    CHECK(std::abs(mean - 2.0) < 3 * se);
  }

  SUBCASE("symmetric jacobian gives zero") {
    Tensor S(2, 2);
    S << 1, 0.3, 0.3, -2;
    LinearScore sym = LinearScore::constant(S);
    Rng rng(26);
    const Tensor est = symmetry_penalty(sym, ad::Value::constant(z.topRows(100)), t.topRows(100),
                                        ProbeKind::Gaussian, rng).data();
    CHECK(est.cwiseAbs().maxCoeff() < 1e-24);
  }

  SUBCASE("rademacher probes have lower variance than gaussian") {
    int wins = 0;
    for (int trial = 0; trial < 20; ++trial) {
      Rng r1(100 + trial), r2(200 + trial);
      const Tensor zz = z.topRows(2000);
      const Tensor tt = t.topRows(2000);
      const Tensor a = symmetry_penalty(lin, ad::Value::constant(zz), tt, ProbeKind::Rademacher, r1).data();
      const Tensor b = symmetry_penalty(lin, ad::Value::constant(zz), tt, ProbeKind::Gaussian, r2).data();
      auto var = [](const Tensor& x) { return (x.array() - x.mean()).square().mean(); };
      wins += var(a) < var(b);
    }
    CHECK(wins >= 19);
  }
}

TEST_CASE("one score step from initialisation lowers the score loss") {
  // Sign test over 20 seeds; 15 or more decreases has one-sided p < 0.05.
  Schedule s;
  const Tensor x0 = Rng(27).normal(256, 2) * 0.5;
  int decreases = 0;
  for (int seed = 0; seed < 20; ++seed) {
    ScoreNet net = small_net(s, 300 + seed);
    Flow id(2);
    auto eval = [&] {
      ad::NoGradGuard g;
      Rng r(999);
      return nelbo_terms(id, net, s, x0, r).score_loss.item();
    };
    const double before = eval();
    Adam adam(*net.params(), AdamConfig{.lr = 1e-3});
    Rng r(400 + seed);
    NelboTerms t = nelbo_terms(id, net, s, x0, r);
    adam.step(*net.params(), ad::grad(t.score_loss, net.params()->trainable_values()));
    decreases += eval() < before;
  }
  CHECK(decreases >= 15);
}
