// SPDX-License-Identifier: Apache-2.0

#include "indm/loss.hpp"

#include "indm/parallel.hpp"

#include <cmath>
#include <algorithm>
#include <array>
#include <numbers>

namespace indm {

Weighting parse_weighting(const std::string& name) {
  if (name == "likelihood") return Weighting::Likelihood;
  if (name == "variance") return Weighting::Variance;
  throw Error("unknown weighting '" + name + "' (valid: likelihood, variance)");
}

std::string weighting_name(Weighting w) {
  return w == Weighting::Likelihood ? "likelihood" : "variance";
}

namespace {

struct TimeDraw {
  Tensor t;       // m x 1
  Tensor noise;   // m x d
  Tensor w_flow;  // g^2 / p(t)
  Tensor w_score; // lambda / p(t)
};

TimeDraw draw_times(const Schedule& s, Index base_rows, Index d, Rng& rng, const LossOptions& o) {
  Tensor u = rng.uniform(base_rows, 1);
  Tensor t = o.importance_sampling ? s.importance_sample_time(u)
                                   : (u.array() * (s.T() - s.eps()) + s.eps()).matrix();
  Tensor noise = rng.normal(base_rows, d);
  if (o.antithetic) {
    Tensor t2(2 * base_rows, 1), n2(2 * base_rows, d);
    t2 << t, t;
    n2 << noise, -noise;
    t = std::move(t2);
    noise = std::move(n2);
  }
  TimeDraw out{t, noise, Tensor(t.rows(), 1), Tensor(t.rows(), 1)};
  for (Index i = 0; i < t.rows(); ++i) {
    const double ti = t(i, 0);
    const double p = o.importance_sampling ? s.is_density(ti) : 1.0 / (s.T() - s.eps());
    const double lam = o.weighting == Weighting::Likelihood ? s.g2(ti) : s.var(ti);
    out.w_flow(i, 0) = s.g2(ti) / p;
    out.w_score(i, 0) = lam / p;
  }
  return out;
}

// Squared denoising residual |s - grad log p_0t|^2 per row.
ad::Value residual_sq(const ad::Value& s, const TimeDraw& draw, const Schedule& sched,
                      bool control_variate) {
  const Index d = s.cols();
  Tensor n_over_sigma(draw.t.rows(), d);
  Tensor mean_sq(draw.t.rows(), 1);
  for (Index i = 0; i < draw.t.rows(); ++i) {
    const double sg = sched.sigma(draw.t(i, 0));
    n_over_sigma.row(i) = draw.noise.row(i) / sg;
    mean_sq(i, 0) = static_cast<double>(d) / (sg * sg);
  }
  auto nv = ad::Value::constant(n_over_sigma);
  if (!control_variate) return ad::row_sum(ad::square(s + nv));
  return ad::row_sum(ad::square(s) + 2.0 * (s * nv)) + ad::Value::constant(mean_sq);
}

void require_finite(const ad::Value& v, const char* term) {
  if (!v.data().allFinite()) throw NumericalError(std::string("non-finite NELBO term: ") + term);
}

}  // namespace

NelboTerms nelbo_terms(const Flow& flow, const ScoreModel& score, const Schedule& schedule,
                       const Tensor& x0, Rng& rng, const LossOptions& opts) {
  if (opts.n_t < 1) throw Error("nelbo: n_t must be at least 1");
  if (x0.rows() == 0) throw Error("nelbo: empty batch");
  const Index n = x0.rows();
  const Index d = x0.cols();
  const double dd = static_cast<double>(d);

  auto fo = flow.forward(ad::Value::constant(x0));
  auto z0 = fo.z;
  require_finite(fo.logdet, "flow_term");

  auto draw = draw_times(schedule, n * opts.n_t, d, rng, opts);
  const Index reps = draw.t.rows() / n;
  auto z0_rep = ad::tile_rows(z0, reps);
  Tensor sigma_noise(draw.t.rows(), d);
  for (Index i = 0; i < draw.t.rows(); ++i) {
    sigma_noise.row(i) = schedule.sigma(draw.t(i, 0)) * draw.noise.row(i);
  }
  auto zt = z0_rep * ad::Value::constant(schedule.mean_coef(draw.t)) + ad::Value::constant(sigma_noise);
  auto s = score.eval(zt, draw.t, opts.use_ema);
  auto r2 = residual_sq(s, draw, schedule, opts.control_variate);
  auto dsm_rows = 0.5 * (r2 * ad::Value::constant(draw.w_flow));

  ad::Value prior_rows;
  const double mT = schedule.mean_coef(schedule.T());
  const double vT = schedule.var(schedule.T());
  const double pv = schedule.prior_var();
  const double log_norm = 0.5 * dd * std::log(2.0 * std::numbers::pi * pv);
  if (opts.analytic_prior) {
    prior_rows = ad::row_sum(ad::square(z0)) * (0.5 * mT * mT / pv) + (0.5 * dd * vT / pv + log_norm);
  } else {
    auto zT = z0 * mT + ad::Value::constant(rng.normal(n, d) * std::sqrt(vT));
    prior_rows = ad::row_sum(ad::square(zT)) * (0.5 / pv) + log_norm;
  }

  NelboTerms out;
  out.const_term = schedule.const_term(d);
  out.flow_term = -ad::mean(fo.logdet);
  out.dsm_term = ad::mean(dsm_rows);
  out.prior_term = ad::mean(prior_rows);
  require_finite(out.dsm_term, "dsm_term");
  require_finite(out.prior_term, "prior_term");
  out.total = out.flow_term + out.dsm_term + out.prior_term + out.const_term;
  out.score_loss = opts.weighting == Weighting::Likelihood
                       ? out.dsm_term
                       : ad::mean(0.5 * (r2 * ad::Value::constant(draw.w_score)));
  require_finite(out.score_loss, "score_loss");

  Tensor dsm_per = Tensor::Zero(n, 1);
  for (Index k = 0; k < reps; ++k) dsm_per += dsm_rows.data().middleRows(k * n, n);
  dsm_per /= static_cast<double>(reps);
  out.per_sample = (-fo.logdet.data() + dsm_per + prior_rows.data()).array() + out.const_term;
  return out;
}

NelboBreakdown estimate_nelbo(const Flow& flow, const ScoreModel& score, const Schedule& schedule,
                              const Tensor& x0, std::uint64_t seed, const LossOptions& opts) {
  const Index n = x0.rows();
  const Index chunk = 1024;
  const std::size_t chunks = static_cast<std::size_t>((n + chunk - 1) / chunk);
  std::vector<Tensor> per(chunks);
  std::vector<std::array<double, 3>> sums(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    ad::NoGradGuard guard;
    const Index lo = static_cast<Index>(c) * chunk;
    const Index rows = std::min(chunk, n - lo);
    Rng rng(seed, c);
    auto terms = nelbo_terms(flow, score, schedule, x0.middleRows(lo, rows), rng, opts);
    const double w = static_cast<double>(rows);
    sums[c] = {terms.flow_term.item() * w, terms.dsm_term.item() * w, terms.prior_term.item() * w};
    per[c] = terms.per_sample;
  });
  NelboBreakdown out;
  out.per_sample.resize(n, 1);
  for (std::size_t c = 0; c < chunks; ++c) {
    out.flow_term += sums[c][0];
    out.dsm_term += sums[c][1];
    out.prior_term += sums[c][2];
    out.per_sample.middleRows(static_cast<Index>(c) * chunk, per[c].rows()) = per[c];
  }
  const double nn = static_cast<double>(n);
  out.flow_term /= nn;
  out.dsm_term /= nn;
  out.prior_term /= nn;
  out.const_term = schedule.const_term(x0.cols());
  out.total = out.flow_term + out.dsm_term + out.prior_term + out.const_term;
  const double mean = out.per_sample.mean();
  const double var = (out.per_sample.array() - mean).square().sum() / std::max(1.0, nn - 1.0);
  out.stderr_total = std::sqrt(var / nn);
  return out;
}

Tensor dsm_estimates(const ScoreModel& score, const Schedule& schedule, const Tensor& z0, Rng& rng,
                     const LossOptions& opts) {
  ad::NoGradGuard guard;
  auto draw = draw_times(schedule, z0.rows(), z0.cols(), rng, opts);
  Tensor zt = schedule.transition_sample(z0.replicate(draw.t.rows() / z0.rows(), 1), draw.t, draw.noise);
  auto s = score.eval(ad::Value::constant(zt), draw.t, opts.use_ema);
  auto r2 = residual_sq(s, draw, schedule, opts.control_variate);
  return (0.5 * r2.data().array() * draw.w_flow.array()).matrix();
}

ad::Value symmetry_penalty(const ScoreModel& score, const ad::Value& z, const Tensor& t,
                           ProbeKind probes, Rng& rng) {
  const Index n = z.rows();
  const Index d = z.cols();
  auto draw = [&] { return probes == ProbeKind::Rademacher ? rng.rademacher(n, d) : rng.normal(n, d); };
  auto e1 = ad::Value::constant(draw());
  auto e2 = ad::Value::constant(draw());
  auto j1 = score.eval_jvp(z, e1, t).second;
  auto j2 = score.eval_jvp(z, e2, t).second;
  return ad::square(ad::row_sum(e2 * j1) - ad::row_sum(e1 * j2));
}

}  // namespace indm
