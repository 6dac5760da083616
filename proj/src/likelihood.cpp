// SPDX-License-Identifier: Apache-2.0

#include "indm/likelihood.hpp"

#include "indm/parallel.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>

namespace indm {

Tensor latent_ode_logp(const ScoreModel& score, const Schedule& schedule, const Tensor& z_eps,
                       const OdeLikelihoodOptions& opts, OdeStats* stats) {
  const Index n = z_eps.rows();
  const Index d = z_eps.cols();
  const Index chunk = std::max<Index>(1, opts.chunk);
  const std::size_t chunks = static_cast<std::size_t>((n + chunk - 1) / chunk);
  Tensor out(n, 1);
  std::mutex stats_mutex;
  parallel_for(chunks, [&](std::size_t c) {
    ad::NoGradGuard guard;
    const Index lo = static_cast<Index>(c) * chunk;
    const Index rows = std::min(chunk, n - lo);
    Tensor y0(rows, d + 1);
    y0.leftCols(d) = z_eps.middleRows(lo, rows);
    y0.col(d).setZero();
    auto rhs = [&](double t, const Tensor& y) {
      Tensor z = y.leftCols(d);
      Tensor tt = Tensor::Constant(rows, 1, t);
      Tensor s = score.eval_data(z, tt, opts.use_ema);
      Tensor div = divergence(score, z, tt, opts.use_ema);
      Tensor dy(rows, d + 1);
      dy.leftCols(d) = schedule.reverse_drift(z, t, s, 0.0);
      dy.col(d) = (-0.5 * schedule.beta(t) * static_cast<double>(d) - 0.5 * schedule.g2(t) * div.array()).matrix();
      return dy;
    };
    auto res = dopri5(rhs, schedule.eps(), schedule.T(), std::move(y0), opts.ode);
    Tensor zT = res.y.leftCols(d);
    out.middleRows(lo, rows) = gaussian_logdensity(zT, schedule.prior_var()) + res.y.col(d);
    if (stats) {
      std::lock_guard lock(stats_mutex);
      stats->accepted += res.stats.accepted;
      stats->rejected += res.stats.rejected;
      stats->evaluations += res.stats.evaluations;
    }
  });
  return out;
}

Tensor ode_loglikelihood(const Flow& flow, const ScoreModel& score, const Schedule& schedule,
                         const Tensor& x0, StartAt start, const Tensor& noise,
                         const OdeLikelihoodOptions& opts) {
  Tensor logdet;
  Tensor z0 = flow.forward_data(x0, &logdet);
  Tensor z = z0;
  if (start == StartAt::XEps) {
    z = schedule.transition_sample(z0, Tensor::Constant(z0.rows(), 1, schedule.eps()), noise);
  }
  return latent_ode_logp(score, schedule, z, opts) + logdet;
}

Tensor residual_term(const ScoreModel& score, const Schedule& schedule, const Tensor& z0,
                     const Tensor& noise, ResidualVariance var, bool use_ema) {
  const double eps = schedule.eps();
  const double m = schedule.mean_coef(eps);
  const double v = schedule.var(eps);
  const double d = static_cast<double>(z0.cols());
  Tensor z_eps = m * z0 + std::sqrt(v) * noise;
  Tensor s = score.eval_data(z_eps, eps, use_ema);
  Tensor mean = (z_eps + v * s) / m;
  Tensor out(z0.rows(), 1);
  // The log(2 pi) parts cancel between the two Gaussians.
  for (Index i = 0; i < z0.rows(); ++i) {
    const double r2 = (z0.row(i) - mean.row(i)).squaredNorm();
    const double fwd = -0.5 * d * std::log(v) - 0.5 * noise.row(i).squaredNorm();
    const double rev = var == ResidualVariance::Scaled
                           ? -0.5 * d * std::log(v / (m * m)) - 0.5 * m * m * r2 / v
                           : -0.5 * d * std::log(v) - 0.5 * r2 / v;
    out(i, 0) = -(rev - fwd);
  }
  if (!out.allFinite()) throw NumericalError("residual term is not finite");
  return out;
}

double nats_to_bpd(double nats, Index d, bool dequantization_offset) {
  const double per_dim = nats / static_cast<double>(d) + (dequantization_offset ? std::log(256.0) : 0.0);
  return per_dim / std::numbers::ln2;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os.precision(10);
  os << "nll_corrected=" << nll_corrected << "\n"
     << "nll_uncorrected=" << nll_uncorrected << "\n"
     << "nelbo_with_residual=" << nelbo_with_residual << "\n"
     << "nelbo_without_residual=" << nelbo_without_residual << "\n"
     << "gap=" << gap << "\n"
     << "residual_term=" << residual_term << "\n"
     << "bpd_nll_corrected=" << bpd_nll_corrected << "\n"
     << "bpd_nll_uncorrected=" << bpd_nll_uncorrected << "\n"
     << "bpd_nelbo_with_residual=" << bpd_nelbo_with_residual << "\n"
     << "bpd_nelbo_without_residual=" << bpd_nelbo_without_residual << "\n"
     << "flow_term=" << nelbo.flow_term << "\n"
     << "dsm_term=" << nelbo.dsm_term << "\n"
     << "prior_term=" << nelbo.prior_term << "\n"
     << "const_term=" << nelbo.const_term << "\n"
     << "nelbo_stderr=" << nelbo.stderr_total << "\n"
     << "likelihood_note=probability-flow ODE likelihood (lambda=0) used for the model\n";
  return os.str();
}

EvalReport evaluate(const Flow& flow, const ScoreModel& score, const Schedule& schedule,
                    const Tensor& data, const EvalOptions& opts) {
  const Index n = std::min<Index>(opts.n_eval, data.rows());
  const Tensor x0 = data.topRows(n);
  const Index d = x0.cols();
  EvalReport r;
  r.dim = d;
  LossOptions loss = opts.loss;
  loss.use_ema = opts.ode.use_ema;
  r.nelbo = estimate_nelbo(flow, score, schedule, x0, opts.seed, loss);

  Rng rng(opts.seed, 0x6e6c6cu);
  Tensor noise = rng.normal(n, d);
  Tensor logdet;
  Tensor z0 = flow.forward_data(x0, &logdet);
  Tensor z_eps = schedule.transition_sample(z0, Tensor::Constant(n, 1, schedule.eps()), noise);
  r.per_sample_residual = residual_term(score, schedule, z0, noise, ResidualVariance::Scaled, opts.ode.use_ema);
  r.per_sample_nll_corrected = -latent_ode_logp(score, schedule, z_eps, opts.ode) - logdet + r.per_sample_residual;
  r.per_sample_nll_uncorrected = -latent_ode_logp(score, schedule, z0, opts.ode) - logdet;

  r.residual_term = r.per_sample_residual.mean();
  r.nll_corrected = r.per_sample_nll_corrected.mean();
  r.nll_uncorrected = r.per_sample_nll_uncorrected.mean();
  r.nelbo_without_residual = r.nelbo.total;
  r.nelbo_with_residual = r.nelbo.total + r.residual_term;
  r.gap = r.nelbo_with_residual - r.nll_corrected;
  const bool off = opts.dequantization_offset;
  r.bpd_nll_corrected = nats_to_bpd(r.nll_corrected, d, off);
  r.bpd_nll_uncorrected = nats_to_bpd(r.nll_uncorrected, d, off);
  r.bpd_nelbo_with_residual = nats_to_bpd(r.nelbo_with_residual, d, off);
  r.bpd_nelbo_without_residual = nats_to_bpd(r.nelbo_without_residual, d, off);
  return r;
}

}  // namespace indm
