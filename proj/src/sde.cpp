// SPDX-License-Identifier: Apache-2.0

#include "indm/sde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace indm {
namespace {

double softplus(double x) { return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

SdeKind parse_sde_kind(const std::string& name) {
  if (name == "vp" || name == "VP") return SdeKind::VP;
  if (name == "ve" || name == "VE") return SdeKind::VE;
  throw Error("unknown sde kind '" + name + "' (valid: vp, ve)");
}

std::string sde_kind_name(SdeKind k) { return k == SdeKind::VP ? "vp" : "ve"; }

Schedule::Schedule(SdeConfig cfg) : cfg_(cfg) {
  if (!(cfg_.eps > 0.0) || !(cfg_.T > cfg_.eps)) throw Error("schedule: need 0 < eps < T");
  if (cfg_.kind == SdeKind::VP && !(cfg_.beta_min > 0.0 && cfg_.beta_max >= cfg_.beta_min)) {
    throw Error("schedule: need 0 < beta_min <= beta_max");
  }
  if (cfg_.kind == SdeKind::VE && !(cfg_.sigma_min > 0.0 && cfg_.sigma_max > cfg_.sigma_min)) {
    throw Error("schedule: need 0 < sigma_min < sigma_max");
  }
}

double Schedule::beta(double t) const {
  if (cfg_.kind == SdeKind::VE) return 0.0;
  return cfg_.beta_min + (cfg_.beta_max - cfg_.beta_min) * t;
}

double Schedule::int_beta(double t) const {
  if (cfg_.kind == SdeKind::VE) return 0.0;
  return 0.5 * (cfg_.beta_max - cfg_.beta_min) * t * t + cfg_.beta_min * t;
}

double Schedule::g2(double t) const {
  if (cfg_.kind == SdeKind::VP) return beta(t);
  return 2.0 * std::log(cfg_.sigma_max / cfg_.sigma_min) * var(t);
}

double Schedule::mean_coef(double t) const {
  if (cfg_.kind == SdeKind::VE) return 1.0;
  return std::exp(-0.5 * int_beta(t));
}

double Schedule::var(double t) const {
  if (cfg_.kind == SdeKind::VP) return -std::expm1(-int_beta(t));
  return cfg_.sigma_min * cfg_.sigma_min * std::pow(cfg_.sigma_max / cfg_.sigma_min, 2.0 * t);
}

double Schedule::prior_var() const {
  return cfg_.kind == SdeKind::VP ? 1.0 : cfg_.sigma_max * cfg_.sigma_max;
}

void Schedule::check_time(double t) const {
  const double slack = 1e-12;
  if (!(t >= cfg_.eps - slack && t <= cfg_.T + slack)) {
    throw Error("time " + std::to_string(t) + " outside [" + std::to_string(cfg_.eps) + ", " +
                std::to_string(cfg_.T) + "]");
  }
}

Tensor Schedule::mean_coef(const Tensor& t) const {
  Tensor out(t.rows(), 1);
  for (Index i = 0; i < t.rows(); ++i) out(i, 0) = mean_coef(t(i, 0));
  return out;
}

Tensor Schedule::sigma(const Tensor& t) const {
  Tensor out(t.rows(), 1);
  for (Index i = 0; i < t.rows(); ++i) out(i, 0) = sigma(t(i, 0));
  return out;
}

Tensor Schedule::transition_sample(const Tensor& z0, const Tensor& t, const Tensor& noise) const {
  if (t.rows() != z0.rows() || noise.rows() != z0.rows() || noise.cols() != z0.cols()) {
    throw ShapeError("transition_sample: shapes " + shape_str(z0) + ", " + shape_str(t) + ", " +
                     shape_str(noise));
  }
  Tensor out(z0.rows(), z0.cols());
  for (Index i = 0; i < z0.rows(); ++i) {
    check_time(t(i, 0));
    out.row(i) = mean_coef(t(i, 0)) * z0.row(i) + sigma(t(i, 0)) * noise.row(i);
  }
  return out;
}

Tensor Schedule::transition_score(const Tensor& zt, const Tensor& z0, const Tensor& t) const {
  Tensor out(zt.rows(), zt.cols());
  for (Index i = 0; i < zt.rows(); ++i) {
    check_time(t(i, 0));
    const double v = var(t(i, 0));
    if (!(v > 0.0)) throw NumericalError("transition_score: zero variance");
    out.row(i) = -(zt.row(i) - mean_coef(t(i, 0)) * z0.row(i)) / v;
  }
  return out;
}

Tensor Schedule::reverse_drift(const Tensor& z, double t, const Tensor& score,
                               double lambda) const {
  if (lambda < 0.0 || lambda > 1.0) throw Error("reverse_drift: lambda must lie in [0, 1]");
  return -0.5 * beta(t) * z - 0.5 * (1.0 + lambda * lambda) * g2(t) * score;
}

double Schedule::const_term(Index d) const {
  const double half_d = 0.5 * static_cast<double>(d);
  if (cfg_.kind == SdeKind::VP) {
    return half_d * ((int_beta(cfg_.T) - int_beta(cfg_.eps)) - is_normalizer());
  }
  return -half_d * is_normalizer();
}

double Schedule::is_antiderivative(double t) const {
  if (cfg_.kind == SdeKind::VE) return 2.0 * std::log(cfg_.sigma_max / cfg_.sigma_min) * t;
  return std::log(std::expm1(int_beta(t)));
}

double Schedule::is_normalizer() const {
  return is_antiderivative(cfg_.T) - is_antiderivative(cfg_.eps);
}

double Schedule::is_cdf(double t) const {
  return (is_antiderivative(t) - is_antiderivative(cfg_.eps)) / is_normalizer();
}

double Schedule::is_density(double t) const { return g2(t) / var(t) / is_normalizer(); }

double Schedule::is_inverse_cdf(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  double t;
  if (cfg_.kind == SdeKind::VE) {
    t = cfg_.eps + u * (cfg_.T - cfg_.eps);
  } else {
    const double b = softplus(is_normalizer() * u + is_antiderivative(cfg_.eps));
    const double slope = cfg_.beta_max - cfg_.beta_min;
    if (slope == 0.0) {
      t = b / cfg_.beta_min;
    } else {
      const double bm = cfg_.beta_min;
      // Rationalized root of slope/2 t^2 + bm t - b = 0, stable for small b.
      t = 2.0 * b / (bm + std::sqrt(bm * bm + 2.0 * slope * b));
    }
  }
  return std::clamp(t, cfg_.eps, cfg_.T);
}

Tensor Schedule::importance_sample_time(const Tensor& u) const {
  Tensor out(u.rows(), u.cols());
  for (Index i = 0; i < u.size(); ++i) out.data()[i] = is_inverse_cdf(u.data()[i]);
  return out;
}

Tensor gaussian_logdensity(const Tensor& z, double var) {
  const double d = static_cast<double>(z.cols());
  Tensor out(z.rows(), 1);
  const double c = -0.5 * d * std::log(2.0 * std::numbers::pi * var);
  for (Index i = 0; i < z.rows(); ++i) out(i, 0) = c - 0.5 * z.row(i).squaredNorm() / var;
  return out;
}

Prior Prior::analytic(const Schedule& s, Index d) {
  Prior p;
  p.kind_ = PriorKind::StandardNormal;
  p.d_ = d;
  p.var_ = s.prior_var();
  return p;
}

Prior Prior::empirical(Tensor bank) {
  if (bank.rows() == 0) throw Error("empirical prior: sample bank is empty");
  Prior p;
  p.kind_ = PriorKind::Empirical;
  p.d_ = bank.cols();
  p.bank_ = std::make_shared<const Tensor>(std::move(bank));
  return p;
}

Tensor Prior::logdensity(const Tensor& z) const {
  if (kind_ == PriorKind::Empirical) {
    throw Error("empirical prior has no tractable density; it supports sampling only");
  }
  return gaussian_logdensity(z, var_);
}

Tensor Prior::sample(Index n, Rng& rng) const {
  if (kind_ == PriorKind::StandardNormal) return rng.normal(n, d_) * std::sqrt(var_);
  Tensor out(n, d_);
  for (Index i = 0; i < n; ++i) out.row(i) = bank_->row(rng.index(bank_->rows()));
  return out;
}

}  // namespace indm
