// SPDX-License-Identifier: Apache-2.0

#include "indm/score.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace indm {

Tensor ScoreModel::eval_data(const Tensor& z, const Tensor& t, bool use_ema) const {
  ad::NoGradGuard guard;
  return eval(ad::Value::constant(z), t, use_ema).data();
}

Tensor ScoreModel::eval_data(const Tensor& z, double t, bool use_ema) const {
  return eval_data(z, Tensor::Constant(z.rows(), 1, t), use_ema);
}

Tensor divergence(const ScoreModel& s, const Tensor& z, const Tensor& t, bool use_ema) {
  ad::NoGradGuard guard;
  const Index d = z.cols();
  Tensor out = Tensor::Zero(z.rows(), 1);
  auto zv = ad::Value::constant(z);
  for (Index j = 0; j < d; ++j) {
    Tensor e = Tensor::Zero(z.rows(), d);
    e.col(j).setOnes();
    auto [val, jvp] = s.eval_jvp(zv, ad::Value::constant(e), t, use_ema);
    out += jvp.data().col(j);
  }
  return out;
}

std::pair<double, double> hutchinson_divergence(const ScoreModel& s, const Tensor& z, double t,
                                                int probes, Rng& rng, bool use_ema) {
  ad::NoGradGuard guard;
  Tensor zr = z.row(0).replicate(probes, 1);
  Tensor eps = rng.rademacher(probes, z.cols());
  auto [val, jvp] = s.eval_jvp(ad::Value::constant(zr), ad::Value::constant(eps),
                               Tensor::Constant(probes, 1, t), use_ema);
  Eigen::ArrayXd est = (jvp.data().array() * eps.array()).rowwise().sum();
  const double mean = est.mean();
  const double var = (est - mean).square().sum() / static_cast<double>(probes - 1);
  return {mean, std::sqrt(var / static_cast<double>(probes))};
}

ScoreNet::ScoreNet(Index d, const Schedule& schedule, const ScoreNetConfig& cfg, Rng& rng)
    : d_(d), schedule_(schedule), cfg_(cfg) {
  if (cfg_.embed_dim < 2 || cfg_.embed_dim % 2 != 0) throw Error("score: embed_dim must be even");
  std::vector<Index> hidden(static_cast<std::size_t>(cfg_.hidden_layers), cfg_.hidden);
  trunk_ = Mlp(params_, "score.trunk", d + cfg_.embed_dim, hidden, d, cfg_.activation, rng,
               /*zero_last=*/true);
  ema_reset();
}

Tensor ScoreNet::embed(const Tensor& t) const {
  const Index half = cfg_.embed_dim / 2;
  Tensor out(t.rows(), cfg_.embed_dim);
  for (Index i = 0; i < t.rows(); ++i) {
    const double c = schedule_.kind() == SdeKind::VP ? 1000.0 * t(i, 0)
                                                     : 100.0 * std::log(schedule_.var(t(i, 0)));
    for (Index k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
      out(i, k) = std::sin(c * freq);
      out(i, half + k) = std::cos(c * freq);
    }
  }
  return out;
}

Tensor ScoreNet::output_scale(const Tensor& t) const {
  Tensor out(t.rows(), 1);
  for (Index i = 0; i < t.rows(); ++i) out(i, 0) = 1.0 / schedule_.sigma(t(i, 0));
  return out;
}

const std::vector<ad::Value>& ScoreNet::weights(bool use_ema) const {
  return use_ema ? ema_ : trunk_.weights();
}

ad::Value ScoreNet::eval(const ad::Value& z, const Tensor& t, bool use_ema) const {
  if (z.cols() != d_ || t.rows() != z.rows()) {
    throw ShapeError("score: bad shapes " + shape_str(z.data()) + " and " + shape_str(t));
  }
  auto input = ad::concat_cols(z, ad::Value::constant(embed(t)));
  auto out = trunk_.forward(input, weights(use_ema));
  if (cfg_.scale_by_sigma) out = out * ad::Value::constant(output_scale(t));
  if (!out.data().allFinite()) throw NumericalError("score network produced a non-finite value");
  return out;
}

std::pair<ad::Value, ad::Value> ScoreNet::eval_jvp(const ad::Value& z, const ad::Value& dz,
                                                   const Tensor& t, bool use_ema) const {
  auto input = ad::concat_cols(z, ad::Value::constant(embed(t)));
  auto dinput = ad::concat_cols(dz, ad::Value::constant(Tensor::Zero(z.rows(), cfg_.embed_dim)));
  auto [out, dout] = trunk_.forward_jvp(input, dinput, weights(use_ema));
  if (cfg_.scale_by_sigma) {
    auto scale = ad::Value::constant(output_scale(t));
    out = out * scale;
    dout = dout * scale;
  }
  return {out, dout};
}

void ScoreNet::ema_update() {
  const auto& w = trunk_.weights();
  const double r = cfg_.ema_rate;
  for (std::size_t i = 0; i < w.size(); ++i) {
    ema_[i].mutable_data() = r * ema_[i].data() + (1.0 - r) * w[i].data();
  }
}

std::vector<Tensor> ScoreNet::ema_snapshot() const {
  std::vector<Tensor> out;
  for (const auto& v : ema_) out.push_back(v.data());
  return out;
}

void ScoreNet::ema_restore(const std::vector<Tensor>& values) {
  if (values.size() != ema_.size()) throw Error("ema_restore: count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) ema_[i].set_data(values[i]);
}

void ScoreNet::ema_reset() {
  ema_.clear();
  for (const auto& w : trunk_.weights()) ema_.push_back(ad::Value::constant(w.data()));
}

LinearScore::LinearScore(Index d, Coefficients coef) : d_(d), coef_(std::move(coef)) {}

LinearScore LinearScore::gaussian(const Schedule& s, Index d, double mean, double var) {
  return LinearScore(d, [s, d, mean, var](double t, Tensor& A, Tensor& b) {
    const double m = s.mean_coef(t);
    const double v = m * m * var + s.var(t);
    A = -Tensor::Identity(d, d) / v;
    b = Tensor::Constant(d, 1, m * mean / v);
  });
}

LinearScore LinearScore::rotated_gaussian(const Schedule& s, double c) {
  return LinearScore(2, [s, c](double t, Tensor& A, Tensor& b) {
    const double v = s.mean_coef(t) * s.mean_coef(t) + s.var(t);
    A.resize(2, 2);
    A << -1.0 / v, -c, c, -1.0 / v;
    b = Tensor::Zero(2, 1);
  });
}

LinearScore LinearScore::constant(const Tensor& A) {
  const Index d = A.rows();
  return LinearScore(d, [A, d](double, Tensor& out_a, Tensor& b) {
    out_a = A;
    b = Tensor::Zero(d, 1);
  });
}

Tensor LinearScore::apply(const Tensor& z, const Tensor& t, bool affine) const {
  Tensor out(z.rows(), d_);
  Tensor A, b;
  double last_t = std::numeric_limits<double>::quiet_NaN();
  for (Index i = 0; i < z.rows(); ++i) {
    if (t(i, 0) != last_t) {
      coef_(t(i, 0), A, b);
      last_t = t(i, 0);
    }
    out.row(i) = (A * z.row(i).transpose()).transpose();
    if (affine) out.row(i) += b.transpose();
  }
  return out;
}

ad::Value LinearScore::eval(const ad::Value& z, const Tensor& t, bool) const {
  return ad::Value::constant(apply(z.data(), t, true));
}

std::pair<ad::Value, ad::Value> LinearScore::eval_jvp(const ad::Value& z, const ad::Value& dz,
                                                      const Tensor& t, bool) const {
  return {ad::Value::constant(apply(z.data(), t, true)),
          ad::Value::constant(apply(dz.data(), t, false))};
}

Tensor GaussianMixture::sample(Index n, Rng& rng) const {
  const Index d = dim();
  Tensor out(n, d);
  for (Index i = 0; i < n; ++i) {
    double u = rng.uniform();
    std::size_t k = 0;
    while (k + 1 < weights.size() && u >= weights[k]) u -= weights[k++];
    for (Index j = 0; j < d; ++j) out(i, j) = means(static_cast<Index>(k), j) + std::sqrt(vars[k]) * rng.normal();
  }
  return out;
}

Tensor GaussianMixture::logdensity(const Tensor& x) const {
  const double d = static_cast<double>(dim());
  Tensor out(x.rows(), 1);
  std::vector<double> terms(weights.size());
  for (Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < weights.size(); ++k) {
      const double r2 = (x.row(i) - means.row(static_cast<Index>(k))).squaredNorm();
      terms[k] = std::log(weights[k]) - 0.5 * d * std::log(2.0 * std::numbers::pi * vars[k]) -
                 0.5 * r2 / vars[k];
      mx = std::max(mx, terms[k]);
    }
    double acc = 0.0;
    for (double v : terms) acc += std::exp(v - mx);
    out(i, 0) = mx + std::log(acc);
  }
  return out;
}

MixtureScore::MixtureScore(const Schedule& s, GaussianMixture mix, double scale)
    : schedule_(s), mix_(std::move(mix)), scale_(scale) {}

Tensor MixtureScore::compute(const Tensor& z, const Tensor& t, const Tensor* dz, Tensor* jvp) const {
  const Index d = mix_.dim();
  const std::size_t K = mix_.weights.size();
  Tensor out(z.rows(), d);
  if (jvp) jvp->resize(z.rows(), d);
  std::vector<double> logr(K), V(K);
  std::vector<Eigen::RowVectorXd> u(K);
  for (Index i = 0; i < z.rows(); ++i) {
    const double m = schedule_.mean_coef(t(i, 0));
    const double s2 = schedule_.var(t(i, 0));
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      V[k] = m * m * scale_ * scale_ * mix_.vars[k] + s2;
      Eigen::RowVectorXd diff = z.row(i) - m * scale_ * mix_.means.row(static_cast<Index>(k));
      u[k] = -diff / V[k];
      logr[k] = std::log(mix_.weights[k]) - 0.5 * static_cast<double>(d) * std::log(V[k]) -
                0.5 * diff.squaredNorm() / V[k];
      mx = std::max(mx, logr[k]);
    }
    double norm = 0.0;
    for (auto& v : logr) norm += std::exp(v - mx);
    Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(d);
    std::vector<double> r(K);
    for (std::size_t k = 0; k < K; ++k) {
      r[k] = std::exp(logr[k] - mx) / norm;
      s += r[k] * u[k];
    }
    out.row(i) = s;
    if (jvp) {
      Eigen::RowVectorXd v = dz->row(i);
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
      for (std::size_t k = 0; k < K; ++k) acc += r[k] * (-v / V[k] + u[k] * u[k].dot(v));
      acc -= s * s.dot(v);
      jvp->row(i) = acc;
    }
  }
  return out;
}

ad::Value MixtureScore::eval(const ad::Value& z, const Tensor& t, bool) const {
  return ad::Value::constant(compute(z.data(), t, nullptr, nullptr));
}

std::pair<ad::Value, ad::Value> MixtureScore::eval_jvp(const ad::Value& z, const ad::Value& dz,
                                                       const Tensor& t, bool) const {
  Tensor jvp;
  Tensor val = compute(z.data(), t, &dz.data(), &jvp);
  return {ad::Value::constant(std::move(val)), ad::Value::constant(std::move(jvp))};
}

}  // namespace indm
