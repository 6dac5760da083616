// SPDX-License-Identifier: Apache-2.0

#include "indm/diagnostics.hpp"

#include "indm/metrics.hpp"
#include "indm/parallel.hpp"

#include <cmath>

namespace indm {

void induced_coefficients_batch(const Flow& flow, const Schedule& schedule, const Tensor& x, double t,
                                Tensor& drift, std::vector<Tensor>& volatility) {
  const Index n = x.rows();
  const Index d = x.cols();
  const double beta = schedule.beta(t);
  const double g2 = schedule.g2(t);
  const double g = std::sqrt(g2);
  drift.resize(n, d);
  volatility.resize(static_cast<std::size_t>(n));
  // Small chunks keep the jet intermediates in cache.
  constexpr Index chunk = 256;
  parallel_for(static_cast<std::size_t>((n + chunk - 1) / chunk), [&](std::size_t c) {
    const Index lo = static_cast<Index>(c) * chunk;
    const Index rows = std::min(chunk, n - lo);
    const Tensor z = flow.forward_data(x.middleRows(lo, rows));
    std::vector<Tensor> jinv;
    Tensor lap;
    flow.inverse_derivatives(z, jinv, lap);
    for (Index i = 0; i < rows; ++i) {
      const Tensor& J = jinv[static_cast<std::size_t>(i)];
      if (!(std::abs(J.determinant()) > 0.0)) throw NumericalError("induced coefficients: singular flow Jacobian");
      drift.row(lo + i) = (-0.5 * beta * (J * z.row(i).transpose())).transpose() + 0.5 * g2 * lap.row(i);
      volatility[static_cast<std::size_t>(lo + i)] = g * J;
    }
  });
}

InducedCoefficients induced_coefficients(const Flow& flow, const Schedule& schedule, const Tensor& x,
                                         double t) {
  Tensor drift;
  std::vector<Tensor> vol;
  induced_coefficients_batch(flow, schedule, x.topRows(1), t, drift, vol);
  InducedCoefficients out;
  out.drift = drift.row(0).transpose();
  out.volatility = vol[0];
  out.covariance = out.volatility * out.volatility.transpose();
  return out;
}

Tensor simulate_induced_sde(const Flow& flow, const Schedule& schedule, const Tensor& x_start,
                            double t0, double t1, int steps, Rng& rng) {
  Tensor x = x_start;
  const double dt = (t1 - t0) / steps;
  const double sq = std::sqrt(dt);
  Tensor drift;
  std::vector<Tensor> vol;
  for (int k = 0; k < steps; ++k) {
    const double t = t0 + k * dt;
    induced_coefficients_batch(flow, schedule, x, t, drift, vol);
    Tensor xi = rng.normal(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      x.row(i) += dt * drift.row(i) + sq * (vol[static_cast<std::size_t>(i)] * xi.row(i).transpose()).transpose();
    }
  }
  return x;
}

Tensor simulate_latent_mapped(const Flow& flow, const Schedule& schedule, const Tensor& x_start,
                              double t0, double t1, Rng& rng) {
  Tensor z0 = flow.forward_data(x_start);
  const double a = schedule.mean_coef(t1) / schedule.mean_coef(t0);
  const double v = schedule.var(t1) - a * a * schedule.var(t0);
  Tensor z = a * z0 + std::sqrt(v) * rng.normal(z0.rows(), z0.cols());
  return flow.inverse_data(z);
}

Tensor covariance_eigen_spectrum(const Flow& flow, const Tensor& points) {
  auto jinv = flow.inverse_jacobians(flow.forward_data(points));
  Tensor out(points.rows(), points.cols());
  for (Index i = 0; i < points.rows(); ++i) {
    const Tensor& J = jinv[static_cast<std::size_t>(i)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(J * J.transpose()));
    out.row(i) = es.eigenvalues().transpose();
  }
  return out;
}

std::vector<CosinePoint> trajectory_cosine_similarity(const Flow& flow, const ScoreModel& score,
                                                      const Schedule& schedule, const Tensor& x0,
                                                      int n_checkpoints, bool use_ema, double rtol) {
  Tensor z0 = flow.forward_data(x0);
  const double t0 = schedule.eps();
  const double T = schedule.T();
  std::vector<double> times;
  for (int k = 0; k <= n_checkpoints; ++k) times.push_back(t0 + (T - t0) * k / n_checkpoints);
  auto rhs = [&](double t, const Tensor& z) {
    return schedule.reverse_drift(z, t, score.eval_data(z, t, use_ema), 0.0);
  };
  auto res = dopri5(rhs, t0, T, z0, {.rtol = rtol}, times);
  const Tensor& zT = res.y;
  std::vector<CosinePoint> out;
  for (std::size_t k = 0; k < times.size(); ++k) {
    double acc = 0.0;
    Index count = 0;
    for (Index i = 0; i < z0.rows(); ++i) {
      Eigen::RowVectorXd a = res.checkpoints[k].row(i) - z0.row(i);
      Eigen::RowVectorXd b = zT.row(i) - z0.row(i);
      const double na = a.norm(), nb = b.norm();
      if (na < 1e-12 || nb < 1e-12) continue;
      acc += a.dot(b) / (na * nb);
      ++count;
    }
    out.push_back({times[k], count > 0 ? acc / static_cast<double>(count) : 1.0});
  }
  return out;
}

ManifoldNorms manifold_norms(const Flow& flow, const Tensor& data) {
  ManifoldNorms m;
  m.data = data.rowwise().squaredNorm().mean();
  m.latent = flow.forward_data(data).rowwise().squaredNorm().mean();
  m.prior = static_cast<double>(data.cols());
  return m;
}

RelativeEnergy relative_energy_of_field(const OdeRhs& velocity, const Tensor& z_start, double t0,
                                        double t1, double rtol) {
  const Index d = z_start.cols();
  Tensor y0(z_start.rows(), d + 1);
  y0.leftCols(d) = z_start;
  y0.col(d).setZero();
  auto rhs = [&](double t, const Tensor& y) {
    Tensor v = velocity(t, y.leftCols(d));
    Tensor dy(y.rows(), d + 1);
    dy.leftCols(d) = v;
    dy.col(d) = v.rowwise().squaredNorm();
    return dy;
  };
  auto res = dopri5(rhs, t0, t1, y0, {.rtol = rtol});
  RelativeEnergy out;
  out.kinetic = (t1 - t0) * res.y.col(d).mean();
  out.w2_squared = w2_squared_assignment(z_start, res.y.leftCols(d));
  if (!(out.w2_squared > 0.0)) throw NumericalError("relative energy: endpoints coincide");
  out.ratio = out.kinetic / out.w2_squared;
  return out;
}

RelativeEnergy relative_energy(const Flow& flow, const ScoreModel& score, const Schedule& schedule,
                               const Tensor& x0, bool use_ema, double rtol) {
  auto v = [&](double t, const Tensor& z) {
    return schedule.reverse_drift(z, t, score.eval_data(z, t, use_ema), 0.0);
  };
  return relative_energy_of_field(v, flow.forward_data(x0), schedule.eps(), schedule.T(), rtol);
}

}  // namespace indm
