// SPDX-License-Identifier: Apache-2.0

#include "indm/ode.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace indm {
namespace {

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// Difference between the 5th- and 4th-order weights.
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

double error_norm(const Tensor& err, const Tensor& y, const Tensor& y_new, double atol, double rtol) {
  double worst = 0.0;
  const double inv_cols = 1.0 / static_cast<double>(y.cols());
  for (Index i = 0; i < y.rows(); ++i) {
    double acc = 0.0;
    for (Index j = 0; j < y.cols(); ++j) {
      const double sc = atol + rtol * std::max(std::abs(y(i, j)), std::abs(y_new(i, j)));
      const double r = err(i, j) / sc;
      acc += r * r;
    }
    worst = std::max(worst, std::sqrt(acc * inv_cols));
  }
  return worst;
}

std::string stats_str(const OdeStats& s, double t) {
  return "accepted=" + std::to_string(s.accepted) + " rejected=" + std::to_string(s.rejected) +
         " evaluations=" + std::to_string(s.evaluations) + " t=" + std::to_string(t);
}

}  // namespace

OdeResult dopri5(const OdeRhs& f, double t0, double t1, Tensor y0, const OdeOptions& opts,
                 std::span<const double> checkpoint_times) {
  const double rtol = opts.rtol;
  const double atol = opts.atol < 0.0 ? rtol * 0.1 : opts.atol;
  const double dir = t1 >= t0 ? 1.0 : -1.0;
  OdeResult res;
  res.y = std::move(y0);
  std::vector<double> stops(checkpoint_times.begin(), checkpoint_times.end());
  for (double s : stops) {
    if ((s - t0) * dir < 0.0 || (t1 - s) * dir < 0.0) throw Error("dopri5: checkpoint outside the interval");
  }
  stops.push_back(t1);
  const std::size_t n_checkpoints = checkpoint_times.size();
  std::size_t next_stop = 0;
  double t = t0;
  auto eval = [&](double tt, const Tensor& yy) {
    ++res.stats.evaluations;
    Tensor k = f(tt, yy);
    if (!k.allFinite()) throw NumericalError("dopri5: non-finite derivative; " + stats_str(res.stats, tt));
    return k;
  };
  // Consumes every stop equal to the current time.
  auto arrive = [&] {
    while (next_stop < stops.size() && stops[next_stop] == t) {
      if (next_stop < n_checkpoints) res.checkpoints.push_back(res.y);
      ++next_stop;
    }
  };
  arrive();
  if (next_stop == stops.size()) return res;

  Tensor k1 = eval(t, res.y);
  double h = opts.initial_step;
  if (h <= 0.0) {
    const double d0 = std::sqrt(res.y.squaredNorm() / static_cast<double>(res.y.size()));
    const double d1 = std::sqrt(k1.squaredNorm() / static_cast<double>(k1.size()));
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min(h, std::abs(t1 - t0));
  }
  while (next_stop < stops.size()) {
    if (res.stats.accepted + res.stats.rejected >= opts.max_steps) {
      throw NumericalError("dopri5: step budget exhausted; " + stats_str(res.stats, t));
    }
    const double target = stops[next_stop];
    const double remaining = std::abs(target - t);
    bool lands = false;
    double step = h;
    if (step >= remaining) {
      step = remaining;
      lands = true;
    }
    if (step < 1e-14 * std::max(1.0, std::abs(t))) {
      throw NumericalError("dopri5: step size underflow; " + stats_str(res.stats, t));
    }
    const double hs = dir * step;
    const Tensor& y = res.y;
    Tensor k2 = eval(t + c2 * hs, y + hs * (a21 * k1));
    Tensor k3 = eval(t + c3 * hs, y + hs * (a31 * k1 + a32 * k2));
    Tensor k4 = eval(t + c4 * hs, y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
    Tensor k5 = eval(t + c5 * hs, y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    Tensor k6 = eval(t + hs, y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    Tensor y_new = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const double t_new = lands ? target : t + hs;
    Tensor k7 = eval(t_new, y_new);
    Tensor err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = error_norm(err, y, y_new, atol, rtol);
    if (en <= 1.0) {
      ++res.stats.accepted;
      t = t_new;
      res.y = std::move(y_new);
      k1 = std::move(k7);
      if (lands) arrive();
      const double factor = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
      if (!(lands && step < h)) h = step * factor;
    } else {
      ++res.stats.rejected;
      h = step * std::max(0.2, 0.9 * std::pow(en, -0.2));
    }
  }
  return res;
}

}  // namespace indm
