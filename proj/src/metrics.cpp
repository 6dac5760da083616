// SPDX-License-Identifier: Apache-2.0

#include "indm/metrics.hpp"

#include "indm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace indm {

std::vector<Index> hungarian(const Tensor& cost) {
  if (cost.rows() != cost.cols()) throw ShapeError("hungarian: cost must be square, got " + shape_str(cost));
  const Index n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials u (rows), v (columns); p[j] = row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<Index> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Index i0 = p[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      if (j1 == 0 || !std::isfinite(delta)) throw NumericalError("hungarian: no augmenting path");
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> assign(n);
  for (Index j = 1; j <= n; ++j) assign[p[j] - 1] = j - 1;
  return assign;
}

double w2_squared_assignment(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("w2: samples differ in shape " + shape_str(a) + " and " + shape_str(b));
  }
  const Index n = a.rows();
  Tensor cost(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) cost(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  }
  auto assign = hungarian(cost);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += cost(i, assign[i]);
  return total / static_cast<double>(n);
}

double w2_squared_1d(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc / static_cast<double>(a.size());
  }
  const std::size_t m = std::max(a.size(), b.size());
  auto quantile = [](const std::vector<double>& s, double q) {
    return s[std::min(s.size() - 1, static_cast<std::size_t>(q * static_cast<double>(s.size())))];
  };
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
    const double diff = quantile(a, q) - quantile(b, q);
    acc += diff * diff;
  }
  return acc / static_cast<double>(m);
}

double sliced_wasserstein(const Tensor& a, const Tensor& b, int projections) {
  if (a.cols() != b.cols()) throw ShapeError("sliced_wasserstein: dimension mismatch");
  const Index d = a.cols();
  Rng rng(0x5eed);
  double acc = 0.0;
  std::vector<double> pa(static_cast<std::size_t>(a.rows())), pb(static_cast<std::size_t>(b.rows()));
  for (int k = 0; k < projections; ++k) {
    Eigen::VectorXd dir(d);
    if (d == 2) {
      const double ang = std::numbers::pi * k / projections;
      dir << std::cos(ang), std::sin(ang);
    } else {
      for (Index j = 0; j < d; ++j) dir(j) = rng.normal();
      dir.normalize();
    }
    Eigen::VectorXd va = a * dir, vb = b * dir;
    pa.assign(va.data(), va.data() + va.size());
    pb.assign(vb.data(), vb.data() + vb.size());
    acc += w2_squared_1d(pa, pb);
  }
  return std::sqrt(acc / projections);
}

double energy_distance(const Tensor& a, const Tensor& b) {
  auto mean_dist = [](const Tensor& x, const Tensor& y) {
    double acc = 0.0;
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < y.rows(); ++j) acc += (x.row(i) - y.row(j)).norm();
    }
    return acc / static_cast<double>(x.rows() * y.rows());
  };
  return 2.0 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b);
}

double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    worst = std::max({worst, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return worst;
}

Moments sample_moments(const Tensor& x) {
  Moments m;
  m.mean = x.colwise().mean().transpose();
  Eigen::MatrixXd c = x.rowwise() - m.mean.transpose();
  m.cov = c.transpose() * c / static_cast<double>(std::max<Index>(1, x.rows() - 1));
  return m;
}

}  // namespace indm
