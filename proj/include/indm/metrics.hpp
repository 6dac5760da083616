// SPDX-License-Identifier: Apache-2.0
//
// Sample-based distances and statistics used by the diagnostics and tests.

#pragma once

#include "indm/autodiff.hpp"

#include <functional>
#include <vector>

namespace indm {

/// Minimum-cost perfect assignment for a square cost matrix (Hungarian
/// algorithm with potentials, O(n^3)). Returns row -> column.
std::vector<Index> hungarian(const Tensor& cost);

/// Squared 2-Wasserstein distance between equal-size empirical measures.
double w2_squared_assignment(const Tensor& a, const Tensor& b);

/// Squared 2-Wasserstein distance between two 1D samples by sorting
/// (equal sizes, or quantile matching otherwise).
double w2_squared_1d(std::vector<double> a, std::vector<double> b);

/// Sliced 2-Wasserstein distance: root mean of 1D W2^2 over projections.
/// d = 2 uses evenly spaced angles; higher d uses a fixed pseudo-random set.
double sliced_wasserstein(const Tensor& a, const Tensor& b, int projections = 128);

/// Energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| (V-statistic).
double energy_distance(const Tensor& a, const Tensor& b);

/// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Sample mean and unbiased covariance of the rows.
Moments sample_moments(const Tensor& x);

}  // namespace indm
