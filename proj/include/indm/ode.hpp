// SPDX-License-Identifier: Apache-2.0
//
// Adaptive Dormand-Prince 5(4) integrator over batched states (rows are
// independent systems sharing one step-size controller).

#pragma once

#include "indm/autodiff.hpp"

#include <functional>
#include <span>
#include <vector>

namespace indm {

struct OdeOptions {
  double rtol = 1e-5;
  /// Absolute tolerance; negative means rtol * 0.1.
  double atol = -1.0;
  long max_steps = 100000;
  double initial_step = 0.0;  // 0 picks one automatically
};

struct OdeStats {
  long accepted = 0;
  long rejected = 0;
  long evaluations = 0;
};

struct OdeResult {
  Tensor y;
  OdeStats stats;
  /// States at the requested checkpoint times, in request order.
  std::vector<Tensor> checkpoints;
};

using OdeRhs = std::function<Tensor(double t, const Tensor& y)>;

/// Integrates dy/dt = f(t, y) from t0 to t1 (either direction). The error
/// norm is the largest per-row RMS of the scaled local error, so each row
/// meets the tolerance as if integrated alone. Checkpoint times must lie
/// between t0 and t1 and be ordered along the direction of integration.
/// Throws NumericalError with step statistics when the step budget is
/// exhausted or the step size underflows.
OdeResult dopri5(const OdeRhs& f, double t0, double t1, Tensor y0, const OdeOptions& opts = {},
                 std::span<const double> checkpoint_times = {});

}  // namespace indm
