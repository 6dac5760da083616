// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checker for scalar-valued expressions.

#pragma once

#include "indm/autodiff.hpp"

#include <functional>
#include <vector>

namespace indm {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::vector<Tensor> analytic;
  std::vector<Tensor> numeric;
};

/// Compares reverse-mode gradients of f() with respect to `inputs` against
/// central differences with step h. f must rebuild its graph from the current
/// data of the inputs on every call. Relative error per entry is
/// |a - n| / max(|a|, |n|, floor).
GradCheckResult check_gradients(const std::function<ad::Value()>& f,
                                const std::vector<ad::Value>& inputs, double h = 1e-5,
                                double floor = 1e-6);

}  // namespace indm
