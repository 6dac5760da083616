// SPDX-License-Identifier: Apache-2.0

#include "indm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace indm {

GradCheckResult check_gradients(const std::function<ad::Value()>& f,
                                const std::vector<ad::Value>& inputs, double h, double floor) {
  GradCheckResult r;
  r.analytic = ad::grad(f(), inputs);
  for (const auto& in : inputs) {
    ad::Value v = in;
    Tensor& x = v.mutable_data();
    Tensor num(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) {
      const double orig = x.data()[i];
      x.data()[i] = orig + h;
      const double fp = f().item();
      x.data()[i] = orig - h;
      const double fm = f().item();
      x.data()[i] = orig;
      num.data()[i] = (fp - fm) / (2.0 * h);
    }
    r.numeric.push_back(std::move(num));
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& a = r.analytic[k];
    const Tensor& n = r.numeric[k];
    for (Index i = 0; i < a.size(); ++i) {
      const double diff = std::abs(a.data()[i] - n.data()[i]);
      const double denom = std::max({std::abs(a.data()[i]), std::abs(n.data()[i]), floor});
      r.max_abs_error = std::max(r.max_abs_error, diff);
      r.max_rel_error = std::max(r.max_rel_error, diff / denom);
    }
  }
  return r;
}

}  // namespace indm
