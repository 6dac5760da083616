// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "indm/nn.hpp"

#include <cstdint>
#include <vector>

namespace indm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
};

/// Adam over the trainable entries of one ParameterSet.
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterSet& params, AdamConfig cfg);

  /// grads[i] pairs with params.trainable_values()[i]. Throws NumericalError
  /// naming the first parameter whose gradient holds a NaN or Inf.
  void step(ParameterSet& params, const std::vector<Tensor>& grads);

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::int64_t steps() const { return t_; }

  // State access for checkpointing.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t t_ = 0;
};

}  // namespace indm
