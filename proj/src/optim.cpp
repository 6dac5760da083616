// SPDX-License-Identifier: Apache-2.0

#include "indm/optim.hpp"

#include <cmath>

namespace indm {

Adam::Adam(const ParameterSet& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& p : params) {
    if (!p.trainable) continue;
    m_.push_back(Tensor::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Tensor::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step(ParameterSet& params, const std::vector<Tensor>& grads) {
  if (grads.size() != m_.size()) throw Error("adam: gradient count does not match parameters");
  std::vector<Parameter*> trainable;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].trainable) trainable.push_back(&params[i]);
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].allFinite()) {
      throw NumericalError("non-finite gradient for parameter '" + trainable[i]->name + "'");
    }
    sq += grads[i].squaredNorm();
  }
  double scale = 1.0;
  if (cfg_.grad_clip > 0.0 && std::sqrt(sq) > cfg_.grad_clip) scale = cfg_.grad_clip / std::sqrt(sq);
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto g = grads[i].array() * scale;
    m_[i].array() = cfg_.beta1 * m_[i].array() + (1.0 - cfg_.beta1) * g;
    v_[i].array() = cfg_.beta2 * v_[i].array() + (1.0 - cfg_.beta2) * g.square();
    Tensor& w = trainable[i]->value.mutable_data();
    w.array() -= cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

}  // namespace indm
