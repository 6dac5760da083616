// SPDX-License-Identifier: Apache-2.0
//
// Named parameters and small dense networks.

#pragma once

#include "indm/autodiff.hpp"
#include "indm/rng.hpp"

#include <string>
#include <utility>
#include <vector>

namespace indm {

struct Parameter {
  std::string name;
  ad::Value value;
  bool trainable = true;
};

/// Ordered parameter collection with unique names. Handles are shared, so a
/// network holding a Value sees optimizer updates made through the set.
class ParameterSet {
 public:
  ad::Value add(const std::string& name, Tensor init, bool trainable = true);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  const Parameter* find(const std::string& name) const;
  std::vector<ad::Value> trainable_values() const;
  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);
  Index scalar_count() const;

 private:
  std::vector<Parameter> params_;
};

enum class Activation { Tanh, Sin, Swish };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

ad::Value activate(Activation a, const ad::Value& x);
/// Elementwise derivative of the activation, as a differentiable Value.
ad::Value activate_derivative(Activation a, const ad::Value& x);

/// Per-row value with its first and second derivatives along one direction.
struct Jet2 {
  Tensor v;
  Tensor d1;
  Tensor d2;
};

/// Fully connected network: hidden layers use `act`, the output layer is linear.
class Mlp {
 public:
  Mlp() = default;
  /// Registers weights as `prefix.w<k>` / `prefix.b<k>`. Glorot-uniform
  /// weights, zero biases; `zero_last` zeroes the output layer.
  Mlp(ParameterSet& params, const std::string& prefix, Index in, const std::vector<Index>& hidden,
      Index out, Activation act, Rng& rng, bool zero_last);

  ad::Value forward(const ad::Value& x) const { return forward(x, weights_); }
  /// Forward with substitute weights laid out like weights() (e.g. EMA copies).
  ad::Value forward(const ad::Value& x, const std::vector<ad::Value>& weights) const;

  /// Forward value and directional derivative along dx (per row).
  std::pair<ad::Value, ad::Value> forward_jvp(const ad::Value& x, const ad::Value& dx,
                                              const std::vector<ad::Value>& weights) const;

  /// Second-order forward mode on plain tensors, no tape.
  Jet2 forward_jet(const Jet2& x) const;

  const std::vector<ad::Value>& weights() const { return weights_; }
  Index in_dim() const { return in_; }
  Index out_dim() const { return out_; }

 private:
  std::vector<ad::Value> weights_;  // w0, b0, w1, b1, ...
  Activation act_ = Activation::Tanh;
  Index in_ = 0;
  Index out_ = 0;
};

}  // namespace indm
