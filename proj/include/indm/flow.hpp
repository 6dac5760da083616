// SPDX-License-Identifier: Apache-2.0
//
// Invertible maps h between data space and latent space: affine coupling
// layers with bounded log-scales, per-dimension affine layers and fixed
// linear maps. Every layer has a closed-form inverse and log-determinant.

#pragma once

#include "indm/autodiff.hpp"
#include "indm/nn.hpp"
#include "indm/rng.hpp"

#include <atomic>
#include <memory>
#include <string>
#include <vector>

namespace indm {

struct FlowConfig {
  int couplings = 8;
  Index hidden = 64;
  int hidden_layers = 2;
  Activation activation = Activation::Tanh;
  double s_max = 5.0;
  /// Prepends a trainable per-dimension affine layer.
  bool act_affine = false;
};

struct FlowOutput {
  ad::Value z;
  ad::Value logdet;  // n x 1
};

class FlowLayer {
 public:
  virtual ~FlowLayer() = default;
  virtual FlowOutput forward(const ad::Value& x) const = 0;
  virtual ad::Value inverse(const ad::Value& z) const = 0;
  /// Inverse in second-order forward mode on plain tensors.
  virtual Jet2 inverse_jet(const Jet2& z) const = 0;
  virtual std::string kind() const = 0;
};

class Flow {
 public:
  /// Identity map on R^d (no layers).
  explicit Flow(Index d = 2);
  /// Coupling flow with alternating masks; output layers start at zero so
  /// the flow is initially the identity.
  static Flow coupling(Index d, const FlowConfig& cfg, Rng& rng);
  /// h(x) = a x.
  static Flow scaling(Index d, double a);
  /// h(x) = A x for a fixed invertible A.
  static Flow linear(const Tensor& A);

  Index dim() const { return d_; }
  std::size_t depth() const { return layers_.size(); }
  bool is_identity() const { return layers_.empty(); }

  /// z = h(x) and per-sample log|det dh/dx|. Differentiable in x and the
  /// parameters. Throws NumericalError naming the first layer that produced
  /// a non-finite value.
  FlowOutput forward(const ad::Value& x) const;
  /// Same as forward, also returning each layer's log-det.
  FlowOutput forward(const ad::Value& x, std::vector<Tensor>* layer_logdets) const;
  ad::Value inverse(const ad::Value& z) const;

  /// Gradient-free conveniences.
  Tensor forward_data(const Tensor& x, Tensor* logdet = nullptr) const;
  Tensor inverse_data(const Tensor& z) const;

  /// Per-row Jacobians dh/dx and d(h^-1)/dz by reverse-mode AD, one backward
  /// pass per output coordinate.
  std::vector<Tensor> jacobians(const Tensor& x) const;
  std::vector<Tensor> inverse_jacobians(const Tensor& z) const;
  Tensor jacobian(const Tensor& x) const { return jacobians(x).front(); }
  /// Jacobian of h^-1 at each row of z and the Laplacian of each component
  /// of h^-1 (n x d), by forward mode along each coordinate direction.
  void inverse_derivatives(const Tensor& z, std::vector<Tensor>& jacobians, Tensor& laplacian) const;
  Tensor inverse_jacobian(const Tensor& z) const { return inverse_jacobians(z).front(); }

  ParameterSet& params() { return *params_; }
  const ParameterSet& params() const { return *params_; }

  /// Number of inverse() evaluations since construction or reset.
  long inverse_calls() const { return inverse_calls_->load(); }
  void reset_inverse_calls() { inverse_calls_->store(0); }

 private:
  Index d_;
  std::vector<std::shared_ptr<const FlowLayer>> layers_;
  std::shared_ptr<ParameterSet> params_;
  std::shared_ptr<std::atomic<long>> inverse_calls_;
};

}  // namespace indm
