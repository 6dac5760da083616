// SPDX-License-Identifier: Apache-2.0

#include "indm/nn.hpp"

#include <cmath>

namespace indm {

ad::Value ParameterSet::add(const std::string& name, Tensor init, bool trainable) {
  if (find(name) != nullptr) throw Error("duplicate parameter name: " + name);
  auto v = trainable ? ad::Value::variable(std::move(init)) : ad::Value::constant(std::move(init));
  params_.push_back({name, v, trainable});
  return v;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::vector<ad::Value> ParameterSet::trainable_values() const {
  std::vector<ad::Value> out;
  for (const auto& p : params_) {
    if (p.trainable) out.push_back(p.value);
  }
  return out;
}

std::vector<Tensor> ParameterSet::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value.data());
  return out;
}

void ParameterSet::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) throw Error("restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) params_[i].value.set_data(values[i]);
}

Index ParameterSet::scalar_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.value.data().size();
  return n;
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "sin") return Activation::Sin;
  if (name == "swish") return Activation::Swish;
  throw Error("unknown activation '" + name + "' (valid: tanh, sin, swish)");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Sin:
      return "sin";
    case Activation::Swish:
      return "swish";
  }
  return "tanh";
}

ad::Value activate(Activation a, const ad::Value& x) {
  switch (a) {
    case Activation::Tanh:
      return ad::tanh(x);
    case Activation::Sin:
      return ad::sin(x);
    case Activation::Swish:
      return ad::swish(x);
  }
  return x;
}

ad::Value activate_derivative(Activation a, const ad::Value& x) {
  switch (a) {
    case Activation::Tanh:
      return 1.0 - ad::square(ad::tanh(x));
    case Activation::Sin:
      return ad::cos(x);
    case Activation::Swish: {
      auto s = ad::sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
  }
  return x;
}

Mlp::Mlp(ParameterSet& params, const std::string& prefix, Index in,
         const std::vector<Index>& hidden, Index out, Activation act, Rng& rng, bool zero_last)
    : act_(act), in_(in), out_(out) {
  std::vector<Index> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const Index fan_in = sizes[k];
    const Index fan_out = sizes[k + 1];
    Tensor w;
    if (zero_last && k + 2 == sizes.size()) {
      w = Tensor::Zero(fan_in, fan_out);
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      w = (rng.uniform(fan_in, fan_out).array() * 2.0 - 1.0).matrix() * limit;
    }
    weights_.push_back(params.add(prefix + ".w" + std::to_string(k), std::move(w)));
    weights_.push_back(params.add(prefix + ".b" + std::to_string(k), Tensor::Zero(1, fan_out)));
  }
}

ad::Value Mlp::forward(const ad::Value& x, const std::vector<ad::Value>& weights) const {
  if (x.cols() != in_) {
    throw ShapeError("mlp: expected " + std::to_string(in_) + " input columns, got " +
                     shape_str(x.data()));
  }
  ad::Value h = x;
  const std::size_t layers = weights.size() / 2;
  for (std::size_t k = 0; k < layers; ++k) {
    h = ad::matmul(h, weights[2 * k]) + weights[2 * k + 1];
    if (k + 1 < layers) h = activate(act_, h);
  }
  return h;
}

std::pair<ad::Value, ad::Value> Mlp::forward_jvp(const ad::Value& x, const ad::Value& dx,
                                                 const std::vector<ad::Value>& weights) const {
  ad::Value h = x;
  ad::Value dh = dx;
  const std::size_t layers = weights.size() / 2;
  for (std::size_t k = 0; k < layers; ++k) {
    ad::Value a = ad::matmul(h, weights[2 * k]) + weights[2 * k + 1];
    ad::Value da = ad::matmul(dh, weights[2 * k]);
    if (k + 1 < layers) {
      h = activate(act_, a);
      dh = activate_derivative(act_, a) * da;
    } else {
      h = a;
      dh = da;
    }
  }
  return {h, dh};
}

namespace {

// f(a), f'(a), f''(a) elementwise.
void activation_derivs(Activation act, const Eigen::ArrayXXd& a, Eigen::ArrayXXd& f, Eigen::ArrayXXd& f1,
                       Eigen::ArrayXXd& f2) {
  switch (act) {
    case Activation::Tanh:
      f = ad::tanh_array(a);
      f1 = 1.0 - f.square();
      f2 = -2.0 * f * f1;
      return;
    case Activation::Sin:
      f = a.sin();
      f1 = a.cos();
      f2 = -f;
      return;
    case Activation::Swish: {
      Eigen::ArrayXXd s = 1.0 / (1.0 + (-a).exp());
      f = a * s;
      f1 = s * (1.0 + a * (1.0 - s));
      f2 = s * (1.0 - s) * (2.0 + a * (1.0 - 2.0 * s));
      return;
    }
  }
}

}  // namespace

Jet2 Mlp::forward_jet(const Jet2& x) const {
  if (x.v.cols() != in_) {
    throw ShapeError("mlp: expected " + std::to_string(in_) + " input columns, got " + shape_str(x.v));
  }
  Jet2 h = x;
  const std::size_t layers = weights_.size() / 2;
  Eigen::ArrayXXd f, f1, f2;
  for (std::size_t k = 0; k < layers; ++k) {
    const Tensor& w = weights_[2 * k].data();
    Tensor a = h.v * w;
    a.rowwise() += weights_[2 * k + 1].data().row(0);
    Tensor a1 = h.d1 * w;
    Tensor a2 = h.d2 * w;
    if (k + 1 < layers) {
      activation_derivs(act_, a.array(), f, f1, f2);
      h.v = f.matrix();
      h.d1 = (f1 * a1.array()).matrix();
      h.d2 = (f2 * a1.array().square() + f1 * a2.array()).matrix();
    } else {
      h.v = std::move(a);
      h.d1 = std::move(a1);
      h.d2 = std::move(a2);
    }
  }
  return h;
}

}  // namespace indm
