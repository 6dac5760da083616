// SPDX-License-Identifier: Apache-2.0

#include "indm/flow.hpp"

#include <cmath>

namespace indm {
namespace {

Jet2 jet_cols(const Jet2& x, const std::vector<Index>& cols) {
  return {x.v(Eigen::all, cols), x.d1(Eigen::all, cols), x.d2(Eigen::all, cols)};
}

void jet_set_cols(Jet2& x, const std::vector<Index>& cols, const Jet2& part) {
  x.v(Eigen::all, cols) = part.v;
  x.d1(Eigen::all, cols) = part.d1;
  x.d2(Eigen::all, cols) = part.d2;
}

class AffineCoupling : public FlowLayer {
 public:
  AffineCoupling(ParameterSet& params, const std::string& name, Index d, int parity,
                 const FlowConfig& cfg, Rng& rng)
      : s_max_(cfg.s_max) {
    for (Index j = 0; j < d; ++j) {
      (j % 2 == parity ? cond_ : trans_).push_back(j);
    }
    std::vector<Index> hidden(static_cast<std::size_t>(cfg.hidden_layers), cfg.hidden);
    net_ = Mlp(params, name, static_cast<Index>(cond_.size()), hidden,
               2 * static_cast<Index>(trans_.size()), cfg.activation, rng, /*zero_last=*/true);
  }

  FlowOutput forward(const ad::Value& x) const override {
    auto xc = ad::gather_cols(x, cond_);
    auto xt = ad::gather_cols(x, trans_);
    auto [log_s, shift] = scale_shift(xc);
    auto yt = xt * ad::exp(log_s) + shift;
    return {ad::interleave_cols(xc, cond_, yt, trans_), ad::row_sum(log_s)};
  }

  ad::Value inverse(const ad::Value& z) const override {
    auto zc = ad::gather_cols(z, cond_);
    auto zt = ad::gather_cols(z, trans_);
    auto [log_s, shift] = scale_shift(zc);
    auto xt = (zt - shift) * ad::exp(-log_s);
    return ad::interleave_cols(zc, cond_, xt, trans_);
  }

  Jet2 inverse_jet(const Jet2& z) const override {
    const Index m = static_cast<Index>(trans_.size());
    Jet2 raw = net_.forward_jet(jet_cols(z, cond_));
    Jet2 zt = jet_cols(z, trans_);
    // log_s = s_max tanh(r / s_max), e = exp(-log_s).
    const Eigen::ArrayXXd r1 = raw.d1.leftCols(m).array();
    const Eigen::ArrayXXd th = ad::tanh_array(raw.v.leftCols(m).array() / s_max_);
    const Eigen::ArrayXXd sech2 = 1.0 - th.square();
    const Eigen::ArrayXXd ls = s_max_ * th;
    const Eigen::ArrayXXd ls1 = sech2 * r1;
    const Eigen::ArrayXXd ls2 = -2.0 * th * sech2 * r1.square() / s_max_ + sech2 * raw.d2.leftCols(m).array();
    const Eigen::ArrayXXd e = (-ls).exp();
    const Eigen::ArrayXXd e1 = -e * ls1;
    const Eigen::ArrayXXd e2 = e * (ls1.square() - ls2);
    const Eigen::ArrayXXd a = zt.v.array() - raw.v.rightCols(m).array();
    const Eigen::ArrayXXd a1 = zt.d1.array() - raw.d1.rightCols(m).array();
    const Eigen::ArrayXXd a2 = zt.d2.array() - raw.d2.rightCols(m).array();
    Jet2 xt{(a * e).matrix(), (a1 * e + a * e1).matrix(), (a2 * e + 2.0 * a1 * e1 + a * e2).matrix()};
    Jet2 out = z;
    jet_set_cols(out, trans_, xt);
    return out;
  }

  std::string kind() const override { return "coupling"; }

 private:
  std::pair<ad::Value, ad::Value> scale_shift(const ad::Value& cond) const {
    auto raw = net_.forward(cond);
    const Index m = static_cast<Index>(trans_.size());
    std::vector<Index> first(m), second(m);
    for (Index j = 0; j < m; ++j) {
      first[j] = j;
      second[j] = m + j;
    }
    auto log_s = s_max_ * ad::tanh(ad::gather_cols(raw, first) / s_max_);
    return {log_s, ad::gather_cols(raw, second)};
  }

  std::vector<Index> cond_;
  std::vector<Index> trans_;
  Mlp net_;
  double s_max_;
};

class ActAffine : public FlowLayer {
 public:
  ActAffine(ParameterSet& params, const std::string& name, Index d, double log_scale,
            bool trainable) {
    log_scale_ = params.add(name + ".log_scale", Tensor::Constant(1, d, log_scale), trainable);
    bias_ = params.add(name + ".bias", Tensor::Zero(1, d), trainable);
  }

  FlowOutput forward(const ad::Value& x) const override {
    auto z = x * ad::exp(log_scale_) + bias_;
    auto logdet = ad::Value::constant(Tensor::Zero(x.rows(), 1)) + ad::sum(log_scale_);
    return {z, logdet};
  }

  ad::Value inverse(const ad::Value& z) const override {
    return (z - bias_) * ad::exp(-log_scale_);
  }

  Jet2 inverse_jet(const Jet2& z) const override {
    const Eigen::RowVectorXd inv = (-log_scale_.data().row(0).array()).exp().matrix();
    Jet2 out;
    out.v = ((z.v.rowwise() - bias_.data().row(0)).array().rowwise() * inv.array()).matrix();
    out.d1 = (z.d1.array().rowwise() * inv.array()).matrix();
    out.d2 = (z.d2.array().rowwise() * inv.array()).matrix();
    return out;
  }

  std::string kind() const override { return "act_affine"; }

 private:
  ad::Value log_scale_;
  ad::Value bias_;
};

class FixedLinear : public FlowLayer {
 public:
  explicit FixedLinear(const Tensor& A) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu{Eigen::MatrixXd(A)};
    const double det = lu.determinant();
    if (!(std::abs(det) > 0.0) || !std::isfinite(det)) throw NumericalError("linear flow: singular matrix");
    logabsdet_ = std::log(std::abs(det));
    at_ = ad::Value::constant(A.transpose());
    ainv_t_ = ad::Value::constant(Tensor(lu.inverse().transpose()));
  }

  FlowOutput forward(const ad::Value& x) const override {
    return {ad::matmul(x, at_), ad::Value::constant(Tensor::Constant(x.rows(), 1, logabsdet_))};
  }

  ad::Value inverse(const ad::Value& z) const override { return ad::matmul(z, ainv_t_); }

  Jet2 inverse_jet(const Jet2& z) const override {
    const Tensor& m = ainv_t_.data();
    return {z.v * m, z.d1 * m, z.d2 * m};
  }

  std::string kind() const override { return "linear"; }

 private:
  ad::Value at_;
  ad::Value ainv_t_;
  double logabsdet_ = 0.0;
};

void check_finite(const ad::Value& v, std::size_t layer, const char* dir) {
  if (!v.data().allFinite()) {
    throw NumericalError(std::string("flow ") + dir + ": layer " + std::to_string(layer) +
                         " produced a non-finite value");
  }
}

}  // namespace

Flow::Flow(Index d)
    : d_(d),
      params_(std::make_shared<ParameterSet>()),
      inverse_calls_(std::make_shared<std::atomic<long>>(0)) {}

Flow Flow::coupling(Index d, const FlowConfig& cfg, Rng& rng) {
  if (d < 2 && cfg.couplings > 0) throw Error("coupling flow needs d >= 2");
  Flow f(d);
  if (cfg.act_affine) {
    f.layers_.push_back(std::make_shared<ActAffine>(*f.params_, "flow.act", d, 0.0, true));
  }
  for (int k = 0; k < cfg.couplings; ++k) {
    f.layers_.push_back(std::make_shared<AffineCoupling>(
        *f.params_, "flow.c" + std::to_string(k), d, k % 2, cfg, rng));
  }
  return f;
}

Flow Flow::scaling(Index d, double a) {
  if (!(a > 0.0)) throw Error("scaling flow needs a > 0");
  Flow f(d);
  f.layers_.push_back(std::make_shared<ActAffine>(*f.params_, "flow.scale", d, std::log(a), false));
  return f;
}

Flow Flow::linear(const Tensor& A) {
  if (A.rows() != A.cols()) throw ShapeError("linear flow needs a square matrix, got " + shape_str(A));
  Flow f(A.rows());
  f.layers_.push_back(std::make_shared<FixedLinear>(A));
  return f;
}

FlowOutput Flow::forward(const ad::Value& x) const { return forward(x, nullptr); }

FlowOutput Flow::forward(const ad::Value& x, std::vector<Tensor>* layer_logdets) const {
  if (x.cols() != d_) {
    throw ShapeError("flow: expected " + std::to_string(d_) + " columns, got " + shape_str(x.data()));
  }
  if (!x.data().allFinite()) throw NumericalError("flow forward: non-finite input");
  ad::Value z = x;
  ad::Value logdet = ad::Value::constant(Tensor::Zero(x.rows(), 1));
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    auto out = layers_[k]->forward(z);
    check_finite(out.z, k, "forward");
    check_finite(out.logdet, k, "forward");
    if (layer_logdets) layer_logdets->push_back(out.logdet.data());
    z = out.z;
    logdet = k == 0 ? out.logdet : logdet + out.logdet;
  }
  return {z, logdet};
}

ad::Value Flow::inverse(const ad::Value& z) const {
  if (z.cols() != d_) {
    throw ShapeError("flow: expected " + std::to_string(d_) + " columns, got " + shape_str(z.data()));
  }
  if (!z.data().allFinite()) throw NumericalError("flow inverse: non-finite input");
  inverse_calls_->fetch_add(1);
  ad::Value x = z;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    x = layers_[k]->inverse(x);
    check_finite(x, k, "inverse");
  }
  return x;
}

Tensor Flow::forward_data(const Tensor& x, Tensor* logdet) const {
  ad::NoGradGuard guard;
  auto out = forward(ad::Value::constant(x));
  if (logdet) *logdet = out.logdet.data();
  return out.z.data();
}

Tensor Flow::inverse_data(const Tensor& z) const {
  ad::NoGradGuard guard;
  return inverse(ad::Value::constant(z)).data();
}

namespace {

template <class Map>
std::vector<Tensor> row_jacobians(const Tensor& x, Index d, Map&& map) {
  ad::EnableGradGuard guard;
  auto xv = ad::Value::variable(x);
  auto y = map(xv);
  std::vector<Tensor> out(static_cast<std::size_t>(x.rows()), Tensor(d, d));
  const std::vector<ad::Value> wrt{xv};
  for (Index i = 0; i < d; ++i) {
    const Index col[] = {i};
    auto g = ad::grad(ad::sum(ad::gather_cols(y, col)), wrt).front();
    for (Index r = 0; r < x.rows(); ++r) out[static_cast<std::size_t>(r)].row(i) = g.row(r);
  }
  return out;
}

}  // namespace

std::vector<Tensor> Flow::jacobians(const Tensor& x) const {
  return row_jacobians(x, d_, [this](const ad::Value& v) { return forward(v).z; });
}

std::vector<Tensor> Flow::inverse_jacobians(const Tensor& z) const {
  return row_jacobians(z, d_, [this](const ad::Value& v) { return inverse(v); });
}

void Flow::inverse_derivatives(const Tensor& z, std::vector<Tensor>& jacobians, Tensor& laplacian) const {
  if (z.cols() != d_) {
    throw ShapeError("flow: expected " + std::to_string(d_) + " columns, got " + shape_str(z));
  }
  if (!z.allFinite()) throw NumericalError("flow inverse: non-finite input");
  inverse_calls_->fetch_add(1);
  const Index n = z.rows();
  // One block of n rows per coordinate direction.
  Jet2 x{z.replicate(d_, 1), Tensor::Zero(n * d_, d_), Tensor::Zero(n * d_, d_)};
  for (Index j = 0; j < d_; ++j) x.d1.block(j * n, j, n, 1).setOnes();
  for (std::size_t k = layers_.size(); k-- > 0;) {
    x = layers_[k]->inverse_jet(x);
    if (!x.v.allFinite() || !x.d1.allFinite() || !x.d2.allFinite()) {
      throw NumericalError("flow inverse: layer " + std::to_string(k) + " produced a non-finite value");
    }
  }
  jacobians.assign(static_cast<std::size_t>(n), Tensor(d_, d_));
  laplacian = Tensor::Zero(n, d_);
  for (Index j = 0; j < d_; ++j) {
    for (Index r = 0; r < n; ++r) jacobians[static_cast<std::size_t>(r)].col(j) = x.d1.row(j * n + r).transpose();
    laplacian += x.d2.middleRows(j * n, n);
  }
}

}  // namespace indm
