// SPDX-License-Identifier: Apache-2.0

#include "indm/datasets.hpp"

#include "indm/rng.hpp"

#include <cmath>
#include <numbers>
#include <regex>

namespace indm {
namespace {

constexpr double kPi = std::numbers::pi;

double pick(double noise, double fallback) { return noise < 0.0 ? fallback : noise; }

Tensor spiral(Index n, double noise, Rng& rng) {
  Tensor x(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double theta = 3.0 * kPi * std::sqrt(rng.uniform());
    const double r = theta / (3.0 * kPi) * 2.0;
    x(i, 0) = r * std::cos(theta) + noise * rng.normal();
    x(i, 1) = r * std::sin(theta) + noise * rng.normal();
  }
  return x;
}

Tensor two_moons(Index n, double noise, Rng& rng) {
  Tensor x(n, 2);
  const Index outer = n / 2 + n % 2;
  for (Index i = 0; i < n; ++i) {
    const double theta = kPi * rng.uniform();
    if (i < outer) {
      x(i, 0) = std::cos(theta);
      x(i, 1) = std::sin(theta);
    } else {
      x(i, 0) = 1.0 - std::cos(theta);
      x(i, 1) = 0.5 - std::sin(theta);
    }
    x(i, 0) += noise * rng.normal() - 0.5;
    x(i, 1) += noise * rng.normal() - 0.25;
  }
  return x;
}

Tensor checkerboard(Index n, double noise, Rng& rng) {
  Tensor x(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double x1 = 4.0 * rng.uniform() - 2.0;
    const double x2 = rng.uniform() - 2.0 * static_cast<double>(rng.index(2)) +
                      static_cast<double>(static_cast<long>(std::floor(x1)) & 1L);
    x(i, 0) = x1 + noise * rng.normal();
    x(i, 1) = x2 + noise * rng.normal();
  }
  return x;
}

Tensor rings(Index n, double noise, int count, Rng& rng) {
  if (count < 1) throw Error("rings: need at least one ring");
  Tensor x(n, 2);
  for (Index i = 0; i < n; ++i) {
    const int k = static_cast<int>(rng.index(count));
    const double r = static_cast<double>(k + 1) / count;
    const double theta = 2.0 * kPi * rng.uniform();
    x(i, 0) = r * std::cos(theta) + noise * rng.normal();
    x(i, 1) = r * std::sin(theta) + noise * rng.normal();
  }
  return x;
}

Tensor gaussian(Index n, Index d, double m, double s, Rng& rng) {
  return (rng.normal(n, d).array() * s + m).matrix();
}

}  // namespace

const std::vector<std::string>& dataset_names() {
  static const std::vector<std::string> names{"spiral", "two-moons", "checkerboard", "rings",
                                              "mixture"};
  return names;
}

GaussianMixture mixture_model(double noise) {
  const double sd = pick(noise, 0.1);
  GaussianMixture m;
  const int k = 8;
  m.means.resize(k, 2);
  for (int i = 0; i < k; ++i) {
    m.means(i, 0) = 1.5 * std::cos(2.0 * kPi * i / k);
    m.means(i, 1) = 1.5 * std::sin(2.0 * kPi * i / k);
    m.weights.push_back(1.0 / k);
    m.vars.push_back(sd * sd);
  }
  return m;
}

DatasetSpec parse_dataset(const std::string& text) {
  DatasetSpec spec;
  static const std::regex gauss(R"(\s*gaussian\s*\(\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\)\s*)");
  std::smatch m;
  if (std::regex_match(text, m, gauss)) {
    spec.name = "gaussian";
    spec.mean = std::stod(m[1]);
    spec.std = std::stod(m[2]);
    return spec;
  }
  spec.name = text;
  return spec;
}

Tensor generate_dataset(const DatasetSpec& spec) {
  if (spec.n <= 0) throw Error("dataset: n must be positive");
  Rng rng(spec.seed, 0x64617461u);
  const std::string& name = spec.name;
  if (name == "spiral") return spiral(spec.n, pick(spec.noise, 0.05), rng);
  if (name == "two-moons") return two_moons(spec.n, pick(spec.noise, 0.05), rng);
  if (name == "checkerboard") return checkerboard(spec.n, pick(spec.noise, 0.0), rng);
  if (name == "rings") return rings(spec.n, pick(spec.noise, 0.05), spec.rings, rng);
  if (name == "mixture") return mixture_model(spec.noise).sample(spec.n, rng);
  if (name == "gaussian") {
    if (!(spec.std > 0.0)) throw Error("dataset: gaussian std must be positive");
    return gaussian(spec.n, spec.dim, spec.mean, spec.std, rng);
  }
  std::string valid;
  for (const auto& v : dataset_names()) valid += v + ", ";
  throw Error("unknown dataset '" + name + "' (valid: " + valid + "gaussian(m, s))");
}

}  // namespace indm
