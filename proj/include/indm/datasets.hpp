// SPDX-License-Identifier: Apache-2.0
//
// Seeded 2D toy distributions, plus an isotropic Gaussian of any dimension
// for closed-form checks.

#pragma once

#include "indm/autodiff.hpp"
#include "indm/score.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace indm {

struct DatasetSpec {
  std::string name = "two-moons";
  Index n = 10000;
  /// Jitter standard deviation; negative selects the generator's default.
  double noise = -1.0;
  std::uint64_t seed = 0;
  // gaussian(m, s) only.
  Index dim = 2;
  double mean = 0.0;
  double std = 1.0;
  /// Number of concentric circles for "rings".
  int rings = 1;
};

/// The named 2D generators: spiral, two-moons, checkerboard, rings, mixture.
const std::vector<std::string>& dataset_names();

/// Parses "name" or "gaussian(m, s)" into a spec (other fields defaulted).
DatasetSpec parse_dataset(const std::string& text);

/// Deterministic in spec.seed. Throws for n <= 0 or an unknown name, listing
/// the valid names.
Tensor generate_dataset(const DatasetSpec& spec);

/// The mixture generator as an explicit Gaussian mixture.
GaussianMixture mixture_model(double noise = -1.0);

}  // namespace indm
