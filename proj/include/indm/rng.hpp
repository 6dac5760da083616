// SPDX-License-Identifier: Apache-2.0
//
// Seeded random streams. Every consumer owns its stream; sub-streams are
// derived from (seed, stream id) so results do not depend on thread count.

#pragma once

#include "indm/autodiff.hpp"

#include <cstdint>
#include <random>

namespace indm {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);
  Rng(std::uint64_t seed, std::uint64_t stream);

  double uniform();
  double normal();
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform integer in [0, n).
  Index index(Index n);

  Tensor normal(Index rows, Index cols);
  Tensor uniform(Index rows, Index cols);
  /// Entries are +1 or -1 with equal probability.
  Tensor rademacher(Index rows, Index cols);

  /// Independent child stream; advances this stream by one draw.
  Rng split();

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace indm
