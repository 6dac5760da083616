// SPDX-License-Identifier: Apache-2.0

#include "indm/rng.hpp"

namespace indm {

Rng::Rng(std::uint64_t seed) : Rng(seed, 0) {}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x494e444du};
  engine_.seed(seq);
}

double Rng::uniform() { return uniform_(engine_); }

double Rng::normal() { return normal_(engine_); }

Index Rng::index(Index n) {
  std::uniform_int_distribution<Index> dist(0, n - 1);
  return dist(engine_);
}

Tensor Rng::normal(Index rows, Index cols) {
  Tensor out(rows, cols);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = normal_(engine_);
  return out;
}

Tensor Rng::uniform(Index rows, Index cols) {
  Tensor out(rows, cols);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = uniform_(engine_);
  return out;
}

Tensor Rng::rademacher(Index rows, Index cols) {
  Tensor out(rows, cols);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = (engine_() & 1u) ? 1.0 : -1.0;
  return out;
}

Rng Rng::split() { return Rng(engine_(), 1); }

}  // namespace indm
