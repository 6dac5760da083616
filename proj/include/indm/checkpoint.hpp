// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoints: "INDM" magic, u32 format version, the config text, the
// step counter and a list of named f64 arrays, all little-endian.

#pragma once

#include "indm/autodiff.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace indm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, Tensor>> arrays;

  void put(const std::string& name, const Tensor& value) { arrays.emplace_back(name, value); }
  bool has(const std::string& name) const;
  /// Throws Error naming the missing array.
  const Tensor& get(const std::string& name) const;
};

/// Writes to a temporary sibling file and renames it over `path`.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws Error on a bad magic, a version mismatch or truncation.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace indm
