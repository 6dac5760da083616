// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a flat "[section] key = value" text format and the
// typed settings built from it.

#pragma once

#include "indm/datasets.hpp"
#include "indm/flow.hpp"
#include "indm/likelihood.hpp"
#include "indm/loss.hpp"
#include "indm/sampler.hpp"
#include "indm/score.hpp"
#include "indm/sde.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace indm {

/// Parsed key/value pairs keyed "section.key". Values keep their text;
/// surrounding quotes are stripped and '#' starts a comment.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text);
  static KeyValues load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

 private:
  std::map<std::string, std::string> values_;
};

struct TrainConfig {
  Weighting weighting = Weighting::Likelihood;
  double lr_flow = 1e-3;
  double lr_score = 2e-4;
  Index batch_size = 512;
  long steps = 10000;
  long pretrain_steps = 0;
  long eval_every = 500;
  int n_t = 1;
  bool importance_sampling = true;
  double grad_clip = 0.0;
  /// Step after which both learning rates drop to lr_decay_to; 0 disables.
  long lr_decay_step = 0;
  double lr_decay_to = 1e-5;
  double symmetry_weight = 0.0;
  /// false trains the score alone on a fixed identity map.
  bool train_flow = true;
};

struct InterpolationConfig {
  std::string target = "rings";
  double weight = 1.0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "run";
  DatasetSpec data;
  SdeConfig sde;
  /// false uses the identity map with no parameters.
  bool flow_enabled = true;
  FlowConfig flow;
  ScoreNetConfig score;
  TrainConfig train;
  SamplerConfig sampler;
  Index sample_n = 2000;
  EvalOptions eval;
  InterpolationConfig interpolation;

  /// Applies recognised keys; unknown keys throw, naming the key.
  static RunConfig from(const KeyValues& kv);
  static RunConfig load(const std::string& path);
  /// Checks cross-field constraints.
  void validate() const;
  /// Canonical text form; from(parse(to_text())) reproduces the config.
  std::string to_text() const;
};

}  // namespace indm
