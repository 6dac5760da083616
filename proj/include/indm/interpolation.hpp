// SPDX-License-Identifier: Apache-2.0
//
// Dataset interpolation: the diffusion is trained on a source dataset while
// the flow alone is also fit as a density of a target dataset, so the
// latent forward process mapped back through the flow bridges the two.

#pragma once

#include "indm/config.hpp"
#include "indm/flow.hpp"
#include "indm/rng.hpp"
#include "indm/sampler.hpp"
#include "indm/sde.hpp"

#include <memory>
#include <ostream>

namespace indm {

class Trainer;

/// -log pi(h(y)) - log|det dh/dy| per row (n x 1), pi the schedule's prior.
ad::Value interpolation_loss(const Flow& flow, const Schedule& schedule, const ad::Value& y);
Tensor interpolation_nll(const Flow& flow, const Schedule& schedule, const Tensor& y);

struct InterpolationTask {
  DatasetSpec source;
  DatasetSpec target;
  double weight = 1.0;
};

/// Source data comes from cfg.data, the target from cfg.interpolation with
/// seed + 1.
InterpolationTask interpolation_task(const RunConfig& cfg);

/// Builds a trainer on the source with the target attached.
std::unique_ptr<Trainer> make_interpolation_trainer(const RunConfig& cfg);

/// Forward latent path of h(x0) at n_checkpoints + 1 evenly spaced times in
/// [eps, T], drawn by exact sequential transitions and mapped through h^-1.
TrajectoryBatch bridge_trajectory(const Flow& flow, const Schedule& schedule, const Tensor& x0,
                                  int n_checkpoints, Rng& rng);

}  // namespace indm
