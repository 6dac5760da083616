// SPDX-License-Identifier: Apache-2.0
//
// Joint training of the flow and the latent score network: an optional
// score-only pretraining phase on the identity-initialised flow, then
// alternating updates of both networks per step.

#pragma once

#include "indm/checkpoint.hpp"
#include "indm/config.hpp"
#include "indm/flow.hpp"
#include "indm/optim.hpp"
#include "indm/score.hpp"
#include "indm/sde.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>

namespace indm {

struct StepLosses {
  double loss_flow = 0.0;   // NELBO, plus the weighted interpolation loss when set
  double loss_score = 0.0;  // lambda-weighted denoising loss
  double flow_term = 0.0;
  double dsm_term = 0.0;
  double prior_term = 0.0;
  double const_term = 0.0;
  double interpolation = 0.0;
};

class Trainer {
 public:
  /// Builds data, networks and optimizers from the config. The flow draws its
  /// weights from Rng(seed, 1) and the score network from Rng(seed, 2), so an
  /// identity-flow run shares its score initialisation with a coupling run.
  explicit Trainer(const RunConfig& cfg);

  /// Reconstructs a trainer from a checkpoint's config and state.
  static std::unique_ptr<Trainer> from_checkpoint(const Checkpoint& ckpt);

  /// Adds the weighted flow-only likelihood of `target` to the flow loss.
  void set_interpolation_target(Tensor target, double weight);

  /// One update. Randomness comes from Rng(seed, 2^32 + step), so resuming
  /// from a checkpoint replays the same stream.
  StepLosses step();
  /// True once the step counter has passed pretrain_steps and the flow trains.
  bool joint_phase() const;
  long steps_done() const { return step_; }

  Checkpoint checkpoint() const;
  /// Restores parameters, optimizer moments, EMA and the step counter.
  void restore(const Checkpoint& ckpt);

  const RunConfig& config() const { return cfg_; }
  const Schedule& schedule() const { return schedule_; }
  const Flow& flow() const { return flow_; }
  Flow& flow() { return flow_; }
  /// Exponential moving average of the flow at the score's EMA rate, so the
  /// averaged score is paired with the latents it was averaged over.
  const Flow& flow_ema() const { return flow_ema_; }
  /// The flow to evaluate alongside score weights chosen by `use_ema`.
  const Flow& eval_flow(bool use_ema) const { return use_ema ? flow_ema_ : flow_; }
  const ScoreNet& score() const { return *score_; }
  ScoreNet& score() { return *score_; }
  const Tensor& data() const { return data_; }

 private:
  void apply_lr_schedule();

  RunConfig cfg_;
  Schedule schedule_;
  Tensor data_;
  Flow flow_;
  Flow flow_ema_;
  std::unique_ptr<ScoreNet> score_;
  Adam adam_flow_;
  Adam adam_score_;
  long step_ = 0;
  std::optional<Tensor> interp_target_;
  double interp_weight_ = 0.0;
};

struct TrainingRun {
  long steps = 0;
  StepLosses last;
  std::string checkpoint_path;
  std::string losses_path;
};

/// Runs the trainer to cfg.train.steps. Every eval_every steps appends the
/// window-averaged losses to out_dir/losses.csv and rewrites
/// out_dir/checkpoint.indm atomically. A NumericalError propagates with the
/// previous checkpoint left in place. `log` receives progress lines.
TrainingRun run_training(Trainer& trainer, const std::string& out_dir, std::ostream* log = nullptr);

}  // namespace indm
