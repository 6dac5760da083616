// SPDX-License-Identifier: Apache-2.0

#include "indm/interpolation.hpp"

#include "indm/datasets.hpp"
#include "indm/training.hpp"

#include <cmath>
#include <numbers>

namespace indm {

ad::Value interpolation_loss(const Flow& flow, const Schedule& schedule, const ad::Value& y) {
  FlowOutput out = flow.forward(y);
  const double var = schedule.prior_var();
  const double d = static_cast<double>(y.cols());
  ad::Value quad = ad::row_sum(ad::square(out.z)) * (0.5 / var);
  return quad + (0.5 * d * std::log(2.0 * std::numbers::pi * var)) - out.logdet;
}

Tensor interpolation_nll(const Flow& flow, const Schedule& schedule, const Tensor& y) {
  ad::NoGradGuard guard;
  return interpolation_loss(flow, schedule, ad::Value::constant(y)).data();
}

InterpolationTask interpolation_task(const RunConfig& cfg) {
  InterpolationTask task;
  task.source = cfg.data;
  task.source.seed = cfg.seed;
  task.target = parse_dataset(cfg.interpolation.target);
  task.target.n = cfg.data.n;
  task.target.dim = cfg.data.dim;
  task.target.seed = cfg.seed + 1;
  task.weight = cfg.interpolation.weight;
  const Index ds = cfg.data.name == "gaussian" ? cfg.data.dim : 2;
  const Index dt = task.target.name == "gaussian" ? task.target.dim : 2;
  if (ds != dt) throw ShapeError("interpolation source and target dimensions differ");
  return task;
}

std::unique_ptr<Trainer> make_interpolation_trainer(const RunConfig& cfg) {
  const InterpolationTask task = interpolation_task(cfg);
  auto trainer = std::make_unique<Trainer>(cfg);
  trainer->set_interpolation_target(generate_dataset(task.target), task.weight);
  return trainer;
}

TrajectoryBatch bridge_trajectory(const Flow& flow, const Schedule& schedule, const Tensor& x0,
                                  int n_checkpoints, Rng& rng) {
  if (n_checkpoints < 1) throw Error("bridge_trajectory: n_checkpoints must be positive");
  TrajectoryBatch traj;
  traj.space = Space::Data;
  Tensor z = flow.forward_data(x0);
  double t_prev = 0.0;
  double var_prev = 0.0;
  for (int k = 0; k <= n_checkpoints; ++k) {
    const double t = schedule.eps() + (schedule.T() - schedule.eps()) * k / n_checkpoints;
    // z_t = a z_prev + b n with a = mean_coef(t) / mean_coef(t_prev).
    const double a = schedule.mean_coef(t) / (k == 0 ? 1.0 : schedule.mean_coef(t_prev));
    const double b2 = std::max(schedule.var(t) - a * a * var_prev, 0.0);
    z = a * z + std::sqrt(b2) * rng.normal(z.rows(), z.cols());
    traj.times.push_back(t);
    traj.states.push_back(flow.inverse_data(z));
    t_prev = t;
    var_prev = schedule.var(t);
  }
  return traj;
}

}  // namespace indm
