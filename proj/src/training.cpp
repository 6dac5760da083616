// SPDX-License-Identifier: Apache-2.0

#include "indm/training.hpp"

#include "indm/datasets.hpp"
#include "indm/interpolation.hpp"
#include "indm/loss.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

namespace indm {
namespace {

Flow build_flow(const RunConfig& cfg) {
  const Index d = cfg.data.name == "gaussian" ? cfg.data.dim : 2;
  if (!cfg.flow_enabled) return Flow(d);
  Rng rng(cfg.seed, 1);
  return Flow::coupling(d, cfg.flow, rng);
}

AdamConfig adam_config(double lr, double clip) {
  AdamConfig a;
  a.lr = lr;
  a.grad_clip = clip;
  return a;
}

void save_params(Checkpoint& ck, const std::string& prefix, const ParameterSet& ps) {
  for (const auto& p : ps) ck.put(prefix + p.name, p.value.data());
}

void load_params(const Checkpoint& ck, const std::string& prefix, ParameterSet& ps) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Tensor& t = ck.get(prefix + ps[i].name);
    if (t.rows() != ps[i].value.rows() || t.cols() != ps[i].value.cols()) {
      throw Error("checkpoint array '" + prefix + ps[i].name + "' has shape " + shape_str(t) +
                  ", expected " + shape_str(ps[i].value.data()));
    }
    ps[i].value.set_data(t);
  }
}

std::vector<std::string> trainable_names(const ParameterSet& ps) {
  std::vector<std::string> names;
  for (const auto& p : ps) {
    if (p.trainable) names.push_back(p.name);
  }
  return names;
}

void save_adam(Checkpoint& ck, const std::string& prefix, const Adam& adam, const ParameterSet& ps) {
  const auto names = trainable_names(ps);
  for (std::size_t i = 0; i < names.size(); ++i) {
    ck.put(prefix + "m/" + names[i], adam.first_moments()[i]);
    ck.put(prefix + "v/" + names[i], adam.second_moments()[i]);
  }
  ck.put(prefix + "t", Tensor::Constant(1, 1, static_cast<double>(adam.steps())));
}

void load_adam(const Checkpoint& ck, const std::string& prefix, Adam& adam, const ParameterSet& ps) {
  const auto names = trainable_names(ps);
  for (std::size_t i = 0; i < names.size(); ++i) {
    adam.first_moments()[i] = ck.get(prefix + "m/" + names[i]);
    adam.second_moments()[i] = ck.get(prefix + "v/" + names[i]);
  }
  adam.set_steps(static_cast<std::int64_t>(ck.get(prefix + "t")(0, 0)));
}

Tensor gather_rows(const Tensor& data, Index n, Rng& rng) {
  Tensor out(n, data.cols());
  for (Index i = 0; i < n; ++i) out.row(i) = data.row(static_cast<Index>(rng.index(static_cast<std::uint64_t>(data.rows()))));
  return out;
}

void accumulate(StepLosses& acc, const StepLosses& s) {
  acc.loss_flow += s.loss_flow;
  acc.loss_score += s.loss_score;
  acc.flow_term += s.flow_term;
  acc.dsm_term += s.dsm_term;
  acc.prior_term += s.prior_term;
  acc.const_term += s.const_term;
  acc.interpolation += s.interpolation;
}

StepLosses scaled(StepLosses s, double k) {
  s.loss_flow *= k;
  s.loss_score *= k;
  s.flow_term *= k;
  s.dsm_term *= k;
  s.prior_term *= k;
  s.const_term *= k;
  s.interpolation *= k;
  return s;
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg)
    : cfg_(cfg), schedule_(cfg.sde), flow_(build_flow(cfg)), flow_ema_(build_flow(cfg)) {
  cfg_.validate();
  DatasetSpec spec = cfg_.data;
  spec.seed = cfg_.seed;
  data_ = generate_dataset(spec);
  Rng score_rng(cfg_.seed, 2);
  score_ = std::make_unique<ScoreNet>(data_.cols(), schedule_, cfg_.score, score_rng);
  adam_flow_ = Adam(flow_.params(), adam_config(cfg_.train.lr_flow, cfg_.train.grad_clip));
  adam_score_ = Adam(*score_->params(), adam_config(cfg_.train.lr_score, cfg_.train.grad_clip));
}

std::unique_ptr<Trainer> Trainer::from_checkpoint(const Checkpoint& ckpt) {
  auto t = std::make_unique<Trainer>(RunConfig::from(KeyValues::parse(ckpt.config_text)));
  t->restore(ckpt);
  return t;
}

void Trainer::set_interpolation_target(Tensor target, double weight) {
  if (target.cols() != data_.cols()) {
    throw ShapeError("interpolation target has dimension " + std::to_string(target.cols()) +
                     " but the source has " + std::to_string(data_.cols()));
  }
  interp_target_ = std::move(target);
  interp_weight_ = weight;
}

bool Trainer::joint_phase() const {
  return cfg_.flow_enabled && cfg_.train.train_flow && step_ >= cfg_.train.pretrain_steps &&
         flow_.params().size() > 0;
}

void Trainer::apply_lr_schedule() {
  if (cfg_.train.lr_decay_step > 0 && step_ >= cfg_.train.lr_decay_step) {
    adam_flow_.set_lr(cfg_.train.lr_decay_to);
    adam_score_.set_lr(cfg_.train.lr_decay_to);
  } else {
    adam_flow_.set_lr(cfg_.train.lr_flow);
    adam_score_.set_lr(cfg_.train.lr_score);
  }
}

StepLosses Trainer::step() {
  apply_lr_schedule();
  Rng rng(cfg_.seed, (std::uint64_t{1} << 32) + static_cast<std::uint64_t>(step_));
  const Tensor batch = gather_rows(data_, cfg_.train.batch_size, rng);

  LossOptions opts;
  opts.weighting = cfg_.train.weighting;
  opts.n_t = cfg_.train.n_t;
  opts.importance_sampling = cfg_.train.importance_sampling;
  NelboTerms terms = nelbo_terms(flow_, *score_, schedule_, batch, rng, opts);

  StepLosses out;
  out.flow_term = terms.flow_term.item();
  out.dsm_term = terms.dsm_term.item();
  out.prior_term = terms.prior_term.item();
  out.const_term = terms.const_term;

  ad::Value flow_loss = terms.total;
  if (interp_target_) {
    const Tensor y = gather_rows(*interp_target_, cfg_.train.batch_size, rng);
    ad::Value li = ad::mean(interpolation_loss(flow_, schedule_, ad::Value::constant(y)));
    out.interpolation = li.item();
    flow_loss = flow_loss + interp_weight_ * li;
  }
  ad::Value score_loss = terms.score_loss;
  if (cfg_.train.symmetry_weight > 0.0) {
    // Penalty at perturbed latents of the batch, detached from the flow.
    const Tensor z0 = flow_.forward_data(batch);
    Tensor t(z0.rows(), 1);
    for (Index i = 0; i < t.rows(); ++i) t(i, 0) = schedule_.eps() + (schedule_.T() - schedule_.eps()) * rng.uniform();
    const Tensor zt = schedule_.transition_sample(z0, t, rng.normal(z0.rows(), z0.cols()));
    ad::Value pen = ad::mean(symmetry_penalty(*score_, ad::Value::constant(zt), t, ProbeKind::Rademacher, rng));
    score_loss = score_loss + cfg_.train.symmetry_weight * pen;
  }
  out.loss_flow = flow_loss.item();
  out.loss_score = score_loss.item();
  if (!std::isfinite(out.loss_flow)) throw NumericalError("non-finite flow loss at step " + std::to_string(step_));
  if (!std::isfinite(out.loss_score)) throw NumericalError("non-finite score loss at step " + std::to_string(step_));

  const bool joint = joint_phase();
  std::vector<Tensor> g_flow;
  if (joint) g_flow = ad::grad(flow_loss, flow_.params().trainable_values());
  const std::vector<Tensor> g_score = ad::grad(score_loss, score_->params()->trainable_values());
  if (joint) {
    adam_flow_.step(flow_.params(), g_flow);
    const double r = cfg_.score.ema_rate;
    for (std::size_t i = 0; i < flow_.params().size(); ++i) {
      ad::Value e = flow_ema_.params()[i].value;
      e.mutable_data() = r * e.data() + (1.0 - r) * flow_.params()[i].value.data();
    }
  }
  adam_score_.step(*score_->params(), g_score);
  score_->ema_update();
  ++step_;
  return out;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.config_text = cfg_.to_text();
  ck.step = static_cast<std::uint64_t>(step_);
  save_params(ck, "flow/", flow_.params());
  save_params(ck, "flow_ema/", flow_ema_.params());
  save_params(ck, "score/", score_->parameters());
  const auto ema = score_->ema_snapshot();
  for (std::size_t i = 0; i < ema.size(); ++i) ck.put("ema/" + score_->parameters()[i].name, ema[i]);
  save_adam(ck, "adam_flow/", adam_flow_, flow_.params());
  save_adam(ck, "adam_score/", adam_score_, score_->parameters());
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  load_params(ck, "flow/", flow_.params());
  load_params(ck, "flow_ema/", flow_ema_.params());
  load_params(ck, "score/", *score_->params());
  std::vector<Tensor> ema;
  for (const auto& p : score_->parameters()) ema.push_back(ck.get("ema/" + p.name));
  score_->ema_restore(ema);
  load_adam(ck, "adam_flow/", adam_flow_, flow_.params());
  load_adam(ck, "adam_score/", adam_score_, score_->parameters());
  step_ = static_cast<long>(ck.step);
}

TrainingRun run_training(Trainer& trainer, const std::string& out_dir, std::ostream* log) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  TrainingRun run;
  run.checkpoint_path = (fs::path(out_dir) / "checkpoint.indm").string();
  run.losses_path = (fs::path(out_dir) / "losses.csv").string();
  const auto& tc = trainer.config().train;

  const bool fresh = trainer.steps_done() == 0 || !fs::exists(run.losses_path);
  std::ofstream csv(run.losses_path, fresh ? std::ios::trunc : std::ios::app);
  if (!csv) throw Error("cannot write " + run.losses_path);
  csv << std::setprecision(10);
  if (fresh) csv << "step,loss_flow,loss_score,flow_term,dsm_term,prior_term,const_term\n";

  StepLosses window;
  long in_window = 0;
  while (trainer.steps_done() < tc.steps) {
    const StepLosses s = trainer.step();
    accumulate(window, s);
    ++in_window;
    run.last = s;
    const long done = trainer.steps_done();
    if (done % tc.eval_every == 0 || done == tc.steps) {
      const StepLosses m = scaled(window, 1.0 / static_cast<double>(in_window));
      csv << done << ',' << m.loss_flow << ',' << m.loss_score << ',' << m.flow_term << ',' << m.dsm_term << ','
          << m.prior_term << ',' << m.const_term << '\n';
      csv.flush();
      save_checkpoint(run.checkpoint_path, trainer.checkpoint());
      if (log) {
        *log << "step " << done << (trainer.joint_phase() ? " joint" : " pretrain") << " loss_flow=" << m.loss_flow
             << " loss_score=" << m.loss_score << '\n';
      }
      window = StepLosses{};
      in_window = 0;
    }
  }
  run.steps = trainer.steps_done();
  return run;
}

}  // namespace indm
