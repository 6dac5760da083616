// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "indm/training.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace indm;
namespace fs = std::filesystem;

namespace {

RunConfig tiny(std::uint64_t seed = 0) {
  RunConfig c;
  c.seed = seed;
  c.data.n = 500;
  c.flow.couplings = 2;
  c.flow.hidden = 8;
  c.flow.hidden_layers = 1;
  c.score.hidden_layers = 2;
  c.score.hidden = 16;
  c.score.embed_dim = 8;
  c.score.ema_rate = 0.9;
  c.train.batch_size = 32;
  c.train.steps = 20;
  c.train.pretrain_steps = 5;
  c.train.eval_every = 5;
  return c;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool same_checkpoint(const Checkpoint& a, const Checkpoint& b) {
  if (a.step != b.step || a.arrays.size() != b.arrays.size()) return false;
  for (std::size_t i = 0; i < a.arrays.size(); ++i) {
    if (a.arrays[i].first != b.arrays[i].first || !same_bits(a.arrays[i].second, b.arrays[i].second)) return false;
  }
  return true;
}

bool same_losses(const StepLosses& a, const StepLosses& b) {
  return std::memcmp(&a, &b, sizeof(StepLosses)) == 0;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("indm_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("training is deterministic in the seed") {
  Trainer a(tiny()), b(tiny()), c(tiny(1));
  bool differs = false;
  for (int k = 0; k < 12; ++k) {
    const StepLosses la = a.step(), lb = b.step(), lc = c.step();
    CHECK(same_losses(la, lb));
    differs = differs || la.loss_score != lc.loss_score;
  }
  CHECK(same_checkpoint(a.checkpoint(), b.checkpoint()));
  CHECK(differs);
}

TEST_CASE("score-only training on the identity-initialised flow collapses to the baseline") {
  RunConfig indm = tiny();
  indm.train.pretrain_steps = indm.train.steps;
  RunConfig ddpm = tiny();
  ddpm.flow_enabled = false;
  ddpm.train.pretrain_steps = 0;
  Trainer a(indm), b(ddpm);
  CHECK(b.flow().is_identity());
  for (int k = 0; k < 20; ++k) {
    CHECK_FALSE(a.joint_phase());
    CHECK_FALSE(b.joint_phase());
    const StepLosses la = a.step(), lb = b.step();
    CHECK(la.loss_score == lb.loss_score);
    CHECK(la.dsm_term == lb.dsm_term);
    CHECK(la.loss_flow == lb.loss_flow);
  }
  const auto pa = a.score().parameters().snapshot();
  const auto pb = b.score().parameters().snapshot();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(same_bits(pa[i], pb[i]));
}

TEST_CASE("the flow only moves in the joint phase") {
  Trainer t(tiny());
  const auto initial = t.flow().params().snapshot();
  for (int k = 0; k < 5; ++k) {
    CHECK_FALSE(t.joint_phase());
    t.step();
  }
  const auto after_pretrain = t.flow().params().snapshot();
  for (std::size_t i = 0; i < initial.size(); ++i) CHECK(same_bits(initial[i], after_pretrain[i]));
  CHECK(t.joint_phase());
  t.step();
  bool moved = false;
  const auto after_joint = t.flow().params().snapshot();
  for (std::size_t i = 0; i < initial.size(); ++i) moved = moved || !same_bits(initial[i], after_joint[i]);
  CHECK(moved);

  RunConfig frozen = tiny();
  frozen.train.train_flow = false;
  Trainer f(frozen);
  for (int k = 0; k < 8; ++k) f.step();
  CHECK_FALSE(f.joint_phase());
  const auto fp = f.flow().params().snapshot();
  for (std::size_t i = 0; i < initial.size(); ++i) CHECK(same_bits(initial[i], fp[i]));
}

TEST_CASE("resuming from a saved checkpoint replays the same run") {
  const fs::path dir = scratch_dir("resume");
  fs::create_directories(dir);
  Trainer full(tiny());
  std::vector<StepLosses> reference;
  for (int k = 0; k < 16; ++k) reference.push_back(full.step());

  Trainer first(tiny());
  for (int k = 0; k < 8; ++k) first.step();
  const std::string path = (dir / "mid.indm").string();
  save_checkpoint(path, first.checkpoint());
  auto resumed = Trainer::from_checkpoint(load_checkpoint(path));
  CHECK(resumed->steps_done() == 8);
  for (int k = 8; k < 16; ++k) CHECK(same_losses(resumed->step(), reference[static_cast<std::size_t>(k)]));
  CHECK(same_checkpoint(resumed->checkpoint(), full.checkpoint()));
}

TEST_CASE("run_training writes the loss log and checkpoint") {
  const fs::path d1 = scratch_dir("run1"), d2 = scratch_dir("run2");
  Trainer a(tiny());
  std::ostringstream log;
  const TrainingRun run = run_training(a, d1.string(), &log);
  CHECK(run.steps == 20);
  CHECK(fs::exists(run.checkpoint_path));
  const std::string csv = slurp(run.losses_path);
  CHECK(csv.rfind("step,loss_flow,loss_score,flow_term,dsm_term,prior_term,const_term\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(log.str().find("joint") != std::string::npos);
  CHECK(load_checkpoint(run.checkpoint_path).step == 20);

  Trainer b(tiny());
  run_training(b, d2.string());
  CHECK(slurp((d2 / "losses.csv").string()) == csv);

  // Resuming with a longer budget appends to the same log.
  RunConfig longer = tiny();
  longer.train.steps = 30;
  Trainer c(longer);
  c.restore(load_checkpoint(run.checkpoint_path));
  run_training(c, d1.string());
  const std::string appended = slurp(run.losses_path);
  CHECK(appended.rfind(csv, 0) == 0);
  CHECK(std::count(appended.begin(), appended.end(), '\n') == 7);
}

TEST_CASE("a non-finite loss aborts and keeps the last good checkpoint") {
  const fs::path dir = scratch_dir("nan");
  Trainer a(tiny());
  const TrainingRun run = run_training(a, dir.string());
  const std::string before = slurp(run.checkpoint_path);

  RunConfig longer = tiny();
  longer.train.steps = 40;
  Trainer b(longer);
  b.restore(load_checkpoint(run.checkpoint_path));
  b.set_interpolation_target(Tensor::Constant(4, 2, 1e200), 1.0);
  CHECK_THROWS_AS(run_training(b, dir.string()), NumericalError);
  CHECK(slurp(run.checkpoint_path) == before);
  CHECK(load_checkpoint(run.checkpoint_path).step == 20);
}

TEST_CASE("the flow average follows the score's ema rate") {
  Trainer t(tiny());
  for (int k = 0; k < 5; ++k) t.step();
  const auto frozen = t.flow().params().snapshot();
  const auto ema0 = t.flow_ema().params().snapshot();
  for (std::size_t i = 0; i < frozen.size(); ++i) CHECK(same_bits(frozen[i], ema0[i]));
  CHECK(&t.eval_flow(true) == &t.flow_ema());
  CHECK(&t.eval_flow(false) == &t.flow());

  const double r = t.config().score.ema_rate;
  std::vector<Tensor> expected = ema0;
  for (int k = 0; k < 6; ++k) {
    t.step();
    const auto w = t.flow().params().snapshot();
    for (std::size_t i = 0; i < w.size(); ++i) expected[i] = r * expected[i] + (1.0 - r) * w[i];
  }
  const auto ema = t.flow_ema().params().snapshot();
  for (std::size_t i = 0; i < ema.size(); ++i) CHECK(same_bits(ema[i], expected[i]));

  auto back = Trainer::from_checkpoint(t.checkpoint());
  const auto restored = back->flow_ema().params().snapshot();
  for (std::size_t i = 0; i < ema.size(); ++i) CHECK(same_bits(ema[i], restored[i]));
}
