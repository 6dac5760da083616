// SPDX-License-Identifier: Apache-2.0
//
// indm: train, sample, evaluate and inspect implicit nonlinear diffusion
// models on 2D toy data.
//
// Exit codes: 0 success, 1 usage or input error, 2 numerical failure.

#include "indm/checkpoint.hpp"
#include "indm/config.hpp"
#include "indm/datasets.hpp"
#include "indm/diagnostics.hpp"
#include "indm/interpolation.hpp"
#include "indm/io.hpp"
#include "indm/likelihood.hpp"
#include "indm/metrics.hpp"
#include "indm/sampler.hpp"
#include "indm/training.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace indm;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load_config(const Globals& g) {
  RunConfig cfg = g.config.empty() ? RunConfig::from(KeyValues{}) : RunConfig::load(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.data.seed = cfg.seed;
    cfg.eval.seed = cfg.seed;
  }
  if (!g.out.empty()) cfg.out = g.out;
  return cfg;
}

std::unique_ptr<Trainer> load_model(const std::string& path) {
  return Trainer::from_checkpoint(load_checkpoint(path));
}

std::string out_dir(const Globals& g, const std::string& fallback) { return g.out.empty() ? fallback : g.out; }

int cmd_datasets(bool list, const std::string& name, Index n, const Globals& g) {
  if (list || name.empty()) {
    for (const auto& d : dataset_names()) std::cout << d << '\n';
    return 0;
  }
  DatasetSpec spec = parse_dataset(name);
  spec.n = n;
  spec.seed = g.seed.value_or(0);
  const Tensor x = generate_dataset(spec);
  const std::string dir = out_dir(g, ".");
  std::vector<std::string> header;
  for (Index j = 0; j < x.cols(); ++j) header.push_back("x" + std::to_string(j));
  write_csv((fs::path(dir) / (spec.name + ".csv")).string(), header, x);
  if (x.cols() >= 2) write_text((fs::path(dir) / (spec.name + ".svg")).string(), svg_scatter({x}, {spec.name}));
  std::cout << "wrote " << x.rows() << " points to " << (fs::path(dir) / (spec.name + ".csv")).string() << '\n';
  return 0;
}

int cmd_train(const Globals& g, const std::string& resume) {
  std::unique_ptr<Trainer> trainer;
  std::string dir;
  if (!resume.empty()) {
    trainer = load_model(resume);
    dir = out_dir(g, fs::path(resume).parent_path().string());
  } else {
    const RunConfig cfg = load_config(g);
    trainer = std::make_unique<Trainer>(cfg);
    dir = cfg.out;
  }
  const TrainingRun run = run_training(*trainer, dir, &std::cout);
  std::cout << "checkpoint=" << run.checkpoint_path << "\nlosses=" << run.losses_path << '\n';
  return 0;
}

int cmd_sample(const Globals& g, const std::string& ckpt_path, Index n, const std::string& method,
               int steps, std::optional<double> temperature, bool adaptive_prior) {
  auto model = load_model(ckpt_path);
  SamplerConfig sc = model->config().sampler;
  if (!method.empty()) sc.method = parse_sampler_method(method);
  if (steps > 0) sc.n_steps = steps;
  if (temperature) sc.temperature = *temperature;
  const std::uint64_t seed = g.seed.value_or(model->config().seed);
  if (adaptive_prior) {
    Rng rng(seed, 7);
    sc.prior = latent_prior_bank(model->eval_flow(sc.use_ema), model->schedule(), model->data(), rng);
  }
  if (n <= 0) n = model->config().sample_n;
  const SampleResult r = sample(model->eval_flow(sc.use_ema), model->score(), model->schedule(), sc, n, seed);
  const std::string dir = out_dir(g, fs::path(ckpt_path).parent_path().string());
  write_csv((fs::path(dir) / "samples.csv").string(), {"x0", "x1"}, r.x);
  write_text((fs::path(dir) / "samples.svg").string(),
             svg_scatter({model->data().topRows(std::min<Index>(n, model->data().rows())), r.x}, {"data", "samples"}));
  std::cout << "samples=" << (fs::path(dir) / "samples.csv").string() << "\nn=" << r.x.rows()
            << "\nsliced_wasserstein=" << sliced_wasserstein(r.x, model->data()) << '\n';
  if (sc.method == SamplerMethod::ODE) {
    std::cout << "ode_accepted=" << r.ode_stats.accepted << "\node_rejected=" << r.ode_stats.rejected << '\n';
  }
  return 0;
}

int cmd_nll(const Globals& g, const std::string& ckpt_path, Index n_eval) {
  auto model = load_model(ckpt_path);
  EvalOptions eo = model->config().eval;
  if (n_eval > 0) eo.n_eval = n_eval;
  if (g.seed) eo.seed = *g.seed;
  DatasetSpec held = model->config().data;
  held.seed = eo.seed + 1000003;
  held.n = eo.n_eval;
  const Tensor test = generate_dataset(held);
  eo.loss.use_ema = eo.ode.use_ema;
  const EvalReport rep = evaluate(model->eval_flow(eo.ode.use_ema), model->score(), model->schedule(), test, eo);
  const std::string text = rep.to_text();
  std::cout << text;
  if (!g.out.empty()) {
    write_text((fs::path(g.out) / "report.txt").string(), text);
    Tensor rows(rep.per_sample_nll_corrected.rows(), 3);
    rows << rep.per_sample_nll_corrected, rep.per_sample_nll_uncorrected, rep.per_sample_residual;
    write_csv((fs::path(g.out) / "nll_per_sample.csv").string(), {"nll_corrected", "nll_uncorrected", "residual"}, rows);
  }
  return 0;
}

int cmd_diagnose(const Globals& g, const std::string& ckpt_path, Index n) {
  auto model = load_model(ckpt_path);
  const std::string dir = out_dir(g, fs::path(ckpt_path).parent_path().string());
  const Tensor x = model->data().topRows(std::min<Index>(n, model->data().rows()));
  const Flow& flow = model->eval_flow(true);
  const ScoreNet& score = model->score();
  const Schedule& sched = model->schedule();
  std::ostringstream rep;
  rep.precision(10);

  const RelativeEnergy re = relative_energy(flow, score, sched, x);
  rep << "relative_energy=" << re.ratio << "\nkinetic_energy=" << re.kinetic << "\nw2_squared=" << re.w2_squared << '\n';
  const RelativeEnergy re_id = relative_energy(Flow(flow.dim()), score, sched, flow.forward_data(x));
  rep << "relative_energy_latent_identity=" << re_id.ratio << '\n';

  const ManifoldNorms mn = manifold_norms(flow, model->data());
  rep << "norm_data=" << mn.data << "\nnorm_latent=" << mn.latent << "\nnorm_prior=" << mn.prior << '\n';

  const Tensor spec = covariance_eigen_spectrum(flow, x.topRows(std::min<Index>(x.rows(), 200)));
  std::vector<std::string> eig_header;
  for (Index j = 0; j < spec.cols(); ++j) eig_header.push_back("lambda" + std::to_string(j));
  write_csv((fs::path(dir) / "ggt_eigenvalues.csv").string(), eig_header, spec);
  rep << "ggt_eigen_min=" << spec.minCoeff() << "\nggt_eigen_max=" << spec.maxCoeff() << '\n';

  const auto cos = trajectory_cosine_similarity(flow, score, sched, x.topRows(std::min<Index>(x.rows(), 500)), 20);
  Tensor cos_t(static_cast<Index>(cos.size()), 2);
  Series cos_series{"cosine", {}, {}};
  for (std::size_t i = 0; i < cos.size(); ++i) {
    cos_t(static_cast<Index>(i), 0) = cos[i].t;
    cos_t(static_cast<Index>(i), 1) = cos[i].cosine;
    cos_series.x.push_back(cos[i].t);
    cos_series.y.push_back(cos[i].cosine);
  }
  write_csv((fs::path(dir) / "trajectory_cosine.csv").string(), {"t", "cosine"}, cos_t);
  write_text((fs::path(dir) / "trajectory_cosine.svg").string(),
             svg_lines({cos_series}, {.title = "trajectory cosine similarity"}));

  SamplerConfig sc = model->config().sampler;
  sc.method = SamplerMethod::PC;
  const std::vector<int> counts{8, 16, 32, 64, 128};
  const auto curve = discretization_sensitivity(flow, score, sched, sc, counts, model->data(),
                                                Metric::SlicedWasserstein, 1000, g.seed.value_or(model->config().seed));
  Tensor curve_t(static_cast<Index>(curve.size()), 2);
  Series curve_series{"sliced W2", {}, {}};
  for (std::size_t i = 0; i < curve.size(); ++i) {
    curve_t(static_cast<Index>(i), 0) = curve[i].n_steps;
    curve_t(static_cast<Index>(i), 1) = curve[i].value;
    curve_series.x.push_back(curve[i].n_steps);
    curve_series.y.push_back(curve[i].value);
    rep << "sw_steps_" << curve[i].n_steps << '=' << curve[i].value << '\n';
  }
  write_csv((fs::path(dir) / "discretization.csv").string(), {"n_steps", "sliced_wasserstein"}, curve_t);
  write_text((fs::path(dir) / "discretization.svg").string(),
             svg_lines({curve_series}, {.title = "sample quality vs steps", .log_x = true, .log_y = true}));

  write_text((fs::path(dir) / "diagnostics.txt").string(), rep.str());
  std::cout << rep.str();
  return 0;
}

int cmd_interpolate(const Globals& g, const std::string& source, const std::string& target, int checkpoints) {
  RunConfig cfg = load_config(g);
  if (!source.empty()) cfg.data.name = parse_dataset(source).name;
  if (!target.empty()) cfg.interpolation.target = target;
  const std::string dir = cfg.out;
  auto trainer = make_interpolation_trainer(cfg);
  run_training(*trainer, dir, &std::cout);

  const InterpolationTask task = interpolation_task(cfg);
  DatasetSpec src = task.source;
  src.n = 2000;
  src.seed = cfg.seed + 17;
  DatasetSpec tgt = task.target;
  tgt.n = 2000;
  tgt.seed = cfg.seed + 18;
  const Tensor xs = generate_dataset(src);
  const Tensor xt = generate_dataset(tgt);

  Rng rng(cfg.seed, 9);
  const TrajectoryBatch bridge = bridge_trajectory(trainer->eval_flow(cfg.eval.ode.use_ema), trainer->schedule(), xs, checkpoints, rng);
  std::vector<std::string> titles;
  for (std::size_t k = 0; k < bridge.states.size(); ++k) {
    std::ostringstream name;
    name << "bridge_" << k << ".csv";
    write_csv((fs::path(dir) / name.str()).string(), {"x0", "x1"}, bridge.states[k]);
    std::ostringstream t;
    t.precision(3);
    t << "t=" << bridge.times[k];
    titles.push_back(t.str());
  }
  write_text((fs::path(dir) / "bridge.svg").string(),
             svg_scatter(bridge.states, titles, {.width = 200, .height = 200}));

  EvalOptions eo = cfg.eval;
  eo.n_eval = std::min<Index>(eo.n_eval, xs.rows());
  eo.loss.use_ema = eo.ode.use_ema;
  const EvalReport src_rep = evaluate(trainer->eval_flow(eo.ode.use_ema), trainer->score(), trainer->schedule(), xs, eo);
  const double tgt_nll = interpolation_nll(trainer->eval_flow(eo.ode.use_ema), trainer->schedule(), xt).mean();
  const double scale = std::sqrt(xt.rowwise().squaredNorm().mean());
  const double endpoint_sw = sliced_wasserstein(bridge.states.back() / scale, xt / scale);

  std::ostringstream rep;
  rep.precision(10);
  rep << "source=" << task.source.name << "\ntarget=" << task.target.name << "\nsource_nll=" << src_rep.nll_corrected
      << "\nsource_nelbo=" << src_rep.nelbo_with_residual << "\ntarget_nll=" << tgt_nll
      << "\nendpoint_sliced_wasserstein=" << endpoint_sw << '\n';
  write_text((fs::path(dir) / "report.txt").string(), rep.str());
  std::cout << rep.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implicit nonlinear diffusion models on 2D toy data"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "Run configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory");
  app.fallthrough();

  auto* datasets = app.add_subcommand("datasets", "List or generate toy datasets");
  bool list = false;
  std::string ds_name;
  Index ds_n = 2000;
  datasets->add_flag("--list", list, "Print the generator names");
  datasets->add_option("--name", ds_name, "Dataset to write as CSV and SVG");
  datasets->add_option("-n", ds_n, "Number of points")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train a model from a config");
  std::string resume;
  train->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  auto* samp = app.add_subcommand("sample", "Draw samples from a checkpoint");
  std::string ckpt;
  Index n = 0;
  std::string method;
  int steps = 0;
  double temperature = 1.0;
  bool adaptive = false;
  samp->add_option("--checkpoint", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  samp->add_option("-n", n, "Number of samples");
  samp->add_option("--method", method, "pc or ode");
  samp->add_option("--steps", steps, "Predictor steps");
  auto* temp_opt = samp->add_option("--temperature", temperature, "Prior temperature");
  samp->add_flag("--adaptive-prior", adaptive, "Start from empirical latents instead of the Gaussian prior");

  auto* nll = app.add_subcommand("nll", "Likelihood report for a checkpoint");
  Index n_eval = 0;
  nll->add_option("--checkpoint", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  nll->add_option("--n-eval", n_eval, "Number of held-out points");

  auto* diag = app.add_subcommand("diagnose", "Latent geometry and transport diagnostics");
  Index diag_n = 1000;
  diag->add_option("--checkpoint", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  diag->add_option("-n", diag_n, "Number of data points")->check(CLI::PositiveNumber);

  auto* interp = app.add_subcommand("interpolate", "Train a bridge between two datasets");
  std::string source, target;
  int checkpoints = 8;
  interp->add_option("source", source, "Source dataset");
  interp->add_option("target", target, "Target dataset");
  interp->add_option("--checkpoints", checkpoints, "Bridge snapshots")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*datasets) return cmd_datasets(list, ds_name, ds_n, g);
    if (*train) return cmd_train(g, resume);
    if (*samp) return cmd_sample(g, ckpt, n, method, steps, *temp_opt ? std::optional<double>(temperature) : std::nullopt, adaptive);
    if (*nll) return cmd_nll(g, ckpt, n_eval);
    if (*diag) return cmd_diagnose(g, ckpt, diag_n);
    if (*interp) return cmd_interpolate(g, source, target, checkpoints);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
