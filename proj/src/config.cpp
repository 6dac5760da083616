// SPDX-License-Identifier: Apache-2.0

#include "indm/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

namespace indm {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw Error("config: '" + key + "' expects a number, got '" + v + "'");
}

long to_long(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (x != static_cast<double>(static_cast<long>(x))) {
    throw Error("config: '" + key + "' expects an integer, got '" + v + "'");
  }
  return static_cast<long>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

std::string b(bool x) { return x ? "true" : "false"; }

}  // namespace

KeyValues KeyValues::parse(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    kv.values_[section.empty() ? key : section + "." + key] = value;
  }
  return kv;
}

KeyValues KeyValues::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

RunConfig RunConfig::from(const KeyValues& kv) {
  RunConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto num = [](double& dst) -> Setter { return [&dst](const std::string& k, const std::string& v) { dst = to_double(k, v); }; };
  auto lng = [](long& dst) -> Setter { return [&dst](const std::string& k, const std::string& v) { dst = to_long(k, v); }; };
  auto idx = [](Index& dst) -> Setter { return [&dst](const std::string& k, const std::string& v) { dst = to_long(k, v); }; };
  auto int_ = [](int& dst) -> Setter { return [&dst](const std::string& k, const std::string& v) { dst = static_cast<int>(to_long(k, v)); }; };
  auto boolean = [](bool& dst) -> Setter { return [&dst](const std::string& k, const std::string& v) { dst = to_bool(k, v); }; };
  auto str = [](std::string& dst) -> Setter { return [&dst](const std::string&, const std::string& v) { dst = v; }; };

  std::map<std::string, Setter> setters{
      {"run.seed", [&c](const std::string& k, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_long(k, v)); }},
      {"run.out", str(c.out)},
      {"data.name", [&c](const std::string&, const std::string& v) {
         DatasetSpec p = parse_dataset(v);
         c.data.name = p.name;
         if (p.name == "gaussian") {
           c.data.mean = p.mean;
           c.data.std = p.std;
         }
       }},
      {"data.n", idx(c.data.n)},
      {"data.noise", num(c.data.noise)},
      {"data.dim", idx(c.data.dim)},
      {"data.rings", int_(c.data.rings)},
      {"sde.kind", [&c](const std::string&, const std::string& v) { c.sde.kind = parse_sde_kind(v); }},
      {"sde.beta_min", num(c.sde.beta_min)},
      {"sde.beta_max", num(c.sde.beta_max)},
      {"sde.sigma_min", num(c.sde.sigma_min)},
      {"sde.sigma_max", num(c.sde.sigma_max)},
      {"sde.eps", num(c.sde.eps)},
      {"sde.T", num(c.sde.T)},
      {"flow.enabled", boolean(c.flow_enabled)},
      {"flow.couplings", int_(c.flow.couplings)},
      {"flow.hidden", idx(c.flow.hidden)},
      {"flow.hidden_layers", int_(c.flow.hidden_layers)},
      {"flow.activation", [&c](const std::string&, const std::string& v) { c.flow.activation = parse_activation(v); }},
      {"flow.s_max", num(c.flow.s_max)},
      {"flow.act_affine", boolean(c.flow.act_affine)},
      {"score.hidden_layers", int_(c.score.hidden_layers)},
      {"score.hidden", idx(c.score.hidden)},
      {"score.embed_dim", idx(c.score.embed_dim)},
      {"score.activation", [&c](const std::string&, const std::string& v) { c.score.activation = parse_activation(v); }},
      {"score.scale_by_sigma", boolean(c.score.scale_by_sigma)},
      {"score.ema_rate", num(c.score.ema_rate)},
      {"train.weighting", [&c](const std::string&, const std::string& v) { c.train.weighting = parse_weighting(v); }},
      {"train.lr_flow", num(c.train.lr_flow)},
      {"train.lr_score", num(c.train.lr_score)},
      {"train.batch_size", idx(c.train.batch_size)},
      {"train.steps", lng(c.train.steps)},
      {"train.pretrain_steps", lng(c.train.pretrain_steps)},
      {"train.eval_every", lng(c.train.eval_every)},
      {"train.n_t", int_(c.train.n_t)},
      {"train.importance_sampling", boolean(c.train.importance_sampling)},
      {"train.grad_clip", num(c.train.grad_clip)},
      {"train.lr_decay_step", lng(c.train.lr_decay_step)},
      {"train.lr_decay_to", num(c.train.lr_decay_to)},
      {"train.symmetry_weight", num(c.train.symmetry_weight)},
      {"train.train_flow", boolean(c.train.train_flow)},
      {"sample.method", [&c](const std::string&, const std::string& v) { c.sampler.method = parse_sampler_method(v); }},
      {"sample.predictor", [&c](const std::string&, const std::string& v) { c.sampler.predictor = parse_predictor(v); }},
      {"sample.n_steps", int_(c.sampler.n_steps)},
      {"sample.snr", num(c.sampler.snr)},
      {"sample.corrector_steps", int_(c.sampler.corrector_steps)},
      {"sample.temperature", num(c.sampler.temperature)},
      {"sample.t_min", num(c.sampler.t_min)},
      {"sample.final_sigma", num(c.sampler.final_sigma)},
      {"sample.ode_rtol", num(c.sampler.ode_rtol)},
      {"sample.use_ema", boolean(c.sampler.use_ema)},
      {"sample.n", idx(c.sample_n)},
      {"eval.n_eval", idx(c.eval.n_eval)},
      {"eval.rtol", num(c.eval.ode.ode.rtol)},
      {"eval.use_ema", boolean(c.eval.ode.use_ema)},
      {"eval.dequantization_offset", boolean(c.eval.dequantization_offset)},
      {"interpolate.target", str(c.interpolation.target)},
      {"interpolate.weight", num(c.interpolation.weight)},
  };
  for (const auto& [key, value] : kv.entries()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw Error("config: unknown key '" + key + "'");
    it->second(key, value);
  }
  c.data.seed = c.seed;
  c.eval.seed = c.seed;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) { return from(KeyValues::load(path)); }

void RunConfig::validate() const {
  if (train.steps < train.pretrain_steps || train.pretrain_steps < 0) {
    throw Error("config: need steps >= pretrain_steps >= 0");
  }
  if (train.batch_size <= 0) throw Error("config: batch_size must be positive");
  if (data.n <= 0) throw Error("config: data.n must be positive");
  if (train.n_t < 1) throw Error("config: n_t must be at least 1");
  if (!(score.ema_rate >= 0.0 && score.ema_rate <= 1.0)) throw Error("config: ema_rate must lie in [0, 1]");
  if (train.eval_every <= 0) throw Error("config: eval_every must be positive");
  Schedule check(sde);
  (void)check;
  if (data.name != "gaussian") {
    bool known = false;
    for (const auto& n : dataset_names()) known = known || n == data.name;
    if (!known) generate_dataset({.name = data.name, .n = 1});
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  auto pred = [](PredictorKind p) {
    return p == PredictorKind::EulerMaruyama ? "euler-maruyama" : p == PredictorKind::ReverseDiffusion ? "reverse-diffusion" : "none";
  };
  const std::string data_name = data.name == "gaussian"
                                    ? "gaussian(" + fmt(data.mean) + ", " + fmt(data.std) + ")"
                                    : data.name;
  os << "[run]\nseed = " << seed << "\nout = \"" << out << "\"\n\n"
     << "[data]\nname = \"" << data_name << "\"\nn = " << data.n << "\nnoise = " << fmt(data.noise)
     << "\ndim = " << data.dim << "\nrings = " << data.rings << "\n\n"
     << "[sde]\nkind = " << sde_kind_name(sde.kind) << "\nbeta_min = " << fmt(sde.beta_min)
     << "\nbeta_max = " << fmt(sde.beta_max) << "\nsigma_min = " << fmt(sde.sigma_min)
     << "\nsigma_max = " << fmt(sde.sigma_max) << "\neps = " << fmt(sde.eps) << "\nT = " << fmt(sde.T) << "\n\n"
     << "[flow]\nenabled = " << b(flow_enabled) << "\ncouplings = " << flow.couplings
     << "\nhidden = " << flow.hidden << "\nhidden_layers = " << flow.hidden_layers
     << "\nactivation = " << activation_name(flow.activation) << "\ns_max = " << fmt(flow.s_max)
     << "\nact_affine = " << b(flow.act_affine) << "\n\n"
     << "[score]\nhidden_layers = " << score.hidden_layers << "\nhidden = " << score.hidden
     << "\nembed_dim = " << score.embed_dim << "\nactivation = " << activation_name(score.activation)
     << "\nscale_by_sigma = " << b(score.scale_by_sigma) << "\nema_rate = " << fmt(score.ema_rate) << "\n\n"
     << "[train]\nweighting = " << weighting_name(train.weighting) << "\nlr_flow = " << fmt(train.lr_flow)
     << "\nlr_score = " << fmt(train.lr_score) << "\nbatch_size = " << train.batch_size
     << "\nsteps = " << train.steps << "\npretrain_steps = " << train.pretrain_steps
     << "\neval_every = " << train.eval_every << "\nn_t = " << train.n_t
     << "\nimportance_sampling = " << b(train.importance_sampling) << "\ngrad_clip = " << fmt(train.grad_clip)
     << "\nlr_decay_step = " << train.lr_decay_step << "\nlr_decay_to = " << fmt(train.lr_decay_to)
     << "\nsymmetry_weight = " << fmt(train.symmetry_weight) << "\ntrain_flow = " << b(train.train_flow) << "\n\n"
     << "[sample]\nmethod = " << (sampler.method == SamplerMethod::PC ? "pc" : "ode")
     << "\npredictor = " << pred(sampler.predictor) << "\nn_steps = " << sampler.n_steps
     << "\nsnr = " << fmt(sampler.snr) << "\ncorrector_steps = " << sampler.corrector_steps
     << "\ntemperature = " << fmt(sampler.temperature) << "\nt_min = " << fmt(sampler.t_min)
     << "\nfinal_sigma = " << fmt(sampler.final_sigma) << "\node_rtol = " << fmt(sampler.ode_rtol)
     << "\nuse_ema = " << b(sampler.use_ema) << "\nn = " << sample_n << "\n\n"
     << "[eval]\nn_eval = " << eval.n_eval << "\nrtol = " << fmt(eval.ode.ode.rtol)
     << "\nuse_ema = " << b(eval.ode.use_ema) << "\ndequantization_offset = " << b(eval.dequantization_offset) << "\n\n"
     << "[interpolate]\ntarget = \"" << interpolation.target << "\"\nweight = " << fmt(interpolation.weight) << "\n";
  return os.str();
}

}  // namespace indm
