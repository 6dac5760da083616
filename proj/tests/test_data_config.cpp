// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "indm/checkpoint.hpp"
#include "indm/config.hpp"
#include "indm/datasets.hpp"
#include "indm/io.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

using namespace indm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("indm_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Connected components of the graph joining points closer than `radius`.
std::vector<Index> component_sizes(const Tensor& x, double radius) {
  const Index n = x.rows();
  std::vector<Index> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto find = [&](Index i) {
    while (parent[static_cast<std::size_t>(i)] != i) {
      parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
      i = parent[static_cast<std::size_t>(i)];
    }
    return i;
  };
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if ((x.row(i) - x.row(j)).norm() < radius) parent[static_cast<std::size_t>(find(i))] = find(j);
    }
  }
  std::map<Index, Index> sizes;
  for (Index i = 0; i < n; ++i) ++sizes[find(i)];
  std::vector<Index> out;
  for (const auto& [root, size] : sizes) out.push_back(size);
  return out;
}

}  // namespace

TEST_CASE("gaussian dataset moments") {
  DatasetSpec spec = parse_dataset("gaussian(0, 1)");
  spec.n = 100000;
  const Tensor x = generate_dataset(spec);
  for (Index j = 0; j < 2; ++j) {
    const double m = x.col(j).mean();
    const double v = (x.col(j).array() - m).square().mean();
    CHECK(std::abs(m) < 0.02);
    CHECK(std::abs(v - 1.0) < 0.02);
  }
  DatasetSpec shifted = parse_dataset(" gaussian( 2.5 , 0.5 ) ");
  CHECK(shifted.name == "gaussian");
  CHECK(shifted.mean == 2.5);
  CHECK(shifted.std == 0.5);
}

TEST_CASE("two moons has two balanced components") {
  DatasetSpec spec;
  spec.n = 1000;
  spec.seed = 3;
  const Tensor x = generate_dataset(spec);
  auto sizes = component_sizes(x, 0.2);
  REQUIRE(sizes.size() == 2);
  CHECK(std::abs(static_cast<double>(sizes[0]) - 500.0) <= 5.0);
  CHECK(std::abs(static_cast<double>(sizes[1]) - 500.0) <= 5.0);
}

TEST_CASE("generators are deterministic, finite and unit order") {
  for (const auto& name : dataset_names()) {
    DatasetSpec spec;
    spec.name = name;
    spec.n = 2000;
    spec.seed = 11;
    const Tensor a = generate_dataset(spec);
    const Tensor b = generate_dataset(spec);
    CHECK(a == b);
    CHECK(a.cols() == 2);
    CHECK(a.allFinite());
    CHECK(a.cwiseAbs().maxCoeff() < 4.0);
    spec.seed = 12;
    CHECK(generate_dataset(spec) != a);
  }
}

TEST_CASE("dataset errors") {
  DatasetSpec spec;
  spec.name = "swissroll";
  try {
    generate_dataset(spec);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("swissroll") != std::string::npos);
    for (const auto& name : dataset_names()) CHECK(msg.find(name) != std::string::npos);
  }
  spec.name = "two-moons";
  spec.n = 0;
  CHECK_THROWS_AS(generate_dataset(spec), Error);
}

TEST_CASE("config text round trip") {
  const std::string text = R"(
# a run
[run]
seed = 7
out = "runs/a"   # quoted

[data]
name = checkerboard
n = 1234

[sde]
kind = ve
sigma_max = 20

[flow]
couplings = 3
activation = swish

[train]
weighting = variance
lr_flow = 0.0005
steps = 300
pretrain_steps = 100
)";
  const RunConfig c = RunConfig::from(KeyValues::parse(text));
  CHECK(c.seed == 7);
  CHECK(c.out == "runs/a");
  CHECK(c.data.name == "checkerboard");
  CHECK(c.data.n == 1234);
  CHECK(c.sde.kind == SdeKind::VE);
  CHECK(c.sde.sigma_max == 20.0);
  CHECK(c.flow.couplings == 3);
  CHECK(c.flow.activation == Activation::Swish);
  CHECK(c.train.lr_flow == 0.0005);
  CHECK(c.train.pretrain_steps == 100);

  const RunConfig back = RunConfig::from(KeyValues::parse(c.to_text()));
  CHECK(back.to_text() == c.to_text());

  const RunConfig defaults = RunConfig::from(KeyValues{});
  CHECK(defaults.train.lr_flow == 1e-3);
  CHECK(defaults.train.lr_score == 2e-4);
  CHECK(defaults.train.batch_size == 512);
  CHECK(RunConfig::from(KeyValues::parse(defaults.to_text())).to_text() == defaults.to_text());
}

TEST_CASE("config errors") {
  try {
    RunConfig::from(KeyValues::parse("[train]\nstepz = 3\n"));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("train.stepz") != std::string::npos);
  }
  CHECK_THROWS_AS(RunConfig::from(KeyValues::parse("[train]\nsteps = 10\npretrain_steps = 20\n")), Error);
  CHECK_THROWS_AS(RunConfig::from(KeyValues::parse("[train]\nsteps = ten\n")), Error);
  CHECK_THROWS_AS(KeyValues::parse("[train\n"), Error);
  CHECK_THROWS_AS(KeyValues::parse("[train]\nsteps\n"), Error);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/indm.toml"), Error);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const fs::path dir = scratch_dir("ckpt");
  Checkpoint ck;
  ck.config_text = "[run]\nseed = 3\n";
  ck.step = 123456789012ULL;
  Tensor a(2, 3);
  a << 0.1, -0.0, std::numeric_limits<double>::denorm_min(), 1e308, -std::numeric_limits<double>::infinity(),
      std::nextafter(1.0, 2.0);
  ck.put("flow/a", a);
  ck.put("empty", Tensor(0, 4));
  ck.put("score/x", Rng(5).normal(7, 1));
  const std::string path = (dir / "c.indm").string();
  save_checkpoint(path, ck);
  CHECK_FALSE(fs::exists(path + ".tmp"));
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.config_text == ck.config_text);
  CHECK(back.step == ck.step);
  REQUIRE(back.arrays.size() == ck.arrays.size());
  for (std::size_t i = 0; i < ck.arrays.size(); ++i) {
    CHECK(back.arrays[i].first == ck.arrays[i].first);
    const Tensor& x = ck.arrays[i].second;
    const Tensor& y = back.arrays[i].second;
    REQUIRE(x.rows() == y.rows());
    REQUIRE(x.cols() == y.cols());
    CHECK(std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0);
  }
  CHECK(back.has("flow/a"));
  CHECK_FALSE(back.has("flow/b"));
  try {
    back.get("flow/b");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("flow/b") != std::string::npos);
  }
}

TEST_CASE("checkpoint loader rejects bad files") {
  const fs::path dir = scratch_dir("ckpt_bad");
  Checkpoint ck;
  ck.config_text = "x";
  ck.put("a", Tensor::Ones(3, 3));
  const std::string path = (dir / "c.indm").string();
  save_checkpoint(path, ck);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& content) {
    const std::string p = (dir / name).string();
    std::ofstream(p, std::ios::binary) << content;
    return p;
  };

  std::string version = bytes;
  version[4] = static_cast<char>(kCheckpointVersion + 1);
  try {
    load_checkpoint(write("version.indm", version));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(load_checkpoint(write("magic.indm", magic)), Error);
  CHECK_THROWS_AS(load_checkpoint(write("short.indm", bytes.substr(0, bytes.size() - 5))), Error);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.indm").string()), Error);
}

TEST_CASE("csv and svg output") {
  const fs::path dir = scratch_dir("io");
  const Tensor x = Rng(2).normal(50, 3);
  const std::string path = (dir / "sub" / "x.csv").string();
  write_csv(path, {"a", "b", "c"}, x);
  std::vector<std::string> header;
  const Tensor back = read_csv(path, &header);
  CHECK(header == std::vector<std::string>{"a", "b", "c"});
  CHECK(back == x);

  const std::string scatter = svg_scatter({x, 2.0 * x}, {"one", "two"});
  CHECK(scatter.rfind("<svg", 0) == 0);
  CHECK(scatter.find("one") != std::string::npos);
  CHECK(scatter.find("</svg>") != std::string::npos);
  Series s{"curve", {1, 10, 100}, {3, 2, 1}};
  PlotOptions opts;
  opts.log_x = true;
  const std::string lines = svg_lines({s}, opts);
  CHECK(lines.find("curve") != std::string::npos);
  CHECK(lines.find("nan") == std::string::npos);
}
