// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "indm/interpolation.hpp"
#include "indm/metrics.hpp"
#include "indm/optim.hpp"
#include "indm/training.hpp"

#include <cmath>
#include <numbers>

using namespace indm;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Flow perturbed_flow(std::uint64_t seed, double scale) {
  Rng rng(seed);
  FlowConfig fc;
  fc.couplings = 4;
  fc.hidden = 16;
  Flow f = Flow::coupling(2, fc, rng);
  for (std::size_t i = 0; i < f.params().size(); ++i) {
    auto v = f.params()[i].value;
    v.set_data(v.data() + scale * rng.normal(v.rows(), v.cols()));
  }
  return f;
}

}  // namespace

TEST_CASE("interpolation loss closed forms") {
  Schedule s;
  CHECK(interpolation_nll(Flow(2), s, Tensor::Zero(1, 2))(0, 0) == doctest::Approx(kLog2Pi).epsilon(1e-12));
  const Tensor y = Rng(1).normal(5, 2);
  for (double a : {0.5, 1.0, 3.0}) {
    const Tensor nll = interpolation_nll(Flow::scaling(2, a), s, y);
    for (Index i = 0; i < y.rows(); ++i) {
      const double expected = 0.5 * a * a * y.row(i).squaredNorm() + kLog2Pi - 2.0 * std::log(a);
      CHECK(nll(i, 0) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("the best scaling for a gaussian target is the inverse std") {
  Schedule s;
  const double sd = 0.4;
  const Tensor y = Rng(2).normal(50000, 2) * sd;
  double best_a = 0.0, best = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 400; ++k) {
    const double a = 1.0 + 3.0 * k / 400.0;
    const double loss = interpolation_nll(Flow::scaling(2, a), s, y).mean();
    if (loss < best) {
      best = loss;
      best_a = a;
    }
  }
  CHECK(best_a == doctest::Approx(1.0 / sd).epsilon(0.02));
}

TEST_CASE("the interpolation density integrates to one") {
  Schedule s;
  for (std::uint64_t seed : {3u, 4u}) {
    const Flow f = perturbed_flow(seed, 0.3);
    const int m = 400;
    const double lo = -8.0, hi = 8.0, h = (hi - lo) / m;
    Tensor grid(m * m, 2);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        grid(i * m + j, 0) = lo + (i + 0.5) * h;
        grid(i * m + j, 1) = lo + (j + 0.5) * h;
      }
    }
    const double mass = (-interpolation_nll(f, s, grid).array()).exp().sum() * h * h;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-2));
  }
}

TEST_CASE("a standard normal target keeps the flow at the identity") {
  Schedule s;
  Rng init(5);
  FlowConfig fc;
  fc.couplings = 2;
  fc.hidden = 16;
  Flow f = Flow::coupling(2, fc, init);
  Adam adam(f.params(), AdamConfig{});
  const Tensor held = Rng(6).normal(20000, 2);
  const double before = interpolation_nll(f, s, held).mean();
  Rng rng(7);
  for (int k = 0; k < 200; ++k) {
    ad::Value loss = ad::mean(interpolation_loss(f, s, ad::Value::constant(rng.normal(256, 2))));
    adam.step(f.params(), ad::grad(loss, f.params().trainable_values()));
  }
  const double after = interpolation_nll(f, s, held).mean();
  CHECK(after < before + 0.01);
  CHECK((f.forward_data(held) - held).cwiseAbs().maxCoeff() < 0.2);
}

TEST_CASE("an identity-flow bridge is plain forward blurring") {
  Schedule s;
  const Tensor x0 = Tensor::Constant(40000, 2, 1.5);
  Rng rng(8);
  const TrajectoryBatch tr = bridge_trajectory(Flow(2), s, x0, 4, rng);
  REQUIRE(tr.states.size() == 5);
  CHECK(tr.space == Space::Data);
  CHECK(tr.times.front() == s.eps());
  CHECK(tr.times.back() == doctest::Approx(s.T()));
  CHECK((tr.states.front() - x0).cwiseAbs().maxCoeff() < 0.05);
  for (std::size_t k = 0; k < tr.states.size(); ++k) {
    const double t = tr.times[k];
    const Moments m = sample_moments(tr.states[k]);
    const double var = s.var(t);
    const double se = std::sqrt(var / x0.rows());
    for (Index j = 0; j < 2; ++j) {
      CHECK(std::abs(m.mean(j) - 1.5 * s.mean_coef(t)) < 4.0 * se + 1e-12);
      CHECK(m.cov(j, j) == doctest::Approx(var).epsilon(0.05));
    }
  }
  CHECK_THROWS_AS(bridge_trajectory(Flow(2), s, x0, 0, rng), Error);
}

TEST_CASE("interpolation tasks") {
  RunConfig c;
  c.seed = 4;
  c.interpolation.target = "rings";
  const InterpolationTask task = interpolation_task(c);
  CHECK(task.source.name == "two-moons");
  CHECK(task.target.name == "rings");
  CHECK(task.target.seed == 5);
  CHECK(task.weight == 1.0);

  RunConfig bad = c;
  bad.data = parse_dataset("gaussian(0, 1)");
  bad.data.dim = 3;
  CHECK_THROWS_AS(interpolation_task(bad), ShapeError);
}

TEST_CASE("joint interpolation training stays finite") {
  RunConfig c;
  c.data.n = 2000;
  c.flow.couplings = 2;
  c.flow.hidden = 8;
  c.flow.hidden_layers = 1;
  c.score.hidden_layers = 1;
  c.score.hidden = 8;
  c.score.embed_dim = 4;
  c.train.batch_size = 16;
  c.train.steps = 2000;
  c.train.eval_every = 2000;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    c.seed = seed;
    auto t = make_interpolation_trainer(c);
    bool finite = true;
    for (int k = 0; k < 2000 && finite; ++k) {
      const StepLosses l = t->step();
      finite = std::isfinite(l.loss_flow) && std::isfinite(l.loss_score) && std::isfinite(l.interpolation);
    }
    CHECK(finite);
  }
}
