// SPDX-License-Identifier: Apache-2.0
//
// The nonlinear data-space diffusion induced by a flow, and geometry
// diagnostics of trained models.

#pragma once

#include "indm/flow.hpp"
#include "indm/ode.hpp"
#include "indm/rng.hpp"
#include "indm/score.hpp"
#include "indm/sde.hpp"

#include <vector>

namespace indm {

/// Drift f and volatility G of the data-space SDE x_t = h^-1(z_t):
/// f = -1/2 beta [dh]^-1 h(x) + 1/2 g^2 lap(h^-1)(h(x)), G = g [dh]^-1.
struct InducedCoefficients {
  Eigen::VectorXd drift;
  Eigen::MatrixXd volatility;
  Eigen::MatrixXd covariance;  // G G^T
};

/// Derivatives of h^-1 up to second order come from forward-mode jets, so
/// the Laplacian is exact up to rounding.
InducedCoefficients induced_coefficients(const Flow& flow, const Schedule& schedule, const Tensor& x,
                                         double t);

/// Batched form: drift (n x d) and one volatility matrix per row.
void induced_coefficients_batch(const Flow& flow, const Schedule& schedule, const Tensor& x, double t,
                                Tensor& drift, std::vector<Tensor>& volatility);

/// Euler-Maruyama simulation of the induced data SDE from t0 to t1.
Tensor simulate_induced_sde(const Flow& flow, const Schedule& schedule, const Tensor& x_start,
                            double t0, double t1, int steps, Rng& rng);

/// Exact latent simulation mapped back: h^-1(a z0 + s n) with the transition
/// from t0 to t1.
Tensor simulate_latent_mapped(const Flow& flow, const Schedule& schedule, const Tensor& x_start,
                              double t0, double t1, Rng& rng);

/// Sorted (ascending) eigenvalues of G G^T / g^2 per point, n x d.
Tensor covariance_eigen_spectrum(const Flow& flow, const Tensor& points);

struct CosinePoint {
  double t = 0.0;
  double cosine = 0.0;
};

/// Mean cosine between z_t - z_0 and z_T - z_0 along probability-flow ODE
/// paths started at h(x0), at n_checkpoints + 1 evenly spaced times.
std::vector<CosinePoint> trajectory_cosine_similarity(const Flow& flow, const ScoreModel& score,
                                                      const Schedule& schedule, const Tensor& x0,
                                                      int n_checkpoints, bool use_ema = true,
                                                      double rtol = 1e-5);

struct ManifoldNorms {
  double data = 0.0;    // mean |x|^2
  double latent = 0.0;  // mean |h(x)|^2
  double prior = 0.0;   // d, the Gaussian reference
};

ManifoldNorms manifold_norms(const Flow& flow, const Tensor& data);

struct RelativeEnergy {
  double kinetic = 0.0;
  double w2_squared = 0.0;
  double ratio = 0.0;
};

/// Kinetic energy (t1 - t0) * integral of E|v|^2 along the paths of dz/dt = v,
/// divided by the squared W2 distance between start and end points.
RelativeEnergy relative_energy_of_field(const OdeRhs& velocity, const Tensor& z_start, double t0,
                                        double t1, double rtol = 1e-6);

/// Relative energy of the latent probability-flow ODE from h(x0) at eps to T.
RelativeEnergy relative_energy(const Flow& flow, const ScoreModel& score, const Schedule& schedule,
                               const Tensor& x0, bool use_ema = true, double rtol = 1e-6);

}  // namespace indm
