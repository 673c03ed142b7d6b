#pragma once

#include <functional>
#include <string>

#include "psdf/grid.hpp"
#include "psdf/rng.hpp"

namespace psdf {

// Conditional density kernel K(input, output) with an optional exact sampler
// of output | input.
struct DensityKernel {
  int dim_in = 0;
  int dim_out = 0;
  std::function<double(const Eigen::VectorXd& in, const Eigen::VectorXd& out)> density;
  std::function<Eigen::VectorXd(const Eigen::VectorXd& in, Rng&)> sampler;  // may be empty
};

struct InitialDensity {
  int dim = 0;
  std::function<double(const Eigen::VectorXd&)> density;
  std::function<Eigen::VectorXd(Rng&)> sampler;  // may be empty
};

// Hidden Markov model on a bounded state domain: x_0 ~ nu,
// x_t ~ Q(x_{t-1}, .), y_t ~ G(x_t, .).
struct Hmm {
  Domain state_domain;
  Domain obs_domain;
  InitialDensity nu;
  DensityKernel transition;   // Q(u, x)
  DensityKernel observation;  // G(x, y)
};

// States x_1..x_T and observations y_1..y_T (one row per step); the
// unobserved initial state is kept separately.
struct Trajectory {
  Eigen::VectorXd initial_state;
  Eigen::MatrixXd states;        // T x d
  Eigen::MatrixXd observations;  // T x d_obs
  int length() const { return static_cast<int>(states.rows()); }
};

Trajectory simulate(const Hmm& hmm, int steps, std::uint64_t seed);

// CSV with header (t, x_0.., y_0..), rows t = 1..T.
std::string trajectory_csv(const Trajectory& t);

// One-step unnormalized filter kernel R_y(u, x) = Q(u, x) G(x, y).
DensityKernel optimal_kernel(const Hmm& hmm, const Eigen::VectorXd& y);

// Mixing sandwich estimate on tensor grids: with
//   xi(x) = sqrt(min_u R(u,x) * max_u R(u,x)),
//   sigma = min_x sqrt(min_u R(u,x) / max_u R(u,x)),
// sigma * xi <= R <= xi / sigma holds on the grid with the largest sigma for
// this xi; `slack` is the worst violation (0 up to rounding). A zero density
// value anywhere yields sigma = 0; negative values raise.
struct MixingEstimate {
  double sigma = 0.0;
  GridDensity xi;
  double slack = 0.0;
};
MixingEstimate estimate_mixing(const DensityKernel& r, const GridSpec& grid_u, const GridSpec& grid_x);

// Normal(mu, std^2) truncated and renormalized to [lo, hi]; zero outside.
double truncated_normal_density(double t, double mu, double std, double lo, double hi);

// Product of independent truncated normals around a state-dependent mean,
// renormalized on `out_domain` (with a rejection sampler).
DensityKernel truncated_gaussian_kernel(int dim_in, int dim_out, const Domain& out_domain,
                                        double std,
                                        std::function<Eigen::VectorXd(const Eigen::VectorXd&)> mean);

// Centered truncated normal initial density on `domain`.
InitialDensity truncated_gaussian_init(const Domain& domain, double std);

// --- bundled scenarios -------------------------------------------------------

// Truncated linear-Gaussian AR(1) on (-1,1): x' = a x + N(0, q_std^2),
// y = x + N(0, g_std^2), x_0 ~ N(0, init_std^2), each renormalized on the
// domain. Kalman-comparable when the noise keeps mass far from the walls.
Hmm make_lg1d(double a = 0.6, double q_std = 0.15, double g_std = 0.2, double init_std = 0.25);

// Same family with heavy noise so the mixing constant is far from zero.
Hmm make_mixing1d(double a = 0.3, double q_std = 0.6, double g_std = 0.5, double init_std = 0.5);

// Bimodal nonlinear transition: x' = s * 0.7 tanh(2x) + N(0, q_std^2) with a
// fair sign flip s (multimodality stressor); Gaussian observation.
Hmm make_bimodal1d(double q_std = 0.25, double g_std = 0.3, double init_std = 0.4);

// 2-D rotation + noise on (-1,1)^2: x' = 0.8 R(angle) x + noise,
// y = x + noise.
Hmm make_rot2d(double angle = 0.5, double contraction = 0.8, double q_std = 0.2,
               double g_std = 0.25, double init_std = 0.4);

// Scenario registry ("lg1d", "mixing1d", "bimodal1d", "rot2d").
Hmm make_scenario(const std::string& name);

}  // namespace psdf
