#pragma once

#include <functional>
#include <optional>

#include "psdf/gaussian_psd.hpp"
#include "psdf/generalized_psd.hpp"
#include "psdf/grid.hpp"

namespace psdf {

using TargetFn = std::function<double(const Eigen::VectorXd&)>;

// Accuracy knob for the rank-one learner. For target accuracy epsilon and
// smoothness beta > dim/2 the derived settings are
//   eta    = epsilon^{-2/beta} per coordinate,
//   lambda = epsilon^{(2 beta + dim)/beta},
//   m      = ceil(c_m * log(1/eps)^dim * log(1/eps) * eps^{-dim/beta}),
//   n      = ceil(c_n * eps^{-2 dim/beta}),
// clamped to m >= 1, n >= max(m, 1).
struct EpsilonSchedule {
  double epsilon = 0.1;
  double beta = 2.0;
  double c_m = 1.0;
  double c_n = 1.0;
};

struct Hyperparams {
  Eigen::VectorXd eta;  // kernel precision per coordinate
  double lambda = 0.0;  // ridge weight
  int m = 1;            // anchor count
  int n = 1;            // sample count
};

Hyperparams hyperparams_from_epsilon(const EpsilonSchedule& s, int dim);

// Ridge regression in the kernel feature span: minimize
//   (1/n) ||K_nm a - y||^2 + lambda a' K_mm a
// by normal equations with an escalating relative jitter
// (1e-12 .. 1e-6 of trace(K_mm)/m).
Eigen::VectorXd solve_krr(const Eigen::MatrixXd& k_nm, const Eigen::MatrixXd& k_mm,
                          const Eigen::VectorXd& y, double lambda);

struct LearnConfig {
  int n = 100;                // training samples
  int m = 10;                 // anchors
  Eigen::VectorXd eta;        // kernel precision per coordinate
  double lambda = 1e-8;
  std::uint64_t seed = 1;
  std::optional<Eigen::MatrixXd> anchors;  // override uniform anchor sampling

  static LearnConfig from_schedule(const EpsilonSchedule& s, int dim, std::uint64_t seed);
};

// Fit sqrt(f) by kernel ridge regression on uniform samples and square the
// expansion: returns a rank-one model with weights a a^T over `groups`.
GaussianPsdModel learn_rank_one(const TargetFn& f, const Domain& domain, const LearnConfig& cfg,
                                const VariableGroups& groups);

// For a conditional target f(u, v): anchor centers (u_i, argmax_v f(u_i, v))
// over tensor grids (ties resolved to the smallest index).
Eigen::MatrixXd init_anchors_conditional(const TargetFn& f, const GridSpec& grid_u,
                                         const GridSpec& grid_v);

// Initial parameters for the generalized learner. Missing pieces are filled
// deterministically from the seed: centers uniform on the domain, diagonal
// factors at `factor_scale`, coefficients at `alpha_scale`.
struct InitStrategy {
  std::optional<Eigen::VectorXd> alpha;                // m
  std::optional<Eigen::MatrixXd> centers;              // m x d
  std::optional<std::vector<Eigen::MatrixXd>> factors; // m factors R_j (d x d), P_j = R_j' R_j
  double factor_scale = 1.0;
  double alpha_scale = 0.5;

  static InitStrategy random() { return {}; }
  static InitStrategy from_centers(Eigen::MatrixXd c, double factor_scale_ = 1.0) {
    InitStrategy s;
    s.centers = std::move(c);
    s.factor_scale = factor_scale_;
    return s;
  }
};

// Fit f by the square of a free-precision kernel expansion
//   g(x) = sum_j alpha_j exp(-(x - mu_j)' R_j' R_j (x - mu_j)),
// minimizing the empirical loss (1/n) sum_i (f(x_i) - g(x_i)^2)^2 over
// (alpha, mu, R) with L-BFGS and Armijo backtracking for at most `budget`
// accepted iterations (budget 0 returns the initialization). Returns the
// rank-one generalized model g^2.
GeneralizedPsdModel learn_generalized(const TargetFn& f, int m, const InitStrategy& init, int budget,
                                      const Domain& domain, int n, std::uint64_t seed,
                                      const VariableGroups& groups);

}  // namespace psdf
