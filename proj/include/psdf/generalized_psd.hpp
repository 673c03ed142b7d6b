#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "psdf/domain.hpp"
#include "psdf/gaussian_psd.hpp"

namespace psdf {

// One Gaussian feature-pair term: exp(log_constant) * k_P(x, center) with
// k_P(x, y) = exp(-(x-y)^T P (x-y)), P symmetric positive definite.
struct GeneralizedEntry {
  double log_constant = 0.0;
  Eigen::VectorXd center;     // dim
  Eigen::MatrixXd precision;  // dim x dim, symmetric PD
};

// Generalized form with full per-pair precisions:
//
//   f(x) = exp(log_scale) * sum_ij weights(i,j) * B_ij(x),
//   B_ij(x) = exp(C_ij) * k_{P_ij}(x, x_ij),
//
// closed under products, partial evaluation and whole-space marginalization
// even when the precisions are anisotropic and anchor-pair dependent.
struct GeneralizedPsdModel {
  VariableGroups groups;
  Eigen::MatrixXd weights;  // order x order, symmetric PSD
  std::vector<GeneralizedEntry> entries;  // order*order, row-major, symmetric in (i,j)
  double log_scale = 0.0;

  int order() const { return static_cast<int>(weights.rows()); }
  int dim() const { return groups.total_dim(); }

  const GeneralizedEntry& entry(int i, int j) const { return entries[i * order() + j]; }
  GeneralizedEntry& entry(int i, int j) { return entries[i * order() + j]; }

  void validate() const;
};

double g_evaluate(const GeneralizedPsdModel& m, const Eigen::VectorXd& x);

// Integral over all of R^d: sum_ij w_ij exp(C_ij) pi^{d/2} det(P_ij)^{-1/2}.
double g_integral(const GeneralizedPsdModel& m);

// Pin the coordinates of `group` to `value` (completion of squares per entry).
GeneralizedPsdModel g_partial_eval(const GeneralizedPsdModel& m, const std::string& group,
                                   const Eigen::VectorXd& value);

// Pointwise product; shared groups are matched by name, output is over f's
// groups followed by g's new groups. Order = order(f) * order(g).
GeneralizedPsdModel g_product(const GeneralizedPsdModel& f, const GeneralizedPsdModel& g);

// Integrate `group` out over all of R^{d_group} (Schur complement per entry).
GeneralizedPsdModel g_marginalize(const GeneralizedPsdModel& m, const std::string& group);

// Scale so the all-space integral is 1.
GeneralizedPsdModel g_normalize(const GeneralizedPsdModel& m, double* z_out = nullptr);

GeneralizedPsdModel g_rename_group(const GeneralizedPsdModel& m, const std::string& from,
                                   const std::string& to);

// Exact re-expression of a shared-precision model: entries have precision
// diag(2 eta), centers at anchor midpoints, constants from the kernel-pair
// reduction.
GeneralizedPsdModel embed_psd(const GaussianPsdModel& m);

// Linear-Gaussian conditional p(y | x) = N(y; F x + b, Sigma).
struct ConditionalGaussianLinear {
  Eigen::MatrixXd F;      // d_out x d_in
  Eigen::VectorXd b;      // d_out
  Eigen::MatrixXd Sigma;  // d_out x d_out covariance, symmetric PD
  int dim_in() const { return static_cast<int>(F.cols()); }
  int dim_out() const { return static_cast<int>(F.rows()); }
};

// One Bayes step in closed form: the normalized posterior over `x_group` of
//   integral of q(u, x) g(x, y_obs) mu(u) du
// with whole-space marginals; output order is at most
// order(mu) * order(q) * order(g). Z <= 0 raises ZeroEvidenceError carrying
// `step_index`; `z_out` receives the evidence mass.
GeneralizedPsdModel g_filter_step(const GeneralizedPsdModel& mu, const GeneralizedPsdModel& q,
                                  const GeneralizedPsdModel& g, const Eigen::VectorXd& y_obs,
                                  int step_index = 0, double* z_out = nullptr,
                                  const std::string& u_group = "u",
                                  const std::string& y_group = "y");

// Order-1 model p_hat over (in_group, out_group) with the exact deformation
// identity p(y|x) / p_hat(x,y) = exp(lambda ||(x,y)||^2), so
// |p - p_hat| <= eps on the ball ||(x,y)|| <= R. lambda is chosen as
// log(1 + eps / p_max) / R^2 with p_max the Gaussian's peak density.
struct KalmanComponent {
  GeneralizedPsdModel model;
  double lambda = 0.0;
  double p_max = 0.0;
};
KalmanComponent kalman_component(const ConditionalGaussianLinear& p, double radius, double eps,
                                 const std::string& in_group = "x", const std::string& out_group = "y");

// Count of near-singular solves that needed jitter (diagnostic; reset at will).
long g_jitter_events();
void g_reset_jitter_events();

// Rank-one re-learning of a (near-)density model at a smaller order: fits
// sqrt of the normalized density on the domain by kernel ridge regression
// and returns the squared expansion, normalized. Defaults: kernel precision
// per coordinate = median entry precision / 2, lambda = 1e-10,
// n = max(64 * target_order, 512).
struct CompressOptions {
  int n = 0;            // 0 = auto
  double lambda = 1e-10;
  std::optional<Eigen::VectorXd> eta;
};
GaussianPsdModel compress(const GeneralizedPsdModel& m, int target_order, const Domain& domain,
                          std::uint64_t seed, const CompressOptions& opts = {});

}  // namespace psdf
