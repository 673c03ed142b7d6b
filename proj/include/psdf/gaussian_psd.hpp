#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

#include "psdf/domain.hpp"

namespace psdf {

// Non-negative function represented as a quadratic form in Gaussian features:
//
//   f(x) = exp(log_scale) * phi(x)^T weights phi(x),
//   phi_i(x) = exp(-sum_c precision[c] * (x[c] - anchors(i, c))^2).
//
// `weights` is symmetric PSD (up to an eigenvalue dust band of
// -1e-10 * trace), `precision` is positive per coordinate and shared by all
// anchors, and `groups` names the coordinate layout. The global log_scale
// absorbs the constants produced by products/partial evaluations so the
// weight matrix stays well-scaled.
struct GaussianPsdModel {
  VariableGroups groups;
  Eigen::MatrixXd anchors;    // order x dim
  Eigen::VectorXd precision;  // dim
  Eigen::MatrixXd weights;    // order x order, symmetric PSD
  double log_scale = 0.0;

  int order() const { return static_cast<int>(anchors.rows()); }
  int dim() const { return static_cast<int>(anchors.cols()); }

  void validate() const;
};

// --- evaluation --------------------------------------------------------------

// f(x); tiny negative rounding noise is clamped to 0, anything below the
// dust band raises NumericalError.
double evaluate(const GaussianPsdModel& m, const Eigen::VectorXd& x);

// f at each row of X.
Eigen::VectorXd evaluate_rows(const GaussianPsdModel& m, const Eigen::MatrixXd& X);

// --- closed-form operations --------------------------------------------------

// Integral of f over the domain (all-space or box), via per-coordinate
// Gaussian/erf factors on anchor pairs. O(order^2 * dim).
double integral(const GaussianPsdModel& m, const Domain& domain);

// f with the coordinates of `group` pinned to `value`; kernel factors are
// absorbed symmetrically into the weights. Output order <= order.
GaussianPsdModel partial_eval(const GaussianPsdModel& m, const std::string& group,
                              const Eigen::VectorXd& value);

// Pointwise product. Shared variable groups (matched by name) add their
// precisions; the output is over f's groups followed by g's new groups.
// Output order <= order(f) * order(g).
GaussianPsdModel product(const GaussianPsdModel& f, const GaussianPsdModel& g);

// Integrate out `group` over `group_domain` (a domain of that group's
// dimension). The pairwise integral factors fold into the weights; anchors
// that coincide on the remaining coordinates are merged, so chained
// product+marginalize collapses to the transition order.
GaussianPsdModel marginalize(const GaussianPsdModel& m, const std::string& group,
                             const Domain& group_domain);

// g(x) = integral over u of transition(u, x) * density(u) du. `transition`
// is over groups (u_group, ...), `density` over (u_group). Output order
// equals order(transition) up to pruning.
GaussianPsdModel markov_step(const GaussianPsdModel& transition, const GaussianPsdModel& density,
                             const std::string& u_group, const Domain& u_domain);

// Scale so the integral over `domain` is 1; the mass is returned through
// z_out when given. Z <= 0 or non-finite raises NumericalError.
GaussianPsdModel normalize(const GaussianPsdModel& m, const Domain& domain, double* z_out = nullptr);

// --- constructors ------------------------------------------------------------

// Gaussian mixture density as a diagonal-weight model. `precisions` are
// standard inverse variances per coordinate (shared by all components);
// evaluate() reproduces the mixture density exactly.
GaussianPsdModel from_gmm(const Eigen::VectorXd& mixture_weights, const Eigen::MatrixXd& means,
                          const Eigen::VectorXd& precisions, const VariableGroups& groups);

// Square of a linear kernel expansion: f = (sum_i w_i k(x, anchor_i))^2,
// i.e. weights = w w^T.
GaussianPsdModel from_linear_square(const Eigen::VectorXd& w, const Eigen::MatrixXd& anchors,
                                    const Eigen::VectorXd& precision, const VariableGroups& groups);

// --- helpers -----------------------------------------------------------------

// Rename a variable group (no numeric change).
GaussianPsdModel rename_group(const GaussianPsdModel& m, const std::string& from, const std::string& to);

// Merge bit-identical anchors (congruence, exact) and drop anchors whose
// weight row is uniformly below 1e-14 * max|weights| (principal submatrix).
GaussianPsdModel compact(const GaussianPsdModel& m);

// log of integral over [lo, hi] of exp(-p * (t - center)^2) dt  (p > 0);
// hi/lo may be +/-infinity. Robust for centers far outside the interval.
double log_gauss_segment(double p, double center, double lo, double hi);

}  // namespace psdf
