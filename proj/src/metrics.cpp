#include "psdf/metrics.hpp"

#include <cmath>
#include <limits>

#include "psdf/rng.hpp"

namespace psdf {

namespace {

double tv_tensor(const DensityFn& p, const DensityFn& q, const Quadrature& quad) {
  GridSpec grid = GridSpec::uniform(quad.domain, quad.cells_per_axis);
  double acc = 0.0;
  for (long long i = 0; i < grid.size(); ++i) {
    Eigen::VectorXd x = grid.point(i);
    acc += std::abs(p(x) - q(x));
  }
  return acc * grid.cell_volume();
}

double tv_monte_carlo(const DensityFn& p, const DensityFn& q, const Quadrature& quad, double* se_out) {
  if (!quad.domain.bounded()) throw InvariantError("Monte Carlo TV needs a bounded domain");
  Rng rng(quad.seed, 0x7601);
  const double volume = quad.domain.volume();

  // Envelope for rejection sampling from mu = (p + q)/2.
  double sup = 0.0;
  for (int i = 0; i < 4096; ++i) {
    Eigen::VectorXd x = quad.domain.sample(rng);
    sup = std::max(sup, 0.5 * (p(x) + q(x)));
  }
  if (!(sup > 0.0)) throw NumericalError("densities vanish on the probe sample");
  sup *= 2.0;  // safety margin; values above the envelope clip conservatively

  long long accepted = 0, attempts = 0;
  const long long max_attempts = 1000 * quad.samples;
  double sum = 0.0, sumsq = 0.0;
  while (accepted < quad.samples && attempts < max_attempts) {
    ++attempts;
    Eigen::VectorXd x = quad.domain.sample(rng);
    double mu = 0.5 * (p(x) + q(x));
    if (rng.u01() * sup >= mu) continue;
    ++accepted;
    double ratio = mu > 0.0 ? std::abs(p(x) - q(x)) / mu : 0.0;
    sum += ratio;
    sumsq += ratio * ratio;
  }
  if (accepted < quad.samples)
    throw NumericalError("rejection sampling for Monte Carlo TV exceeded the attempt budget");

  // mass of mu estimated from the acceptance rate; TV = mass * E[|p-q|/mu].
  const double mass = sup * volume * static_cast<double>(accepted) / static_cast<double>(attempts);
  const double mean = sum / accepted;
  const double var = std::max(0.0, sumsq / accepted - mean * mean);
  if (se_out) *se_out = mass * std::sqrt(var / accepted);
  return mass * mean;
}

}  // namespace

double tv_distance(const DensityFn& p, const DensityFn& q, const Quadrature& quad, double* se_out) {
  if (quad.scheme == Quadrature::Scheme::TensorGrid) {
    if (se_out) *se_out = 0.0;
    return tv_tensor(p, q, quad);
  }
  return tv_monte_carlo(p, q, quad, se_out);
}

double hilbert_metric(const DensityFn& p, const DensityFn& q, const GridSpec& grid) {
  double max_pq = 0.0, max_qp = 0.0;
  for (long long i = 0; i < grid.size(); ++i) {
    Eigen::VectorXd x = grid.point(i);
    double pv = p(x), qv = q(x);
    if (pv <= 0.0 || qv <= 0.0) return std::numeric_limits<double>::infinity();
    max_pq = std::max(max_pq, pv / qv);
    max_qp = std::max(max_qp, qv / pv);
  }
  return std::log(max_pq) + std::log(max_qp);
}

double birkhoff_bound(double sigma) {
  if (!(sigma > 0.0 && sigma <= 1.0)) throw InvariantError("mixing constant must lie in (0, 1]");
  return (1.0 - sigma * sigma) / (1.0 + sigma * sigma);
}

double sup_error(const DensityFn& f, const DensityFn& g, const GridSpec& grid) {
  double sup = 0.0;
  for (long long i = 0; i < grid.size(); ++i) {
    Eigen::VectorXd x = grid.point(i);
    sup = std::max(sup, std::abs(f(x) - g(x)));
  }
  return sup;
}

}  // namespace psdf
