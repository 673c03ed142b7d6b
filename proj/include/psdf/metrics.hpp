#pragma once

#include <functional>

#include "psdf/grid.hpp"

namespace psdf {

using DensityFn = std::function<double(const Eigen::VectorXd&)>;

// Quadrature recipe for integral metrics: tensor midpoint grids up to 2-D,
// importance-sampled Monte Carlo beyond.
struct Quadrature {
  enum class Scheme { TensorGrid, MonteCarlo };

  Scheme scheme = Scheme::TensorGrid;
  Domain domain;
  int cells_per_axis = 256;      // tensor grid
  long long samples = 10000;     // Monte Carlo
  std::uint64_t seed = 1;        // Monte Carlo

  static Quadrature tensor(const Domain& d, int cells_per_axis) {
    Quadrature q;
    q.scheme = Scheme::TensorGrid;
    q.domain = d;
    q.cells_per_axis = cells_per_axis;
    if (d.dim() > 2) throw InvariantError("tensor-grid quadrature is limited to dimension <= 2");
    if (cells_per_axis < 2) throw InvariantError("tensor-grid quadrature needs at least 2 cells");
    return q;
  }

  static Quadrature monte_carlo(const Domain& d, long long samples, std::uint64_t seed) {
    Quadrature q;
    q.scheme = Scheme::MonteCarlo;
    q.domain = d;
    q.samples = samples;
    q.seed = seed;
    if (samples < 1000) throw InvariantError("Monte Carlo quadrature needs at least 1000 samples");
    return q;
  }
};

// integral over the domain of |p - q| (so 2 * the usual measure-TV for
// probability densities). Monte Carlo draws importance points from
// (p + q)/2 by rejection and reports a standard error through se_out.
double tv_distance(const DensityFn& p, const DensityFn& q, const Quadrature& quad,
                   double* se_out = nullptr);

// Hilbert projective distance log(max p/q) + log(max q/p) over grid points;
// +infinity if either ratio is unbounded (nonpositive values).
double hilbert_metric(const DensityFn& p, const DensityFn& q, const GridSpec& grid);

// Birkhoff contraction rate (1 - sigma^2) / (1 + sigma^2) for a
// sigma-mixing kernel.
double birkhoff_bound(double sigma);

// max over grid points of |f - g|.
double sup_error(const DensityFn& f, const DensityFn& g, const GridSpec& grid);

}  // namespace psdf
