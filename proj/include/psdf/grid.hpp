#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "psdf/domain.hpp"

namespace psdf {

// Tensor grid of cell centers over a bounded domain (midpoint rule).
struct GridSpec {
  Domain domain;
  std::vector<int> shape;  // cells per axis, shape.size() == domain.dim()

  GridSpec() = default;
  GridSpec(Domain d, std::vector<int> s) : domain(std::move(d)), shape(std::move(s)) {
    if (!domain.bounded()) throw InvariantError("grid requires a bounded domain");
    if (static_cast<int>(shape.size()) != domain.dim())
      throw InvariantError("grid shape rank does not match domain dimension");
    for (int n : shape)
      if (n <= 0) throw InvariantError("grid shape entries must be positive");
  }

  static GridSpec uniform(const Domain& d, int cells_per_axis) {
    return GridSpec(d, std::vector<int>(d.dim(), cells_per_axis));
  }

  int dim() const { return domain.dim(); }

  long long size() const {
    long long n = 1;
    for (int s : shape) n *= s;
    return n;
  }

  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim(); ++a) v *= (domain.hi()[a] - domain.lo()[a]) / shape[a];
    return v;
  }

  // Center coordinate of cell index i along axis a.
  double center(int a, int i) const {
    double h = (domain.hi()[a] - domain.lo()[a]) / shape[a];
    return domain.lo()[a] + (i + 0.5) * h;
  }

  // Center of the flat cell index (row-major over axes).
  Eigen::VectorXd point(long long flat) const {
    Eigen::VectorXd x(dim());
    for (int a = dim() - 1; a >= 0; --a) {
      x[a] = center(a, static_cast<int>(flat % shape[a]));
      flat /= shape[a];
    }
    return x;
  }

  // Flat index of the cell containing x, or -1 if outside the domain.
  long long cell_of(const Eigen::VectorXd& x) const {
    long long flat = 0;
    for (int a = 0; a < dim(); ++a) {
      double h = (domain.hi()[a] - domain.lo()[a]) / shape[a];
      double t = (x[a] - domain.lo()[a]) / h;
      if (t < 0.0 || x[a] > domain.hi()[a]) return -1;
      int i = std::min(static_cast<int>(t), shape[a] - 1);
      flat = flat * shape[a] + i;
    }
    return flat;
  }

  bool operator==(const GridSpec& o) const {
    if (shape != o.shape || domain.bounded() != o.domain.bounded()) return false;
    return domain.lo() == o.domain.lo() && domain.hi() == o.domain.hi();
  }
};

// Density values at grid cell centers.
struct GridDensity {
  GridSpec spec;
  Eigen::VectorXd values;  // spec.size() entries, row-major

  GridDensity() = default;
  GridDensity(GridSpec s, Eigen::VectorXd v) : spec(std::move(s)), values(std::move(v)) {
    if (values.size() != spec.size()) throw InvariantError("grid density size mismatch");
  }

  static GridDensity tabulate(const GridSpec& s, const std::function<double(const Eigen::VectorXd&)>& f) {
    Eigen::VectorXd v(s.size());
    for (long long i = 0; i < s.size(); ++i) v[i] = f(s.point(i));
    return GridDensity(s, std::move(v));
  }

  // Riemann mass (midpoint rule).
  double mass() const { return values.sum() * spec.cell_volume(); }

  GridDensity normalized() const {
    double m = mass();
    if (!(m > 0.0) || !std::isfinite(m)) throw NumericalError("grid density has nonpositive or non-finite mass");
    GridDensity out = *this;
    out.values /= m;
    return out;
  }
};

// Riemann TV distance between two densities on the same grid: integral of
// the absolute difference (range [0, 2] for probability densities).
inline double grid_tv(const GridDensity& p, const GridDensity& q) {
  if (!(p.spec == q.spec)) throw InvariantError("tv distance requires matching grids");
  return (p.values - q.values).cwiseAbs().sum() * p.spec.cell_volume();
}

}  // namespace psdf
