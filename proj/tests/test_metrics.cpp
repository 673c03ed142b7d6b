// Tests for the distance functionals: total variation (tensor-grid and
// Monte Carlo), the Hilbert projective metric, the Birkhoff contraction
// bound, grid sup-norm error, and the comparison inequalities linking them.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "psdf/metrics.hpp"

using namespace psdf;

namespace {

constexpr double kPi = 3.141592653589793238462643383279503;

double std_normal_cdf(double z) { return 0.5 * (1.0 + std::erf(z / std::sqrt(2.0))); }

// Piecewise-constant density over a 1-D grid: value v[i] on cell i.
DensityFn piecewise(const GridSpec& grid, std::vector<double> v) {
  return [grid, v = std::move(v)](const Eigen::VectorXd& x) {
    const long long c = grid.cell_of(x);
    return c < 0 ? 0.0 : v[static_cast<size_t>(c)];
  };
}

std::vector<double> random_positive_values(Rng& rng, int n, double lo = 0.2, double hi = 3.0) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

double mass_of(const GridSpec& grid, const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s * grid.cell_volume();
}

}  // namespace

TEST_CASE("tv_distance: identical densities and disjoint supports") {
  const Domain dom = Domain::hypercube(1, -1.0, 1.0);
  const DensityFn gauss = [](const Eigen::VectorXd& x) { return std::exp(-4.0 * x[0] * x[0]); };
  CHECK(tv_distance(gauss, gauss, Quadrature::tensor(dom, 512)) <= 1e-12);

  // Unit masses on disjoint halves: integral of |p - q| = 2.
  const DensityFn left = [](const Eigen::VectorXd& x) { return x[0] < 0.0 ? 1.0 : 0.0; };
  const DensityFn right = [](const Eigen::VectorXd& x) { return x[0] >= 0.0 ? 1.0 : 0.0; };
  CHECK(tv_distance(left, right, Quadrature::tensor(dom, 8192)) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("tv_distance: shifted Gaussians match the closed form") {
  const double sigma = 0.1, delta = 0.05;
  const Domain dom = Domain::hypercube(1, -1.0, 1.0);
  const double c = 1.0 / (sigma * std::sqrt(2.0 * kPi));
  const DensityFn p = [&](const Eigen::VectorXd& x) {
    return c * std::exp(-0.5 * x[0] * x[0] / (sigma * sigma));
  };
  const DensityFn q = [&](const Eigen::VectorXd& x) {
    return c * std::exp(-0.5 * (x[0] - delta) * (x[0] - delta) / (sigma * sigma));
  };
  const double want = 2.0 * (2.0 * std_normal_cdf(delta / (2.0 * sigma)) - 1.0);
  CHECK(tv_distance(p, q, Quadrature::tensor(dom, 8192)) == doctest::Approx(want).epsilon(1e-4));
}

TEST_CASE("tv_distance: symmetry, triangle inequality, and range") {
  Rng rng(51, 0xC1);
  const Domain dom = Domain::hypercube(1, -1.0, 1.0);
  const GridSpec grid = GridSpec::uniform(dom, 64);
  const Quadrature quad = Quadrature::tensor(dom, 64);
  for (int t = 0; t < 40; ++t) {
    const DensityFn p = piecewise(grid, random_positive_values(rng, 64));
    const DensityFn q = piecewise(grid, random_positive_values(rng, 64));
    const DensityFn r = piecewise(grid, random_positive_values(rng, 64));
    const double pq = tv_distance(p, q, quad), qp = tv_distance(q, p, quad);
    CHECK(pq == doctest::Approx(qp).epsilon(1e-12));
    CHECK(pq >= 0.0);
    CHECK(pq <= tv_distance(p, r, quad) + tv_distance(r, q, quad) + 1e-9);
  }
}

TEST_CASE("tv_distance: Monte Carlo agrees with the tensor grid") {
  const Domain dom = Domain::hypercube(1, -1.0, 1.0);
  const DensityFn p = [](const Eigen::VectorXd& x) { return 0.5 + 0.4 * std::sin(3.0 * x[0]); };
  const DensityFn q = [](const Eigen::VectorXd& x) { return 0.6 - 0.2 * x[0]; };
  const double exact = tv_distance(p, q, Quadrature::tensor(dom, 4096));
  double se = 0.0;
  const double mc = tv_distance(p, q, Quadrature::monte_carlo(dom, 200000, 7), &se);
  CHECK(se > 0.0);
  CHECK(std::abs(mc - exact) <= 4.0 * se + 1e-3);
  // Deterministic given the seed.
  CHECK(tv_distance(p, q, Quadrature::monte_carlo(dom, 200000, 7)) == mc);
  CHECK_THROWS_AS(Quadrature::monte_carlo(dom, 10, 7), InvariantError);
  CHECK_THROWS_AS(Quadrature::tensor(Domain::hypercube(3, -1.0, 1.0), 8), InvariantError);
}

TEST_CASE("hilbert_metric: closed forms") {
  const Domain dom = Domain::hypercube(1, -1.0, 1.0);
  const GridSpec grid = GridSpec::uniform(dom, 128);
  const DensityFn q = [](const Eigen::VectorXd& x) { return 1.0 + 0.5 * x[0] * x[0]; };
  CHECK(hilbert_metric(q, q, grid) == doctest::Approx(0.0).epsilon(1e-12));

  // Ratio p/q stepping between exactly 1/2 and 2: h = log 4.
  const DensityFn p = [&](const Eigen::VectorXd& x) { return (x[0] > 0.0 ? 2.0 : 0.5) * q(x); };
  CHECK(hilbert_metric(p, q, grid) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // Projective invariance: scaling either argument changes nothing.
  const DensityFn cq = [&](const Eigen::VectorXd& x) { return 3.7 * q(x); };
  CHECK(std::abs(hilbert_metric(cq, q, grid)) <= 1e-12);

  // Nonpositive values make the densities non-comparable.
  const DensityFn dead = [](const Eigen::VectorXd& x) { return x[0] > 0.5 ? 0.0 : 1.0; };
  CHECK(std::isinf(hilbert_metric(dead, q, grid)));
}

TEST_CASE("birkhoff_bound: values and monotonicity") {
  CHECK(birkhoff_bound(1.0) == 0.0);
  CHECK(birkhoff_bound(1.0 / std::sqrt(3.0)) == doctest::Approx(0.5).epsilon(1e-12));
  double prev = 1.0;
  for (double sigma : {0.01, 0.1, 0.3, 0.6, 0.9, 1.0}) {
    const double tau = birkhoff_bound(sigma);
    CHECK(tau >= 0.0);
    CHECK(tau < 1.0);
    CHECK(tau < prev + 1e-15);  // decreasing in sigma
    prev = tau;
  }
  CHECK(birkhoff_bound(1e-9) > 1.0 - 1e-8);  // approaches 1 from below
  CHECK_THROWS_AS(birkhoff_bound(0.0), InvariantError);
  CHECK_THROWS_AS(birkhoff_bound(-0.2), InvariantError);
  CHECK_THROWS_AS(birkhoff_bound(1.2), InvariantError);
}

TEST_CASE("sup_error: closed forms and refinement consistency") {
  const Domain dom = Domain::hypercube(1, -1.0, 1.0);
  const GridSpec coarse = GridSpec::uniform(dom, 64), fine = GridSpec::uniform(dom, 256);
  const DensityFn f = [](const Eigen::VectorXd& x) { return std::sin(3.0 * x[0]); };
  const DensityFn g = [](const Eigen::VectorXd& x) { return std::sin(3.0 * x[0]) + 0.3; };
  CHECK(sup_error(f, f, coarse) == 0.0);
  CHECK(sup_error(f, g, coarse) == doctest::Approx(0.3).epsilon(1e-12));
  // Refinement can only reveal more sup: the coarse estimate is below the
  // fine one by at most the Lipschitz constant times the coarse step.
  const DensityFn zero = [](const Eigen::VectorXd&) { return 0.0; };
  const double step = 2.0 / 64.0;
  CHECK(sup_error(f, zero, coarse) >= sup_error(f, zero, fine) - 3.0 * step);
}

TEST_CASE("comparison: total variation against the Hilbert metric") {
  Rng rng(52, 0xC1);
  const Domain dom = Domain::hypercube(1, -1.0, 1.0);
  const GridSpec grid = GridSpec::uniform(dom, 32);
  const Quadrature quad = Quadrature::tensor(dom, 32);
  for (int t = 0; t < 200; ++t) {
    const auto pv = random_positive_values(rng, 32);
    const auto qv = random_positive_values(rng, 32);
    const double pm = mass_of(grid, pv), qm = mass_of(grid, qv);
    std::vector<double> pn(32), qn(32);
    for (int i = 0; i < 32; ++i) {
      pn[i] = pv[i] / pm;
      qn[i] = qv[i] / qm;
    }
    const DensityFn p = piecewise(grid, pv), q = piecewise(grid, qv);
    const DensityFn pbar = piecewise(grid, pn), qbar = piecewise(grid, qn);

    const double h = hilbert_metric(p, q, grid);
    const double tv_norm = tv_distance(pbar, qbar, quad);
    CHECK(tv_norm <= (2.0 / std::log(3.0)) * h + 1e-9);

    // Normalization inequality: the normalized difference is controlled by
    // the unnormalized one over the first mass.
    const double tv_raw = tv_distance(p, q, quad);
    CHECK(tv_norm <= 2.0 * tv_raw / pm + 1e-9);
  }
}

TEST_CASE("comparison: mixing kernels contract the Hilbert metric") {
  Rng rng(53, 0xC1);
  const Domain dom = Domain::hypercube(1, -1.0, 1.0);
  const GridSpec grid = GridSpec::uniform(dom, 32);
  const int n = 32;
  const double vol = grid.cell_volume();
  for (int t = 0; t < 100; ++t) {
    const double sigma = 0.2 + 0.8 * rng.u01();
    // K(u, x) = xi(x) * t(u, x) with t in [sigma, 1/sigma] is sigma-mixing.
    const auto xi = random_positive_values(rng, n, 0.5, 2.0);
    Eigen::MatrixXd k(n, n);  // k(x_index, u_index)
    for (int ix = 0; ix < n; ++ix)
      for (int iu = 0; iu < n; ++iu) k(ix, iu) = xi[ix] * rng.uniform(sigma, 1.0 / sigma);

    const auto mu = random_positive_values(rng, n);
    const auto nu = random_positive_values(rng, n);
    std::vector<double> kmu(n), knu(n);
    for (int ix = 0; ix < n; ++ix) {
      double smu = 0.0, snu = 0.0;
      for (int iu = 0; iu < n; ++iu) {
        smu += k(ix, iu) * mu[iu];
        snu += k(ix, iu) * nu[iu];
      }
      kmu[ix] = smu * vol;
      knu[ix] = snu * vol;
    }
    const double h_before = hilbert_metric(piecewise(grid, mu), piecewise(grid, nu), grid);
    const double h_after = hilbert_metric(piecewise(grid, kmu), piecewise(grid, knu), grid);
    CHECK(h_after <= birkhoff_bound(sigma) * h_before + 1e-9);
  }
}
