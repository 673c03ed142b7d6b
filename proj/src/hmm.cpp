#include "psdf/hmm.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "psdf/serialize.hpp"

namespace psdf {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
constexpr int kRejectionCap = 10000;

// P(a < Z < b) for standard normal, stable in the tails.
double norm_mass(double a, double b) {
  if (a >= 0.0) return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  if (b <= 0.0) return 0.5 * (std::erfc(-b * kInvSqrt2) - std::erfc(-a * kInvSqrt2));
  return 0.5 * (std::erf(b * kInvSqrt2) - std::erf(a * kInvSqrt2));
}

double truncated_normal_sample(double mu, double std, double lo, double hi, Rng& rng) {
  for (int i = 0; i < kRejectionCap; ++i) {
    double t = mu + std * rng.normal();
    if (t >= lo && t <= hi) return t;
  }
  throw NumericalError("rejection sampling exceeded its attempt budget");
}

}  // namespace

double truncated_normal_density(double t, double mu, double std, double lo, double hi) {
  if (t < lo || t > hi) return 0.0;
  const double z = (t - mu) / std;
  const double mass = norm_mass((lo - mu) / std, (hi - mu) / std);
  if (!(mass > 0.0)) throw NumericalError("truncated normal has vanishing mass on the domain");
  return kInvSqrt2Pi / std * std::exp(-0.5 * z * z) / mass;
}

DensityKernel truncated_gaussian_kernel(int dim_in, int dim_out, const Domain& out_domain, double std,
                                        std::function<Eigen::VectorXd(const Eigen::VectorXd&)> mean) {
  DensityKernel k;
  k.dim_in = dim_in;
  k.dim_out = dim_out;
  k.density = [out_domain, std, mean](const Eigen::VectorXd& in, const Eigen::VectorXd& out) {
    Eigen::VectorXd mu = mean(in);
    double d = 1.0;
    for (int c = 0; c < out.size(); ++c)
      d *= truncated_normal_density(out[c], mu[c], std, out_domain.lo()[c], out_domain.hi()[c]);
    return d;
  };
  k.sampler = [out_domain, std, mean](const Eigen::VectorXd& in, Rng& rng) {
    Eigen::VectorXd mu = mean(in);
    Eigen::VectorXd out(mu.size());
    for (int c = 0; c < mu.size(); ++c)
      out[c] = truncated_normal_sample(mu[c], std, out_domain.lo()[c], out_domain.hi()[c], rng);
    return out;
  };
  return k;
}

InitialDensity truncated_gaussian_init(const Domain& domain, double std) {
  InitialDensity nu;
  nu.dim = domain.dim();
  nu.density = [domain, std](const Eigen::VectorXd& x) {
    double d = 1.0;
    for (int c = 0; c < x.size(); ++c)
      d *= truncated_normal_density(x[c], 0.0, std, domain.lo()[c], domain.hi()[c]);
    return d;
  };
  nu.sampler = [domain, std](Rng& rng) {
    Eigen::VectorXd x(domain.dim());
    for (int c = 0; c < x.size(); ++c)
      x[c] = truncated_normal_sample(0.0, std, domain.lo()[c], domain.hi()[c], rng);
    return x;
  };
  return nu;
}

Trajectory simulate(const Hmm& hmm, int steps, std::uint64_t seed) {
  if (steps < 1) throw InvariantError("trajectory length must be positive");
  if (!hmm.nu.sampler || !hmm.transition.sampler || !hmm.observation.sampler)
    throw InvariantError("simulation requires samplers on nu, the transition and the observation");
  Rng rng(seed, 0x3101);
  Trajectory t;
  t.initial_state = hmm.nu.sampler(rng);
  t.states.resize(steps, hmm.state_domain.dim());
  t.observations.resize(steps, hmm.obs_domain.dim());
  Eigen::VectorXd x = t.initial_state;
  for (int k = 0; k < steps; ++k) {
    x = hmm.transition.sampler(x, rng);
    t.states.row(k) = x.transpose();
    t.observations.row(k) = hmm.observation.sampler(x, rng).transpose();
  }
  return t;
}

std::string trajectory_csv(const Trajectory& t) {
  std::ostringstream os;
  os << "t";
  for (int c = 0; c < t.states.cols(); ++c) os << ",x" << c;
  for (int c = 0; c < t.observations.cols(); ++c) os << ",y" << c;
  os << "\n";
  for (int k = 0; k < t.length(); ++k) {
    os << (k + 1);
    for (int c = 0; c < t.states.cols(); ++c) os << ',' << double_to_string(t.states(k, c));
    for (int c = 0; c < t.observations.cols(); ++c) os << ',' << double_to_string(t.observations(k, c));
    os << "\n";
  }
  return os.str();
}

DensityKernel optimal_kernel(const Hmm& hmm, const Eigen::VectorXd& y) {
  DensityKernel r;
  r.dim_in = hmm.transition.dim_in;
  r.dim_out = hmm.transition.dim_out;
  auto q = hmm.transition.density;
  auto g = hmm.observation.density;
  r.density = [q, g, y](const Eigen::VectorXd& u, const Eigen::VectorXd& x) {
    return q(u, x) * g(x, y);
  };
  return r;
}

MixingEstimate estimate_mixing(const DensityKernel& r, const GridSpec& grid_u, const GridSpec& grid_x) {
  const long long nu = grid_u.size(), nx = grid_x.size();
  Eigen::MatrixXd vals(nu, nx);
  for (long long i = 0; i < nu; ++i) {
    Eigen::VectorXd u = grid_u.point(i);
    for (long long j = 0; j < nx; ++j) {
      double v = r.density(u, grid_x.point(j));
      if (v < 0.0) throw NumericalError("kernel density is negative on the mixing grid");
      if (!std::isfinite(v)) throw NumericalError("kernel density is non-finite on the mixing grid");
      vals(i, j) = v;
    }
  }

  MixingEstimate est;
  Eigen::VectorXd xi(nx);
  double sigma = std::numeric_limits<double>::infinity();
  for (long long j = 0; j < nx; ++j) {
    const double lo = vals.col(j).minCoeff();
    const double hi = vals.col(j).maxCoeff();
    xi[j] = std::sqrt(lo * hi);
    sigma = std::min(sigma, hi > 0.0 ? std::sqrt(lo / hi) : 0.0);
  }
  est.sigma = std::isfinite(sigma) ? sigma : 0.0;
  est.xi = GridDensity(grid_x, xi);

  double slack = 0.0;
  for (long long j = 0; j < nx; ++j) {
    for (long long i = 0; i < nu; ++i) {
      slack = std::max(slack, est.sigma * xi[j] - vals(i, j));
      if (est.sigma > 0.0) slack = std::max(slack, vals(i, j) - xi[j] / est.sigma);
    }
  }
  est.slack = slack;
  return est;
}

Hmm make_lg1d(double a, double q_std, double g_std, double init_std) {
  Hmm h;
  h.state_domain = Domain::unit_cube(1);
  h.obs_domain = Domain::unit_cube(1);
  h.nu = truncated_gaussian_init(h.state_domain, init_std);
  h.transition = truncated_gaussian_kernel(1, 1, h.state_domain, q_std,
                                           [a](const Eigen::VectorXd& u) { return (a * u).eval(); });
  h.observation = truncated_gaussian_kernel(1, 1, h.obs_domain, g_std,
                                            [](const Eigen::VectorXd& x) { return x; });
  return h;
}

Hmm make_mixing1d(double a, double q_std, double g_std, double init_std) {
  return make_lg1d(a, q_std, g_std, init_std);
}

Hmm make_bimodal1d(double q_std, double g_std, double init_std) {
  Hmm h;
  h.state_domain = Domain::unit_cube(1);
  h.obs_domain = Domain::unit_cube(1);
  h.nu = truncated_gaussian_init(h.state_domain, init_std);
  const Domain sd = h.state_domain;
  h.transition.dim_in = 1;
  h.transition.dim_out = 1;
  h.transition.density = [sd, q_std](const Eigen::VectorXd& u, const Eigen::VectorXd& x) {
    const double m = 0.7 * std::tanh(2.0 * u[0]);
    return 0.5 * truncated_normal_density(x[0], m, q_std, sd.lo()[0], sd.hi()[0]) +
           0.5 * truncated_normal_density(x[0], -m, q_std, sd.lo()[0], sd.hi()[0]);
  };
  h.transition.sampler = [sd, q_std](const Eigen::VectorXd& u, Rng& rng) {
    const double sign = rng.u01() < 0.5 ? 1.0 : -1.0;
    const double m = sign * 0.7 * std::tanh(2.0 * u[0]);
    Eigen::VectorXd x(1);
    x[0] = truncated_normal_sample(m, q_std, sd.lo()[0], sd.hi()[0], rng);
    return x;
  };
  h.observation = truncated_gaussian_kernel(1, 1, h.obs_domain, g_std,
                                            [](const Eigen::VectorXd& x) { return x; });
  return h;
}

Hmm make_rot2d(double angle, double contraction, double q_std, double g_std, double init_std) {
  Hmm h;
  h.state_domain = Domain::unit_cube(2);
  h.obs_domain = Domain::unit_cube(2);
  h.nu = truncated_gaussian_init(h.state_domain, init_std);
  Eigen::Matrix2d rot;
  rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  rot *= contraction;
  h.transition = truncated_gaussian_kernel(
      2, 2, h.state_domain, q_std,
      [rot](const Eigen::VectorXd& u) { return (rot * u).eval(); });
  h.observation = truncated_gaussian_kernel(2, 2, h.obs_domain, g_std,
                                            [](const Eigen::VectorXd& x) { return x; });
  return h;
}

Hmm make_scenario(const std::string& name) {
  if (name == "lg1d") return make_lg1d();
  if (name == "mixing1d") return make_mixing1d();
  if (name == "bimodal1d") return make_bimodal1d();
  if (name == "rot2d") return make_rot2d();
  throw ConfigError("unknown scenario '" + name + "'");
}

}  // namespace psdf
