#include "psdf/filtering.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "psdf/serialize.hpp"

namespace psdf {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

long long now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::string trace_csv(const FilterTrace& trace, std::uint64_t config_hash, bool include_wall) {
  std::ostringstream os;
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(config_hash));
  os << "# config_hash=" << hex << "\n";
  os << "step,method,order_or_N,Z,tv_to_oracle";
  if (include_wall) os << ",wall_ns";
  os << "\n";
  for (const auto& s : trace.steps) {
    os << s.step << ',' << s.method << ',' << s.order_or_n << ',' << double_to_string(s.z) << ','
       << double_to_string(s.tv_to_oracle);
    if (include_wall) os << ',' << s.wall_ns;
    os << "\n";
  }
  return os.str();
}

// --- PSD filter ----------------------------------------------------------------

GaussianPsdModel psd_filter_step(const GaussianPsdModel& q, const GaussianPsdModel& g,
                                 const GaussianPsdModel& prior, const Eigen::VectorXd& y,
                                 const Domain& state_domain, int step_index, double* z_out,
                                 const std::string& u_group, const std::string& x_group,
                                 const std::string& y_group) {
  GaussianPsdModel joint = product(prior, q);
  GaussianPsdModel predicted = marginalize(joint, u_group, state_domain);
  GaussianPsdModel likelihood = partial_eval(g, y_group, y);
  GaussianPsdModel posterior = product(predicted, likelihood);
  double z = integral(posterior, state_domain);
  if (!(z > 0.0) || !std::isfinite(z)) throw ZeroEvidenceError(step_index);
  if (z_out) *z_out = z;
  posterior.log_scale -= std::log(z);
  return rename_group(posterior, x_group, u_group);
}

FilterTrace psd_filter_run(const GaussianPsdModel& q, const GaussianPsdModel& g,
                           const GaussianPsdModel& prior, const Eigen::MatrixXd& observations,
                           const Domain& state_domain) {
  FilterTrace trace;
  GaussianPsdModel post = prior;
  for (int k = 0; k < observations.rows(); ++k) {
    const long long t0 = now_ns();
    double z = 0.0;
    post = psd_filter_step(q, g, post, observations.row(k).transpose(), state_domain, k + 1, &z);
    const long long t1 = now_ns();
    FilterStepRecord rec;
    rec.step = k + 1;
    rec.method = "psd";
    rec.order_or_n = post.order();
    rec.z = z;
    rec.wall_ns = t1 - t0;
    rec.posterior = post;
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

// --- generalized filter ----------------------------------------------------------

FilterTrace generalized_filter_run(const GeneralizedPsdModel& q, const GeneralizedPsdModel& g,
                                   const GeneralizedPsdModel& prior, const Eigen::MatrixXd& observations,
                                   int target_order, const Domain& state_domain, std::uint64_t seed,
                                   CompressMode mode) {
  if (target_order < 1) throw InvariantError("target order must be positive");
  FilterTrace trace;
  GeneralizedPsdModel post = prior;
  for (int k = 0; k < observations.rows(); ++k) {
    const long long t0 = now_ns();
    double z = 0.0;
    GeneralizedPsdModel posterior =
        g_filter_step(post, q, g, observations.row(k).transpose(), k + 1, &z);
    if (mode == CompressMode::Always ||
        (mode == CompressMode::Auto && posterior.order() > target_order)) {
      GaussianPsdModel packed =
          compress(posterior, target_order, state_domain, seed + static_cast<std::uint64_t>(k));
      posterior = g_normalize(embed_psd(packed));
    }
    post = g_rename_group(posterior, "x", "u");
    const long long t1 = now_ns();
    FilterStepRecord rec;
    rec.step = k + 1;
    rec.method = "generalized";
    rec.order_or_n = post.order();
    rec.z = z;
    rec.wall_ns = t1 - t0;
    rec.posterior = post;
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

// --- Kalman ----------------------------------------------------------------------

FilterTrace kalman_filter_run(const KalmanParams& p, const Eigen::MatrixXd& observations) {
  const int d = static_cast<int>(p.mean0.size());
  FilterTrace trace;
  Eigen::VectorXd mean = p.mean0;
  Eigen::MatrixXd cov = p.cov0;
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
  for (int k = 0; k < observations.rows(); ++k) {
    const long long t0 = now_ns();
    Eigen::VectorXd mp = p.F * mean + p.b;
    Eigen::MatrixXd cp = p.F * cov * p.F.transpose() + p.q_cov;
    Eigen::VectorXd y = observations.row(k).transpose();
    Eigen::VectorXd innov = y - (p.H * mp + p.c);
    Eigen::MatrixXd s = p.H * cp * p.H.transpose() + p.g_cov;
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) throw NumericalError("singular innovation covariance");
    Eigen::MatrixXd gain = cp * p.H.transpose() * llt.solve(Eigen::MatrixXd::Identity(s.rows(), s.cols()));
    mean = mp + gain * innov;
    Eigen::MatrixXd ikh = id - gain * p.H;
    cov = ikh * cp * ikh.transpose() + gain * p.g_cov * gain.transpose();  // Joseph form

    // predictive likelihood of y_k
    double logdet = 0.0;
    for (int i = 0; i < s.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    double z = std::exp(-0.5 * innov.dot(llt.solve(innov)) - 0.5 * logdet -
                        0.5 * s.rows() * std::log(kTwoPi));
    const long long t1 = now_ns();

    FilterStepRecord rec;
    rec.step = k + 1;
    rec.method = "kalman";
    rec.order_or_n = d;
    rec.z = z;
    rec.wall_ns = t1 - t0;
    rec.posterior = KalmanState{mean, cov};
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

// --- particle filter ---------------------------------------------------------------

FilterTrace particle_filter_run(const Hmm& hmm, int particles, const Eigen::MatrixXd& observations,
                                std::uint64_t seed) {
  if (particles < 1) throw InvariantError("particle count must be positive");
  if (!hmm.nu.sampler || !hmm.transition.sampler)
    throw InvariantError("particle filtering requires nu and transition samplers");
  const int d = hmm.state_domain.dim();
  Rng rng(seed, 0x4201);

  Eigen::MatrixXd cloud(particles, d);
  for (int i = 0; i < particles; ++i) cloud.row(i) = hmm.nu.sampler(rng).transpose();

  FilterTrace trace;
  Eigen::VectorXd weights(particles);
  Eigen::MatrixXd next(particles, d);
  for (int k = 0; k < observations.rows(); ++k) {
    const long long t0 = now_ns();
    Eigen::VectorXd y = observations.row(k).transpose();
    for (int i = 0; i < particles; ++i) {
      next.row(i) = hmm.transition.sampler(cloud.row(i).transpose(), rng).transpose();
      weights[i] = hmm.observation.density(next.row(i).transpose(), y);
    }
    double total = weights.sum();
    if (!(total > 0.0) || !std::isfinite(total)) throw ZeroEvidenceError(k + 1);
    Eigen::VectorXd norm_w = weights / total;

    // multinomial resampling
    Eigen::VectorXd cdf(particles);
    double acc = 0.0;
    for (int i = 0; i < particles; ++i) {
      acc += norm_w[i];
      cdf[i] = acc;
    }
    cdf[particles - 1] = 1.0;
    for (int i = 0; i < particles; ++i) {
      double u = rng.u01();
      int lo = 0, hi = particles - 1;
      while (lo < hi) {
        int mid = (lo + hi) / 2;
        if (cdf[mid] < u)
          lo = mid + 1;
        else
          hi = mid;
      }
      cloud.row(i) = next.row(lo);
    }
    const long long t1 = now_ns();

    FilterStepRecord rec;
    rec.step = k + 1;
    rec.method = "particle";
    rec.order_or_n = particles;
    rec.z = total / particles;
    rec.wall_ns = t1 - t0;
    rec.posterior = ParticleCloud{next, norm_w};
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

// --- grid filter -------------------------------------------------------------------

FilterTrace grid_filter_run(const std::function<double(const Eigen::VectorXd&)>& prior_density,
                            const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& transition,
                            const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& observation,
                            const Eigen::MatrixXd& observations, const GridSpec& grid) {
  if (grid.dim() > 2) throw InvariantError("grid filtering is limited to dimension <= 2");
  const long long n = grid.size();
  // The dense transition matrix is n x n; 4096 cells tops out at 128 MiB.
  if (n > 4096) throw InvariantError("grid filter resolution cap exceeded (4096 cells)");
  const double vol = grid.cell_volume();

  // Transition matrix T(x_cell, u_cell), tabulated once.
  Eigen::MatrixXd trans(n, n);
  for (long long iu = 0; iu < n; ++iu) {
    Eigen::VectorXd u = grid.point(iu);
    for (long long ix = 0; ix < n; ++ix) trans(ix, iu) = transition(u, grid.point(ix));
  }

  Eigen::VectorXd density(n);
  for (long long i = 0; i < n; ++i) density[i] = prior_density(grid.point(i));
  double mass = density.sum() * vol;
  if (!(mass > 0.0)) throw NumericalError("prior density has no mass on the grid");
  density /= mass;

  FilterTrace trace;
  for (int k = 0; k < observations.rows(); ++k) {
    const long long t0 = now_ns();
    Eigen::VectorXd y = observations.row(k).transpose();
    Eigen::VectorXd predicted = trans * density * vol;
    for (long long i = 0; i < n; ++i) predicted[i] *= observation(grid.point(i), y);
    double z = predicted.sum() * vol;
    if (!(z > 0.0) || !std::isfinite(z)) throw ZeroEvidenceError(k + 1);
    density = predicted / z;
    const long long t1 = now_ns();

    FilterStepRecord rec;
    rec.step = k + 1;
    rec.method = "grid";
    rec.order_or_n = n;
    rec.z = z;
    rec.wall_ns = t1 - t0;
    rec.posterior = GridDensity(grid, density);
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

FilterTrace grid_filter_run(const Hmm& hmm, const Eigen::MatrixXd& observations, int cells_per_axis) {
  GridSpec grid = GridSpec::uniform(hmm.state_domain, cells_per_axis);
  return grid_filter_run(hmm.nu.density, hmm.transition.density, hmm.observation.density,
                         observations, grid);
}

// --- posterior utilities --------------------------------------------------------------

GridDensity posterior_on_grid(const Posterior& p, const GridSpec& grid) {
  if (std::holds_alternative<GridDensity>(p)) {
    const auto& gd = std::get<GridDensity>(p);
    if (!(gd.spec == grid)) throw InvariantError("grid posterior resolution mismatch");
    return gd;
  }
  if (std::holds_alternative<GaussianPsdModel>(p)) {
    const auto& m = std::get<GaussianPsdModel>(p);
    Eigen::MatrixXd pts(grid.size(), grid.dim());
    for (long long i = 0; i < grid.size(); ++i) pts.row(i) = grid.point(i).transpose();
    return GridDensity(grid, evaluate_rows(m, pts));
  }
  if (std::holds_alternative<GeneralizedPsdModel>(p)) {
    const auto& m = std::get<GeneralizedPsdModel>(p);
    return GridDensity::tabulate(grid, [&m](const Eigen::VectorXd& x) { return g_evaluate(m, x); });
  }
  if (std::holds_alternative<KalmanState>(p)) {
    const auto& s = std::get<KalmanState>(p);
    Eigen::LLT<Eigen::MatrixXd> llt(s.cov);
    if (llt.info() != Eigen::Success) throw NumericalError("singular posterior covariance");
    double logdet = 0.0;
    for (int i = 0; i < s.cov.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    const double lognorm = -0.5 * s.cov.rows() * std::log(kTwoPi) - 0.5 * logdet;
    return GridDensity::tabulate(grid, [&](const Eigen::VectorXd& x) {
      Eigen::VectorXd d = x - s.mean;
      return std::exp(lognorm - 0.5 * d.dot(llt.solve(d)));
    });
  }
  const auto& cloud = std::get<ParticleCloud>(p);
  Eigen::VectorXd values = Eigen::VectorXd::Zero(grid.size());
  const double vol = grid.cell_volume();
  for (int i = 0; i < cloud.particles.rows(); ++i) {
    long long cell = grid.cell_of(cloud.particles.row(i).transpose());
    if (cell >= 0) values[cell] += cloud.weights[i] / vol;
  }
  return GridDensity(grid, values);
}

Eigen::VectorXd posterior_mean(const Posterior& p, const GridSpec& grid) {
  if (std::holds_alternative<KalmanState>(p)) return std::get<KalmanState>(p).mean;
  if (std::holds_alternative<ParticleCloud>(p)) {
    const auto& c = std::get<ParticleCloud>(p);
    return c.particles.transpose() * c.weights;
  }
  GridDensity gd = posterior_on_grid(p, grid);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(grid.dim());
  double mass = 0.0;
  for (long long i = 0; i < grid.size(); ++i) {
    mean += gd.values[i] * grid.point(i);
    mass += gd.values[i];
  }
  if (!(mass > 0.0)) throw NumericalError("posterior has no mass on the grid");
  return mean / mass;
}

void annotate_tv(FilterTrace& trace, const FilterTrace& oracle, const GridSpec& grid) {
  if (trace.steps.size() != oracle.steps.size())
    throw InvariantError("trace lengths differ for tv annotation");
  for (size_t k = 0; k < trace.steps.size(); ++k) {
    GridDensity a = posterior_on_grid(trace.steps[k].posterior, grid);
    GridDensity b = posterior_on_grid(oracle.steps[k].posterior, grid);
    trace.steps[k].tv_to_oracle = grid_tv(a, b);
  }
}

}  // namespace psdf
