#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "psdf/gaussian_psd.hpp"
#include "psdf/generalized_psd.hpp"
#include "psdf/grid.hpp"
#include "psdf/hmm.hpp"
#include "psdf/metrics.hpp"

namespace psdf {

struct KalmanState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct ParticleCloud {
  Eigen::MatrixXd particles;  // n x d
  Eigen::VectorXd weights;    // normalized
};

using Posterior =
    std::variant<GaussianPsdModel, GeneralizedPsdModel, KalmanState, ParticleCloud, GridDensity>;

struct FilterStepRecord {
  int step = 0;                  // 1-based
  std::string method;
  long long order_or_n = 0;      // model order / particle count / grid cells
  double z = 0.0;                // normalization mass at this step
  double tv_to_oracle = std::numeric_limits<double>::quiet_NaN();
  long long wall_ns = 0;         // step compute time (no serialization)
  Posterior posterior;
};

struct FilterTrace {
  std::vector<FilterStepRecord> steps;
};

// CSV rows (step, method, order_or_N, Z, tv_to_oracle[, wall_ns]); a leading
// `# config_hash=<16 hex>` comment line carries the configuration identity.
// wall times are only included on request because they are not deterministic.
std::string trace_csv(const FilterTrace& trace, std::uint64_t config_hash, bool include_wall);

// --- PSD filter ----------------------------------------------------------------

// One prediction-correction step in closed form:
//   predicted = marginalize(product(prior, q), u);
//   posterior = normalize(product(predicted, partial_eval(g, y)), domain).
// `q` is over (u_group, x_group), `g` over (x_group, y_group), `prior` over
// (u_group). The returned posterior is over (u_group), ready for chaining;
// its order is order(q) * order(g) up to pruning. Z <= 0 raises
// ZeroEvidenceError with `step_index`.
GaussianPsdModel psd_filter_step(const GaussianPsdModel& q, const GaussianPsdModel& g,
                                 const GaussianPsdModel& prior, const Eigen::VectorXd& y,
                                 const Domain& state_domain, int step_index, double* z_out = nullptr,
                                 const std::string& u_group = "u", const std::string& x_group = "x",
                                 const std::string& y_group = "y");

FilterTrace psd_filter_run(const GaussianPsdModel& q, const GaussianPsdModel& g,
                           const GaussianPsdModel& prior, const Eigen::MatrixXd& observations,
                           const Domain& state_domain);

// --- generalized filter ----------------------------------------------------------

// Same recursion with generalized models and whole-space marginals; after
// each step the posterior is compressed back to `target_order` when its
// order exceeds it (CompressMode::Always forces re-learning each step,
// Never disables it).
enum class CompressMode { Auto, Always, Never };

FilterTrace generalized_filter_run(const GeneralizedPsdModel& q, const GeneralizedPsdModel& g,
                                   const GeneralizedPsdModel& prior, const Eigen::MatrixXd& observations,
                                   int target_order, const Domain& state_domain, std::uint64_t seed,
                                   CompressMode mode = CompressMode::Auto);

// --- baselines -------------------------------------------------------------------

struct KalmanParams {
  Eigen::MatrixXd F;        // state transition
  Eigen::VectorXd b;        // state offset
  Eigen::MatrixXd q_cov;    // process noise covariance
  Eigen::MatrixXd H;        // observation map
  Eigen::VectorXd c;        // observation offset
  Eigen::MatrixXd g_cov;    // observation noise covariance
  Eigen::VectorXd mean0;    // prior mean
  Eigen::MatrixXd cov0;     // prior covariance
};

FilterTrace kalman_filter_run(const KalmanParams& p, const Eigen::MatrixXd& observations);

// Bootstrap particle filter: propagate through the transition sampler,
// weight by the observation density, multinomial-resample every step. The
// recorded clouds are the weighted pre-resampling populations.
FilterTrace particle_filter_run(const Hmm& hmm, int particles, const Eigen::MatrixXd& observations,
                                std::uint64_t seed);

// Dense Bayes recursion on a tensor grid (midpoint rule). The transition is
// tabulated once; per-step work is one matrix-vector product.
FilterTrace grid_filter_run(const std::function<double(const Eigen::VectorXd&)>& prior_density,
                            const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& transition,
                            const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& observation,
                            const Eigen::MatrixXd& observations, const GridSpec& grid);

FilterTrace grid_filter_run(const Hmm& hmm, const Eigen::MatrixXd& observations, int cells_per_axis);

// --- posterior utilities ----------------------------------------------------------

// Density values of any posterior representation at grid cell centers;
// particle clouds are histogram-binned at the grid resolution, Kalman states
// evaluate their Gaussian density.
GridDensity posterior_on_grid(const Posterior& p, const GridSpec& grid);

Eigen::VectorXd posterior_mean(const Posterior& p, const GridSpec& grid);

// Fill tv_to_oracle of each step of `trace` against a reference trace (same
// length) using densities on `grid`.
void annotate_tv(FilterTrace& trace, const FilterTrace& oracle, const GridSpec& grid);

}  // namespace psdf
