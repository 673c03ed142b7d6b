#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psdf/filtering.hpp"
#include "psdf/learning.hpp"

namespace psdf {

// One experiment = one config file. Schema (JSON object, unknown keys rejected):
//   scenario        string   bundled HMM id (lg1d | mixing1d | bimodal1d | rot2d)
//   methods         [string] any of psd | generalized | kalman | particle | grid
//   steps           int      filter horizon T >= 1
//   seeds           [int]    one independent run per seed
//   out             string   output directory (created if missing)
//   oracle_grid     int      cells per axis for the grid oracle; 0 disables tv columns
//   epsilon,beta,c_m,c_n     learning schedule (epsilon in (0,1])
//   n,m             int      explicit sample/anchor counts (override the schedule)
//   lambda          number   explicit ridge weight (with n,m)
//   q_model,g_model,init_model   paths of pre-learned models (skip learning)
//   particles       int      particle count for the particle method
//   target_order    int      compression target for the generalized method
//   snapshot_stride int      write posterior snapshots every k steps (0 = off)
//   stability_inits [a,b]    two initial-density stddevs for the stability command
//   threads         int      worker threads across (method, seed) jobs
struct ExperimentConfig {
  std::string scenario = "lg1d";
  std::vector<std::string> methods{"psd"};
  int steps = 20;
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "runs/out";
  int oracle_grid = 0;

  EpsilonSchedule schedule;        // epsilon/beta/c_m/c_n
  bool explicit_learn = false;     // n/m[/lambda] given -> ignore the schedule
  int learn_n = 0;
  int learn_m = 0;
  double learn_lambda = 1e-8;

  std::string q_model_path;        // optional pre-learned kernels
  std::string g_model_path;
  std::string init_model_path;

  int particles = 1000;
  int target_order = 16;
  int snapshot_stride = 0;
  double stability_init_a = 0.2;
  double stability_init_b = 0.8;
  int threads = 1;

  std::uint64_t config_hash = 0;   // FNV-1a64 of the canonicalized config text

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
};

// Learned filter kernels for one scenario/seed: transition over (u, x),
// observation over (x, y), initial posterior over (u), all normalized.
struct LearnedKernels {
  GaussianPsdModel q;
  GaussianPsdModel g;
  GaussianPsdModel prior;
};

LearnedKernels learn_scenario_kernels(const Hmm& hmm, const ExperimentConfig& cfg,
                                      std::uint64_t seed);

// Commands. All write CSVs under out_dir; every CSV carries a
// `# config_hash=...` first line and is byte-identical across re-runs.
// Wall-clock measurements go to a separate timings.csv whose values are
// exempt from the determinism guarantee (row set and order are not).
//
// learn:     q/g/prior model files per seed + learn_report.csv
//            (seed,epsilon,m_order,n_samples,q_sup_error,g_sup_error).
// filter:    filter_<method>_seed<seed>.csv traces; trajectory_seed<seed>.csv;
//            optional model snapshots.
// stability: stability_seed<seed>.csv (step,tv) for two initializations +
//            stability_summary.csv (seed,sigma_hat,birkhoff_bound,
//            fitted_slope,log_contraction_bound).
// bench:     bench.csv (method,seed,order_or_N,max_tv,final_tv,mean_z)
//            + per-method wall totals in timings.csv.
void cmd_learn(const ExperimentConfig& cfg);
void cmd_filter(const ExperimentConfig& cfg);
void cmd_stability(const ExperimentConfig& cfg);
void cmd_bench(const ExperimentConfig& cfg);

}  // namespace psdf
