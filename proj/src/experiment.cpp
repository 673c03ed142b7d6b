#include "psdf/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "psdf/serialize.hpp"

namespace psdf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

long long now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string hash_line(std::uint64_t config_hash) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(config_hash));
  return std::string("# config_hash=") + hex + "\n";
}

const std::set<std::string>& bundled_scenarios() {
  static const std::set<std::string> s{"lg1d", "mixing1d", "bimodal1d", "rot2d"};
  return s;
}

const std::set<std::string>& known_methods() {
  static const std::set<std::string> s{"psd", "generalized", "kalman", "particle", "grid"};
  return s;
}

// Scenarios with a linear-Gaussian law (before domain truncation) that the
// Kalman baseline can target. Parameters mirror the make_* defaults.
bool kalman_params_for(const std::string& scenario, KalmanParams* out) {
  KalmanParams p;
  if (scenario == "lg1d" || scenario == "mixing1d") {
    const bool lg = scenario == "lg1d";
    const double a = lg ? 0.6 : 0.3;
    const double q_std = lg ? 0.15 : 0.6;
    const double g_std = lg ? 0.2 : 0.5;
    const double init_std = lg ? 0.25 : 0.5;
    p.F = Eigen::MatrixXd::Constant(1, 1, a);
    p.b = Eigen::VectorXd::Zero(1);
    p.q_cov = Eigen::MatrixXd::Constant(1, 1, q_std * q_std);
    p.H = Eigen::MatrixXd::Identity(1, 1);
    p.c = Eigen::VectorXd::Zero(1);
    p.g_cov = Eigen::MatrixXd::Constant(1, 1, g_std * g_std);
    p.mean0 = Eigen::VectorXd::Zero(1);
    p.cov0 = Eigen::MatrixXd::Constant(1, 1, init_std * init_std);
  } else if (scenario == "rot2d") {
    const double angle = 0.5, contraction = 0.8, q_std = 0.2, g_std = 0.25, init_std = 0.4;
    Eigen::MatrixXd rot(2, 2);
    rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    p.F = contraction * rot;
    p.b = Eigen::VectorXd::Zero(2);
    p.q_cov = q_std * q_std * Eigen::MatrixXd::Identity(2, 2);
    p.H = Eigen::MatrixXd::Identity(2, 2);
    p.c = Eigen::VectorXd::Zero(2);
    p.g_cov = g_std * g_std * Eigen::MatrixXd::Identity(2, 2);
    p.mean0 = Eigen::VectorXd::Zero(2);
    p.cov0 = init_std * init_std * Eigen::MatrixXd::Identity(2, 2);
  } else {
    return false;
  }
  if (out) *out = p;
  return true;
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  write_file(tmp.string(), content);
  fs::rename(tmp, path);
}

Domain product_domain(const Domain& a, const Domain& b) {
  if (!a.bounded() || !b.bounded())
    throw InvariantError("learning domains must be bounded");
  Eigen::VectorXd lo(a.dim() + b.dim()), hi(a.dim() + b.dim());
  lo << a.lo(), b.lo();
  hi << a.hi(), b.hi();
  return Domain::box(lo, hi);
}

// Grid resolution per axis that keeps sup-error scans around <= 1e5 points.
int sup_cells_per_axis(int dim) {
  switch (dim) {
    case 1:
      return 256;
    case 2:
      return 64;
    case 3:
      return 21;
    default:
      return 13;
  }
}

double model_sup_error(const GaussianPsdModel& m, const TargetFn& f, const Domain& dom) {
  const GridSpec grid = GridSpec::uniform(dom, sup_cells_per_axis(dom.dim()));
  Eigen::MatrixXd pts(grid.size(), grid.dim());
  for (long long i = 0; i < grid.size(); ++i) pts.row(i) = grid.point(i).transpose();
  const Eigen::VectorXd vals = evaluate_rows(m, pts);
  double worst = 0.0;
  for (long long i = 0; i < grid.size(); ++i)
    worst = std::max(worst, std::abs(vals[i] - f(pts.row(i).transpose())));
  return worst;
}

LearnConfig base_learn_config(const ExperimentConfig& cfg, int dim, std::uint64_t seed) {
  LearnConfig lc = LearnConfig::from_schedule(cfg.schedule, dim, seed);
  if (cfg.explicit_learn) {
    lc.n = cfg.learn_n;
    lc.m = cfg.learn_m;
    lc.lambda = cfg.learn_lambda;
  }
  return lc;
}

// Run one unit of work per job index on `threads` workers; the first captured
// exception is rethrown after all jobs finish.
void run_jobs(int threads, int njobs, const std::function<void(int)>& fn) {
  if (njobs <= 0) return;
  std::vector<std::exception_ptr> errors(njobs);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i; (i = next.fetch_add(1)) < njobs;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int nt = std::max(1, std::min(threads, njobs));
  if (nt == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

FilterTrace run_method(const std::string& method, const Hmm& hmm, const ExperimentConfig& cfg,
                       std::uint64_t seed, const Eigen::MatrixXd& observations) {
  if (method == "psd") {
    LearnedKernels k = learn_scenario_kernels(hmm, cfg, seed);
    return psd_filter_run(k.q, k.g, k.prior, observations, hmm.state_domain);
  }
  if (method == "generalized") {
    LearnedKernels k = learn_scenario_kernels(hmm, cfg, seed);
    GeneralizedPsdModel gq = embed_psd(k.q);
    GeneralizedPsdModel gg = embed_psd(k.g);
    GeneralizedPsdModel gp = g_normalize(embed_psd(k.prior));
    return generalized_filter_run(gq, gg, gp, observations, cfg.target_order, hmm.state_domain,
                                  seed, CompressMode::Auto);
  }
  if (method == "kalman") {
    KalmanParams p;
    if (!kalman_params_for(cfg.scenario, &p))
      throw ConfigError("kalman method requires a linear-Gaussian scenario");
    return kalman_filter_run(p, observations);
  }
  if (method == "particle") return particle_filter_run(hmm, cfg.particles, observations, seed);
  if (method == "grid")
    return grid_filter_run(hmm, observations, cfg.oracle_grid > 0 ? cfg.oracle_grid : 256);
  throw ConfigError("unknown method '" + method + "'");
}

// Least-squares slope of log(y_k) over 1-based steps k in [k_lo, k_hi];
// nonpositive or non-finite values are skipped, NaN with fewer than 2 points.
double fit_log_slope(const std::vector<double>& y, int k_lo, int k_hi) {
  std::vector<double> ks, ls;
  for (int k = k_lo; k <= k_hi && k <= static_cast<int>(y.size()); ++k) {
    const double v = y[k - 1];
    if (v > 0.0 && std::isfinite(v)) {
      ks.push_back(k);
      ls.push_back(std::log(v));
    }
  }
  if (ks.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mk = 0.0, ml = 0.0;
  for (size_t i = 0; i < ks.size(); ++i) {
    mk += ks[i];
    ml += ls[i];
  }
  mk /= ks.size();
  ml /= ls.size();
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < ks.size(); ++i) {
    num += (ks[i] - mk) * (ls[i] - ml);
    den += (ks[i] - mk) * (ks[i] - mk);
  }
  return num / den;
}

}  // namespace

// --- config ------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  static const std::set<std::string> known{
      "scenario",  "methods",      "steps",           "seeds",           "out",
      "oracle_grid", "epsilon",    "beta",            "c_m",             "c_n",
      "n",         "m",            "lambda",          "q_model",         "g_model",
      "init_model", "particles",   "target_order",    "snapshot_stride", "stability_inits",
      "threads"};
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw ConfigError("unknown config key '" + item.key() + "'");

  ExperimentConfig cfg;
  cfg.config_hash = fnv1a64(j.dump());
  try {
    if (j.contains("scenario")) cfg.scenario = j["scenario"].get<std::string>();
    if (j.contains("methods")) {
      cfg.methods.clear();
      for (const auto& m : j["methods"]) cfg.methods.push_back(m.get<std::string>());
    }
    if (j.contains("steps")) cfg.steps = j["steps"].get<int>();
    if (j.contains("seeds")) {
      cfg.seeds.clear();
      for (const auto& s : j["seeds"]) cfg.seeds.push_back(s.get<std::uint64_t>());
    }
    if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
    if (j.contains("oracle_grid")) cfg.oracle_grid = j["oracle_grid"].get<int>();
    if (j.contains("epsilon")) cfg.schedule.epsilon = j["epsilon"].get<double>();
    if (j.contains("beta")) cfg.schedule.beta = j["beta"].get<double>();
    if (j.contains("c_m")) cfg.schedule.c_m = j["c_m"].get<double>();
    if (j.contains("c_n")) cfg.schedule.c_n = j["c_n"].get<double>();
    if (j.contains("n") || j.contains("m")) {
      if (!(j.contains("n") && j.contains("m")))
        throw ConfigError("explicit learning needs both 'n' and 'm'");
      cfg.explicit_learn = true;
      cfg.learn_n = j["n"].get<int>();
      cfg.learn_m = j["m"].get<int>();
    }
    if (j.contains("lambda")) {
      if (!cfg.explicit_learn) throw ConfigError("'lambda' requires explicit 'n' and 'm'");
      cfg.learn_lambda = j["lambda"].get<double>();
    }
    if (j.contains("q_model")) cfg.q_model_path = j["q_model"].get<std::string>();
    if (j.contains("g_model")) cfg.g_model_path = j["g_model"].get<std::string>();
    if (j.contains("init_model")) cfg.init_model_path = j["init_model"].get<std::string>();
    if (j.contains("particles")) cfg.particles = j["particles"].get<int>();
    if (j.contains("target_order")) cfg.target_order = j["target_order"].get<int>();
    if (j.contains("snapshot_stride")) cfg.snapshot_stride = j["snapshot_stride"].get<int>();
    if (j.contains("stability_inits")) {
      const auto& arr = j["stability_inits"];
      if (!arr.is_array() || arr.size() != 2)
        throw ConfigError("'stability_inits' must be an array of two stddevs");
      cfg.stability_init_a = arr[0].get<double>();
      cfg.stability_init_b = arr[1].get<double>();
    }
    if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }

  if (!bundled_scenarios().count(cfg.scenario))
    throw ConfigError("unknown scenario '" + cfg.scenario + "'");
  if (cfg.methods.empty()) throw ConfigError("config needs at least one method");
  for (const auto& m : cfg.methods) {
    if (!known_methods().count(m)) throw ConfigError("unknown method '" + m + "'");
    if (m == "kalman" && !kalman_params_for(cfg.scenario, nullptr))
      throw ConfigError("kalman method requires a linear-Gaussian scenario");
  }
  if (cfg.steps < 1) throw ConfigError("'steps' must be >= 1");
  if (cfg.seeds.empty()) throw ConfigError("config needs at least one seed");
  if (cfg.oracle_grid < 0) throw ConfigError("'oracle_grid' must be >= 0");
  if (!(cfg.schedule.epsilon > 0.0 && cfg.schedule.epsilon <= 1.0))
    throw ConfigError("'epsilon' must lie in (0, 1]");
  if (!(cfg.schedule.beta > 0.0)) throw ConfigError("'beta' must be positive");
  if (!(cfg.schedule.c_m > 0.0) || !(cfg.schedule.c_n > 0.0))
    throw ConfigError("schedule constants must be positive");
  if (cfg.explicit_learn) {
    if (cfg.learn_m < 1 || cfg.learn_n < cfg.learn_m)
      throw ConfigError("explicit learning needs n >= m >= 1");
    if (!(cfg.learn_lambda > 0.0)) throw ConfigError("'lambda' must be positive");
  }
  if (cfg.particles < 1) throw ConfigError("'particles' must be >= 1");
  if (cfg.target_order < 1) throw ConfigError("'target_order' must be >= 1");
  if (cfg.snapshot_stride < 0) throw ConfigError("'snapshot_stride' must be >= 0");
  if (!(cfg.stability_init_a > 0.0) || !(cfg.stability_init_b > 0.0))
    throw ConfigError("'stability_inits' entries must be positive");
  if (cfg.threads < 1) throw ConfigError("'threads' must be >= 1");
  for (const std::string& path : {cfg.q_model_path, cfg.g_model_path, cfg.init_model_path})
    if (!path.empty() && !fs::exists(path))
      throw ConfigError("referenced model file '" + path + "' does not exist");
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_json_text(read_file(path));
}

// --- kernel learning ------------------------------------------------------------------

LearnedKernels learn_scenario_kernels(const Hmm& hmm, const ExperimentConfig& cfg,
                                      std::uint64_t seed) {
  const int d = hmm.state_domain.dim();
  const int dy = hmm.obs_domain.dim();
  const VariableGroups ux({{"u", d}, {"x", d}});
  const VariableGroups xy({{"x", d}, {"y", dy}});
  const VariableGroups ug = VariableGroups::single("u", d);
  LearnedKernels out;

  if (!cfg.q_model_path.empty()) {
    out.q = gaussian_psd_from_text(read_file(cfg.q_model_path));
    if (!(out.q.groups == ux))
      throw ConfigError("q_model groups must be (u, x) at the scenario dimensions");
  } else {
    const Domain dom = product_domain(hmm.state_domain, hmm.state_domain);
    const TargetFn f = [&hmm, d](const Eigen::VectorXd& z) {
      return hmm.transition.density(z.head(d), z.tail(d));
    };
    LearnConfig lc = base_learn_config(cfg, dom.dim(), seed * 4 + 0);
    if (d == 1)
      lc.anchors = init_anchors_conditional(f, GridSpec::uniform(hmm.state_domain, lc.m),
                                            GridSpec::uniform(hmm.state_domain, 64));
    out.q = learn_rank_one(f, dom, lc, ux);
  }

  if (!cfg.g_model_path.empty()) {
    out.g = gaussian_psd_from_text(read_file(cfg.g_model_path));
    if (!(out.g.groups == xy))
      throw ConfigError("g_model groups must be (x, y) at the scenario dimensions");
  } else {
    const Domain dom = product_domain(hmm.state_domain, hmm.obs_domain);
    const TargetFn f = [&hmm, d](const Eigen::VectorXd& z) {
      return hmm.observation.density(z.head(d), z.tail(z.size() - d));
    };
    LearnConfig lc = base_learn_config(cfg, dom.dim(), seed * 4 + 1);
    if (d == 1 && dy == 1)
      lc.anchors = init_anchors_conditional(f, GridSpec::uniform(hmm.state_domain, lc.m),
                                            GridSpec::uniform(hmm.obs_domain, 64));
    out.g = learn_rank_one(f, dom, lc, xy);
  }

  if (!cfg.init_model_path.empty()) {
    GaussianPsdModel prior = gaussian_psd_from_text(read_file(cfg.init_model_path));
    if (!(prior.groups == ug))
      throw ConfigError("init_model groups must be (u) at the scenario dimension");
    out.prior = normalize(prior, hmm.state_domain);
  } else {
    const TargetFn f = [&hmm](const Eigen::VectorXd& u) { return hmm.nu.density(u); };
    LearnConfig lc = base_learn_config(cfg, d, seed * 4 + 2);
    out.prior = normalize(learn_rank_one(f, hmm.state_domain, lc, ug), hmm.state_domain);
  }
  return out;
}

// --- commands ---------------------------------------------------------------------------

void cmd_learn(const ExperimentConfig& cfg) {
  const Hmm hmm = make_scenario(cfg.scenario);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  const int d = hmm.state_domain.dim();

  struct Row {
    std::uint64_t seed = 0;
    int q_order = 0, g_order = 0, n_samples = 0;
    double q_sup = 0.0, g_sup = 0.0;
    long long wall = 0;
  };
  std::vector<Row> rows(cfg.seeds.size());

  run_jobs(cfg.threads, static_cast<int>(cfg.seeds.size()), [&](int i) {
    const std::uint64_t seed = cfg.seeds[i];
    const long long t0 = now_ns();
    const LearnedKernels k = learn_scenario_kernels(hmm, cfg, seed);
    const long long t1 = now_ns();

    const Domain q_dom = product_domain(hmm.state_domain, hmm.state_domain);
    const Domain g_dom = product_domain(hmm.state_domain, hmm.obs_domain);
    const TargetFn q_true = [&hmm, d](const Eigen::VectorXd& z) {
      return hmm.transition.density(z.head(d), z.tail(d));
    };
    const TargetFn g_true = [&hmm, d](const Eigen::VectorXd& z) {
      return hmm.observation.density(z.head(d), z.tail(z.size() - d));
    };

    Row r;
    r.seed = seed;
    r.q_order = k.q.order();
    r.g_order = k.g.order();
    r.n_samples = base_learn_config(cfg, q_dom.dim(), seed).n;
    r.q_sup = model_sup_error(k.q, q_true, q_dom);
    r.g_sup = model_sup_error(k.g, g_true, g_dom);
    r.wall = t1 - t0;
    rows[i] = r;

    const std::string tag = "_seed" + std::to_string(seed) + ".model";
    write_atomic(out / ("q" + tag), to_text(k.q));
    write_atomic(out / ("g" + tag), to_text(k.g));
    write_atomic(out / ("prior" + tag), to_text(k.prior));
  });

  std::ostringstream report;
  report << hash_line(cfg.config_hash)
         << "seed,epsilon,q_order,g_order,n_samples,q_sup_error,g_sup_error\n";
  std::ostringstream timings;
  timings << hash_line(cfg.config_hash) << "command,detail,seed,wall_ns\n";
  for (const Row& r : rows) {
    report << r.seed << ',' << double_to_string(cfg.schedule.epsilon) << ',' << r.q_order << ','
           << r.g_order << ',' << r.n_samples << ',' << double_to_string(r.q_sup) << ','
           << double_to_string(r.g_sup) << "\n";
    timings << "learn,kernels," << r.seed << ',' << r.wall << "\n";
  }
  write_atomic(out / "learn_report.csv", report.str());
  write_atomic(out / "timings.csv", timings.str());
}

void cmd_filter(const ExperimentConfig& cfg) {
  const Hmm hmm = make_scenario(cfg.scenario);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);

  // Trajectories are shared across methods: simulate once per seed.
  std::vector<Trajectory> trajectories;
  trajectories.reserve(cfg.seeds.size());
  for (std::uint64_t seed : cfg.seeds) {
    trajectories.push_back(simulate(hmm, cfg.steps, seed));
    write_atomic(out / ("trajectory_seed" + std::to_string(seed) + ".csv"),
                 hash_line(cfg.config_hash) + trajectory_csv(trajectories.back()));
  }

  struct Job {
    std::string method;
    size_t seed_index = 0;
  };
  std::vector<Job> jobs;
  for (const auto& method : cfg.methods)
    for (size_t s = 0; s < cfg.seeds.size(); ++s) jobs.push_back({method, s});

  std::vector<std::vector<std::pair<std::string, std::string>>> outputs(jobs.size());

  run_jobs(cfg.threads, static_cast<int>(jobs.size()), [&](int ji) {
    const Job& job = jobs[ji];
    const std::uint64_t seed = cfg.seeds[job.seed_index];
    const Eigen::MatrixXd& obs = trajectories[job.seed_index].observations;

    FilterTrace trace = run_method(job.method, hmm, cfg, seed, obs);
    if (cfg.oracle_grid > 0) {
      FilterTrace oracle = grid_filter_run(hmm, obs, cfg.oracle_grid);
      annotate_tv(trace, oracle, GridSpec::uniform(hmm.state_domain, cfg.oracle_grid));
    }

    const std::string stem = "filter_" + job.method + "_seed" + std::to_string(seed);
    auto& files = outputs[ji];
    files.emplace_back(stem + ".csv",
                       trace_csv(trace, cfg.config_hash, /*include_wall=*/false));
    if (cfg.snapshot_stride > 0) {
      for (const auto& rec : trace.steps) {
        if (rec.step % cfg.snapshot_stride != 0) continue;
        const std::string snap = stem + "_step" + std::to_string(rec.step) + ".model";
        if (std::holds_alternative<GaussianPsdModel>(rec.posterior))
          files.emplace_back(snap, to_text(std::get<GaussianPsdModel>(rec.posterior)));
        else if (std::holds_alternative<GeneralizedPsdModel>(rec.posterior))
          files.emplace_back(snap, to_text(std::get<GeneralizedPsdModel>(rec.posterior)));
      }
    }
  });

  for (const auto& files : outputs)
    for (const auto& [name, content] : files) write_atomic(out / name, content);
}

void cmd_stability(const ExperimentConfig& cfg) {
  const Hmm hmm = make_scenario(cfg.scenario);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  const int d = hmm.state_domain.dim();
  const int grid_cells = cfg.oracle_grid > 0 ? cfg.oracle_grid : (d == 1 ? 256 : 48);
  const GridSpec grid = GridSpec::uniform(hmm.state_domain, grid_cells);

  const MixingEstimate mix = estimate_mixing(hmm.transition, grid, grid);
  const double bound = birkhoff_bound(mix.sigma);

  struct Result {
    std::vector<double> tv;
    double slope = 0.0;
  };
  std::vector<Result> results(cfg.seeds.size());

  run_jobs(cfg.threads, static_cast<int>(cfg.seeds.size()), [&](int i) {
    const std::uint64_t seed = cfg.seeds[i];
    const Trajectory traj = simulate(hmm, cfg.steps, seed);
    const LearnedKernels k = learn_scenario_kernels(hmm, cfg, seed);

    // Two PSD initializations: rank-one fits of truncated normals with the
    // configured widths, learned with the same anchors/samples.
    auto learn_init = [&](double width, std::uint64_t sub) {
      const InitialDensity init = truncated_gaussian_init(hmm.state_domain, width);
      LearnConfig lc = base_learn_config(cfg, d, seed * 4 + sub);
      return normalize(
          learn_rank_one([&init](const Eigen::VectorXd& u) { return init.density(u); },
                         hmm.state_domain, lc, VariableGroups::single("u", d)),
          hmm.state_domain);
    };
    const GaussianPsdModel prior_a = learn_init(cfg.stability_init_a, 3);
    const GaussianPsdModel prior_b = learn_init(cfg.stability_init_b, 3);

    const FilterTrace run_a = psd_filter_run(k.q, k.g, prior_a, traj.observations, hmm.state_domain);
    const FilterTrace run_b = psd_filter_run(k.q, k.g, prior_b, traj.observations, hmm.state_domain);

    Result r;
    for (size_t step = 0; step < run_a.steps.size(); ++step) {
      const GridDensity pa = posterior_on_grid(run_a.steps[step].posterior, grid);
      const GridDensity pb = posterior_on_grid(run_b.steps[step].posterior, grid);
      r.tv.push_back(grid_tv(pa, pb));
    }
    r.slope = fit_log_slope(r.tv, 2, std::min(20, cfg.steps));
    results[i] = r;
  });

  std::ostringstream summary;
  summary << hash_line(cfg.config_hash)
          << "seed,sigma_hat,birkhoff_bound,fitted_slope,mixing_slack\n";
  for (size_t i = 0; i < cfg.seeds.size(); ++i) {
    std::ostringstream per;
    per << hash_line(cfg.config_hash) << "step,tv\n";
    for (size_t step = 0; step < results[i].tv.size(); ++step)
      per << (step + 1) << ',' << double_to_string(results[i].tv[step]) << "\n";
    write_atomic(out / ("stability_seed" + std::to_string(cfg.seeds[i]) + ".csv"), per.str());
    summary << cfg.seeds[i] << ',' << double_to_string(mix.sigma) << ','
            << double_to_string(bound) << ',' << double_to_string(results[i].slope) << ','
            << double_to_string(mix.slack) << "\n";
  }
  write_atomic(out / "stability_summary.csv", summary.str());
}

void cmd_bench(const ExperimentConfig& cfg) {
  const Hmm hmm = make_scenario(cfg.scenario);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);

  std::vector<Trajectory> trajectories;
  trajectories.reserve(cfg.seeds.size());
  for (std::uint64_t seed : cfg.seeds) trajectories.push_back(simulate(hmm, cfg.steps, seed));

  struct Job {
    std::string method;
    size_t seed_index = 0;
  };
  std::vector<Job> jobs;
  for (const auto& method : cfg.methods)
    for (size_t s = 0; s < cfg.seeds.size(); ++s) jobs.push_back({method, s});

  struct Row {
    long long order_or_n = 0;
    double max_tv = std::numeric_limits<double>::quiet_NaN();
    double final_tv = std::numeric_limits<double>::quiet_NaN();
    double mean_z = 0.0;
    long long wall = 0;
  };
  std::vector<Row> rows(jobs.size());

  run_jobs(cfg.threads, static_cast<int>(jobs.size()), [&](int ji) {
    const Job& job = jobs[ji];
    const std::uint64_t seed = cfg.seeds[job.seed_index];
    const Eigen::MatrixXd& obs = trajectories[job.seed_index].observations;

    FilterTrace trace = run_method(job.method, hmm, cfg, seed, obs);
    Row r;
    for (const auto& rec : trace.steps) {
      r.order_or_n = rec.order_or_n;
      r.mean_z += rec.z;
      r.wall += rec.wall_ns;
    }
    if (!trace.steps.empty()) r.mean_z /= static_cast<double>(trace.steps.size());
    if (cfg.oracle_grid > 0) {
      FilterTrace oracle = grid_filter_run(hmm, obs, cfg.oracle_grid);
      annotate_tv(trace, oracle, GridSpec::uniform(hmm.state_domain, cfg.oracle_grid));
      r.max_tv = 0.0;
      for (const auto& rec : trace.steps) r.max_tv = std::max(r.max_tv, rec.tv_to_oracle);
      r.final_tv = trace.steps.empty() ? 0.0 : trace.steps.back().tv_to_oracle;
    }
    rows[ji] = r;
  });

  std::ostringstream bench;
  bench << hash_line(cfg.config_hash) << "method,seed,order_or_N,max_tv,final_tv,mean_z\n";
  std::ostringstream timings;
  timings << hash_line(cfg.config_hash) << "command,detail,seed,wall_ns\n";
  for (size_t ji = 0; ji < jobs.size(); ++ji) {
    const Job& job = jobs[ji];
    const Row& r = rows[ji];
    bench << job.method << ',' << cfg.seeds[job.seed_index] << ',' << r.order_or_n << ','
          << double_to_string(r.max_tv) << ',' << double_to_string(r.final_tv) << ','
          << double_to_string(r.mean_z) << "\n";
    timings << "bench," << job.method << ',' << cfg.seeds[job.seed_index] << ',' << r.wall << "\n";
  }
  write_atomic(out / "bench.csv", bench.str());
  write_atomic(out / "timings.csv", timings.str());
}

}  // namespace psdf
