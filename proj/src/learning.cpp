#include "psdf/learning.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "psdf/rng.hpp"

namespace psdf {

Hyperparams hyperparams_from_epsilon(const EpsilonSchedule& s, int dim) {
  if (!(s.epsilon > 0.0 && s.epsilon <= 1.0)) throw InvariantError("epsilon must lie in (0, 1]");
  if (!(s.beta > 0.5 * dim)) throw InvariantError("smoothness beta must exceed dim/2");
  if (!(s.c_m > 0.0 && s.c_n > 0.0)) throw InvariantError("schedule constants must be positive");
  const double eps = s.epsilon, beta = s.beta;
  Hyperparams h;
  h.eta = Eigen::VectorXd::Constant(dim, std::pow(eps, -2.0 / beta));
  h.lambda = std::pow(eps, (2.0 * beta + dim) / beta);
  const double lg = std::log(1.0 / eps);
  const double m_real = s.c_m * std::pow(lg, dim) * lg * std::pow(eps, -dim / beta);
  const double n_real = s.c_n * std::pow(eps, -2.0 * dim / beta);
  h.m = std::max(1, static_cast<int>(std::ceil(m_real)));
  h.n = std::max(h.m, static_cast<int>(std::ceil(n_real)));
  return h;
}

LearnConfig LearnConfig::from_schedule(const EpsilonSchedule& s, int dim, std::uint64_t seed) {
  Hyperparams h = hyperparams_from_epsilon(s, dim);
  LearnConfig cfg;
  cfg.n = h.n;
  cfg.m = h.m;
  cfg.eta = h.eta;
  cfg.lambda = h.lambda;
  cfg.seed = seed;
  return cfg;
}

Eigen::VectorXd solve_krr(const Eigen::MatrixXd& k_nm, const Eigen::MatrixXd& k_mm,
                          const Eigen::VectorXd& y, double lambda) {
  const int n = static_cast<int>(k_nm.rows());
  const int m = static_cast<int>(k_nm.cols());
  if (k_mm.rows() != m || k_mm.cols() != m) throw InvariantError("anchor kernel matrix shape mismatch");
  if (y.size() != n) throw InvariantError("target vector length mismatch");
  if (!(lambda >= 0.0)) throw InvariantError("ridge weight must be nonnegative");

  Eigen::MatrixXd lhs = k_nm.transpose() * k_nm / double(n) + lambda * k_mm;
  lhs = 0.5 * (lhs + lhs.transpose());
  Eigen::VectorXd rhs = k_nm.transpose() * y / double(n);

  const double unit = std::max(k_mm.trace() / m, std::numeric_limits<double>::min());
  for (double jitter = 1e-12; jitter <= 1.000001e-6; jitter *= 10.0) {
    Eigen::MatrixXd sys = lhs + (jitter * unit) * Eigen::MatrixXd::Identity(m, m);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(sys);
    if (ldlt.info() != Eigen::Success) continue;
    Eigen::VectorXd a = ldlt.solve(rhs);
    if (!a.allFinite()) continue;
    double resid = (sys * a - rhs).norm();
    if (resid <= 1e-6 * (1.0 + rhs.norm()) || jitter * 10.0 > 1e-6) return a;
  }
  throw NumericalError("kernel ridge system remained singular after jitter escalation");
}

namespace {

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                              const Eigen::VectorXd& eta) {
  Eigen::MatrixXd logk = Eigen::MatrixXd::Zero(a.rows(), b.rows());
  for (int c = 0; c < a.cols(); ++c)
    logk -= eta[c] * (a.col(c).replicate(1, b.rows()) - b.col(c).transpose().replicate(a.rows(), 1))
                         .array()
                         .square()
                         .matrix();
  return logk.array().exp();
}

Eigen::MatrixXd sample_points(const Domain& domain, int count, Rng& rng) {
  Eigen::MatrixXd pts(count, domain.dim());
  for (int i = 0; i < count; ++i) pts.row(i) = domain.sample(rng).transpose();
  return pts;
}

}  // namespace

GaussianPsdModel learn_rank_one(const TargetFn& f, const Domain& domain, const LearnConfig& cfg,
                                const VariableGroups& groups) {
  const int d = domain.dim();
  if (groups.total_dim() != d) throw InvariantError("variable groups do not match the domain dimension");
  if (cfg.eta.size() != d) throw InvariantError("kernel precision size mismatch");
  if (cfg.n < 1 || cfg.m < 1) throw InvariantError("sample and anchor counts must be positive");
  if (cfg.n < cfg.m) throw InvariantError("need at least as many samples as anchors");

  Rng sample_rng(cfg.seed, 0x5A01);
  Rng anchor_rng(cfg.seed, 0x5A02);
  Eigen::MatrixXd X = sample_points(domain, cfg.n, sample_rng);
  Eigen::MatrixXd anchors =
      cfg.anchors ? *cfg.anchors : sample_points(domain, cfg.m, anchor_rng);
  if (anchors.cols() != d) throw InvariantError("anchor override dimension mismatch");

  Eigen::VectorXd y(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    double v = f(X.row(i).transpose());
    if (!std::isfinite(v)) throw NumericalError("target returned a non-finite value");
    if (v < -1e-12) throw NumericalError("target is negative beyond the rounding band");
    y[i] = std::sqrt(std::max(v, 0.0));
  }

  Eigen::MatrixXd k_nm = kernel_matrix(X, anchors, cfg.eta);
  Eigen::MatrixXd k_mm = kernel_matrix(anchors, anchors, cfg.eta);
  Eigen::VectorXd a = solve_krr(k_nm, k_mm, y, cfg.lambda);

  return from_linear_square(a, anchors, cfg.eta, groups);
}

Eigen::MatrixXd init_anchors_conditional(const TargetFn& f, const GridSpec& grid_u,
                                         const GridSpec& grid_v) {
  const int du = grid_u.dim(), dv = grid_v.dim();
  Eigen::MatrixXd centers(grid_u.size(), du + dv);
  Eigen::VectorXd point(du + dv);
  for (long long iu = 0; iu < grid_u.size(); ++iu) {
    point.head(du) = grid_u.point(iu);
    double best = -std::numeric_limits<double>::infinity();
    long long best_iv = 0;
    for (long long iv = 0; iv < grid_v.size(); ++iv) {
      point.tail(dv) = grid_v.point(iv);
      double val = f(point);
      if (val > best) {
        best = val;
        best_iv = iv;
      }
    }
    centers.row(iu).head(du) = grid_u.point(iu).transpose();
    centers.row(iu).tail(dv) = grid_v.point(best_iv).transpose();
  }
  return centers;
}

namespace {

// Flattened parameter vector layout for the generalized learner:
// [alpha (m)] [centers row-major (m*d)] [factors row-major (m*d*d)].
struct GenParams {
  int m = 0, d = 0;

  int size() const { return m + m * d + m * d * d; }
  double alpha(const Eigen::VectorXd& t, int j) const { return t[j]; }
  Eigen::VectorXd center(const Eigen::VectorXd& t, int j) const {
    return t.segment(m + j * d, d);
  }
  Eigen::MatrixXd factor(const Eigen::VectorXd& t, int j) const {
    Eigen::MatrixXd r(d, d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) r(a, b) = t[m + m * d + j * d * d + a * d + b];
    return r;
  }
};

// Loss (1/n) sum_i (f_i - g(x_i)^2)^2 and its gradient.
double gen_loss(const GenParams& lay, const Eigen::VectorXd& theta, const Eigen::MatrixXd& X,
                const Eigen::VectorXd& fvals, Eigen::VectorXd* grad) {
  const int n = static_cast<int>(X.rows()), m = lay.m, d = lay.d;
  if (grad) grad->setZero(lay.size());

  std::vector<Eigen::MatrixXd> factors(m);
  std::vector<Eigen::MatrixXd> precisions(m);
  for (int j = 0; j < m; ++j) {
    factors[j] = lay.factor(theta, j);
    precisions[j] = factors[j].transpose() * factors[j];
  }

  double loss = 0.0;
  Eigen::VectorXd kj(m);
  std::vector<Eigen::VectorXd> diffs(m);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x = X.row(i).transpose();
    double g = 0.0;
    for (int j = 0; j < m; ++j) {
      diffs[j] = x - lay.center(theta, j);
      double q = (factors[j] * diffs[j]).squaredNorm();
      kj[j] = std::exp(-q);
      g += lay.alpha(theta, j) * kj[j];
    }
    const double resid = fvals[i] - g * g;
    loss += resid * resid;
    if (!grad) continue;
    // d loss / d theta = -4 resid g * d g / d theta (accumulated over i).
    const double coef = -4.0 * resid * g / n;
    for (int j = 0; j < m; ++j) {
      const double aj = lay.alpha(theta, j);
      (*grad)[j] += coef * kj[j];
      Eigen::VectorXd dmu = 2.0 * aj * kj[j] * (precisions[j] * diffs[j]);
      grad->segment(m + j * d, d) += coef * dmu;
      Eigen::MatrixXd dr = -2.0 * aj * kj[j] * (factors[j] * diffs[j]) * diffs[j].transpose();
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) (*grad)[m + m * d + j * d * d + a * d + b] += coef * dr(a, b);
    }
  }
  return loss / n;
}

}  // namespace

GeneralizedPsdModel learn_generalized(const TargetFn& f, int m, const InitStrategy& init, int budget,
                                      const Domain& domain, int n, std::uint64_t seed,
                                      const VariableGroups& groups) {
  const int d = domain.dim();
  if (groups.total_dim() != d) throw InvariantError("variable groups do not match the domain dimension");
  if (m < 1 || n < 1 || budget < 0) throw InvariantError("component, sample and budget counts must be nonnegative");

  Rng rng(seed, 0x6E01);
  Eigen::MatrixXd X = sample_points(domain, n, rng);
  Eigen::VectorXd fvals(n);
  for (int i = 0; i < n; ++i) {
    fvals[i] = f(X.row(i).transpose());
    if (!std::isfinite(fvals[i])) throw NumericalError("target returned a non-finite value");
    if (fvals[i] < -1e-12) throw NumericalError("target is negative beyond the rounding band");
  }

  GenParams lay{m, d};
  Eigen::VectorXd theta(lay.size());
  Rng irng(seed, 0x6E02);
  for (int j = 0; j < m; ++j)
    theta[j] = init.alpha ? (*init.alpha)[j] : init.alpha_scale * (0.5 + irng.u01());
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd c = init.centers ? (*init.centers).row(j).transpose().eval() : domain.sample(irng);
    theta.segment(m + j * d, d) = c;
  }
  for (int j = 0; j < m; ++j) {
    Eigen::MatrixXd r = init.factors
                            ? (*init.factors)[j]
                            : (init.factor_scale * Eigen::MatrixXd::Identity(d, d)).eval();
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) theta[m + m * d + j * d * d + a * d + b] = r(a, b);
  }

  // L-BFGS with a two-loop recursion and Armijo backtracking; the objective
  // never increases across accepted iterations.
  const int history = 8;
  std::deque<Eigen::VectorXd> s_hist, y_hist;
  Eigen::VectorXd grad(lay.size()), next_grad(lay.size());
  double loss = gen_loss(lay, theta, X, fvals, &grad);
  for (int it = 0; it < budget; ++it) {
    if (grad.norm() <= 1e-12 * (1.0 + std::abs(loss))) break;

    Eigen::VectorXd q = grad;
    std::vector<double> alpha_coef(s_hist.size());
    for (int h = static_cast<int>(s_hist.size()) - 1; h >= 0; --h) {
      double rho = 1.0 / y_hist[h].dot(s_hist[h]);
      alpha_coef[h] = rho * s_hist[h].dot(q);
      q -= alpha_coef[h] * y_hist[h];
    }
    if (!s_hist.empty()) {
      const auto& sl = s_hist.back();
      const auto& yl = y_hist.back();
      q *= sl.dot(yl) / yl.dot(yl);
    }
    for (size_t h = 0; h < s_hist.size(); ++h) {
      double rho = 1.0 / y_hist[h].dot(s_hist[h]);
      double beta = rho * y_hist[h].dot(q);
      q += (alpha_coef[h] - beta) * s_hist[h];
    }
    Eigen::VectorXd dir = -q;
    double slope = grad.dot(dir);
    if (!(slope < 0.0)) {  // fall back to steepest descent
      dir = -grad;
      slope = -grad.squaredNorm();
      s_hist.clear();
      y_hist.clear();
    }

    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      Eigen::VectorXd cand = theta + step * dir;
      double cand_loss = gen_loss(lay, cand, X, fvals, nullptr);
      if (std::isfinite(cand_loss) && cand_loss <= loss + 1e-4 * step * slope) {
        double unused = gen_loss(lay, cand, X, fvals, &next_grad);
        (void)unused;
        Eigen::VectorXd sv = cand - theta;
        Eigen::VectorXd yv = next_grad - grad;
        if (yv.dot(sv) > 1e-12 * sv.norm() * yv.norm()) {
          s_hist.push_back(sv);
          y_hist.push_back(yv);
          if (static_cast<int>(s_hist.size()) > history) {
            s_hist.pop_front();
            y_hist.pop_front();
          }
        }
        theta = cand;
        loss = cand_loss;
        grad = next_grad;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }

  // Assemble g^2 as a generalized model: weights alpha alpha', entries from
  // pairwise Gaussian products.
  Eigen::VectorXd alpha(m);
  std::vector<Eigen::VectorXd> mus(m);
  std::vector<Eigen::MatrixXd> ps(m);
  for (int j = 0; j < m; ++j) {
    alpha[j] = lay.alpha(theta, j);
    mus[j] = lay.center(theta, j);
    Eigen::MatrixXd r = lay.factor(theta, j);
    ps[j] = r.transpose() * r;
  }

  GeneralizedPsdModel out;
  out.groups = groups;
  out.log_scale = 0.0;
  out.weights = alpha * alpha.transpose();
  out.entries.resize(m * m);
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      GeneralizedEntry e;
      Eigen::MatrixXd p = ps[i] + ps[j];
      Eigen::VectorXd nat = ps[i] * mus[i] + ps[j] * mus[j];
      const double tr = std::max(p.trace(), 1.0);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(p + 1e-12 * tr / d * Eigen::MatrixXd::Identity(d, d));
      Eigen::VectorXd mu = ldlt.solve(nat);
      e.precision = 0.5 * (p + p.transpose());
      e.center = mu;
      e.log_constant = nat.dot(mu) - mus[i].dot(ps[i] * mus[i]) - mus[j].dot(ps[j] * mus[j]);
      out.entry(i, j) = e;
      if (i != j) out.entry(j, i) = e;
    }
  }
  return out;
}

}  // namespace psdf
