#include "psdf/generalized_psd.hpp"

#include <atomic>
#include <cmath>
#include <limits>

namespace psdf {

namespace {

constexpr double kPi = 3.141592653589793238462643383279503;

std::atomic<long> jitter_events{0};

double negativity_band(const Eigen::MatrixXd& weights) {
  return 1e-10 * std::max(1.0, std::abs(weights.trace()));
}

// Solve P x = b for symmetric near-PSD P; escalating ridge jitter on failure.
Eigen::VectorXd solve_spd(const Eigen::MatrixXd& p, const Eigen::VectorXd& b, const char* what) {
  const int d = static_cast<int>(p.rows());
  const double tr = std::max(p.trace(), 1.0);
  double jitter = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(p + jitter * Eigen::MatrixXd::Identity(d, d));
    if (ldlt.info() == Eigen::Success) {
      Eigen::VectorXd x = ldlt.solve(b);
      double resid = (p * x - b).norm();
      if (x.allFinite() && resid <= 1e-8 * (1.0 + b.norm() + tr * x.norm())) {
        if (attempt > 0) ++jitter_events;
        return x;
      }
    }
    jitter = (jitter == 0.0) ? 1e-12 * tr / d : jitter * 10.0;
    if (jitter > 1e-6 * tr / d) break;
  }
  throw NumericalError(std::string("singular precision while ") + what);
}

double log_det_pd(const Eigen::MatrixXd& p, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(p);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string("precision block not positive definite while ") + what);
  double ld = 0.0;
  for (int i = 0; i < p.rows(); ++i) ld += std::log(llt.matrixL()(i, i));
  return 2.0 * ld;
}

// log integral over R^d of exp(-(x-c)^T P (x-c)) = d/2 log pi - 1/2 log det P.
double log_gauss_mass(const Eigen::MatrixXd& p, const char* what) {
  return 0.5 * p.rows() * std::log(kPi) - 0.5 * log_det_pd(p, what);
}

}  // namespace

long g_jitter_events() { return jitter_events.load(); }
void g_reset_jitter_events() { jitter_events.store(0); }

void GeneralizedPsdModel::validate() const {
  const int m = order(), d = dim();
  if (m < 1) throw InvariantError("model must have at least one entry row");
  if (d < 1) throw InvariantError("model must have at least one coordinate");
  groups.validate();
  if (static_cast<int>(entries.size()) != m * m) throw InvariantError("entry table size mismatch");
  if (!weights.allFinite() || !std::isfinite(log_scale)) throw InvariantError("model contains non-finite values");
  double asym = (weights - weights.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 * (1.0 + weights.cwiseAbs().maxCoeff()))
    throw InvariantError("weight matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(weights, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -negativity_band(weights))
    throw InvariantError("weight matrix has a negative eigenvalue beyond the rounding band");
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const auto& e = entry(i, j);
      if (e.center.size() != d || e.precision.rows() != d || e.precision.cols() != d)
        throw InvariantError("entry shape mismatch");
      if (!e.center.allFinite() || !e.precision.allFinite() || !std::isfinite(e.log_constant))
        throw InvariantError("entry contains non-finite values");
      if ((e.precision - e.precision.transpose()).cwiseAbs().maxCoeff() >
          1e-9 * (1.0 + e.precision.cwiseAbs().maxCoeff()))
        throw InvariantError("entry precision is not symmetric");
      const auto& et = entry(j, i);
      if (std::abs(e.log_constant - et.log_constant) > 1e-9 * (1.0 + std::abs(e.log_constant)) ||
          (e.center - et.center).cwiseAbs().maxCoeff() > 1e-9 ||
          (e.precision - et.precision).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + e.precision.cwiseAbs().maxCoeff()))
        throw InvariantError("entry table is not symmetric in (i, j)");
    }
  }
}

double g_evaluate(const GeneralizedPsdModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.dim()) throw InvariantError("evaluation point dimension mismatch");
  const int M = m.order();
  double raw = 0.0;
  for (int i = 0; i < M; ++i) {
    for (int j = i; j < M; ++j) {
      if (m.weights(i, j) == 0.0) continue;
      const auto& e = m.entry(i, j);
      Eigen::VectorXd d = x - e.center;
      double expo = e.log_constant - d.dot(e.precision * d);
      raw += (i == j ? 1.0 : 2.0) * m.weights(i, j) * std::exp(expo);
    }
  }
  if (raw < 0.0) {
    double band = negativity_band(m.weights);  // entry constants are e^{C} <= O(1) in practice
    if (raw < -band * 10.0) throw NumericalError("model evaluated negative beyond the rounding band");
    raw = 0.0;
  }
  return std::exp(m.log_scale) * raw;
}

double g_integral(const GeneralizedPsdModel& m) {
  const int M = m.order();
  double total = 0.0;
  for (int i = 0; i < M; ++i) {
    for (int j = i; j < M; ++j) {
      if (m.weights(i, j) == 0.0) continue;
      const auto& e = m.entry(i, j);
      double l = e.log_constant + log_gauss_mass(e.precision, "integrating");
      total += (i == j ? 1.0 : 2.0) * m.weights(i, j) * std::exp(l);
    }
  }
  return std::exp(m.log_scale) * total;
}

GeneralizedPsdModel g_partial_eval(const GeneralizedPsdModel& m, const std::string& group,
                                   const Eigen::VectorXd& value) {
  const int off = m.groups.offset_of(group);
  const int gd = m.groups.dim_of(group);
  if (value.size() != gd) throw InvariantError("partial evaluation value dimension mismatch");
  if (gd == m.dim()) throw InvariantError("partial evaluation must leave at least one coordinate");
  const int d = m.dim(), rd = d - gd, M = m.order();

  std::vector<int> rest;  // kept coordinates
  for (int c = 0; c < d; ++c)
    if (c < off || c >= off + gd) rest.push_back(c);

  GeneralizedPsdModel out;
  out.groups = m.groups.without(group);
  out.weights = m.weights;
  out.log_scale = m.log_scale;
  out.entries.resize(M * M);
  for (int i = 0; i < M; ++i) {
    for (int j = i; j < M; ++j) {
      const auto& e = m.entry(i, j);
      Eigen::MatrixXd pxx(rd, rd), pxy(rd, gd), pyy(gd, gd);
      for (int a = 0; a < rd; ++a) {
        for (int b = 0; b < rd; ++b) pxx(a, b) = e.precision(rest[a], rest[b]);
        for (int b = 0; b < gd; ++b) pxy(a, b) = e.precision(rest[a], off + b);
      }
      for (int a = 0; a < gd; ++a)
        for (int b = 0; b < gd; ++b) pyy(a, b) = e.precision(off + a, off + b);

      Eigen::VectorXd s = value - e.center.segment(off, gd);
      Eigen::VectorXd mux(rd);
      for (int a = 0; a < rd; ++a) mux[a] = e.center[rest[a]];

      // (x-mux)' Pxx (x-mux) + 2 (x-mux)' Pxy s + s' Pyy s
      //   = (x - mu')' Pxx (x - mu') + s' (Pyy - Pxy' Pxx^{-1} Pxy) s,
      //   mu' = mux - Pxx^{-1} Pxy s.
      Eigen::VectorXd shift = gd > 0 ? solve_spd(pxx, pxy * s, "partially evaluating") : Eigen::VectorXd::Zero(rd);
      GeneralizedEntry ne;
      ne.precision = 0.5 * (pxx + pxx.transpose());
      ne.center = mux - shift;
      ne.log_constant = e.log_constant - (s.dot(pyy * s) - (pxy * s).dot(shift));
      out.entry(i, j) = ne;
      if (i != j) out.entry(j, i) = ne;
    }
  }
  return out;
}

GeneralizedPsdModel g_product(const GeneralizedPsdModel& f, const GeneralizedPsdModel& g) {
  VariableGroups out_groups = f.groups;
  for (const auto& gg : g.groups.groups) {
    if (f.groups.has(gg.name)) {
      if (f.groups.dim_of(gg.name) != gg.dim)
        throw InvariantError("shared variable group '" + gg.name + "' has mismatched dimension");
    } else {
      out_groups.groups.push_back(gg);
    }
  }
  const int od = out_groups.total_dim();

  std::vector<int> from_f(od, -1), from_g(od, -1);
  {
    int c = 0;
    for (const auto& grp : out_groups.groups) {
      const int foff = f.groups.has(grp.name) ? f.groups.offset_of(grp.name) : -1;
      const int goff = g.groups.has(grp.name) ? g.groups.offset_of(grp.name) : -1;
      for (int k = 0; k < grp.dim; ++k, ++c) {
        if (foff >= 0) from_f[c] = foff + k;
        if (goff >= 0) from_g[c] = goff + k;
      }
    }
  }

  const int m1 = f.order(), m2 = g.order(), M = m1 * m2;
  GeneralizedPsdModel out;
  out.groups = out_groups;
  out.log_scale = f.log_scale + g.log_scale;
  out.weights.resize(M, M);
  for (int i = 0; i < m1; ++i)
    for (int k = 0; k < m2; ++k)
      for (int j = 0; j < m1; ++j)
        for (int l = 0; l < m2; ++l) out.weights(i * m2 + k, j * m2 + l) = f.weights(i, j) * g.weights(k, l);

  out.entries.resize(M * M);
  for (int i = 0; i < m1; ++i)
    for (int k = 0; k < m2; ++k)
      for (int j = 0; j < m1; ++j)
        for (int l = 0; l < m2; ++l) {
          const int r = i * m2 + k, s = j * m2 + l;
          if (s < r) continue;  // fill symmetric partner below
          const auto& ef = f.entry(i, j);
          const auto& eg = g.entry(k, l);
          // Combined exponent: (v_f - mu_f)' P_f (v_f - mu_f) + (v_g - mu_g)' P_g (v_g - mu_g)
          // as a quadratic in the unified coordinates.
          Eigen::MatrixXd p = Eigen::MatrixXd::Zero(od, od);
          Eigen::VectorXd nat = Eigen::VectorXd::Zero(od);  // P' mu'
          for (int a = 0; a < od; ++a) {
            for (int b = 0; b < od; ++b) {
              if (from_f[a] >= 0 && from_f[b] >= 0) p(a, b) += ef.precision(from_f[a], from_f[b]);
              if (from_g[a] >= 0 && from_g[b] >= 0) p(a, b) += eg.precision(from_g[a], from_g[b]);
            }
            if (from_f[a] >= 0) nat[a] += ef.precision.row(from_f[a]).dot(ef.center);
            if (from_g[a] >= 0) nat[a] += eg.precision.row(from_g[a]).dot(eg.center);
          }
          GeneralizedEntry ne;
          ne.precision = 0.5 * (p + p.transpose());
          ne.center = solve_spd(ne.precision, nat, "multiplying models");
          ne.log_constant = ef.log_constant + eg.log_constant + nat.dot(ne.center) -
                            ef.center.dot(ef.precision * ef.center) - eg.center.dot(eg.precision * eg.center);
          out.entry(r, s) = ne;
          if (r != s) out.entry(s, r) = ne;
        }
  return out;
}

GeneralizedPsdModel g_marginalize(const GeneralizedPsdModel& m, const std::string& group) {
  const int off = m.groups.offset_of(group);
  const int gd = m.groups.dim_of(group);
  if (gd == m.dim()) throw InvariantError("marginalization must leave at least one coordinate; use g_integral()");
  const int d = m.dim(), rd = d - gd, M = m.order();

  std::vector<int> rest;
  for (int c = 0; c < d; ++c)
    if (c < off || c >= off + gd) rest.push_back(c);

  GeneralizedPsdModel out;
  out.groups = m.groups.without(group);
  out.weights = m.weights;
  out.log_scale = m.log_scale;
  out.entries.resize(M * M);
  for (int i = 0; i < M; ++i) {
    for (int j = i; j < M; ++j) {
      const auto& e = m.entry(i, j);
      Eigen::MatrixXd pxx(rd, rd), pxy(rd, gd), pyy(gd, gd);
      for (int a = 0; a < rd; ++a) {
        for (int b = 0; b < rd; ++b) pxx(a, b) = e.precision(rest[a], rest[b]);
        for (int b = 0; b < gd; ++b) pxy(a, b) = e.precision(rest[a], off + b);
      }
      for (int a = 0; a < gd; ++a)
        for (int b = 0; b < gd; ++b) pyy(a, b) = e.precision(off + a, off + b);

      // Marginal precision is the Schur complement Pxx - Pxy Pyy^{-1} Pyx;
      // the constant gains the Gaussian mass of the integrated block:
      // C' = C + (gd/2) log pi - 1/2 log det Pyy.
      Eigen::LLT<Eigen::MatrixXd> llt(pyy);
      if (llt.info() != Eigen::Success)
        throw NumericalError("marginalized block not positive definite");
      Eigen::MatrixXd schur = pxx - pxy * llt.solve(pxy.transpose());
      double logdet_pyy = 0.0;
      for (int a = 0; a < gd; ++a) logdet_pyy += 2.0 * std::log(llt.matrixL()(a, a));

      GeneralizedEntry ne;
      ne.precision = 0.5 * (schur + schur.transpose());
      ne.center.resize(rd);
      for (int a = 0; a < rd; ++a) ne.center[a] = e.center[rest[a]];
      ne.log_constant = e.log_constant + 0.5 * gd * std::log(kPi) - 0.5 * logdet_pyy;
      out.entry(i, j) = ne;
      if (i != j) out.entry(j, i) = ne;
    }
  }
  return out;
}

GeneralizedPsdModel g_normalize(const GeneralizedPsdModel& m, double* z_out) {
  double z = g_integral(m);
  if (!(z > 0.0) || !std::isfinite(z)) throw NumericalError("normalization mass is nonpositive or non-finite");
  if (z_out) *z_out = z;
  GeneralizedPsdModel out = m;
  out.log_scale -= std::log(z);
  return out;
}

GeneralizedPsdModel g_rename_group(const GeneralizedPsdModel& m, const std::string& from,
                                   const std::string& to) {
  GeneralizedPsdModel out = m;
  out.groups = m.groups.renamed(from, to);
  return out;
}

GeneralizedPsdModel g_filter_step(const GeneralizedPsdModel& mu, const GeneralizedPsdModel& q,
                                  const GeneralizedPsdModel& g, const Eigen::VectorXd& y_obs,
                                  int step_index, double* z_out, const std::string& u_group,
                                  const std::string& y_group) {
  GeneralizedPsdModel predicted = g_marginalize(g_product(mu, q), u_group);
  GeneralizedPsdModel likelihood = g_partial_eval(g, y_group, y_obs);
  GeneralizedPsdModel posterior = g_product(predicted, likelihood);
  double z = g_integral(posterior);
  if (!(z > 0.0) || !std::isfinite(z)) throw ZeroEvidenceError(step_index);
  if (z_out) *z_out = z;
  posterior.log_scale -= std::log(z);
  return posterior;
}

GeneralizedPsdModel embed_psd(const GaussianPsdModel& m) {
  const int M = m.order(), d = m.dim();
  GeneralizedPsdModel out;
  out.groups = m.groups;
  out.weights = m.weights;
  out.log_scale = m.log_scale;
  out.entries.resize(M * M);
  Eigen::MatrixXd p2 = (2.0 * m.precision).asDiagonal();
  for (int i = 0; i < M; ++i) {
    for (int j = i; j < M; ++j) {
      GeneralizedEntry e;
      e.precision = p2;
      e.center = 0.5 * (m.anchors.row(i) + m.anchors.row(j)).transpose();
      double c = 0.0;
      for (int k = 0; k < d; ++k) {
        double diff = m.anchors(i, k) - m.anchors(j, k);
        c -= 0.5 * m.precision[k] * diff * diff;
      }
      e.log_constant = c;
      out.entry(i, j) = e;
      if (i != j) out.entry(j, i) = e;
    }
  }
  return out;
}

KalmanComponent kalman_component(const ConditionalGaussianLinear& p, double radius, double eps,
                                 const std::string& in_group, const std::string& out_group) {
  const int d = p.dim_in(), dy = p.dim_out();
  if (p.b.size() != dy || p.Sigma.rows() != dy || p.Sigma.cols() != dy)
    throw InvariantError("conditional Gaussian shape mismatch");
  if (!(radius > 0.0) || !(eps > 0.0)) throw InvariantError("radius and eps must be positive");

  // Written with S = 2 Sigma so the exponent needs no 1/2 factors:
  //   p(y|x) = exp(C_S) exp(-(L u + b)' S^{-1} (L u + b)),  u = (x, y), L = (F, -I).
  Eigen::MatrixXd S = 2.0 * p.Sigma;
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw InvariantError("Sigma must be positive definite");
  Eigen::MatrixXd L(dy, d + dy);
  L.leftCols(d) = p.F;
  L.rightCols(dy) = -Eigen::MatrixXd::Identity(dy, dy);

  double logdet_s = 0.0;
  for (int i = 0; i < dy; ++i) logdet_s += 2.0 * std::log(llt.matrixL()(i, i));
  const double c_sigma = -0.5 * dy * std::log(kPi) - 0.5 * logdet_s;
  const double peak = std::exp(c_sigma);  // (2 pi)^{-dy/2} det(Sigma)^{-1/2}

  const double lambda = std::log1p(eps / peak) / (radius * radius);
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw NumericalError("requested accuracy is unachievable: the deformation rate underflowed");

  Eigen::MatrixXd sinv_l = llt.solve(L);
  Eigen::MatrixXd p_lambda = L.transpose() * sinv_l + lambda * Eigen::MatrixXd::Identity(d + dy, d + dy);
  Eigen::VectorXd beta = -L.transpose() * llt.solve(p.b);
  Eigen::VectorXd mu = solve_spd(p_lambda, beta, "building the conditional component");

  // C = C_S - lambda b' (lambda S + L L')^{-1} b  (push-through identity).
  double shift = 0.0;
  if (p.b.size() > 0 && p.b.squaredNorm() > 0.0) {
    Eigen::MatrixXd inner = lambda * S + L * L.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt2(inner);
    if (llt2.info() != Eigen::Success) throw NumericalError("deformed normalizer solve failed");
    shift = lambda * p.b.dot(llt2.solve(p.b));
  }

  KalmanComponent out;
  out.lambda = lambda;
  out.p_max = peak;
  out.model.groups = VariableGroups({{in_group, d}, {out_group, dy}});
  out.model.weights = Eigen::MatrixXd::Ones(1, 1);
  out.model.log_scale = 0.0;
  GeneralizedEntry e;
  e.precision = 0.5 * (p_lambda + p_lambda.transpose());
  e.center = mu;
  e.log_constant = c_sigma - shift;
  out.model.entries = {e};
  return out;
}

}  // namespace psdf
