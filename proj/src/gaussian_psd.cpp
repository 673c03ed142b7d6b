#include "psdf/gaussian_psd.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <vector>

namespace psdf {

namespace {

constexpr double kPi = 3.141592653589793238462643383279503;

// Relative band below which negative quadratic-form values are treated as
// rounding dust of a PSD weight matrix.
double negativity_band(const Eigen::MatrixXd& weights) {
  return 1e-10 * std::max(1.0, std::abs(weights.trace()));
}

// log phi_i(x) for all anchors.
Eigen::VectorXd log_features(const GaussianPsdModel& m, const Eigen::VectorXd& x) {
  Eigen::VectorXd l = Eigen::VectorXd::Zero(m.order());
  for (int c = 0; c < m.dim(); ++c)
    l -= m.precision[c] * (m.anchors.col(c).array() - x[c]).square().matrix();
  return l;
}

// Symmetrize and clip negative eigenvalue dust to zero.
Eigen::MatrixXd clip_to_psd(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd s = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed while re-projecting weights");
  Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

void GaussianPsdModel::validate() const {
  const int m = order(), d = dim();
  if (m < 1) throw InvariantError("model must have at least one anchor");
  if (d < 1) throw InvariantError("model must have at least one coordinate");
  if (precision.size() != d) throw InvariantError("precision size does not match anchor dimension");
  if (weights.rows() != m || weights.cols() != m) throw InvariantError("weight matrix shape does not match order");
  if (groups.total_dim() != d) throw InvariantError("variable groups do not cover the coordinates");
  groups.validate();
  if (!anchors.allFinite() || !weights.allFinite() || !std::isfinite(log_scale))
    throw InvariantError("model contains non-finite values");
  for (int c = 0; c < d; ++c)
    if (!(precision[c] > 0.0) || !std::isfinite(precision[c]))
      throw InvariantError("precision entries must be positive and finite");
  double asym = (weights - weights.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 * (1.0 + weights.cwiseAbs().maxCoeff()))
    throw InvariantError("weight matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(weights, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -negativity_band(weights))
    throw InvariantError("weight matrix has a negative eigenvalue beyond the rounding band");
}

double evaluate(const GaussianPsdModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.dim()) throw InvariantError("evaluation point dimension mismatch");
  Eigen::VectorXd l = log_features(m, x);
  double top = l.maxCoeff();
  if (!std::isfinite(top)) return 0.0;  // all features underflow
  Eigen::VectorXd v = (l.array() - top).exp();
  double raw = v.dot(m.weights * v);
  if (raw < 0.0) {
    if (raw < -negativity_band(m.weights))
      throw NumericalError("model evaluated negative beyond the rounding band");
    raw = 0.0;
  }
  return std::exp(m.log_scale + 2.0 * top) * raw;
}

Eigen::VectorXd evaluate_rows(const GaussianPsdModel& m, const Eigen::MatrixXd& X) {
  if (X.cols() != m.dim()) throw InvariantError("evaluation point dimension mismatch");
  const int n = static_cast<int>(X.rows());
  const double band = negativity_band(m.weights);
  const double scale = std::exp(m.log_scale);
  Eigen::VectorXd out(n);
  const int chunk = 4096;
  Eigen::MatrixXd logphi;
  for (int start = 0; start < n; start += chunk) {
    const int len = std::min(chunk, n - start);
    logphi = Eigen::MatrixXd::Zero(m.order(), len);
    for (int c = 0; c < m.dim(); ++c) {
      auto xc = X.col(c).segment(start, len);
      logphi.noalias() -=
          m.precision[c] * (m.anchors.col(c).replicate(1, len) - xc.transpose().replicate(m.order(), 1))
                               .array()
                               .square()
                               .matrix();
    }
    Eigen::MatrixXd phi = logphi.array().exp();
    Eigen::MatrixXd aphi = m.weights * phi;
    for (int j = 0; j < len; ++j) {
      double raw = phi.col(j).dot(aphi.col(j));
      if (raw < 0.0) {
        if (raw < -band) throw NumericalError("model evaluated negative beyond the rounding band");
        raw = 0.0;
      }
      out[start + j] = scale * raw;
    }
  }
  return out;
}

double log_gauss_segment(double p, double center, double lo, double hi) {
  if (!(p > 0.0)) throw InvariantError("gaussian segment requires positive precision");
  const double root = std::sqrt(p);
  const bool lo_inf = std::isinf(lo), hi_inf = std::isinf(hi);
  if (lo_inf && hi_inf) return 0.5 * std::log(kPi / p);
  const double z1 = lo_inf ? -std::numeric_limits<double>::infinity() : root * (lo - center);
  const double z2 = hi_inf ? std::numeric_limits<double>::infinity() : root * (hi - center);
  double diff;  // erf(z2) - erf(z1), computed without cancellation
  if (z1 >= 0.0)
    diff = std::erfc(z1) - (hi_inf ? 0.0 : std::erfc(z2));
  else if (z2 <= 0.0)
    diff = std::erfc(-z2) - (lo_inf ? 0.0 : std::erfc(-z1));
  else
    diff = (hi_inf ? 1.0 : std::erf(z2)) + (lo_inf ? 1.0 : -std::erf(z1));
  if (diff <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(0.5 * std::sqrt(kPi / p)) + std::log(diff);
}

namespace {

// log of integral over the segment of k(t,a)k(t,b) with shared precision eta:
// exp(-eta/2 (a-b)^2) * integral of exp(-2 eta (t - (a+b)/2)^2).
double log_pair_segment(double eta, double a, double b, double lo, double hi) {
  return -0.5 * eta * (a - b) * (a - b) + log_gauss_segment(2.0 * eta, 0.5 * (a + b), lo, hi);
}

}  // namespace

double integral(const GaussianPsdModel& m, const Domain& domain) {
  if (domain.dim() != m.dim()) throw InvariantError("integration domain dimension mismatch");
  const double inf = std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (int i = 0; i < m.order(); ++i) {
    for (int j = i; j < m.order(); ++j) {
      double l = 0.0;
      for (int c = 0; c < m.dim(); ++c) {
        const double lo = domain.bounded() ? domain.lo()[c] : -inf;
        const double hi = domain.bounded() ? domain.hi()[c] : inf;
        l += log_pair_segment(m.precision[c], m.anchors(i, c), m.anchors(j, c), lo, hi);
      }
      total += (i == j ? 1.0 : 2.0) * m.weights(i, j) * std::exp(l);
    }
  }
  return std::exp(m.log_scale) * total;
}

GaussianPsdModel partial_eval(const GaussianPsdModel& m, const std::string& group,
                              const Eigen::VectorXd& value) {
  const int off = m.groups.offset_of(group);
  const int gd = m.groups.dim_of(group);
  if (value.size() != gd) throw InvariantError("partial evaluation value dimension mismatch");
  if (gd == m.dim()) throw InvariantError("partial evaluation must leave at least one coordinate");

  Eigen::VectorXd l = Eigen::VectorXd::Zero(m.order());
  for (int c = 0; c < gd; ++c)
    l -= m.precision[off + c] * (m.anchors.col(off + c).array() - value[c]).square().matrix();
  const double top = l.maxCoeff();
  Eigen::VectorXd v = (l.array() - top).exp();

  GaussianPsdModel out;
  out.groups = m.groups.without(group);
  const int rd = m.dim() - gd;
  out.anchors.resize(m.order(), rd);
  out.precision.resize(rd);
  for (int c = 0, k = 0; c < m.dim(); ++c) {
    if (c >= off && c < off + gd) continue;
    out.anchors.col(k) = m.anchors.col(c);
    out.precision[k] = m.precision[c];
    ++k;
  }
  out.weights = v.asDiagonal() * m.weights * v.asDiagonal();
  out.weights = 0.5 * (out.weights + out.weights.transpose());
  out.log_scale = m.log_scale + 2.0 * top;
  return compact(out);
}

GaussianPsdModel product(const GaussianPsdModel& f, const GaussianPsdModel& g) {
  // Unified coordinate layout: f's groups, then g's groups not present in f.
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

  // For each output coordinate, its source column in f and/or g (-1 if absent).
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

  const int m1 = f.order(), m2 = g.order();
  GaussianPsdModel out;
  out.groups = out_groups;
  out.precision.resize(od);
  for (int c = 0; c < od; ++c)
    out.precision[c] =
        (from_f[c] >= 0 ? f.precision[from_f[c]] : 0.0) + (from_g[c] >= 0 ? g.precision[from_g[c]] : 0.0);

  out.anchors.resize(m1 * m2, od);
  Eigen::VectorXd logc = Eigen::VectorXd::Zero(m1 * m2);
  for (int i = 0; i < m1; ++i) {
    for (int k = 0; k < m2; ++k) {
      const int r = i * m2 + k;
      for (int c = 0; c < od; ++c) {
        if (from_f[c] >= 0 && from_g[c] >= 0) {
          const double ef = f.precision[from_f[c]], eg = g.precision[from_g[c]];
          const double a = f.anchors(i, from_f[c]), b = g.anchors(k, from_g[c]);
          out.anchors(r, c) = (ef * a + eg * b) / (ef + eg);
          logc[r] -= ef * eg / (ef + eg) * (a - b) * (a - b);
        } else if (from_f[c] >= 0) {
          out.anchors(r, c) = f.anchors(i, from_f[c]);
        } else {
          out.anchors(r, c) = g.anchors(k, from_g[c]);
        }
      }
    }
  }

  const double top = logc.maxCoeff();
  Eigen::VectorXd cv = (logc.array() - top).exp();
  out.weights.resize(m1 * m2, m1 * m2);
  for (int i = 0; i < m1; ++i)
    for (int k = 0; k < m2; ++k)
      for (int j = 0; j < m1; ++j)
        for (int l = 0; l < m2; ++l)
          out.weights(i * m2 + k, j * m2 + l) = cv[i * m2 + k] * f.weights(i, j) * g.weights(k, l) * cv[j * m2 + l];
  out.log_scale = f.log_scale + g.log_scale + 2.0 * top;
  return compact(out);
}

GaussianPsdModel marginalize(const GaussianPsdModel& m, const std::string& group,
                             const Domain& group_domain) {
  const int off = m.groups.offset_of(group);
  const int gd = m.groups.dim_of(group);
  if (group_domain.dim() != gd) throw InvariantError("marginalization domain dimension mismatch");
  if (gd == m.dim()) throw InvariantError("marginalization must leave at least one coordinate; use integral()");

  const double inf = std::numeric_limits<double>::infinity();
  const int M = m.order();
  Eigen::MatrixXd logw(M, M);
  for (int i = 0; i < M; ++i) {
    for (int j = i; j < M; ++j) {
      double l = 0.0;
      for (int c = 0; c < gd; ++c) {
        const double lo = group_domain.bounded() ? group_domain.lo()[c] : -inf;
        const double hi = group_domain.bounded() ? group_domain.hi()[c] : inf;
        l += log_pair_segment(m.precision[off + c], m.anchors(i, off + c), m.anchors(j, off + c), lo, hi);
      }
      logw(i, j) = logw(j, i) = l;
    }
  }
  const double top = logw.maxCoeff();
  if (!std::isfinite(top)) throw NumericalError("marginalization weights all underflow");

  GaussianPsdModel out;
  out.groups = m.groups.without(group);
  const int rd = m.dim() - gd;
  out.anchors.resize(M, rd);
  out.precision.resize(rd);
  for (int c = 0, k = 0; c < m.dim(); ++c) {
    if (c >= off && c < off + gd) continue;
    out.anchors.col(k) = m.anchors.col(c);
    out.precision[k] = m.precision[c];
    ++k;
  }
  out.weights = m.weights.cwiseProduct((logw.array() - top).exp().matrix());
  out.weights = clip_to_psd(out.weights);
  out.log_scale = m.log_scale + top;
  return compact(out);
}

GaussianPsdModel markov_step(const GaussianPsdModel& transition, const GaussianPsdModel& density,
                             const std::string& u_group, const Domain& u_domain) {
  if (density.groups.groups.size() != 1 || density.groups.groups[0].name != u_group)
    throw InvariantError("markov step expects the density over exactly the integrated group");
  if (!transition.groups.has(u_group)) throw InvariantError("transition lacks group '" + u_group + "'");
  GaussianPsdModel joint = product(density, transition);
  return marginalize(joint, u_group, u_domain);
}

GaussianPsdModel normalize(const GaussianPsdModel& m, const Domain& domain, double* z_out) {
  double z = integral(m, domain);
  if (!(z > 0.0) || !std::isfinite(z)) throw NumericalError("normalization mass is nonpositive or non-finite");
  if (z_out) *z_out = z;
  GaussianPsdModel out = m;
  out.log_scale -= std::log(z);
  return out;
}

GaussianPsdModel from_gmm(const Eigen::VectorXd& mixture_weights, const Eigen::MatrixXd& means,
                          const Eigen::VectorXd& precisions, const VariableGroups& groups) {
  const int M = static_cast<int>(means.rows());
  const int d = static_cast<int>(means.cols());
  if (mixture_weights.size() != M) throw InvariantError("mixture weight count does not match component count");
  if (precisions.size() != d) throw InvariantError("precision size does not match mean dimension");
  for (int k = 0; k < M; ++k)
    if (mixture_weights[k] < 0.0) throw InvariantError("mixture weights must be nonnegative");
  double lognorm = 0.0;  // per-component normalizer prod_c sqrt(p_c / 2 pi)
  for (int c = 0; c < d; ++c) {
    if (!(precisions[c] > 0.0)) throw InvariantError("precisions must be positive");
    lognorm += 0.5 * std::log(precisions[c] / (2.0 * kPi));
  }
  GaussianPsdModel out;
  out.groups = groups;
  out.anchors = means;
  out.precision = precisions / 4.0;  // k(x,mu)^2 then has exponent -p/2 (x-mu)^2
  out.weights = (mixture_weights * std::exp(lognorm)).asDiagonal();
  out.log_scale = 0.0;
  out.validate();
  return out;
}

GaussianPsdModel from_linear_square(const Eigen::VectorXd& w, const Eigen::MatrixXd& anchors,
                                    const Eigen::VectorXd& precision, const VariableGroups& groups) {
  if (w.size() != anchors.rows()) throw InvariantError("coefficient count does not match anchor count");
  GaussianPsdModel out;
  out.groups = groups;
  out.anchors = anchors;
  out.precision = precision;
  out.weights = w * w.transpose();
  out.log_scale = 0.0;
  out.validate();
  return out;
}

GaussianPsdModel rename_group(const GaussianPsdModel& m, const std::string& from, const std::string& to) {
  GaussianPsdModel out = m;
  out.groups = m.groups.renamed(from, to);
  return out;
}

GaussianPsdModel compact(const GaussianPsdModel& m) {
  const int M = m.order(), d = m.dim();

  // Merge bit-identical anchors: summing merged rows/columns is the exact
  // congruence S^T W S for the 0/1 selector S, so PSD-ness is preserved.
  std::map<std::string, int> seen;
  std::vector<int> rep(M);
  int distinct = 0;
  for (int i = 0; i < M; ++i) {
    std::string key(reinterpret_cast<const char*>(m.anchors.row(i).eval().data()), sizeof(double) * d);
    auto [it, inserted] = seen.emplace(std::move(key), distinct);
    rep[i] = it->second;
    if (inserted) ++distinct;
  }

  Eigen::MatrixXd anchors(distinct, d);
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(distinct, distinct);
  for (int i = 0; i < M; ++i) anchors.row(rep[i]) = m.anchors.row(i);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) weights(rep[i], rep[j]) += m.weights(i, j);

  // Drop anchors whose weight row is negligible relative to the largest entry.
  const double top = weights.cwiseAbs().maxCoeff();
  std::vector<int> keep;
  for (int i = 0; i < distinct; ++i)
    if (top == 0.0 || weights.row(i).cwiseAbs().maxCoeff() > 1e-14 * top) keep.push_back(i);
  if (keep.empty()) keep.push_back(0);

  GaussianPsdModel out;
  out.groups = m.groups;
  out.precision = m.precision;
  out.log_scale = m.log_scale;
  if (static_cast<int>(keep.size()) == distinct) {
    out.anchors = std::move(anchors);
    out.weights = 0.5 * (weights + weights.transpose());
    return out;
  }
  out.anchors.resize(keep.size(), d);
  out.weights.resize(keep.size(), keep.size());
  for (size_t a = 0; a < keep.size(); ++a) {
    out.anchors.row(a) = anchors.row(keep[a]);
    for (size_t b = 0; b < keep.size(); ++b) out.weights(a, b) = weights(keep[a], keep[b]);
  }
  out.weights = 0.5 * (out.weights + out.weights.transpose());
  return out;
}

}  // namespace psdf
