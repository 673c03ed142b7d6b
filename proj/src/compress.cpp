#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <vector>

#include "psdf/generalized_psd.hpp"
#include "psdf/learning.hpp"
#include "psdf/rng.hpp"

namespace psdf {

namespace {

// Distinct entry centers ranked by their absolute contribution to the mass,
// |w_ij| e^{C_ij} det(P_ij)^{-1/2}. These are the natural anchor seeds: a
// model representable in the fitted RKHS has its expansion centers among
// them, so the fit degenerates to interpolation and recovery is exact.
Eigen::MatrixXd ranked_entry_centers(const GeneralizedPsdModel& m) {
  const int M = m.order(), d = m.dim();
  std::map<std::string, std::pair<Eigen::VectorXd, double>> seen;  // bit-key -> (center, weight)
  for (int i = 0; i < M; ++i) {
    for (int j = i; j < M; ++j) {
      const auto& e = m.entry(i, j);
      Eigen::LLT<Eigen::MatrixXd> llt(e.precision);
      double half_logdet = 0.0;
      if (llt.info() == Eigen::Success) {
        for (int c = 0; c < d; ++c) half_logdet += std::log(llt.matrixL()(c, c));
      }
      const double contrib = std::abs(m.weights(i, j)) * std::exp(e.log_constant - half_logdet);
      std::string key(reinterpret_cast<const char*>(e.center.data()), sizeof(double) * d);
      auto [it, inserted] = seen.emplace(key, std::make_pair(e.center, contrib));
      if (!inserted) it->second.second += contrib;
    }
  }
  std::vector<std::pair<Eigen::VectorXd, double>> ranked;
  ranked.reserve(seen.size());
  for (auto& kv : seen) ranked.push_back(std::move(kv.second));
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Eigen::MatrixXd out(static_cast<int>(ranked.size()), d);
  for (int r = 0; r < out.rows(); ++r) out.row(r) = ranked[r].first.transpose();
  return out;
}

}  // namespace

GaussianPsdModel compress(const GeneralizedPsdModel& m, int target_order, const Domain& domain,
                          std::uint64_t seed, const CompressOptions& opts) {
  if (target_order < 1) throw InvariantError("target order must be positive");
  if (domain.dim() != m.dim()) throw InvariantError("compression domain dimension mismatch");

  GeneralizedPsdModel norm = g_normalize(m);

  Eigen::VectorXd eta;
  if (opts.eta) {
    eta = *opts.eta;
    if (eta.size() != m.dim()) throw InvariantError("kernel precision override size mismatch");
  } else {
    // Median diagonal precision per coordinate, halved: the square root of a
    // Gaussian-like entry has half its exponent.
    eta.resize(m.dim());
    std::vector<double> diag;
    for (int c = 0; c < m.dim(); ++c) {
      diag.clear();
      for (int i = 0; i < m.order(); ++i)
        for (int j = i; j < m.order(); ++j) diag.push_back(m.entry(i, j).precision(c, c));
      std::nth_element(diag.begin(), diag.begin() + diag.size() / 2, diag.end());
      eta[c] = 0.5 * diag[diag.size() / 2];
      if (!(eta[c] > 0.0)) throw NumericalError("entry precisions must be positive to derive a kernel width");
    }
  }

  // Anchors: the strongest entry centers first, then seeded domain samples
  // if the model has fewer distinct centers than requested.
  const Eigen::MatrixXd centers = ranked_entry_centers(norm);
  Eigen::MatrixXd anchors(target_order, m.dim());
  const int from_centers = std::min<int>(target_order, static_cast<int>(centers.rows()));
  anchors.topRows(from_centers) = centers.topRows(from_centers);
  if (from_centers < target_order) {
    Rng rng(seed, 0x7C01);
    for (int r = from_centers; r < target_order; ++r) anchors.row(r) = domain.sample(rng).transpose();
  }

  LearnConfig cfg;
  cfg.m = target_order;
  cfg.n = opts.n > 0 ? opts.n : std::max(64 * target_order, 512);
  cfg.eta = eta;
  cfg.lambda = opts.lambda;
  cfg.seed = seed;
  cfg.anchors = anchors;

  TargetFn f = [&norm](const Eigen::VectorXd& x) { return std::max(g_evaluate(norm, x), 0.0); };
  GaussianPsdModel fit = learn_rank_one(f, domain, cfg, m.groups);
  return normalize(fit, domain);
}

}  // namespace psdf