#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "psdf/common.hpp"
#include "psdf/rng.hpp"

namespace psdf {

// Integration/sampling region: either all of R^d or an axis-aligned box.
class Domain {
 public:
  Domain() = default;

  static Domain all_space(int dim) {
    Domain d;
    d.dim_ = dim;
    d.bounded_ = false;
    return d;
  }

  static Domain hypercube(int dim, double lo, double hi) {
    return box(Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi));
  }

  // The default working region (-1, 1)^d.
  static Domain unit_cube(int dim) { return hypercube(dim, -1.0, 1.0); }

  static Domain box(Eigen::VectorXd lo, Eigen::VectorXd hi) {
    if (lo.size() != hi.size()) throw InvariantError("domain bounds size mismatch");
    for (int i = 0; i < lo.size(); ++i)
      if (!(lo[i] < hi[i])) throw InvariantError("domain bounds must satisfy lo < hi");
    Domain d;
    d.dim_ = static_cast<int>(lo.size());
    d.bounded_ = true;
    d.lo_ = std::move(lo);
    d.hi_ = std::move(hi);
    return d;
  }

  int dim() const { return dim_; }
  bool bounded() const { return bounded_; }
  const Eigen::VectorXd& lo() const { return lo_; }
  const Eigen::VectorXd& hi() const { return hi_; }

  double volume() const {
    if (!bounded_) throw InvariantError("volume of an unbounded domain");
    return (hi_ - lo_).prod();
  }

  bool contains(const Eigen::VectorXd& x) const {
    if (!bounded_) return true;
    for (int i = 0; i < dim_; ++i)
      if (x[i] < lo_[i] || x[i] > hi_[i]) return false;
    return true;
  }

  // Sub-domain for coordinates [offset, offset+len).
  Domain slice(int offset, int len) const {
    if (offset < 0 || len < 0 || offset + len > dim_) throw InvariantError("domain slice out of range");
    if (!bounded_) return all_space(len);
    return box(lo_.segment(offset, len), hi_.segment(offset, len));
  }

  Eigen::VectorXd sample(Rng& rng) const {
    if (!bounded_) throw InvariantError("cannot sample uniformly from an unbounded domain");
    Eigen::VectorXd x(dim_);
    for (int i = 0; i < dim_; ++i) x[i] = rng.uniform(lo_[i], hi_[i]);
    return x;
  }

 private:
  int dim_ = 0;
  bool bounded_ = true;
  Eigen::VectorXd lo_, hi_;
};

// Named partition of a model's coordinates, e.g. (u: 1)(x: 1) for a
// transition kernel. Group order defines the coordinate layout.
struct VariableGroups {
  struct Group {
    std::string name;
    int dim = 0;
    bool operator==(const Group&) const = default;
  };

  std::vector<Group> groups;

  VariableGroups() = default;
  VariableGroups(std::initializer_list<Group> gs) : groups(gs) { validate(); }
  explicit VariableGroups(std::vector<Group> gs) : groups(std::move(gs)) { validate(); }

  static VariableGroups single(const std::string& name, int dim) {
    return VariableGroups({{name, dim}});
  }

  void validate() const {
    for (const auto& g : groups) {
      if (g.dim <= 0) throw InvariantError("variable group '" + g.name + "' must have positive dimension");
      int count = 0;
      for (const auto& h : groups) count += (h.name == g.name);
      if (count != 1) throw InvariantError("duplicate variable group '" + g.name + "'");
    }
  }

  int total_dim() const {
    int d = 0;
    for (const auto& g : groups) d += g.dim;
    return d;
  }

  bool has(const std::string& name) const {
    for (const auto& g : groups)
      if (g.name == name) return true;
    return false;
  }

  int offset_of(const std::string& name) const {
    int off = 0;
    for (const auto& g : groups) {
      if (g.name == name) return off;
      off += g.dim;
    }
    throw InvariantError("unknown variable group '" + name + "'");
  }

  int dim_of(const std::string& name) const {
    for (const auto& g : groups)
      if (g.name == name) return g.dim;
    throw InvariantError("unknown variable group '" + name + "'");
  }

  // Groups with `name` removed (for marginalization / partial evaluation).
  VariableGroups without(const std::string& name) const {
    VariableGroups out;
    for (const auto& g : groups)
      if (g.name != name) out.groups.push_back(g);
    return out;
  }

  VariableGroups renamed(const std::string& from, const std::string& to) const {
    if (!has(from)) throw InvariantError("unknown variable group '" + from + "'");
    VariableGroups out = *this;
    for (auto& g : out.groups)
      if (g.name == from) g.name = to;
    out.validate();
    return out;
  }

  bool operator==(const VariableGroups&) const = default;
};

}  // namespace psdf
