#include "psdf/serialize.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>
#include <vector>

namespace psdf {

std::string double_to_string(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double double_from_string(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("malformed number '" + s + "'");
  return v;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw ConfigError("failed writing '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

namespace {

void check_group_name(const std::string& name) {
  if (name.empty()) throw ConfigError("empty variable group name");
  for (char c : name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_'))
      throw ConfigError("group names must be alphanumeric/underscore for serialization");
}

void put_header(std::ostream& os, const char* tag, const VariableGroups& groups, int order,
                double log_scale) {
  os << tag << " 1\n";
  os << "groups " << groups.groups.size();
  for (const auto& g : groups.groups) {
    check_group_name(g.name);
    os << ' ' << g.name << ' ' << g.dim;
  }
  os << "\norder " << order << "\n";
  os << "log_scale " << double_to_string(log_scale) << "\n";
}

// Whitespace token reader.
class Tokens {
 public:
  explicit Tokens(const std::string& text) : in_(text) {}

  std::string next() {
    std::string t;
    if (!(in_ >> t)) throw ConfigError("unexpected end of model text");
    return t;
  }

  void expect(const std::string& what) {
    std::string t = next();
    if (t != what) throw ConfigError("expected '" + what + "', found '" + t + "' in model text");
  }

  int next_int() {
    std::string t = next();
    try {
      size_t pos = 0;
      int v = std::stoi(t, &pos);
      if (pos != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("malformed integer '" + t + "' in model text");
    }
  }

  double next_double() { return double_from_string(next()); }

 private:
  std::istringstream in_;
};

VariableGroups read_groups(Tokens& tok) {
  tok.expect("groups");
  int count = tok.next_int();
  if (count < 1) throw ConfigError("model must declare at least one variable group");
  VariableGroups groups;
  for (int i = 0; i < count; ++i) {
    std::string name = tok.next();
    int dim = tok.next_int();
    groups.groups.push_back({name, dim});
  }
  groups.validate();
  return groups;
}

}  // namespace

std::string to_text(const GaussianPsdModel& m) {
  std::ostringstream os;
  put_header(os, "gaussian_psd_model", m.groups, m.order(), m.log_scale);
  os << "precision";
  for (int c = 0; c < m.dim(); ++c) os << ' ' << double_to_string(m.precision[c]);
  os << "\nanchors\n";
  for (int i = 0; i < m.order(); ++i) {
    for (int c = 0; c < m.dim(); ++c) os << (c ? " " : "") << double_to_string(m.anchors(i, c));
    os << "\n";
  }
  os << "weights\n";
  for (int i = 0; i < m.order(); ++i) {
    for (int j = 0; j < m.order(); ++j) os << (j ? " " : "") << double_to_string(m.weights(i, j));
    os << "\n";
  }
  os << "end\n";
  return os.str();
}

GaussianPsdModel gaussian_psd_from_text(const std::string& text) {
  Tokens tok(text);
  tok.expect("gaussian_psd_model");
  if (tok.next_int() != 1) throw ConfigError("unsupported model version");
  GaussianPsdModel m;
  m.groups = read_groups(tok);
  tok.expect("order");
  const int order = tok.next_int();
  const int dim = m.groups.total_dim();
  if (order < 1) throw ConfigError("order must be positive");
  tok.expect("log_scale");
  m.log_scale = tok.next_double();
  tok.expect("precision");
  m.precision.resize(dim);
  for (int c = 0; c < dim; ++c) m.precision[c] = tok.next_double();
  tok.expect("anchors");
  m.anchors.resize(order, dim);
  for (int i = 0; i < order; ++i)
    for (int c = 0; c < dim; ++c) m.anchors(i, c) = tok.next_double();
  tok.expect("weights");
  m.weights.resize(order, order);
  for (int i = 0; i < order; ++i)
    for (int j = 0; j < order; ++j) m.weights(i, j) = tok.next_double();
  tok.expect("end");
  m.validate();
  return m;
}

std::string to_text(const GeneralizedPsdModel& m) {
  std::ostringstream os;
  put_header(os, "generalized_psd_model", m.groups, m.order(), m.log_scale);
  os << "weights\n";
  for (int i = 0; i < m.order(); ++i) {
    for (int j = 0; j < m.order(); ++j) os << (j ? " " : "") << double_to_string(m.weights(i, j));
    os << "\n";
  }
  const int d = m.dim();
  for (int i = 0; i < m.order(); ++i) {
    for (int j = i; j < m.order(); ++j) {
      const auto& e = m.entry(i, j);
      os << "entry " << i << ' ' << j << " log_constant " << double_to_string(e.log_constant);
      os << " center";
      for (int c = 0; c < d; ++c) os << ' ' << double_to_string(e.center[c]);
      os << " precision";
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) os << ' ' << double_to_string(e.precision(a, b));
      os << "\n";
    }
  }
  os << "end\n";
  return os.str();
}

GeneralizedPsdModel generalized_psd_from_text(const std::string& text) {
  Tokens tok(text);
  tok.expect("generalized_psd_model");
  if (tok.next_int() != 1) throw ConfigError("unsupported model version");
  GeneralizedPsdModel m;
  m.groups = read_groups(tok);
  tok.expect("order");
  const int order = tok.next_int();
  const int dim = m.groups.total_dim();
  if (order < 1) throw ConfigError("order must be positive");
  tok.expect("log_scale");
  m.log_scale = tok.next_double();
  tok.expect("weights");
  m.weights.resize(order, order);
  for (int i = 0; i < order; ++i)
    for (int j = 0; j < order; ++j) m.weights(i, j) = tok.next_double();
  m.entries.resize(order * order);
  std::vector<bool> filled(order * order, false);
  for (int rec = 0; rec < order * (order + 1) / 2; ++rec) {
    tok.expect("entry");
    int i = tok.next_int(), j = tok.next_int();
    if (i < 0 || j < i || j >= order) throw ConfigError("entry index out of range");
    GeneralizedEntry e;
    tok.expect("log_constant");
    e.log_constant = tok.next_double();
    tok.expect("center");
    e.center.resize(dim);
    for (int c = 0; c < dim; ++c) e.center[c] = tok.next_double();
    tok.expect("precision");
    e.precision.resize(dim, dim);
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) e.precision(a, b) = tok.next_double();
    m.entry(i, j) = e;
    m.entry(j, i) = e;
    filled[i * order + j] = true;
  }
  tok.expect("end");
  for (int i = 0; i < order; ++i)
    for (int j = i; j < order; ++j)
      if (!filled[i * order + j]) throw ConfigError("missing entry record in model text");
  m.validate();
  return m;
}

}  // namespace psdf
