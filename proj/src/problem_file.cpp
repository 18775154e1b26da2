#include "qyoula/problem_file.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "qyoula/errors.hpp"

namespace qyoula {

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& section,
                         const std::string& msg) const {
    const YAML::Mark mark = node.Mark();
    std::string where = source_;
    if (mark.line >= 0) {
      where += ":" + std::to_string(mark.line + 1) + ":" + std::to_string(mark.column + 1);
    }
    throw ParseError(where + " (" + section + ")", msg);
  }

  void require_map(const YAML::Node& node, const std::string& section) const {
    if (!node.IsMap()) fail(node, section, "expected a mapping");
  }

  void check_keys(const YAML::Node& node, const std::string& section,
                  const std::set<std::string>& allowed) const {
    require_map(node, section);
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.contains(key)) fail(kv.first, section, "unknown key '" + key + "'");
    }
  }

  YAML::Node required(const YAML::Node& node, const std::string& section,
                      const std::string& key) const {
    const YAML::Node child = node[key];
    if (!child) fail(node, section, "missing key '" + key + "'");
    return child;
  }

  double real(const YAML::Node& node, const std::string& section) const {
    if (!node.IsScalar()) fail(node, section, "expected a number");
    try {
      return node.as<double>();
    } catch (const YAML::Exception&) {
      fail(node, section, "expected a number, got '" + node.Scalar() + "'");
    }
  }

  int integer(const YAML::Node& node, const std::string& section) const {
    if (!node.IsScalar()) fail(node, section, "expected an integer");
    try {
      return node.as<int>();
    } catch (const YAML::Exception&) {
      fail(node, section, "expected an integer, got '" + node.Scalar() + "'");
    }
  }

  std::string text(const YAML::Node& node, const std::string& section) const {
    if (!node.IsScalar()) fail(node, section, "expected a string");
    return node.Scalar();
  }

  cplx complex(const YAML::Node& node, const std::string& section) const {
    if (!node.IsSequence() || node.size() != 2) {
      fail(node, section, "complex entries must be two-element [re, im] arrays");
    }
    return {real(node[0], section), real(node[1], section)};
  }

  std::vector<cplx> complex_list(const YAML::Node& node, const std::string& section) const {
    if (!node.IsSequence()) fail(node, section, "expected a list of [re, im] entries");
    std::vector<cplx> out;
    for (const auto& e : node) out.push_back(complex(e, section));
    return out;
  }

  Mat matrix(const YAML::Node& node, const std::string& section) const {
    if (!node.IsSequence()) fail(node, section, "matrices must be arrays of rows");
    const auto rows = static_cast<Eigen::Index>(node.size());
    if (rows == 0) return Mat(0, 0);
    const YAML::Node first = node[0];
    if (!first.IsSequence()) fail(first, section, "matrix rows must be arrays");
    const auto cols = static_cast<Eigen::Index>(first.size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const YAML::Node row = node[static_cast<std::size_t>(r)];
      if (!row.IsSequence() || static_cast<Eigen::Index>(row.size()) != cols) {
        fail(row, section, "matrix is not rectangular");
      }
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = complex(row[static_cast<std::size_t>(c)], section);
    }
    return m;
  }

  StateSpace abcd(const YAML::Node& node, const std::string& section) const {
    check_keys(node, section, {"A", "B", "C", "D"});
    const Mat a = matrix(required(node, section, "A"), section + ".A");
    Mat b = matrix(required(node, section, "B"), section + ".B");
    Mat c = matrix(required(node, section, "C"), section + ".C");
    const Mat d = matrix(required(node, section, "D"), section + ".D");
    const Eigen::Index n = a.rows();
    if (b.size() == 0) b = Mat(n, d.cols());
    if (c.size() == 0) c = Mat(d.rows(), n);
    try {
      return {a, b, c, d};
    } catch (const Error& e) {
      fail(node, section, e.what());
    }
  }

  // `identity`, a bare A/B/C/D mapping, or {abcd: {...}}.
  std::optional<StateSpace> weight(const YAML::Node& node, const std::string& section) const {
    if (node.IsScalar()) {
      if (node.Scalar() == "identity") return std::nullopt;
      fail(node, section, "expected 'identity' or an abcd block");
    }
    require_map(node, section);
    if (node["abcd"]) {
      check_keys(node, section, {"abcd"});
      return abcd(node["abcd"], section + ".abcd");
    }
    return abcd(node, section);
  }

  SlhModel slh(const YAML::Node& node) const {
    const std::string sec = "plant.slh";
    check_keys(node, sec, {"n", "m", "S", "H1", "H2", "L1", "L2", "F1", "F2"});
    const int n = integer(required(node, sec, "n"), sec + ".n");
    const int m = integer(required(node, sec, "m"), sec + ".m");
    auto get = [&](const char* key, Eigen::Index rows, Eigen::Index cols, bool optional) -> Mat {
      const YAML::Node child = node[key];
      if (!child) {
        if (optional) return Mat();
        fail(node, sec, std::string("missing key '") + key + "'");
      }
      Mat v = matrix(child, sec + "." + key);
      if (v.size() == 0 && rows * cols == 0) v = Mat(rows, cols);
      if (v.rows() != rows || v.cols() != cols) {
        fail(child, sec + "." + key,
             "expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                 std::to_string(v.rows()) + "x" + std::to_string(v.cols()));
      }
      return v;
    };
    const Mat s = get("S", m, m, false);
    const Mat h1 = get("H1", n, n, false);
    const Mat h2 = get("H2", n, n, false);
    const Mat l1 = get("L1", m, n, false);
    const Mat l2 = get("L2", m, n, false);
    const Mat f1 = get("F1", n, n, true);
    const Mat f2 = get("F2", n, n, true);
    try {
      return SlhModel::make(s, h1, h2, l1, l2, f1, f2);
    } catch (const Error& e) {
      fail(node, sec, e.what());
    }
  }

  YoulaParameter parameter(const YAML::Node& node, const std::string& section,
                           std::optional<std::pair<int, int>> shape) const {
    check_keys(node, section, {"beta", "order", "q_init", "offset"});
    const double beta = node["beta"] ? real(node["beta"], section + ".beta") : 1.0;
    std::vector<Mat> coeffs;
    if (node["q_init"]) {
      const YAML::Node list = node["q_init"];
      if (!list.IsSequence()) fail(list, section + ".q_init", "expected a list of matrices");
      for (const auto& e : list) coeffs.push_back(matrix(e, section + ".q_init"));
    }
    std::optional<StateSpace> offset;
    if (node["offset"]) offset = abcd(node["offset"], section + ".offset");
    int order = node["order"] ? integer(node["order"], section + ".order")
                              : std::max<int>(0, static_cast<int>(coeffs.size()) - 1);
    if (order < 0) fail(node["order"], section + ".order", "order must be non-negative");
    if (static_cast<int>(coeffs.size()) > order + 1) {
      fail(node["q_init"], section + ".q_init", "more coefficients than order + 1");
    }
    if (!shape) {
      if (!coeffs.empty()) {
        shape = std::make_pair(static_cast<int>(coeffs.front().rows()),
                               static_cast<int>(coeffs.front().cols()));
      } else if (offset) {
        shape = std::make_pair(offset->outputs(), offset->inputs());
      } else {
        fail(node, section, "cannot infer the parameter shape (no q_init and no offset)");
      }
    }
    const auto [rows, cols] = *shape;
    while (static_cast<int>(coeffs.size()) < order + 1) coeffs.push_back(Mat::Zero(rows, cols));
    try {
      YoulaParameter q(beta, coeffs);
      if (q.rows() != rows || q.cols() != cols) {
        throw DimensionMismatch("coefficients must be " + std::to_string(rows) + "x" +
                                std::to_string(cols));
      }
      if (offset) q.set_offset(*offset);
      return q;
    } catch (const Error& e) {
      fail(node, section, e.what());
    }
  }

 private:
  std::string source_;
};

YAML::Node load_yaml(const std::string& text, const std::string& source) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(source + ":" + std::to_string(e.mark.line + 1) + ":" +
                         std::to_string(e.mark.column + 1),
                     e.msg);
  }
}

void parse_plant(const Reader& rd, const YAML::Node& node, ProblemFile& pf) {
  rd.check_keys(node, "plant", {"slh", "abcd"});
  if (node["slh"] && node["abcd"]) rd.fail(node, "plant", "give either slh or abcd, not both");
  if (node["slh"]) {
    pf.slh = rd.slh(node["slh"]);
    try {
      pf.plant = slh_to_statespace(*pf.slh, 1e-9, false);
    } catch (const Error& e) {
      rd.fail(node["slh"], "plant.slh", e.what());
    }
  } else if (node["abcd"]) {
    pf.plant = rd.abcd(node["abcd"], "plant.abcd");
  } else {
    rd.fail(node, "plant", "expected 'slh' or 'abcd'");
  }
}

void parse_partition(const Reader& rd, const YAML::Node& node, ProblemFile& pf) {
  rd.check_keys(node, "partition", {"n_r", "n_u", "n_z", "n_y", "layout"});
  pf.has_partition = true;
  pf.partition.n_r = rd.integer(rd.required(node, "partition", "n_r"), "partition.n_r");
  pf.partition.n_u = rd.integer(rd.required(node, "partition", "n_u"), "partition.n_u");
  pf.partition.n_z = rd.integer(rd.required(node, "partition", "n_z"), "partition.n_z");
  pf.partition.n_y = rd.integer(rd.required(node, "partition", "n_y"), "partition.n_y");
  if (node["layout"]) {
    const std::string layout = rd.text(node["layout"], "partition.layout");
    if (layout == "modified") {
      pf.modified_layout = true;
    } else if (layout != "doubled_up") {
      rd.fail(node["layout"], "partition.layout", "expected 'doubled_up' or 'modified'");
    }
  }
}

void parse_gains(const Reader& rd, const YAML::Node& node, ProblemFile& pf) {
  rd.check_keys(node, "gains", {"policy", "targets", "observer_targets"});
  const std::string policy = rd.text(rd.required(node, "gains", "policy"), "gains.policy");
  if (policy == "reflect") {
    pf.gains = GainPolicy::reflect();
  } else if (policy == "zero") {
    pf.gains = GainPolicy::zero();
  } else if (policy == "assign") {
    std::vector<cplx> obs;
    if (node["observer_targets"]) {
      obs = rd.complex_list(node["observer_targets"], "gains.observer_targets");
    }
    pf.gains = GainPolicy::assign(
        rd.complex_list(rd.required(node, "gains", "targets"), "gains.targets"), obs);
  } else {
    rd.fail(node["policy"], "gains.policy", "expected 'reflect', 'zero' or 'assign'");
  }
}

void parse_descent(const Reader& rd, const YAML::Node& node, ProblemFile& pf) {
  rd.check_keys(node, "descent",
                {"alpha0", "backtrack_ratio", "max_iters", "grad_tol", "constraint_tol",
                 "correction_period", "armijo_c1", "max_backtracks", "metric",
                 "metric_regularization"});
  DescentConfig& c = pf.descent;
  auto num = [&](const char* key, double& dst) {
    if (node[key]) dst = rd.real(node[key], std::string("descent.") + key);
  };
  auto whole = [&](const char* key, int& dst) {
    if (node[key]) dst = rd.integer(node[key], std::string("descent.") + key);
  };
  num("alpha0", c.alpha0);
  num("backtrack_ratio", c.backtrack_ratio);
  whole("max_iters", c.max_iters);
  num("grad_tol", c.grad_tol);
  num("constraint_tol", c.constraint_tol);
  whole("correction_period", c.correction_period);
  num("armijo_c1", c.armijo_c1);
  whole("max_backtracks", c.max_backtracks);
  num("metric_regularization", c.metric_regularization);
  if (node["metric"]) {
    const std::string m = rd.text(node["metric"], "descent.metric");
    if (m == "closed_loop") {
      c.metric = ProjectionMetric::ClosedLoop;
    } else if (m == "grid_frobenius") {
      c.metric = ProjectionMetric::GridFrobenius;
    } else {
      rd.fail(node["metric"], "descent.metric", "expected 'closed_loop' or 'grid_frobenius'");
    }
  }
  try {
    c.validate();
  } catch (const Error& e) {
    rd.fail(node, "descent", e.what());
  }
}

void parse_grid(const Reader& rd, const YAML::Node& node, ProblemFile& pf) {
  rd.check_keys(node, "grid", {"kind", "omega_min", "omega_max", "points"});
  if (node["kind"] && rd.text(node["kind"], "grid.kind") != "log") {
    rd.fail(node["kind"], "grid.kind", "only 'log' grids are supported");
  }
  GridSpec g;
  if (node["omega_min"]) g.omega_min = rd.real(node["omega_min"], "grid.omega_min");
  if (node["omega_max"]) g.omega_max = rd.real(node["omega_max"], "grid.omega_max");
  if (node["points"]) g.points = rd.integer(node["points"], "grid.points");
  if (!(g.omega_min > 0.0) || !(g.omega_max > g.omega_min) || g.points < 2) {
    rd.fail(node, "grid", "need 0 < omega_min < omega_max and points >= 2");
  }
  pf.grid = g;
}

std::string indent_str(int indent) { return std::string(static_cast<std::size_t>(indent), ' '); }

}  // namespace

FrequencyGrid GridSpec::make() const { return FrequencyGrid::logspace(omega_min, omega_max, points); }

ProblemFile parse_problem(const std::string& text, const std::string& source) {
  const Reader rd(source);
  const YAML::Node root = load_yaml(text, source);
  if (!root.IsMap()) throw ParseError(source, "document must be a mapping of sections");
  rd.check_keys(root, "document",
                {"plant", "partition", "gains", "weights", "youla", "descent", "grid"});
  ProblemFile pf;
  pf.source = source;
  parse_plant(rd, rd.required(root, "document", "plant"), pf);
  if (root["partition"]) parse_partition(rd, root["partition"], pf);
  if (root["gains"]) parse_gains(rd, root["gains"], pf);
  if (root["weights"]) {
    const YAML::Node w = root["weights"];
    rd.check_keys(w, "weights", {"w_in", "w_out"});
    if (w["w_in"]) pf.w_in = rd.weight(w["w_in"], "weights.w_in");
    if (w["w_out"]) pf.w_out = rd.weight(w["w_out"], "weights.w_out");
  }
  if (root["youla"]) {
    const YAML::Node y = root["youla"];
    rd.check_keys(y, "youla", {"beta", "order", "q_init", "offset", "from_controller"});
    if (y["beta"]) pf.beta = rd.real(y["beta"], "youla.beta");
    if (!(pf.beta > 0.0)) rd.fail(y["beta"], "youla.beta", "beta must be positive");
    if (y["order"]) pf.order = rd.integer(y["order"], "youla.order");
    if (pf.order < 0) rd.fail(y["order"], "youla.order", "order must be non-negative");
    if (y["q_init"]) {
      const YAML::Node list = y["q_init"];
      if (!list.IsSequence()) rd.fail(list, "youla.q_init", "expected a list of matrices");
      for (const auto& e : list) pf.q_init.push_back(rd.matrix(e, "youla.q_init"));
      if (static_cast<int>(pf.q_init.size()) > pf.order + 1) {
        rd.fail(list, "youla.q_init", "more coefficients than order + 1");
      }
    }
    if (y["offset"]) pf.q_offset = rd.abcd(y["offset"], "youla.offset");
    if (y["from_controller"]) {
      if (y["q_init"] || y["offset"]) {
        rd.fail(y, "youla", "from_controller excludes q_init and offset");
      }
      pf.from_controller = rd.abcd(y["from_controller"], "youla.from_controller");
    }
  }
  if (root["descent"]) parse_descent(rd, root["descent"], pf);
  if (root["grid"]) parse_grid(rd, root["grid"], pf);
  return pf;
}

ProblemFile load_problem(const std::string& path) { return parse_problem(read_text(path), path); }

YoulaParameter parse_parameter(const std::string& text, const std::string& source) {
  const Reader rd(source);
  const YAML::Node root = load_yaml(text, source);
  if (!root.IsMap()) throw ParseError(source, "document must be a mapping");
  if (root["youla"]) {
    rd.check_keys(root, "document", {"youla"});
    return rd.parameter(root["youla"], "youla", std::nullopt);
  }
  if (root["abcd"]) {
    rd.check_keys(root, "document", {"abcd"});
    const StateSpace q = rd.abcd(root["abcd"], "abcd");
    YoulaParameter p(1.0, 0, q.outputs(), q.inputs());
    p.set_offset(q);
    return p;
  }
  throw ParseError(source, "expected a 'youla' or 'abcd' section");
}

YoulaParameter load_parameter(const std::string& path) {
  return parse_parameter(read_text(path), path);
}

std::map<std::string, StateSpace> load_systems(const std::string& path, const std::string& key) {
  const Reader rd(path);
  const YAML::Node root = load_yaml(read_text(path), path);
  if (!root.IsMap()) throw ParseError(path, "document must be a mapping");
  const YAML::Node section = rd.required(root, "document", key);
  rd.require_map(section, key);
  std::map<std::string, StateSpace> out;
  for (const auto& kv : section) {
    const auto name = kv.first.as<std::string>();
    out.emplace(name, rd.abcd(kv.second, key + "." + name));
  }
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, "cannot open file");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string emit_matrix(const Mat& m) {
  if (m.rows() == 0 || m.cols() == 0) return "[]";
  std::string s = "[";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r > 0) s += ", ";
    s += "[";
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) s += ", ";
      s += "[" + format_double(m(r, c).real()) + ", " + format_double(m(r, c).imag()) + "]";
    }
    s += "]";
  }
  return s + "]";
}

std::string emit_abcd(const StateSpace& sys, int indent) {
  const std::string pad = indent_str(indent);
  return pad + "A: " + emit_matrix(sys.A()) + "\n" + pad + "B: " + emit_matrix(sys.B()) + "\n" +
         pad + "C: " + emit_matrix(sys.C()) + "\n" + pad + "D: " + emit_matrix(sys.D()) + "\n";
}

std::string emit_parameter(const YoulaParameter& q) {
  std::string s = "youla:\n";
  s += "  beta: " + format_double(q.beta()) + "\n";
  s += "  order: " + std::to_string(q.order()) + "\n";
  s += "  q_init:\n";
  for (const Mat& c : q.coeffs()) s += "    - " + emit_matrix(c) + "\n";
  if (q.offset()) s += "  offset:\n" + emit_abcd(*q.offset(), 4);
  return s;
}

}  // namespace qyoula
