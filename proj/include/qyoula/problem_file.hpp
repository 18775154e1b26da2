#pragma once

// ProblemFile reader (YAML, complex entries as [re, im]) and the text
// writers used by the command-line tool.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qyoula/constraint.hpp"
#include "qyoula/core.hpp"
#include "qyoula/h2_synthesis.hpp"
#include "qyoula/physreal.hpp"
#include "qyoula/stabilization.hpp"

namespace qyoula {

struct GridSpec {
  double omega_min = 1e-3;
  double omega_max = 1e3;
  int points = 33;
  [[nodiscard]] FrequencyGrid make() const;
};

struct ProblemFile {
  std::string source;
  std::optional<SlhModel> slh;
  StateSpace plant;

  bool has_partition = false;
  PartitionSpec partition;
  /// "modified": plant blocks are already ordered (exo, ctrl) × (perf, meas)
  /// and the partition counts are literal widths.
  bool modified_layout = false;

  GainPolicy gains;
  std::optional<StateSpace> w_in, w_out;  ///< absent means identity

  double beta = 1.0;
  int order = 8;
  std::vector<Mat> q_init;
  std::optional<StateSpace> q_offset;
  std::optional<StateSpace> from_controller;

  DescentConfig descent;
  std::optional<GridSpec> grid;
};

/// Throws ParseError("source:line:col", message) on malformed input.
ProblemFile parse_problem(const std::string& text, const std::string& source = "<input>");
ProblemFile load_problem(const std::string& path);

/// Parameter document: either `youla: {beta, order, q_init, offset}` or a
/// top-level `abcd` realization (taken as an offset over a zero basis of
/// order 0).
YoulaParameter parse_parameter(const std::string& text, const std::string& source = "<input>");
YoulaParameter load_parameter(const std::string& path);

/// Document `{key: {name: {A, B, C, D}, ...}}`.
std::map<std::string, StateSpace> load_systems(const std::string& path, const std::string& key);

std::string read_text(const std::string& path);
/// Writes through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& content);

/// 17 significant digits; "inf", "-inf", "nan" for non-finite values.
std::string format_double(double x);
std::string emit_matrix(const Mat& m);
/// Block mapping with A, B, C, D at the given indentation.
std::string emit_abcd(const StateSpace& sys, int indent);
std::string emit_parameter(const YoulaParameter& q);

}  // namespace qyoula
