#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace qyoula::cli {

struct Options {
  std::optional<int> grid_points;
  std::optional<double> tol;
  std::optional<std::uint64_t> seed;
  bool json = false;
  std::string out_dir;
  std::string q_from;
};

// Each command returns the process exit code: 0 pass, 1 domain failure,
// 2 input error.
int check_pr(const std::string& file, const Options& opt, std::ostream& out, std::ostream& err);
int factorize(const std::string& file, const Options& opt, std::ostream& out, std::ostream& err);
int synthesize_h2(const std::string& file, const Options& opt, std::ostream& out,
                  std::ostream& err);
int eval_hinf(const std::string& file, const Options& opt, std::ostream& out, std::ostream& err);
int closed_loop(const std::string& file, const Options& opt, std::ostream& out, std::ostream& err);

}  // namespace qyoula::cli
