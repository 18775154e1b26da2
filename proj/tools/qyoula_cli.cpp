// qyoula: physical-realizability checks, coprime factorization, coherent H2
// synthesis and H∞ evaluation from problem files.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Youla-Kucera tools for coherent quantum controllers"};
  app.require_subcommand(1);

  qyoula::cli::Options opt;
  std::string file;
  int grid_points = 0;
  double tol = 0.0;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("FILE", file, "problem file")->required();
    cmd->add_option("--grid-points", grid_points, "number of grid frequencies")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--tol", tol, "tolerance of the command's pass/fail test")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "seed for randomized extra check points");
    cmd->add_flag("--json", opt.json, "machine-readable report");
  };

  auto* check = app.add_subcommand("check-pr", "physical realizability of the plant");
  common(check);
  auto* fact = app.add_subcommand("factorize", "doubly coprime factorization");
  common(fact);
  fact->add_option("--out", opt.out_dir, "directory for factors.yaml");
  auto* synth = app.add_subcommand("synthesize-h2", "projected-gradient H2 synthesis");
  common(synth);
  synth->add_option("--out", opt.out_dir, "result directory")->required();
  auto* hinf = app.add_subcommand("eval-hinf", "weighted H-infinity norm of the closed loop");
  common(hinf);
  hinf->add_option("--q-from", opt.q_from, "Youla parameter file (default Q = 0)");
  hinf->add_option("--out", opt.out_dir, "directory for hinf_profile.csv (default .)");
  auto* loop = app.add_subcommand("closed-loop", "assemble K(Q) and the closed loop");
  common(loop);
  loop->add_option("--q-from", opt.q_from, "Youla parameter file")->required();
  loop->add_option("--out", opt.out_dir, "directory for controller and closed-loop files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (auto* cmd : {check, fact, synth, hinf, loop}) {
    if (!cmd->parsed()) continue;
    if (cmd->count("--grid-points") > 0) opt.grid_points = grid_points;
    if (cmd->count("--tol") > 0) opt.tol = tol;
    if (cmd->count("--seed") > 0) opt.seed = seed;
  }

  if (check->parsed()) return qyoula::cli::check_pr(file, opt, std::cout, std::cerr);
  if (fact->parsed()) return qyoula::cli::factorize(file, opt, std::cout, std::cerr);
  if (synth->parsed()) return qyoula::cli::synthesize_h2(file, opt, std::cout, std::cerr);
  if (hinf->parsed()) return qyoula::cli::eval_hinf(file, opt, std::cout, std::cerr);
  return qyoula::cli::closed_loop(file, opt, std::cout, std::cerr);
}
