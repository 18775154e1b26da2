#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "qyoula/constraint.hpp"
#include "qyoula/errors.hpp"
#include "qyoula/h2_synthesis.hpp"
#include "qyoula/hinf_eval.hpp"
#include "qyoula/physreal.hpp"
#include "qyoula/problem_file.hpp"
#include "qyoula/stabilization.hpp"

namespace qyoula::cli {

namespace {

using nlohmann::json;

const char* pf_str(bool ok) { return ok ? "pass" : "FAIL"; }

// Maps library exceptions onto the exit-code contract.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionMismatch& e) {
    err << "error: inconsistent input: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir.empty() ? "." : dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

std::string csv_row(const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) s += ",";
    s += format_double(values[i]);
  }
  return s + "\n";
}

ModifiedPlant modified_plant(const ProblemFile& pf) {
  if (!pf.has_partition) throw ParseError(pf.source, "a 'partition' section is required");
  const PartitionSpec& p = pf.partition;
  if (pf.modified_layout) return {pf.plant, p.n_r, p.n_u, p.n_z, p.n_y};
  return modify_plant(pf.plant, p);
}

// mu of the loop when its width is even, otherwise -1.
int loop_mu(const ModifiedPlant& mp) {
  if (mp.ctrl_inputs() % 2 != 0 || mp.ctrl_inputs() != mp.meas_outputs()) return -1;
  return mp.ctrl_inputs() / 2;
}

struct Setup {
  ProblemFile pf;
  ModifiedPlant mp;
  GainPair gains;
  CoprimeFactorization cf;
  ConstraintData cd;
  int mu = -1;
};

Setup setup(const std::string& file, double bezout_tol) {
  ProblemFile pf = load_problem(file);
  ModifiedPlant mp = modified_plant(pf);
  GainPair gains = stabilizing_gains(mp.A(), mp.B2(), mp.C2(), pf.gains);
  CoprimeFactorization cf = coprime_factorization(mp, gains, verification_grid(), bezout_tol);
  Setup s{std::move(pf), std::move(mp), std::move(gains), std::move(cf), {}, -1};
  s.mu = loop_mu(s.mp);
  if (s.mu >= 0) s.cd = build_constraint_data(s.cf, s.mu);
  return s;
}

StateSpace weight_or_identity(const std::optional<StateSpace>& w, int width) {
  return w ? *w : StateSpace::identity(width);
}

YoulaParameter checked_parameter(const YoulaParameter& q, const ModifiedPlant& mp) {
  if (q.rows() != mp.ctrl_inputs() || q.cols() != mp.meas_outputs()) {
    throw DimensionMismatch("parameter must be " + std::to_string(mp.ctrl_inputs()) + "x" +
                            std::to_string(mp.meas_outputs()) + ", got " + std::to_string(q.rows()) +
                            "x" + std::to_string(q.cols()));
  }
  return q;
}

YoulaParameter initial_parameter(const Setup& s) {
  const int rows = s.mp.ctrl_inputs();
  const int cols = s.mp.meas_outputs();
  YoulaParameter q(s.pf.beta, s.pf.order, rows, cols);
  for (std::size_t k = 0; k < s.pf.q_init.size(); ++k) q.set_coeff(static_cast<int>(k), s.pf.q_init[k]);
  if (s.pf.q_offset) q.set_offset(*s.pf.q_offset);
  if (s.pf.from_controller) q.set_offset(parameter_from_controller(s.cf, *s.pf.from_controller));
  return q;
}

YoulaParameter parameter_from_option(const Options& opt, const ModifiedPlant& mp) {
  if (opt.q_from.empty()) return YoulaParameter(1.0, 0, mp.ctrl_inputs(), mp.meas_outputs());
  return checked_parameter(load_parameter(opt.q_from), mp);
}

FrequencyGrid command_grid(const ProblemFile& pf, const Options& opt, int default_points) {
  GridSpec g = pf.grid.value_or(GridSpec{1e-3, 1e3, default_points});
  if (opt.grid_points) g.points = *opt.grid_points;
  if (g.points < 2) throw ParseError("--grid-points", "need at least 2 points");
  return g.make();
}

std::string trace_csv(const DescentResult& r) {
  std::string s = "iter,E,grad_norm,step_norm,constraint_residual,alpha\n";
  const double g0 = r.trace.empty() ? r.final_grad_norm : r.trace.front().grad_norm;
  s += csv_row({0.0, r.initial_cost, g0, 0.0, r.initial_residual, 0.0});
  for (const DescentRecord& d : r.trace) {
    s += csv_row({static_cast<double>(d.iter), d.cost, d.grad_norm, d.step_norm,
                  d.constraint_residual, d.alpha});
  }
  return s;
}

std::string profile_csv(const HinfReport& r) {
  std::string s = "omega,sigma_max\n";
  for (const auto& [w, v] : r.grid_profile) s += csv_row({w, v});
  return s;
}

json membership_json(const MembershipVerdict& m) {
  return {{"stable", m.stable},
          {"feedthrough_ok", m.feedthrough_ok},
          {"residual", m.residual},
          {"residual_ok", m.residual_ok},
          {"spectrally_generic_ok", m.spectrally_generic_ok},
          {"dmu_defect", m.dmu_defect},
          {"dmu_ok", m.dmu_ok},
          {"in_q", m.in_q},
          {"in_qhat", m.in_qhat},
          {"failure", m.failure}};
}

}  // namespace

int check_pr(const std::string& file, const Options& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ProblemFile pf = load_problem(file);
    const StateSpace& sys = pf.plant;
    if (sys.inputs() != sys.outputs() || sys.inputs() % 2 != 0) {
      throw DimensionMismatch("check-pr needs a square plant of even order, got " +
                              std::to_string(sys.outputs()) + "x" + std::to_string(sys.inputs()));
    }
    const int m = sys.inputs() / 2;
    FrequencyGrid grid = opt.grid_points ? FrequencyGrid::logspace(1e-3, 1e3, *opt.grid_points)
                                         : default_pr_grid();
    if (opt.seed) {
      std::mt19937_64 rng(*opt.seed);
      std::uniform_real_distribution<double> expo(-3.0, 3.0);
      std::vector<double> extra;
      for (int i = 0; i < 16; ++i) extra.push_back(std::pow(10.0, expo(rng)));
      std::sort(extra.begin(), extra.end());
      extra.erase(std::unique(extra.begin(), extra.end()), extra.end());
      grid = grid.merged(FrequencyGrid(extra));
    }
    const double tol = opt.tol.value_or(1e-7);
    const PrVerdict v = check_physical_realizability(sys, grid, m, tol);
    std::string slh_note;
    if (pf.slh) {
      try {
        pf.slh->validate();
      } catch (const InvalidSlh& e) {
        slh_note = e.what();
      }
    }
    if (opt.json) {
      json j = {{"command", "check-pr"},
                {"j_unitary_ok", v.j_unitary_ok},
                {"max_junitarity_residual", v.max_junitarity_residual},
                {"feedthrough_ok", v.feedthrough_ok},
                {"feedthrough_defect", v.feedthrough_defect},
                {"spectrally_generic_ok", v.spectrally_generic_ok},
                {"minimal_ok", v.minimal_ok},
                {"minimal_states", v.minimal_states},
                {"states", sys.states()},
                {"overall", v.overall}};
      if (!slh_note.empty()) j["slh_note"] = slh_note;
      out << j.dump(2) << "\n";
    } else {
      out << std::left << std::setw(20) << "item" << std::setw(8) << "result" << "value\n";
      out << std::setw(20) << "j_unitary" << std::setw(8) << pf_str(v.j_unitary_ok)
          << format_double(v.max_junitarity_residual) << "\n";
      out << std::setw(20) << "feedthrough" << std::setw(8) << pf_str(v.feedthrough_ok)
          << format_double(v.feedthrough_defect) << "\n";
      out << std::setw(20) << "spectrally_generic" << std::setw(8)
          << pf_str(v.spectrally_generic_ok) << "-\n";
      out << std::setw(20) << "minimal" << std::setw(8) << pf_str(v.minimal_ok)
          << v.minimal_states << " of " << sys.states() << " states\n";
      if (!slh_note.empty()) out << "note: " << slh_note << "\n";
      out << "summary: check-pr overall=" << (v.overall ? "pass" : "fail")
          << " j_unitary=" << (v.j_unitary_ok ? "pass" : "fail")
          << " feedthrough=" << (v.feedthrough_ok ? "pass" : "fail")
          << " generic=" << (v.spectrally_generic_ok ? "pass" : "fail")
          << " minimal=" << (v.minimal_ok ? "pass" : "fail")
          << " residual=" << format_double(v.max_junitarity_residual) << "\n";
    }
    return v.overall ? 0 : 1;
  });
}

int factorize(const std::string& file, const Options& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const double tol = opt.tol.value_or(1e-7);
    const ProblemFile pf = load_problem(file);
    const ModifiedPlant mp = modified_plant(pf);
    GainPair gains;
    try {
      gains = stabilizing_gains(mp.A(), mp.B2(), mp.C2(), pf.gains);
    } catch (const NotStabilizable& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    } catch (const NotDetectable& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    }
    const FrequencyGrid grid = verification_grid();
    const CoprimeFactorization cf = coprime_factorization(mp, gains, grid, 1.0);
    const double residual = bezout_residual(cf, grid);
    const double fac = factorization_residual(cf, mp.p22(), grid);
    const bool ok = residual <= tol && fac <= tol;

    const std::vector<std::pair<const char*, const StateSpace*>> factors{
        {"M", &cf.M},       {"N", &cf.N},       {"U", &cf.U},       {"V", &cf.V},
        {"Mhat", &cf.Mhat}, {"Nhat", &cf.Nhat}, {"Uhat", &cf.Uhat}, {"Vhat", &cf.Vhat}};
    std::string doc = "factors:\n";
    for (const auto& [name, sys] : factors) {
      doc += std::string("  ") + name + ":\n" + emit_abcd(minimal_realization(*sys), 4);
    }
    doc += "gains:\n  F: " + emit_matrix(gains.F) + "\n  L: " + emit_matrix(gains.L) + "\n";
    doc += "bezout_residual: " + format_double(residual) + "\n";
    doc += "factorization_residual: " + format_double(fac) + "\n";
    if (!opt.out_dir.empty()) {
      ensure_dir(opt.out_dir);
      write_file_atomic(join_path(opt.out_dir, "factors.yaml"), doc);
    }
    if (opt.json) {
      json j = {{"command", "factorize"},
                {"bezout_residual", residual},
                {"factorization_residual", fac},
                {"ok", ok}};
      json states = json::object();
      for (const auto& [name, sys] : factors) states[name] = minimal_realization(*sys).states();
      j["minimal_states"] = states;
      out << j.dump(2) << "\n";
    } else {
      if (opt.out_dir.empty()) out << doc;
      for (const auto& [name, sys] : factors) {
        const StateSpace mr = minimal_realization(*sys);
        out << "factor " << name << ": minimal states " << mr.states();
        if (mr.is_static()) out << ", static gain " << emit_matrix(mr.D());
        out << "\n";
      }
      out << "summary: factorize " << (ok ? "pass" : "fail")
          << " bezout_residual=" << format_double(residual) << "\n";
    }
    return ok ? 0 : 1;
  });
}

int synthesize_h2(const std::string& file, const Options& opt, std::ostream& out,
                  std::ostream& err) {
  return guarded(err, [&] {
    if (opt.out_dir.empty()) throw ParseError("--out", "synthesize-h2 needs --out DIR");
    const Setup s = setup(file, 1e-7);
    if (s.mu < 0) throw DimensionMismatch("synthesis needs a loop of even width 2*mu");
    const StateSpace w_in = weight_or_identity(s.pf.w_in, s.mp.exo_inputs());
    const StateSpace w_out = weight_or_identity(s.pf.w_out, s.mp.perf_outputs());
    FrequencyGrid grid = s.pf.grid ? s.pf.grid->make() : default_synthesis_grid(w_in, w_out);
    if (opt.grid_points) {
      grid = FrequencyGrid::logspace(grid.front(), grid.back(), *opt.grid_points);
    }
    const SynthesisProblem sp = assemble_problem(s.mp, s.cf, s.cd, w_in, w_out, grid);
    const YoulaParameter q0 = initial_parameter(s);
    const double tol = opt.tol.value_or(1e-6);

    DescentResult result;
    bool stalled = false;
    try {
      result = descend(sp, q0, s.pf.descent);
    } catch (const StalledLineSearch& e) {
      err << "warning: " << e.what() << "\n";
      result = e.partial();
      stalled = true;
    }
    const ValidationVerdict v = validate_result(s.mp, s.cf, s.cd, result.q, grid, tol);
    const double final_cost = cost(sp, result.q);

    ensure_dir(opt.out_dir);
    if (v.membership.stable && v.membership.feedthrough_ok) {
      const StateSpace k = controller_from_parameter(s.cf, result.q.realization());
      write_file_atomic(join_path(opt.out_dir, "controller.yaml"),
                        "controller:\n  K:\n" + emit_abcd(k, 4));
    }
    write_file_atomic(join_path(opt.out_dir, "q.yaml"), emit_parameter(result.q));
    write_file_atomic(join_path(opt.out_dir, "trace.csv"), trace_csv(result));
    const HinfReport profile = hinf_report(weighted_closed_loop(sp, result.q), grid);
    write_file_atomic(join_path(opt.out_dir, "profile.csv"), profile_csv(profile));

    const MembershipVerdict& m = v.membership;
    std::ostringstream verdict;
    verdict << "initial_cost: " << format_double(result.initial_cost) << "\n"
            << "final_cost: " << format_double(final_cost) << "\n"
            << "iterations: " << result.trace.size() << "\n"
            << "stop_reason: " << result.stop_reason << "\n"
            << "q_stable: " << pf_str(m.stable) << "\n"
            << "feedthrough: " << pf_str(m.feedthrough_ok) << "\n"
            << "constraint_residual: " << format_double(m.residual) << " " << pf_str(m.residual_ok)
            << "\n"
            << "spectrally_generic: " << pf_str(m.spectrally_generic_ok) << "\n"
            << "dmu_defect: " << format_double(m.dmu_defect) << " " << pf_str(m.dmu_ok) << "\n"
            << "closed_loop_stable: " << pf_str(v.closed_loop_stable) << "\n"
            << "overall: " << pf_str(v.overall) << "\n";
    if (!m.failure.empty()) verdict << "failure: " << m.failure << "\n";
    write_file_atomic(join_path(opt.out_dir, "verdict.txt"), verdict.str());

    if (opt.json) {
      json j = {{"command", "synthesize-h2"},
                {"initial_cost", result.initial_cost},
                {"final_cost", final_cost},
                {"iterations", result.trace.size()},
                {"stop_reason", result.stop_reason},
                {"stalled", stalled},
                {"membership", membership_json(m)},
                {"closed_loop_stable", v.closed_loop_stable},
                {"overall", v.overall}};
      out << j.dump(2) << "\n";
    } else {
      out << verdict.str();
      out << "summary: synthesize-h2 " << (v.overall ? "pass" : "fail")
          << " E0=" << format_double(result.initial_cost) << " E=" << format_double(final_cost)
          << "\n";
    }
    return v.overall && !stalled ? 0 : 1;
  });
}

int eval_hinf(const std::string& file, const Options& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Setup s = setup(file, 1e-7);
    const StateSpace w_in = weight_or_identity(s.pf.w_in, s.mp.exo_inputs());
    const StateSpace w_out = weight_or_identity(s.pf.w_out, s.mp.perf_outputs());
    const FrequencyGrid grid = command_grid(s.pf, opt, 200);
    const SynthesisProblem sp = assemble_problem(s.mp, s.cf, s.cd, w_in, w_out, grid, false);
    const YoulaParameter q = parameter_from_option(opt, s.mp);
    const HinfReport r = hinf_report(weighted_closed_loop(sp, q), grid, opt.tol.value_or(1e-7));
    ensure_dir(opt.out_dir);
    write_file_atomic(join_path(opt.out_dir, "hinf_profile.csv"), profile_csv(r));
    if (opt.json) {
      json j = {{"command", "eval-hinf"},
                {"norm", r.norm},
                {"peak_omega", std::isfinite(r.peak_omega) ? json(r.peak_omega) : json("inf")},
                {"peak_outside_grid", r.peak_outside_grid}};
      out << j.dump(2) << "\n";
    } else {
      out << "hinf_norm: " << format_double(r.norm) << "\n"
          << "peak_omega: " << format_double(r.peak_omega) << "\n";
      if (r.peak_outside_grid) out << "note: peak lies outside the profile grid\n";
    }
    return 0;
  });
}

int closed_loop(const std::string& file, const Options& opt, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    if (opt.q_from.empty()) throw ParseError("--q-from", "closed-loop needs --q-from FILE");
    const Setup s = setup(file, 1e-7);
    const YoulaParameter q = parameter_from_option(opt, s.mp);
    const StateSpace k = controller_from_parameter(s.cf, q.realization());
    const StateSpace cl = compose_lft(s.mp.full(), k);
    const double abscissa = spectral_abscissa(cl.A());
    const bool stable = is_hurwitz(cl.A(), 1e-9);
    if (!opt.out_dir.empty()) {
      ensure_dir(opt.out_dir);
      write_file_atomic(join_path(opt.out_dir, "controller.yaml"),
                        "controller:\n  K:\n" + emit_abcd(k, 4));
      write_file_atomic(join_path(opt.out_dir, "closed_loop.yaml"),
                        "closed_loop:\n  G:\n" + emit_abcd(cl, 4));
    }
    if (opt.json) {
      json j = {{"command", "closed-loop"},
                {"states", cl.states()},
                {"spectral_abscissa", abscissa},
                {"stable", stable}};
      out << j.dump(2) << "\n";
    } else {
      out << "closed_loop_states: " << cl.states() << "\n"
          << "spectral_abscissa: " << format_double(abscissa) << "\n"
          << "summary: closed-loop " << (stable ? "stable" : "unstable") << "\n";
    }
    return stable ? 0 : 1;
  });
}

}  // namespace qyoula::cli
