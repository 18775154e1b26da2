#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "qyoula/core.hpp"
#include "qyoula/errors.hpp"
#include "qyoula/hinf_eval.hpp"
#include "qyoula/physreal.hpp"
#include "qyoula/stabilization.hpp"

namespace py = pybind11;
using namespace qyoula;

namespace {

FrequencyGrid grid_or(const std::optional<std::vector<double>>& omegas, const FrequencyGrid& fallback) {
  return omegas ? FrequencyGrid(*omegas) : fallback;
}

py::dict verdict_dict(const PrVerdict& v) {
  py::dict d;
  d["overall"] = v.overall;
  d["j_unitary"] = v.j_unitary_ok;
  d["feedthrough"] = v.feedthrough_ok;
  d["spectrally_generic"] = v.spectrally_generic_ok;
  d["minimal"] = v.minimal_ok;
  d["max_junitarity_residual"] = v.max_junitarity_residual;
  d["feedthrough_defect"] = v.feedthrough_defect;
  d["minimal_states"] = v.minimal_states;
  return d;
}

py::dict factors_dict(const CoprimeFactorization& cf, const FrequencyGrid& grid) {
  py::dict d;
  d["M"] = cf.M;
  d["N"] = cf.N;
  d["U"] = cf.U;
  d["V"] = cf.V;
  d["Mhat"] = cf.Mhat;
  d["Nhat"] = cf.Nhat;
  d["Uhat"] = cf.Uhat;
  d["Vhat"] = cf.Vhat;
  d["F"] = cf.gains.F;
  d["L"] = cf.gains.L;
  d["bezout_residual"] = bezout_residual(cf, grid);
  return d;
}

py::tuple run_command(const std::string& command, const std::string& file,
                      std::optional<int> grid_points, std::optional<double> tol,
                      std::optional<std::uint64_t> seed, bool json, const std::string& out_dir,
                      const std::string& q_from) {
  using Fn = std::function<int(const std::string&, const cli::Options&, std::ostream&, std::ostream&)>;
  static const std::map<std::string, Fn> table = {
      {"check-pr", cli::check_pr},         {"factorize", cli::factorize},
      {"synthesize-h2", cli::synthesize_h2}, {"eval-hinf", cli::eval_hinf},
      {"closed-loop", cli::closed_loop},
  };
  const auto it = table.find(command);
  if (it == table.end()) throw py::value_error("unknown command '" + command + "'");
  cli::Options opt;
  opt.grid_points = grid_points;
  opt.tol = tol;
  opt.seed = seed;
  opt.json = json;
  opt.out_dir = out_dir;
  opt.q_from = q_from;
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = it->second(file, opt, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_qyoula, m) {
  m.doc() = "Youla-Kucera parameterization and H2 synthesis for coherent quantum controllers.";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  py::class_<StateSpace>(m, "StateSpace")
      .def(py::init<Mat, Mat, Mat, Mat>(), py::arg("A"), py::arg("B"), py::arg("C"), py::arg("D"))
      .def_static("gain", &StateSpace::gain)
      .def_property_readonly("A", &StateSpace::A)
      .def_property_readonly("B", &StateSpace::B)
      .def_property_readonly("C", &StateSpace::C)
      .def_property_readonly("D", &StateSpace::D)
      .def_property_readonly("states", &StateSpace::states)
      .def_property_readonly("inputs", &StateSpace::inputs)
      .def_property_readonly("outputs", &StateSpace::outputs)
      .def("response", &StateSpace::response, py::arg("omega"))
      .def("eval", &StateSpace::eval, py::arg("s"))
      .def("__repr__", [](const StateSpace& s) {
        return "<StateSpace states=" + std::to_string(s.states()) + " inputs=" +
               std::to_string(s.inputs()) + " outputs=" + std::to_string(s.outputs()) + ">";
      });

  m.def("h2_norm_sq", &h2_norm_sq, py::arg("sys"));
  m.def(
      "hinf_norm",
      [](const StateSpace& sys, double rel_tol) {
        const HinfNorm n = hinf_norm(sys, rel_tol);
        return py::make_tuple(n.value, n.peak_omega);
      },
      py::arg("sys"), py::arg("rel_tol") = 1e-6);
  m.def(
      "hinf_report",
      [](const StateSpace& sys, std::optional<std::vector<double>> omegas) {
        const HinfReport r = hinf_report(sys, grid_or(omegas, FrequencyGrid::logspace(1e-3, 1e3, 61)));
        py::dict d;
        d["norm"] = r.norm;
        d["peak_omega"] = r.peak_omega;
        d["peak_outside_grid"] = r.peak_outside_grid;
        d["profile"] = r.grid_profile;
        return d;
      },
      py::arg("sys"), py::arg("omegas") = py::none());
  m.def("verification_grid", [] {
    const FrequencyGrid g = verification_grid();
    return std::vector<double>(g.points().begin(), g.points().end());
  });

  m.def(
      "slh_to_statespace",
      [](const Mat& s, const Mat& h1, const Mat& h2, const Mat& l1, const Mat& l2) {
        return slh_to_statespace(SlhModel::make(s, h1, h2, l1, l2));
      },
      py::arg("S"), py::arg("H1"), py::arg("H2"), py::arg("L1"), py::arg("L2"));
  m.def(
      "check_physical_realizability",
      [](const StateSpace& sys, int fields, std::optional<std::vector<double>> omegas, double tol) {
        return verdict_dict(check_physical_realizability(sys, grid_or(omegas, default_pr_grid()), fields, tol));
      },
      py::arg("sys"), py::arg("fields"), py::arg("omegas") = py::none(), py::arg("tol") = 1e-7);

  m.def(
      "coprime_factorization",
      [](const StateSpace& full, int exo, int ctrl, int perf, int meas) {
        const ModifiedPlant mp(full, exo, ctrl, perf, meas);
        const FrequencyGrid grid = verification_grid();
        return factors_dict(
            coprime_factorization(mp, stabilizing_gains(mp.A(), mp.B2(), mp.C2()), grid), grid);
      },
      py::arg("plant"), py::arg("exo_inputs"), py::arg("ctrl_inputs"), py::arg("perf_outputs"),
      py::arg("meas_outputs"));

  m.def("run", &run_command, py::arg("command"), py::arg("file"), py::arg("grid_points") = py::none(),
        py::arg("tol") = py::none(), py::arg("seed") = py::none(), py::arg("json") = false,
        py::arg("out_dir") = "", py::arg("q_from") = "");
}
