#include "qyoula/physreal.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "qyoula/errors.hpp"

namespace qyoula {

namespace {

void require_shape(const Mat& m, Eigen::Index r, Eigen::Index c, const char* name) {
  if (m.rows() != r || m.cols() != c) {
    throw InvalidSlh(std::string(name) + " must be " + std::to_string(r) + "x" + std::to_string(c) +
                     ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

}  // namespace

SlhModel SlhModel::make(const Mat& S, const Mat& H1, const Mat& H2, const Mat& L1, const Mat& L2,
                        const Mat& F1, const Mat& F2) {
  SlhModel model;
  model.n_fields = static_cast<int>(S.rows());
  model.n_modes = static_cast<int>(H1.rows());
  model.S = S;
  model.H1 = H1;
  model.H2 = H2;
  model.L1 = L1;
  model.L2 = L2;
  const auto n = model.n_modes;
  model.F1 = F1.size() == 0 ? Mat(Mat::Identity(n, n)) : F1;
  model.F2 = F2.size() == 0 ? Mat(Mat::Zero(n, n)) : F2;
  require_shape(model.F1, n, n, "F1");
  require_shape(model.F2, n, n, "F2");
  const Mat f = model.transform();
  model.theta = f * signature(n) * f.adjoint();
  return model;
}

void SlhModel::validate(double tol) const {
  const auto n = n_modes;
  const auto m = n_fields;
  if (n < 0 || m < 0) throw InvalidSlh("negative dimensions");
  require_shape(S, m, m, "S");
  require_shape(H1, n, n, "H1");
  require_shape(H2, n, n, "H2");
  require_shape(L1, m, n, "L1");
  require_shape(L2, m, n, "L2");
  require_shape(F1, n, n, "F1");
  require_shape(F2, n, n, "F2");
  require_shape(theta, 2 * n, 2 * n, "Theta");
  const Mat eye = Mat::Identity(m, m);
  if ((S * S.adjoint() - eye).norm() > tol || (S.adjoint() * S - eye).norm() > tol) {
    throw InvalidSlh("scattering matrix S is not unitary");
  }
  if ((H1 - H1.adjoint()).norm() > tol) throw InvalidSlh("H1 is not Hermitian");
  if ((H2 - H2.transpose()).norm() > tol) throw InvalidSlh("H2 is not symmetric");
  if ((theta - theta.adjoint()).norm() > tol) throw InvalidSlh("Theta is not Hermitian");
}

StateSpace slh_to_statespace(const SlhModel& model, double tol, bool require_valid) {
  if (require_valid) {
    model.validate(tol);
  } else {
    model.validate(std::numeric_limits<double>::infinity());
  }
  const Mat& theta = model.theta;
  const Mat h = model.hamiltonian();
  const Mat l = model.coupling();
  const Mat jm = signature(model.n_fields);
  const Mat d = doubled_up(model.S, Mat::Zero(model.n_fields, model.n_fields));
  const Mat a = -kI * theta * h - 0.5 * theta * l.adjoint() * jm * l;
  const Mat b = -theta * l.adjoint() * jm * d;
  return {a, b, l, d};
}

double j_unitarity_residual(const StateSpace& sys, const FrequencyGrid& grid, int m) {
  if (sys.inputs() != 2 * m || sys.outputs() != 2 * m) {
    throw DimensionMismatch("j_unitarity_residual: system must be square of order 2m");
  }
  const Mat j = signature(m);
  double worst = 0.0;
  for (double w : grid.points()) {
    const Mat g = sys.response(w);
    worst = std::max(worst, (g.adjoint() * j * g - j).norm());
  }
  return worst;
}

double j_unitarity_residual_dual(const StateSpace& sys, const FrequencyGrid& grid, int m) {
  if (sys.inputs() != 2 * m || sys.outputs() != 2 * m) {
    throw DimensionMismatch("j_unitarity_residual_dual: system must be square of order 2m");
  }
  const Mat j = signature(m);
  double worst = 0.0;
  for (double w : grid.points()) {
    const Mat g = sys.response(w);
    worst = std::max(worst, (g * j * g.adjoint() - j).norm());
  }
  return worst;
}

double feedthrough_defect(const Mat& d, int m) {
  if (d.rows() != 2 * m || d.cols() != 2 * m) {
    throw DimensionMismatch("feedthrough_defect: D must be of order 2m");
  }
  const Mat s = d.topLeftCorner(m, m);
  const double structure = (d - doubled_up(s, Mat::Zero(m, m))).norm();
  const double unitarity = (s.adjoint() * s - Mat::Identity(m, m)).norm();
  return std::max(structure, unitarity);
}

FrequencyGrid default_pr_grid() { return FrequencyGrid::logspace(1e-3, 1e3, 6 * 64 + 1); }

PrVerdict check_physical_realizability(const StateSpace& sys, const FrequencyGrid& grid, int m,
                                       double tol) {
  PrVerdict v;
  if (sys.inputs() != 2 * m || sys.outputs() != 2 * m) return v;
  try {
    v.max_junitarity_residual = j_unitarity_residual(sys, grid, m);
    v.j_unitary_ok = v.max_junitarity_residual <= tol;
  } catch (const SingularResolvent&) {
    v.max_junitarity_residual = std::numeric_limits<double>::infinity();
    v.j_unitary_ok = false;
  }
  v.feedthrough_defect = feedthrough_defect(sys.D(), m);
  v.feedthrough_ok = v.feedthrough_defect <= tol;

  const StateSpace minimal = minimal_realization(sys);
  v.minimal_states = minimal.states();
  v.minimal_ok = minimal.states() == sys.states();
  v.spectrally_generic_ok = is_spectrally_generic(minimal.A());
  v.overall = v.j_unitary_ok && v.feedthrough_ok && v.spectrally_generic_ok && v.minimal_ok;
  return v;
}

}  // namespace qyoula
