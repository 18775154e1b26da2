#pragma once

// Open quantum harmonic oscillators: SLH data → doubled-up (A, B, C, D), and
// the frequency-domain physical-realizability test.

#include "qyoula/core.hpp"

namespace qyoula {

/// Scattering/coupling/Hamiltonian description of an n-mode oscillator
/// driven by m bosonic fields. The Hamiltonian parameter is Δ(H1, H2), the
/// coupling is Δ(L1, L2), the variable transform is Δ(F1, F2), and
/// theta = F·J_n·F* is the generalized CCR matrix.
struct SlhModel {
  int n_modes = 0;
  int n_fields = 0;
  Mat S;
  Mat H1, H2;
  Mat L1, L2;
  Mat F1, F2;
  Mat theta;

  /// Builds the model and its CCR matrix. F1 defaults to I, F2 to 0.
  static SlhModel make(const Mat& S, const Mat& H1, const Mat& H2, const Mat& L1, const Mat& L2,
                       const Mat& F1 = Mat(), const Mat& F2 = Mat());

  [[nodiscard]] Mat hamiltonian() const { return doubled_up(H1, H2); }
  [[nodiscard]] Mat coupling() const { return doubled_up(L1, L2); }
  [[nodiscard]] Mat transform() const { return doubled_up(F1, F2); }

  /// Throws InvalidSlh on shape errors, non-unitary S, non-Hermitian
  /// Δ(H1, H2) or non-Hermitian theta.
  void validate(double tol = 1e-9) const;
};

/// A = −iΘH − ½ΘL*J_mL, B = −ΘL*J_mΔ(S,0), C = L, D = Δ(S,0).
/// With `require_valid` false only shapes are checked, so that a defective
/// model can still be handed to the realizability test.
StateSpace slh_to_statespace(const SlhModel& model, double tol = 1e-9, bool require_valid = true);

/// max over the grid of ‖Γ(iω)*·J_m·Γ(iω) − J_m‖_F.
double j_unitarity_residual(const StateSpace& sys, const FrequencyGrid& grid, int m);
/// Dual form: max ‖Γ(iω)·J_m·Γ(iω)* − J_m‖_F.
double j_unitarity_residual_dual(const StateSpace& sys, const FrequencyGrid& grid, int m);

/// Distance of D from the set {Δ(S,0): S unitary}: the larger of
/// ‖D − Δ(D11, 0)‖_F and ‖D11*·D11 − I‖_F.
double feedthrough_defect(const Mat& d, int m);

struct PrVerdict {
  bool j_unitary_ok = false;
  bool feedthrough_ok = false;
  bool spectrally_generic_ok = false;
  bool minimal_ok = false;
  double max_junitarity_residual = 0.0;
  double feedthrough_defect = 0.0;
  int minimal_states = 0;
  bool overall = false;
};

/// 64 log-spaced points per decade over [1e−3, 1e3].
FrequencyGrid default_pr_grid();

/// Realizability test: (J_m, J_m)-unitarity on the grid, D ∈ 𝔻_m,
/// minimality of the supplied realization and spectral genericity of its
/// minimal part. Failures are reported in the verdict, never thrown.
PrVerdict check_physical_realizability(const StateSpace& sys, const FrequencyGrid& grid, int m,
                                       double tol = 1e-7);

}  // namespace qyoula
