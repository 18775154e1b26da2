#pragma once

// Modified plant bookkeeping, stabilizing gains, doubly coprime
// factorization and the Youla–Kučera controller map.

#include <optional>
#include <vector>

#include "qyoula/core.hpp"

namespace qyoula {

/// Channel counts of the plant partition, in annihilation channels. The
/// doubled-up widths are twice these counts. The feedback loop is square:
/// n_u == n_y == mu.
struct PartitionSpec {
  int n_r = 0;  ///< exogenous inputs
  int n_u = 0;  ///< control inputs
  int n_z = 0;  ///< performance outputs
  int n_y = 0;  ///< measurement outputs

  [[nodiscard]] int mu() const { return n_u; }
  /// Throws DimensionMismatch for negative counts or a non-square loop, and
  /// Error when n_r < n_y.
  void validate() const;
};

/// Plant regrouped as [[𝒫11, 𝒫12], [𝒫21, 𝒫22]] over a shared state.
/// Widths are the actual input/output column counts of each block.
class ModifiedPlant {
 public:
  ModifiedPlant(StateSpace full, int exo_inputs, int ctrl_inputs, int perf_outputs,
                int meas_outputs);

  [[nodiscard]] const StateSpace& full() const { return full_; }
  [[nodiscard]] int exo_inputs() const { return exo_in_; }
  [[nodiscard]] int ctrl_inputs() const { return ctrl_in_; }
  [[nodiscard]] int perf_outputs() const { return perf_out_; }
  [[nodiscard]] int meas_outputs() const { return meas_out_; }
  [[nodiscard]] int states() const { return full_.states(); }

  [[nodiscard]] Mat A() const { return full_.A(); }
  [[nodiscard]] Mat B1() const { return full_.B().leftCols(exo_in_); }
  [[nodiscard]] Mat B2() const { return full_.B().rightCols(ctrl_in_); }
  [[nodiscard]] Mat C1() const { return full_.C().topRows(perf_out_); }
  [[nodiscard]] Mat C2() const { return full_.C().bottomRows(meas_out_); }
  [[nodiscard]] Mat D11() const { return full_.D().topLeftCorner(perf_out_, exo_in_); }
  [[nodiscard]] Mat D12() const { return full_.D().topRightCorner(perf_out_, ctrl_in_); }
  [[nodiscard]] Mat D21() const { return full_.D().bottomLeftCorner(meas_out_, exo_in_); }
  [[nodiscard]] Mat D22() const { return full_.D().bottomRightCorner(meas_out_, ctrl_in_); }

  [[nodiscard]] StateSpace p11() const { return full_.block(0, perf_out_, 0, exo_in_); }
  [[nodiscard]] StateSpace p12() const { return full_.block(0, perf_out_, exo_in_, ctrl_in_); }
  [[nodiscard]] StateSpace p21() const { return full_.block(perf_out_, meas_out_, 0, exo_in_); }
  [[nodiscard]] StateSpace p22() const {
    return full_.block(perf_out_, meas_out_, exo_in_, ctrl_in_);
  }

 private:
  StateSpace full_;
  int exo_in_, ctrl_in_, perf_out_, meas_out_;
};

/// Regroups a doubled-up plant with inputs (r, u, r#, u#) and outputs
/// (z, y, z#, y#) into (r, r#, u, u#) and (z, z#, y, y#).
ModifiedPlant modify_plant(const StateSpace& plant, const PartitionSpec& spec);
/// Inverse regrouping of modify_plant.
StateSpace restore_plant(const ModifiedPlant& mp, const PartitionSpec& spec);

/// (A, 𝑩₂, 𝑪₂, 𝑫₂₂).
StateSpace extract_p22(const ModifiedPlant& mp);
/// Replaces the loop block; `p22` must share the state matrix of `mp`.
ModifiedPlant with_p22(const ModifiedPlant& mp, const StateSpace& p22);

/// Eigenvalue with Re λ ≥ 0 failing the PBH rank test, if any.
std::optional<cplx> uncontrollable_unstable_mode(const Mat& a, const Mat& b, double tol = 1e-9);
std::optional<cplx> unobservable_unstable_mode(const Mat& a, const Mat& c, double tol = 1e-9);
bool pbh_stabilizable(const Mat& a, const Mat& b, double tol = 1e-9);
bool pbh_detectable(const Mat& a, const Mat& c, double tol = 1e-9);

/// How closed-loop eigenvalues are chosen.
struct GainPolicy {
  enum class Kind {
    Reflect,  ///< move Re λ ≥ −margin to −max(|Re λ|, 1) + i·Im λ, keep the rest
    Assign,   ///< place the whole spectrum at `targets`
    Zero,     ///< F = 0 and L = 0 (A must already be Hurwitz)
  };
  Kind kind = Kind::Reflect;
  std::vector<cplx> targets;
  std::vector<cplx> observer_targets;  ///< for L; defaults to `targets`

  static GainPolicy reflect() { return {}; }
  static GainPolicy assign(std::vector<cplx> t, std::vector<cplx> observer = {}) {
    return {Kind::Assign, std::move(t), std::move(observer)};
  }
  static GainPolicy zero() { return {Kind::Zero, {}, {}}; }
};

struct GainPair {
  Mat F;  ///< state feedback, ctrl_inputs × states
  Mat L;  ///< output injection, states × meas_outputs
};

/// State feedback F with eig(A + B·F) = targets (complex Schur method).
/// Throws PlacementFailed on uncontrollable targets.
Mat place_eigenvalues(const Mat& a, const Mat& b, const std::vector<cplx>& targets);

/// F and L making A + B2·F and A + L·C2 Hurwitz. Throws NotStabilizable,
/// NotDetectable or PlacementFailed.
GainPair stabilizing_gains(const Mat& a, const Mat& b2, const Mat& c2,
                           const GainPolicy& policy = GainPolicy::reflect(),
                           double margin = 1e-9);

struct CoprimeFactorization {
  StateSpace M, N, U, V;
  StateSpace Mhat, Nhat, Uhat, Vhat;
  GainPair gains;
  StateSpace right;  ///< [M U; N V] on one state
  StateSpace left;   ///< [V̂ −Û; −N̂ M̂] on one state
  int ctrl_inputs = 0;
  int meas_outputs = 0;
};

/// 129 log-spaced points over [1e−3, 1e3] plus ω = 0.
FrequencyGrid verification_grid();

/// Builds the right/left factor families from the gains and verifies the
/// factorization identities and the general Bézout identity on `grid`.
/// Throws FactorUnstable or BezoutResidualTooLarge.
CoprimeFactorization coprime_factorization(const ModifiedPlant& mp, const GainPair& gains,
                                           const FrequencyGrid& grid = verification_grid(),
                                           double tol = 1e-7);

/// max ‖[V̂ −Û; −N̂ M̂]·[M U; N V] − I‖_F over the grid.
double bezout_residual(const CoprimeFactorization& cf, const FrequencyGrid& grid);
/// max relative mismatch of N·M⁻¹ and M̂⁻¹·N̂ against 𝒫22.
double factorization_residual(const CoprimeFactorization& cf, const StateSpace& p22,
                              const FrequencyGrid& grid);

/// det (V + N·Q)(∞).
cplx youla_feedthrough_det(const CoprimeFactorization& cf, const Mat& q_infinity);

/// K = (U + M·Q)(V + N·Q)⁻¹. Throws FeedthroughSingular or NotStable.
StateSpace controller_from_parameter(const CoprimeFactorization& cf, const StateSpace& q);
/// K = (V̂ + Q·N̂)⁻¹(Û + Q·M̂).
StateSpace controller_from_parameter_left(const CoprimeFactorization& cf, const StateSpace& q);

/// Q = (M − K·N)⁻¹(K·V − U), reduced to a minimal realization. Throws
/// NotInYoulaRange when the result is unstable.
StateSpace parameter_from_controller(const CoprimeFactorization& cf, const StateSpace& k,
                                     double tol = 1e-9);

struct ClosedLoopTriple {
  StateSpace T0, T1, T2;
};

/// T0 = 𝒫11 + 𝒫12·U·M̂·𝒫21, T1 = 𝒫12·M, T2 = M̂·𝒫21 (stable realizations).
ClosedLoopTriple closed_loop_triple(const ModifiedPlant& mp, const CoprimeFactorization& cf);

/// T0 + T1·Q·T2.
StateSpace affine_closed_loop(const ClosedLoopTriple& t, const StateSpace& q);

}  // namespace qyoula
