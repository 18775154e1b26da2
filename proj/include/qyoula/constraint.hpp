#pragma once

// Physical-realizability constraint on the Youla parameter: the quadratic
// identity Φ + Q~Λ + Λ~Q + Q~ΠQ = 0, membership tests, and projection of
// directions onto its linearization sampled on a frequency grid.

#include <optional>
#include <string>
#include <vector>

#include "qyoula/core.hpp"
#include "qyoula/stabilization.hpp"

namespace qyoula {

/// Φ = U~JU − V~JV, Λ = M~JU − N~JV, Π = M~JM − N~JN with J = J_mu.
struct ConstraintData {
  StateSpace Phi, Lambda, Pi;
  int mu = 0;
};

/// Throws DimensionMismatch unless the loop width is 2·mu, and Error if Φ or
/// Π fail the Hermitian check on the verification grid.
ConstraintData build_constraint_data(const CoprimeFactorization& cf, int mu);

/// Q(s) = Q₀ + Σ_{k=1..K} Q_k/(s+β)^k, plus an optional fixed stable
/// offset system that is not part of the coefficient vector.
class YoulaParameter {
 public:
  YoulaParameter() = default;
  /// All coefficients zero.
  YoulaParameter(double beta, int order, int rows, int cols);
  YoulaParameter(double beta, std::vector<Mat> coeffs);

  [[nodiscard]] double beta() const { return beta_; }
  [[nodiscard]] int order() const { return static_cast<int>(coeffs_.size()) - 1; }
  [[nodiscard]] int rows() const { return rows_; }
  [[nodiscard]] int cols() const { return cols_; }
  [[nodiscard]] const std::vector<Mat>& coeffs() const { return coeffs_; }
  [[nodiscard]] const Mat& coeff(int k) const { return coeffs_.at(static_cast<std::size_t>(k)); }
  void set_coeff(int k, const Mat& value);

  [[nodiscard]] const std::optional<StateSpace>& offset() const { return offset_; }
  void set_offset(StateSpace offset);

  /// Number of real unknowns, 2·(K+1)·rows·cols.
  [[nodiscard]] int real_dim() const { return 2 * (order() + 1) * rows_ * cols_; }
  /// Real coefficient vector: for each k, each entry in column-major order,
  /// the real part then the imaginary part. The offset is not included.
  [[nodiscard]] RVec pack() const;
  /// Same basis and offset with new coefficients.
  [[nodiscard]] YoulaParameter with_packed(const RVec& x) const;

  [[nodiscard]] Mat eval(cplx s) const;
  [[nodiscard]] Mat response(double omega) const { return eval(cplx{0.0, omega}); }
  /// Chain realization with K·cols states, plus the offset states.
  [[nodiscard]] StateSpace realization() const;

  /// 1/(s+β)^k.
  [[nodiscard]] cplx basis_value(int k, cplx s) const;
  /// Value at s of the basis element for real coordinate j.
  [[nodiscard]] Mat basis_element(int j, cplx s) const;

 private:
  double beta_ = 1.0;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Mat> coeffs_;
  std::optional<StateSpace> offset_;
};

/// Φ, Λ, Π sampled on a grid.
struct ConstraintSamples {
  std::vector<double> omegas;
  std::vector<Mat> Phi, Lambda, Pi;
};
ConstraintSamples sample_constraint(const ConstraintData& cd, std::span<const double> omegas);

/// Φ + Q*Λ + Λ*Q + Q*ΠQ at one frequency.
Mat constraint_value(const Mat& phi, const Mat& lambda, const Mat& pi, const Mat& q);

/// max over the grid of ‖Φ + Q*Λ + Λ*Q + Q*ΠQ‖_F.
double constraint_residual(const ConstraintData& cd, const YoulaParameter& q,
                           const FrequencyGrid& grid);
double constraint_residual(const ConstraintSamples& cs, const YoulaParameter& q);

/// |det (V + N·Q)(∞)| > tol.
bool feedthrough_ok(const CoprimeFactorization& cf, const YoulaParameter& q, double tol = 1e-12);

struct MembershipVerdict {
  bool stable = false;
  bool feedthrough_ok = false;
  double residual = 0.0;
  bool residual_ok = false;
  bool spectrally_generic_ok = false;
  double dmu_defect = 0.0;
  bool dmu_ok = false;
  bool in_q = false;     ///< stable, well-posed, constraint satisfied
  bool in_qhat = false;  ///< additionally generic with K(∞) ∈ 𝔻_μ
  std::string failure;   ///< first failing item, empty when in_qhat
};

/// Checks, in order: stability of Q, well-posedness, constraint residual,
/// spectral genericity of the assembled controller (minimal part; static
/// controllers pass) and K(∞) ∈ 𝔻_μ.
MembershipVerdict membership_qhat(const CoprimeFactorization& cf, const ConstraintData& cd,
                                  const YoulaParameter& q, const FrequencyGrid& grid,
                                  double tol = 1e-6);

/// Linearization of the constraint at a base point: X ↦ X*W + W*X with
/// W = Λ + ΠQ, sampled on a grid. Each frequency contributes p² real
/// equations (diagonal real parts, upper off-diagonal real and imaginary
/// parts) on the packed coefficients of X.
class TangentSubspace {
 public:
  TangentSubspace(const ConstraintSamples& samples, const YoulaParameter& base,
                  bool with_null_basis = true);

  [[nodiscard]] const YoulaParameter& base() const { return base_; }
  [[nodiscard]] const std::vector<double>& omegas() const { return omegas_; }
  [[nodiscard]] const std::vector<Mat>& W() const { return w_; }

  /// X*W + W*X at grid index i.
  [[nodiscard]] Mat map(std::size_t i, const Mat& x) const;
  /// Real constraint matrix, (|Ω|·p²) × d.
  [[nodiscard]] const RMat& constraint_matrix() const { return c_; }
  /// Stacked real residual of the full constraint at the base point, same
  /// row layout as the constraint matrix.
  [[nodiscard]] const RVec& residual_vector() const { return r_; }
  /// Orthonormal basis of the numerical null space of the constraint matrix.
  [[nodiscard]] const RMat& null_basis() const { return null_; }
  /// max over the grid of ‖X*W + W*X‖_F for coefficients x.
  [[nodiscard]] double map_residual(const RVec& x) const;

 private:
  YoulaParameter base_;
  std::vector<double> omegas_;
  std::vector<Mat> w_;
  RMat c_;
  RVec r_;
  RMat null_;
};

/// Real packing of the Hermitian part used for constraint rows.
RVec pack_hermitian(const Mat& h);

/// minimize ½xᵀMx − gᵀx subject to x ∈ range(null_basis).
struct ConstrainedSolution {
  RVec x;
  bool rank_deficient = false;
};
ConstrainedSolution solve_in_subspace(const RMat& metric, const RVec& g, const RMat& null_basis);

struct Projection {
  YoulaParameter X;
  RVec coeffs;
  bool rank_deficient = false;  ///< minimum-norm solution was used
};

/// Coefficients of X in the basis of ts.base() minimizing
/// Σ_ω ‖X(iω) − G(iω)‖²_F subject to X ∈ S on the grid. `samples` holds one
/// matrix per grid point of ts.
Projection project_direction(const TangentSubspace& ts, const std::vector<Mat>& samples);

/// Grid Frobenius Gram matrix Σ_ω Re tr(φ_j* φ_l) and pairing
/// Σ_ω Re tr(φ_j* G) for the basis of `shape`.
RMat grid_gram(const YoulaParameter& shape, std::span<const double> omegas);
RVec grid_pairing(const YoulaParameter& shape, std::span<const double> omegas,
                  const std::vector<Mat>& samples);

/// Gauss–Newton correction of the constraint residual over the coefficients
/// (minimum-norm least-squares steps). Returns the corrected parameter;
/// steps that do not reduce the residual are discarded.
YoulaParameter restore_constraint(const ConstraintSamples& cs, const YoulaParameter& q,
                                  int max_steps = 3, double target = 0.0);

}  // namespace qyoula
