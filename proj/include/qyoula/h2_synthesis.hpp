#pragma once

// Weighted coherent H2 problem: E(Q) = ‖W_out·(T0 + T1·Q·T2)·W_in‖²₂, its
// gradient, and projected gradient descent under the realizability
// constraint.

#include <string>
#include <vector>

#include "qyoula/constraint.hpp"
#include "qyoula/core.hpp"
#include "qyoula/errors.hpp"
#include "qyoula/stabilization.hpp"

namespace qyoula {

struct SynthesisProblem {
  ModifiedPlant mp;
  CoprimeFactorization cf;
  ConstraintData cd;
  StateSpace w_in, w_out;
  /// 𝑻₀ = W_out·T0·W_in, 𝑻₁ = W_out·T1, 𝑻₂ = T2·W_in.
  StateSpace T0, T1, T2;
  /// 𝑻̂₀ = 𝑻₁~𝑻₀𝑻₂~, 𝑻̂₁ = 𝑻₁~𝑻₁, 𝑻̂₂ = 𝑻₂𝑻₂~ (not stable; axis evaluation only).
  StateSpace hat_T0, hat_T1, hat_T2;
  FrequencyGrid grid;
};

/// Builds the weighted operators. With `require_h2`, throws NotStrictlyProper
/// unless 𝑻₀ and 𝑻₁·Q·𝑻₂ are strictly proper for every Q in the basis span.
/// Throws NotStable for unstable weights.
SynthesisProblem assemble_problem(const ModifiedPlant& mp, const CoprimeFactorization& cf,
                                  const ConstraintData& cd, const StateSpace& w_in,
                                  const StateSpace& w_out, const FrequencyGrid& grid,
                                  bool require_h2 = true);

/// 33 log-spaced points spanning the band where σ_max(W_out)·σ_max(W_in)
/// stays within 40 dB of its peak.
FrequencyGrid default_synthesis_grid(const StateSpace& w_in, const StateSpace& w_out);

/// 𝑻₀ + 𝑻₁·Q·𝑻₂.
StateSpace weighted_closed_loop(const SynthesisProblem& sp, const YoulaParameter& q);

/// E by the Lyapunov route.
double cost(const SynthesisProblem& sp, const YoulaParameter& q);
/// E = ‖𝑻₀‖²₂ + 2Re⟨𝑻̂₀,Q⟩ + ⟨Q, 𝑻̂₁Q𝑻̂₂⟩ with the inner products by quadrature.
double cost_expansion(const SynthesisProblem& sp, const YoulaParameter& q,
                      const Quadrature& quad = axis_quadrature());

/// ∇E(iω) = 2(𝑻̂₀ + 𝑻̂₁Q𝑻̂₂)(iω) at each grid point.
std::vector<Mat> gradient(const SynthesisProblem& sp, const YoulaParameter& q);
std::vector<Mat> gradient(const SynthesisProblem& sp, const YoulaParameter& q,
                          std::span<const double> omegas);

/// Re⟨∇E, dQ⟩ by quadrature over the whole axis.
double gradient_pairing(const SynthesisProblem& sp, const YoulaParameter& q,
                        const YoulaParameter& dq, const Quadrature& quad = axis_quadrature());

/// E as an exact real quadratic in the packed coefficients of parameters
/// sharing `shape`'s basis and offset: E(c) = e0 + bᵀc + ½cᵀHc.
struct QuadraticModel {
  double e0 = 0.0;
  RVec b;
  RMat H;
  [[nodiscard]] double value(const RVec& c) const { return e0 + b.dot(c) + 0.5 * c.dot(H * c); }
  [[nodiscard]] RVec grad(const RVec& c) const { return b + H * c; }
};
QuadraticModel quadratic_model(const SynthesisProblem& sp, const YoulaParameter& shape);

/// Exact dE/dc_j = 2Re⟨𝑻₁φ_j𝑻₂, 𝑻₀ + 𝑻₁Q𝑻₂⟩ (Sylvester route).
RVec coefficient_gradient(const SynthesisProblem& sp, const YoulaParameter& q);

enum class ProjectionMetric {
  ClosedLoop,     ///< Hessian of E plus a small multiple of the identity
  GridFrobenius,  ///< Σ_ω ‖X(iω)‖²_F on the synthesis grid
};

struct DescentConfig {
  double alpha0 = 1.0;
  double backtrack_ratio = 0.5;
  int max_iters = 200;
  double grad_tol = 1e-9;
  double constraint_tol = 1e-6;
  int correction_period = 5;  ///< 0 disables the periodic restoration
  double armijo_c1 = 1e-4;
  int max_backtracks = 30;
  ProjectionMetric metric = ProjectionMetric::ClosedLoop;
  double metric_regularization = 1e-10;

  void validate() const;
};

struct DescentRecord {
  int iter = 0;
  double cost = 0.0;
  double grad_norm = 0.0;
  double step_norm = 0.0;
  double constraint_residual = 0.0;
  double alpha = 0.0;
};

struct DescentResult {
  YoulaParameter q;
  std::vector<DescentRecord> trace;  ///< accepted iterations only
  double initial_cost = 0.0;
  double initial_residual = 0.0;
  double final_grad_norm = 0.0;
  bool converged = false;
  std::string stop_reason;
};

class StalledLineSearch : public Error {
 public:
  StalledLineSearch(const std::string& what, DescentResult partial)
      : Error(what), partial_(std::move(partial)) {}
  [[nodiscard]] const DescentResult& partial() const { return partial_; }

 private:
  DescentResult partial_;
};

/// Projected gradient descent from a feasible start. Throws InfeasibleStart
/// or StalledLineSearch.
DescentResult descend(const SynthesisProblem& sp, const YoulaParameter& q_init,
                      const DescentConfig& cfg = {});

struct ValidationVerdict {
  MembershipVerdict membership;
  bool closed_loop_stable = false;
  bool overall = false;
};

/// 𝒬̂ membership plus internal stability of LFT(𝒫, K(Q)).
ValidationVerdict validate_result(const ModifiedPlant& mp, const CoprimeFactorization& cf,
                                  const ConstraintData& cd, const YoulaParameter& q,
                                  const FrequencyGrid& grid, double tol = 1e-6);

}  // namespace qyoula
