#pragma once

// Weighted H∞ objective ‖𝑻₀ + 𝑻₁Q𝑻₂‖∞ for a candidate parameter.

#include <utility>
#include <vector>

#include "qyoula/constraint.hpp"
#include "qyoula/core.hpp"
#include "qyoula/h2_synthesis.hpp"

namespace qyoula {

struct HinfReport {
  double norm = 0.0;
  double peak_omega = 0.0;
  std::vector<std::pair<double, double>> grid_profile;  ///< (ω, σ_max), ω ascending
  bool peak_outside_grid = false;
};

/// Norm of `sys` together with its σ_max profile on `grid`. The norm is
/// never below a profile value.
HinfReport hinf_report(const StateSpace& sys, const FrequencyGrid& grid, double rel_tol = 1e-7);

/// Report for the weighted closed loop of `q`. Weights need not be strictly
/// proper. Throws NotStable.
HinfReport hinf_cost(const SynthesisProblem& sp, const YoulaParameter& q,
                     const FrequencyGrid& grid);

}  // namespace qyoula
