#include "qyoula/hinf_eval.hpp"

#include <algorithm>
#include <cmath>

#include "qyoula/errors.hpp"

namespace qyoula {

HinfReport hinf_report(const StateSpace& sys, const FrequencyGrid& grid, double rel_tol) {
  if (!is_hurwitz(sys.A(), 0.0)) throw NotStable("closed loop is not stable");
  HinfReport r;
  const HinfNorm h = hinf_norm(sys, rel_tol);
  r.norm = h.value;
  r.peak_omega = h.peak_omega;
  // Real-coefficient systems peak at ±ω; report the positive one.
  if (std::isfinite(r.peak_omega) && r.peak_omega < 0.0 &&
      sigma_max(sys.response(-r.peak_omega)) >= (1.0 - rel_tol) * r.norm) {
    r.peak_omega = -r.peak_omega;
  }
  for (double w : grid.points()) {
    const double s = sigma_max(sys.response(w));
    r.grid_profile.emplace_back(w, s);
    if (s > r.norm) {
      r.norm = s;
      r.peak_omega = w;
    }
  }
  const double peak = r.peak_omega;
  r.peak_outside_grid = !std::isfinite(peak) || peak < grid.front() || peak > grid.back();
  return r;
}

HinfReport hinf_cost(const SynthesisProblem& sp, const YoulaParameter& q,
                     const FrequencyGrid& grid) {
  return hinf_report(weighted_closed_loop(sp, q), grid);
}

}  // namespace qyoula
