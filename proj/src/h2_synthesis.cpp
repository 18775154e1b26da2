#include "qyoula/h2_synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qyoula {

namespace {

void require_stable_weight(const StateSpace& w, const char* name) {
  if (!is_hurwitz(w.A(), 0.0)) throw NotStable(std::string(name) + " is not stable");
}

double feedthrough_scale(const StateSpace& g) {
  return std::max(1.0, g.B().norm() * g.C().norm() + g.D().norm());
}

// Scalar 1/(s+β)^k as a chain of k states.
StateSpace scalar_basis(double beta, int k) {
  if (k == 0) return StateSpace::gain(Mat::Identity(1, 1));
  Mat a = -beta * Mat::Identity(k, k);
  for (int i = 1; i < k; ++i) a(i, i - 1) = 1.0;
  Mat b = Mat::Zero(k, 1);
  b(0, 0) = 1.0;
  Mat c = Mat::Zero(1, k);
  c(0, k - 1) = 1.0;
  return {a, b, c, Mat::Zero(1, 1)};
}

// 𝑻₁·E_(row,col)·𝑻₂/(s+β)^k for each complex basis element, in packing order.
std::vector<StateSpace> basis_images(const SynthesisProblem& sp, const YoulaParameter& shape) {
  std::vector<StateSpace> out;
  const int rows = shape.rows();
  const int cols = shape.cols();
  std::vector<StateSpace> t1c, t2r, sk;
  for (int r = 0; r < rows; ++r) t1c.push_back(sp.T1.block(0, sp.T1.outputs(), r, 1));
  for (int c = 0; c < cols; ++c) t2r.push_back(sp.T2.block(c, 1, 0, sp.T2.inputs()));
  for (int k = 0; k <= shape.order(); ++k) sk.push_back(scalar_basis(shape.beta(), k));
  for (int k = 0; k <= shape.order(); ++k) {
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) {
        out.push_back(series(t1c[static_cast<std::size_t>(r)],
                             series(sk[static_cast<std::size_t>(k)], t2r[static_cast<std::size_t>(c)])));
      }
    }
  }
  return out;
}

cplx unit_of(int j) { return j % 2 == 0 ? cplx{1.0, 0.0} : kI; }

StateSpace offset_loop(const SynthesisProblem& sp, const YoulaParameter& shape) {
  if (!shape.offset()) return sp.T0;
  return sp.T0 + sp.T1 * (*shape.offset()) * sp.T2;
}

struct AxisSample {
  Mat t0, t1, t2;
};

AxisSample sample_at(const SynthesisProblem& sp, double w) {
  return {sp.T0.response(w), sp.T1.response(w), sp.T2.response(w)};
}

Mat gradient_at(const AxisSample& s, const Mat& q) {
  const Mat t1h = s.t1.adjoint();
  const Mat t2h = s.t2.adjoint();
  return 2.0 * (t1h * s.t0 * t2h + t1h * s.t1 * q * s.t2 * t2h);
}

RMat metric_for(const SynthesisProblem& sp, const YoulaParameter& shape, const QuadraticModel& model,
                const DescentConfig& cfg) {
  const int d = shape.real_dim();
  RMat m;
  if (cfg.metric == ProjectionMetric::ClosedLoop) {
    m = model.H;
  } else {
    const YoulaParameter bare(shape.beta(), shape.order(), shape.rows(), shape.cols());
    m = grid_gram(bare, sp.grid.points());
  }
  double scale = d > 0 ? m.trace() / d : 1.0;
  if (!(scale > 0.0)) scale = 1.0;
  m += cfg.metric_regularization * scale * RMat::Identity(d, d);
  return m;
}

}  // namespace

SynthesisProblem assemble_problem(const ModifiedPlant& mp, const CoprimeFactorization& cf,
                                  const ConstraintData& cd, const StateSpace& w_in,
                                  const StateSpace& w_out, const FrequencyGrid& grid,
                                  bool require_h2) {
  if (w_in.outputs() != mp.exo_inputs()) {
    throw DimensionMismatch("W_in must have " + std::to_string(mp.exo_inputs()) + " outputs");
  }
  if (w_out.inputs() != mp.perf_outputs()) {
    throw DimensionMismatch("W_out must have " + std::to_string(mp.perf_outputs()) + " inputs");
  }
  require_stable_weight(w_in, "W_in");
  require_stable_weight(w_out, "W_out");
  const ClosedLoopTriple t = closed_loop_triple(mp, cf);
  SynthesisProblem sp{mp, cf, cd, w_in, w_out, {}, {}, {}, {}, {}, {}, grid};
  sp.T0 = w_out * t.T0 * w_in;
  sp.T1 = w_out * t.T1;
  sp.T2 = t.T2 * w_in;
  sp.hat_T0 = conjugate_system(sp.T1) * sp.T0 * conjugate_system(sp.T2);
  sp.hat_T1 = conjugate_system(sp.T1) * sp.T1;
  sp.hat_T2 = sp.T2 * conjugate_system(sp.T2);
  if (require_h2) {
    if (sp.T0.D().norm() > 1e-12 * feedthrough_scale(sp.T0)) {
      throw NotStrictlyProper("weighted T0 has a nonzero feedthrough; the H2 cost is infinite");
    }
    if (sp.T1.D().norm() * sp.T2.D().norm() >
        1e-12 * feedthrough_scale(sp.T1) * feedthrough_scale(sp.T2)) {
      throw NotStrictlyProper(
          "weighted T1 and T2 both have feedthrough; T1 Q T2 is not strictly proper for static Q");
    }
  }
  return sp;
}

FrequencyGrid default_synthesis_grid(const StateSpace& w_in, const StateSpace& w_out) {
  const FrequencyGrid probe = FrequencyGrid::logspace(1e-4, 1e4, 801);
  std::vector<double> gain;
  gain.reserve(probe.size());
  for (double w : probe.points()) {
    gain.push_back(sigma_max(w_out.response(w)) * sigma_max(w_in.response(w)));
  }
  const double peak = *std::max_element(gain.begin(), gain.end());
  if (!(peak > 0.0)) return FrequencyGrid::logspace(1e-3, 1e3, 33);
  double lo = probe.back();
  double hi = probe.front();
  for (std::size_t i = 0; i < gain.size(); ++i) {
    if (gain[i] >= 1e-2 * peak) {
      lo = std::min(lo, probe[i]);
      hi = std::max(hi, probe[i]);
    }
  }
  if (hi <= lo) {
    lo /= 10.0;
    hi *= 10.0;
  }
  return FrequencyGrid::logspace(lo, hi, 33);
}

StateSpace weighted_closed_loop(const SynthesisProblem& sp, const YoulaParameter& q) {
  return sp.T0 + sp.T1 * q.realization() * sp.T2;
}

double cost(const SynthesisProblem& sp, const YoulaParameter& q) {
  return h2_norm_sq(weighted_closed_loop(sp, q));
}

double cost_expansion(const SynthesisProblem& sp, const YoulaParameter& q, const Quadrature& quad) {
  double linear = 0.0;
  double quadratic = 0.0;
  for (std::size_t i = 0; i < quad.nodes.size(); ++i) {
    const double w = quad.nodes[i];
    const AxisSample s = sample_at(sp, w);
    const Mat qw = q.response(w);
    const Mat hat0 = s.t1.adjoint() * s.t0 * s.t2.adjoint();
    const Mat t1q = s.t1 * qw * s.t2;
    linear += quad.weights[i] * (hat0.adjoint() * qw).trace().real();
    quadratic += quad.weights[i] * t1q.squaredNorm();
  }
  return h2_norm_sq(sp.T0) + 2.0 * linear + quadratic;
}

std::vector<Mat> gradient(const SynthesisProblem& sp, const YoulaParameter& q,
                          std::span<const double> omegas) {
  std::vector<Mat> out;
  out.reserve(omegas.size());
  for (double w : omegas) out.push_back(gradient_at(sample_at(sp, w), q.response(w)));
  return out;
}

std::vector<Mat> gradient(const SynthesisProblem& sp, const YoulaParameter& q) {
  return gradient(sp, q, sp.grid.points());
}

double gradient_pairing(const SynthesisProblem& sp, const YoulaParameter& q,
                        const YoulaParameter& dq, const Quadrature& quad) {
  double total = 0.0;
  for (std::size_t i = 0; i < quad.nodes.size(); ++i) {
    const double w = quad.nodes[i];
    const Mat g = gradient_at(sample_at(sp, w), q.response(w));
    total += quad.weights[i] * (g.adjoint() * dq.response(w)).trace().real();
  }
  return total;
}

QuadraticModel quadratic_model(const SynthesisProblem& sp, const YoulaParameter& shape) {
  const std::vector<StateSpace> psi = basis_images(sp, shape);
  const StateSpace r0 = offset_loop(sp, shape);
  const auto nb = static_cast<Eigen::Index>(psi.size());
  Eigen::VectorXcd z(nb);
  Mat gram(nb, nb);
  for (Eigen::Index f = 0; f < nb; ++f) {
    z(f) = h2_inner(psi[static_cast<std::size_t>(f)], r0);
    for (Eigen::Index g = f; g < nb; ++g) {
      gram(f, g) = h2_inner(psi[static_cast<std::size_t>(f)], psi[static_cast<std::size_t>(g)]);
      gram(g, f) = std::conj(gram(f, g));
    }
  }
  const int d = shape.real_dim();
  QuadraticModel model;
  model.e0 = h2_norm_sq(r0);
  model.b = RVec(d);
  model.H = RMat(d, d);
  for (int j = 0; j < d; ++j) {
    const cplx uj = unit_of(j);
    model.b(j) = 2.0 * (std::conj(uj) * z(j / 2)).real();
    for (int l = 0; l < d; ++l) {
      model.H(j, l) = 2.0 * (std::conj(uj) * unit_of(l) * gram(j / 2, l / 2)).real();
    }
  }
  return model;
}

RVec coefficient_gradient(const SynthesisProblem& sp, const YoulaParameter& q) {
  const std::vector<StateSpace> psi = basis_images(sp, q);
  const StateSpace r = weighted_closed_loop(sp, q);
  const int d = q.real_dim();
  RVec g(d);
  for (int j = 0; j < d; ++j) {
    const cplx z = h2_inner(psi[static_cast<std::size_t>(j / 2)], r);
    g(j) = 2.0 * (std::conj(unit_of(j)) * z).real();
  }
  return g;
}

void DescentConfig::validate() const {
  if (!(alpha0 > 0.0)) throw Error("descent: alpha0 must be positive");
  if (!(backtrack_ratio > 0.0 && backtrack_ratio < 1.0)) {
    throw Error("descent: backtrack_ratio must lie in (0, 1)");
  }
  if (max_iters < 0) throw Error("descent: max_iters must be non-negative");
  if (!(grad_tol >= 0.0)) throw Error("descent: grad_tol must be non-negative");
  if (!(constraint_tol >= 0.0)) throw Error("descent: constraint_tol must be non-negative");
  if (correction_period < 0) throw Error("descent: correction_period must be non-negative");
  if (!(armijo_c1 > 0.0 && armijo_c1 < 1.0)) throw Error("descent: armijo_c1 must lie in (0, 1)");
  if (max_backtracks < 0) throw Error("descent: max_backtracks must be non-negative");
  if (!(metric_regularization >= 0.0)) throw Error("descent: metric_regularization must be >= 0");
}

DescentResult descend(const SynthesisProblem& sp, const YoulaParameter& q_init,
                      const DescentConfig& cfg) {
  cfg.validate();
  const ConstraintSamples cs = sample_constraint(sp.cd, sp.grid.points());
  DescentResult result;
  result.initial_residual = constraint_residual(cs, q_init);
  if (!(result.initial_residual <= cfg.constraint_tol)) {
    throw InfeasibleStart("initial constraint residual " + std::to_string(result.initial_residual) +
                          " exceeds constraint_tol " + std::to_string(cfg.constraint_tol));
  }
  const QuadraticModel model = quadratic_model(sp, q_init);
  const RMat metric = metric_for(sp, q_init, model, cfg);
  RVec c = q_init.pack();
  double e = model.value(c);
  result.initial_cost = e;
  result.q = q_init;
  result.stop_reason = "iteration limit";

  for (int it = 1; it <= cfg.max_iters; ++it) {
    const YoulaParameter q = q_init.with_packed(c);
    const RVec g = model.grad(c);
    const TangentSubspace ts(cs, q);
    const RMat& nb = ts.null_basis();
    const double gnorm = (nb.transpose() * g).norm();
    result.final_grad_norm = gnorm;
    if (gnorm <= cfg.grad_tol) {
      result.converged = true;
      result.stop_reason = "projected gradient below tolerance";
      break;
    }
    RVec dir;
    if (cfg.metric == ProjectionMetric::ClosedLoop) {
      dir = solve_in_subspace(metric, g, nb).x;
    } else {
      dir = project_direction(ts, gradient(sp, q)).coeffs;
    }
    const double slope = g.dot(dir);
    if (!(slope > 0.0)) {
      result.stop_reason = "projected direction is not a descent direction";
      break;
    }

    double alpha = cfg.alpha0;
    bool accepted = false;
    RVec trial;
    double delta_e = 0.0;
    double residual = 0.0;
    for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
      YoulaParameter qt = q_init.with_packed(c - alpha * dir);
      residual = constraint_residual(cs, qt);
      const bool periodic = cfg.correction_period > 0 && it % cfg.correction_period == 0;
      if (cfg.correction_period > 0 && (periodic || residual > cfg.constraint_tol)) {
        qt = restore_constraint(cs, qt, 3, 1e-3 * cfg.constraint_tol);
        residual = constraint_residual(cs, qt);
      }
      trial = qt.pack();
      const RVec step = trial - c;
      // Exact increment of the quadratic, free of cancellation against E.
      delta_e = g.dot(step) + 0.5 * step.dot(model.H * step);
      if (delta_e <= -cfg.armijo_c1 * alpha * slope && residual <= cfg.constraint_tol) {
        accepted = true;
        break;
      }
      alpha *= cfg.backtrack_ratio;
    }
    if (!accepted) {
      if (alpha * dir.norm() <= 1e-14 * std::max(1.0, c.norm())) {
        result.converged = true;
        result.stop_reason = "step below working precision";
        break;
      }
      result.q = q_init.with_packed(c);
      result.stop_reason = "line search stalled";
      throw StalledLineSearch("backtracking exhausted " + std::to_string(cfg.max_backtracks) +
                                  " reductions at iteration " + std::to_string(it),
                              result);
    }
    e += delta_e;
    result.trace.push_back({it, e, gnorm, (trial - c).norm(), residual, alpha});
    c = trial;
  }
  result.q = q_init.with_packed(c);
  return result;
}

ValidationVerdict validate_result(const ModifiedPlant& mp, const CoprimeFactorization& cf,
                                  const ConstraintData& cd, const YoulaParameter& q,
                                  const FrequencyGrid& grid, double tol) {
  ValidationVerdict v;
  v.membership = membership_qhat(cf, cd, q, grid, tol);
  if (v.membership.stable && v.membership.feedthrough_ok) {
    try {
      const StateSpace k = controller_from_parameter(cf, q.realization());
      v.closed_loop_stable = is_hurwitz(compose_lft(mp.full(), k).A(), 1e-9);
    } catch (const Error&) {
      v.closed_loop_stable = false;
    }
  }
  v.overall = v.membership.in_qhat && v.closed_loop_stable;
  return v;
}

}  // namespace qyoula
