#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fixture_problems.hpp"
#include "qyoula/errors.hpp"
#include "qyoula/h2_synthesis.hpp"
#include "random_problems.hpp"

using namespace qyoula;
using qtest::Rng;

namespace {

using qtest::random_h2_plant;
using qtest::random_parameter;
using qtest::random_problem;
using qtest::scalar_problem;
using qtest::vacuous;

// (1/2π)∫‖G(iω)‖²_F dω over the whole axis with ω = tan θ.
double axis_energy(const StateSpace& g, int n = 20000) {
  const double h = std::numbers::pi / n;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double th = -std::numbers::pi / 2 + (i + 0.5) * h;
    const double c = std::cos(th);
    total += g.response(std::tan(th)).squaredNorm() / (c * c);
  }
  return total * h / (2.0 * std::numbers::pi);
}

}  // namespace

TEST_CASE("assemble_problem rejects unusable weights and plants") {
  Rng rng(41);
  const ModifiedPlant mp = random_h2_plant(rng);
  const CoprimeFactorization cf =
      coprime_factorization(mp, stabilizing_gains(mp.A(), mp.B2(), mp.C2()));
  const ConstraintData cd = build_constraint_data(cf, 1);
  const FrequencyGrid grid = FrequencyGrid::logspace(1e-2, 1e2, 9);
  const StateSpace id = StateSpace::identity(2);

  const StateSpace unstable(Mat::Identity(2, 2), Mat::Identity(2, 2), Mat::Identity(2, 2),
                            Mat::Zero(2, 2));
  CHECK_THROWS_AS(assemble_problem(mp, cf, cd, unstable, id, grid), NotStable);
  CHECK_THROWS_AS(assemble_problem(mp, cf, cd, id, unstable, grid), NotStable);
  CHECK_THROWS_AS(assemble_problem(mp, cf, cd, StateSpace::identity(3), id, grid),
                  DimensionMismatch);

  Mat d = mp.full().D();
  d(0, 0) = 0.3;
  const ModifiedPlant direct(StateSpace(mp.A(), mp.full().B(), mp.full().C(), d), 2, 2, 2, 2);
  const CoprimeFactorization cf2 =
      coprime_factorization(direct, stabilizing_gains(direct.A(), direct.B2(), direct.C2()));
  CHECK_THROWS_AS(assemble_problem(direct, cf2, cd, id, id, grid), NotStrictlyProper);
  CHECK_NOTHROW(assemble_problem(direct, cf2, cd, id, id, grid, false));
}

TEST_CASE("hat operators") {
  Rng rng(42);
  const SynthesisProblem sp = random_problem(rng);
  const YoulaParameter q = random_parameter(rng, 2);
  const std::vector<double> omegas = qtest::linspace(-5.0, 5.0, 11);
  const std::vector<Mat> g = gradient(sp, q, omegas);
  for (std::size_t i = 0; i < omegas.size(); ++i) {
    const double w = omegas[i];
    const Mat h1 = sp.hat_T1.response(w);
    const Mat h2 = sp.hat_T2.response(w);
    CHECK((h1 - h1.adjoint()).norm() < 1e-10 * (1.0 + h1.norm()));
    CHECK((h2 - h2.adjoint()).norm() < 1e-10 * (1.0 + h2.norm()));
    CHECK(Eigen::SelfAdjointEigenSolver<Mat>(h1).eigenvalues().minCoeff() > -1e-10);
    CHECK(Eigen::SelfAdjointEigenSolver<Mat>(h2).eigenvalues().minCoeff() > -1e-10);
    const Mat t0 = sp.T0.response(w), t1 = sp.T1.response(w), t2 = sp.T2.response(w);
    CHECK((sp.hat_T0.response(w) - t1.adjoint() * t0 * t2.adjoint()).norm() < 1e-10);
    const Mat expected = 2.0 * (sp.hat_T0.response(w) + h1 * q.response(w) * h2);
    CHECK((g[i] - expected).norm() < 1e-9 * (1.0 + expected.norm()));
  }
  CHECK(gradient(sp, q).size() == sp.grid.size());
}

TEST_CASE("cost against independent quadrature") {
  Rng rng(43);
  for (int trial = 0; trial < 4; ++trial) {
    const SynthesisProblem sp = random_problem(rng);
    const YoulaParameter zero(1.0, 2, 2, 2);
    CHECK(std::abs(cost(sp, zero) - h2_norm_sq(sp.T0)) < 1e-12 * (1.0 + h2_norm_sq(sp.T0)));
    const YoulaParameter q = random_parameter(rng, 2);
    const double e = cost(sp, q);
    const double oracle = axis_energy(weighted_closed_loop(sp, q));
    CHECK(std::abs(e - oracle) < 1e-5 * oracle);
    CHECK(std::abs(cost_expansion(sp, q) - e) < 1e-4 * e);
  }
}

TEST_CASE("coefficient gradient against finite differences") {
  Rng rng(44);
  const SynthesisProblem sp = random_problem(rng);
  const YoulaParameter q = random_parameter(rng, 1);
  const RVec g = coefficient_gradient(sp, q);
  const RVec c = q.pack();
  const double h = 1e-6;
  for (int j = 0; j < q.real_dim(); ++j) {
    RVec e = RVec::Zero(c.size());
    e(j) = h;
    const double fd = (cost(sp, q.with_packed(c + e)) - cost(sp, q.with_packed(c - e))) / (2 * h);
    CHECK(std::abs(g(j) - fd) < 1e-6 * (1.0 + std::abs(fd)));
  }
  // Quadrature pairing with the frequency-domain gradient.
  const RVec dir = RVec::Random(c.size());
  const double along = g.dot(dir);
  CHECK(std::abs(gradient_pairing(sp, q, q.with_packed(dir)) - along) < 1e-4 * (1.0 + std::abs(along)));
}

TEST_CASE("quadratic model is exact and convex") {
  Rng rng(45);
  const SynthesisProblem sp = random_problem(rng);
  const YoulaParameter shape(1.0, 1, 2, 2);
  const QuadraticModel m = quadratic_model(sp, shape);
  const int d = shape.real_dim();
  CHECK((m.H - m.H.transpose()).norm() < 1e-10 * m.H.norm());
  CHECK(Eigen::SelfAdjointEigenSolver<RMat>(m.H).eigenvalues().minCoeff() > -1e-10 * m.H.norm());
  const double e0 = cost(sp, shape);
  CHECK(std::abs(m.e0 - e0) < 1e-12 * (1.0 + e0));

  // Polarization: H_jl = E(e_j + e_l) − E(e_j) − E(e_l) + E(0).
  auto unit = [&](int j) {
    RVec e = RVec::Zero(d);
    e(j) = 1.0;
    return e;
  };
  for (int j = 0; j < d; j += 3) {
    for (int l = 0; l < d; l += 5) {
      const double pol = cost(sp, shape.with_packed(unit(j) + unit(l))) -
                         cost(sp, shape.with_packed(unit(j))) -
                         cost(sp, shape.with_packed(unit(l))) + e0;
      CHECK(std::abs(m.H(j, l) - pol) < 1e-8 * (1.0 + std::abs(pol)));
    }
  }
  for (int trial = 0; trial < 5; ++trial) {
    const RVec a = RVec::Random(d), b = RVec::Random(d);
    const double ea = cost(sp, shape.with_packed(a));
    const double eb = cost(sp, shape.with_packed(b));
    const double mid = cost(sp, shape.with_packed((a + b) / 2.0));
    CHECK(std::abs(m.value(a) - ea) < 1e-9 * (1.0 + ea));
    CHECK(mid <= (ea + eb) / 2.0 + 1e-12);
    CHECK((m.grad(a) - coefficient_gradient(sp, shape.with_packed(a))).norm() <
          1e-8 * (1.0 + m.grad(a).norm()));
  }
}

TEST_CASE("descent config validation") {
  DescentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.backtrack_ratio = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.armijo_c1 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.alpha0 = -1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("unconstrained descent reaches the normal-equation optimum") {
  const SynthesisProblem sp = scalar_problem();
  const YoulaParameter start(1.0, 3, 1, 1);

  const RVec c_star = qtest::normal_equation_minimizer(sp, start);
  const double e_star = cost(sp, start.with_packed(c_star));
  CHECK(e_star < cost(sp, start));

  const DescentResult r = descend(sp, start);
  CHECK(r.converged);
  CHECK((r.q.pack() - c_star).norm() < 1e-6 * (1.0 + c_star.norm()));
  CHECK(std::abs(cost(sp, r.q) - e_star) < 1e-9 * (1.0 + e_star));

  DescentConfig grid_metric;
  grid_metric.metric = ProjectionMetric::GridFrobenius;
  grid_metric.max_iters = 2000;
  grid_metric.grad_tol = 1e-7;
  // The grid fit only sees the sampled band, so its direction may stop being
  // a descent direction for the exact cost; it must still never increase E.
  const DescentResult rg = descend(sp, start, grid_metric);
  CHECK(cost(sp, rg.q) < cost(sp, start));
  CHECK(cost(sp, rg.q) >= e_star - 1e-12);
  for (std::size_t i = 1; i < rg.trace.size(); ++i) CHECK(rg.trace[i].cost <= rg.trace[i - 1].cost);
  CHECK((rg.converged || rg.stop_reason == "projected direction is not a descent direction"));
}

TEST_CASE("zero weighted T0 stops at once") {
  // P11 = 0 and P22 = 0: the direct path and the loop never meet.
  const Mat a = Mat{{-1.0, 0.0}, {0.0, -2.0}};
  const Mat b = Mat{{1.0, 0.0}, {0.0, 1.0}};
  const Mat c = Mat{{0.0, 1.0}, {1.0, 0.0}};
  const ModifiedPlant mp(StateSpace(a, b, c, Mat::Zero(2, 2)), 1, 1, 1, 1);
  const CoprimeFactorization cf = coprime_factorization(mp, GainPair{Mat::Zero(1, 2), Mat::Zero(2, 1)});
  const SynthesisProblem sp = assemble_problem(mp, cf, vacuous(1, 1), StateSpace::identity(1),
                                               StateSpace::identity(1),
                                               FrequencyGrid::logspace(1e-2, 1e2, 9));
  CHECK(h2_norm_sq(sp.T0) < 1e-28);
  const DescentResult r = descend(sp, YoulaParameter(1.0, 2, 1, 1));
  CHECK(r.converged);
  CHECK(r.trace.empty());
  CHECK(r.final_grad_norm == 0.0);
  CHECK(r.q.pack().norm() == 0.0);
}

TEST_CASE("infeasible start") {
  const qtest::FixtureProblem fx = qtest::load_synthesis_fixture("beamsplitter_synthesis.yaml");
  YoulaParameter bad = fx.q0;
  bad.set_coeff(0, 0.2 * Mat::Identity(2, 2));
  CHECK_THROWS_AS(descend(fx.sp, bad, fx.pf.descent), InfeasibleStart);

  const qtest::FixtureProblem strict = qtest::load_synthesis_fixture("infeasible_start.yaml");
  CHECK(strict.pf.descent.constraint_tol == 0.0);
  CHECK_THROWS_AS(descend(strict.sp, strict.q0, strict.pf.descent), InfeasibleStart);
}

TEST_CASE("beamsplitter synthesis") {
  const qtest::FixtureProblem fx = qtest::load_synthesis_fixture("beamsplitter_synthesis.yaml");
  const FrequencyGrid vgrid = verification_grid();
  const double tol = fx.pf.descent.constraint_tol;

  // |1/2 + e^{i2π/3}/2|² on two channels, each weighted by 1/(s+1)², whose
  // squared H2 norm is 1/4.
  const double e0 = 2.0 * std::norm(0.5 + 0.5 * std::polar(1.0, 2.0 * std::numbers::pi / 3.0)) * 0.25;
  CHECK(std::abs(cost(fx.sp, fx.q0) - e0) < 1e-12);
  CHECK(validate_result(fx.sp.mp, fx.sp.cf, fx.sp.cd, fx.q0, vgrid, tol).overall);

  const DescentResult r = descend(fx.sp, fx.q0, fx.pf.descent);
  CHECK(r.converged);
  CHECK(std::abs(r.initial_cost - e0) < 1e-12);
  REQUIRE_FALSE(r.trace.empty());
  double prev = r.initial_cost;
  for (const DescentRecord& rec : r.trace) {
    CHECK(rec.cost <= prev);
    CHECK(rec.constraint_residual <= tol);
    prev = rec.cost;
  }
  const double final_cost = cost(fx.sp, r.q);
  CHECK(final_cost < 1e-10);
  CHECK(std::abs(r.trace.back().cost - final_cost) < 1e-10);
  CHECK(constraint_residual(fx.sp.cd, r.q, vgrid) <= tol);

  // The optimum cancels the direct path: Q(iω) = −1 on the annihilation channel.
  for (double w : {0.0, 0.5, 3.0}) CHECK(std::abs(r.q.response(w)(0, 0) + 1.0) < 1e-4);

  const ValidationVerdict v = validate_result(fx.sp.mp, fx.sp.cf, fx.sp.cd, r.q, vgrid, tol);
  CHECK(v.membership.in_qhat);
  CHECK(v.closed_loop_stable);
  CHECK(v.overall);

  YoulaParameter lossy = r.q;
  lossy.set_offset(scale(*r.q.offset(), 0.9));
  const ValidationVerdict lv = validate_result(fx.sp.mp, fx.sp.cf, fx.sp.cd, lossy, vgrid, tol);
  CHECK_FALSE(lv.membership.residual_ok);
  CHECK_FALSE(lv.overall);
}

TEST_CASE("restoration keeps the iterates feasible") {
  const qtest::FixtureProblem fx = qtest::load_synthesis_fixture("beamsplitter_synthesis.yaml");
  const ConstraintSamples cs = sample_constraint(fx.sp.cd, fx.sp.grid.points());
  DescentConfig with = fx.pf.descent;
  DescentConfig without = with;
  without.correction_period = 0;
  without.constraint_tol = 1e-2;
  with.constraint_tol = 1e-2;

  const DescentResult a = descend(fx.sp, fx.q0, with);
  double drift_with = 0.0;
  for (const DescentRecord& rec : a.trace) drift_with = std::max(drift_with, rec.constraint_residual);

  double drift_without = 0.0;
  try {
    const DescentResult b = descend(fx.sp, fx.q0, without);
    for (const DescentRecord& rec : b.trace) {
      drift_without = std::max(drift_without, rec.constraint_residual);
    }
  } catch (const StalledLineSearch& e) {
    for (const DescentRecord& rec : e.partial().trace) {
      drift_without = std::max(drift_without, rec.constraint_residual);
    }
  }
  MESSAGE("max residual with restoration ", drift_with, ", without ", drift_without);
  CHECK(drift_with <= 1e-2);
  CHECK(drift_without > drift_with);
  CHECK(constraint_residual(cs, a.q) <= 1e-2);
}
