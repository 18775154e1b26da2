#include <doctest.h>

#include <cmath>

#include "qyoula/constraint.hpp"
#include "qyoula/errors.hpp"
#include "qyoula/physreal.hpp"
#include "random_problems.hpp"

using namespace qyoula;
using qtest::Rng;

namespace {

using qtest::trivial_factors;

YoulaParameter static_parameter(const Mat& q0) { return YoulaParameter(1.0, {q0}); }

YoulaParameter offset_parameter(const StateSpace& q, int order = 0, double beta = 1.0) {
  YoulaParameter p(beta, order, q.outputs(), q.inputs());
  p.set_offset(q);
  return p;
}

ConstraintData constant_data(const Mat& phi, const Mat& lambda, const Mat& pi, int mu) {
  return {StateSpace::gain(phi), StateSpace::gain(lambda), StateSpace::gain(pi), mu};
}

SlhModel cavity_slh(double kappa, double detuning) {
  return SlhModel::make(Mat::Identity(1, 1), Mat::Constant(1, 1, detuning), Mat::Zero(1, 1),
                        Mat::Constant(1, 1, std::sqrt(kappa)), Mat::Zero(1, 1));
}

}  // namespace

TEST_CASE("Youla parameter basis and packing") {
  Rng rng(31);
  std::vector<Mat> coeffs;
  for (int k = 0; k <= 3; ++k) coeffs.push_back(rng.matrix(2, 3));
  const YoulaParameter q(1.5, coeffs);
  CHECK(q.order() == 3);
  CHECK(q.real_dim() == 2 * 4 * 6);
  const RVec x = q.pack();
  CHECK(x(0) == coeffs[0](0, 0).real());
  CHECK(x(1) == coeffs[0](0, 0).imag());
  CHECK(x(2) == coeffs[0](1, 0).real());
  const YoulaParameter r = q.with_packed(x);
  for (int k = 0; k <= 3; ++k) CHECK((r.coeff(k) - coeffs[static_cast<std::size_t>(k)]).norm() == 0.0);

  const StateSpace real = q.realization();
  CHECK(real.states() == 3 * 3);
  for (double w : {0.0, 0.3, 4.0}) {
    const cplx s{0.0, w};
    Mat ref = coeffs[0];
    for (int k = 1; k <= 3; ++k) ref += coeffs[static_cast<std::size_t>(k)] / std::pow(s + 1.5, k);
    CHECK((q.response(w) - ref).norm() < 1e-12);
    CHECK((real.response(w) - ref).norm() < 1e-12);
    Mat sum = Mat::Zero(2, 3);
    for (int j = 0; j < q.real_dim(); ++j) sum += x(j) * q.basis_element(j, s);
    CHECK((sum - ref).norm() < 1e-12);
  }
  CHECK_THROWS_AS(YoulaParameter(0.0, 1, 1, 1), Error);

  YoulaParameter with_offset(1.0, 1, 1, 1);
  const StateSpace off(Mat::Constant(1, 1, -2.0), Mat::Constant(1, 1, 1.0),
                       Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 0.5));
  with_offset.set_offset(off);
  CHECK(with_offset.real_dim() == 4);
  CHECK(std::abs(with_offset.response(1.0)(0, 0) - off.response(1.0)(0, 0)) < 1e-15);
  CHECK(with_offset.realization().states() == 2);
  CHECK_THROWS_AS(with_offset.set_offset(StateSpace::zero(2, 1)), DimensionMismatch);
}

TEST_CASE("constraint data for the trivial factorization") {
  Rng rng(32);
  const CoprimeFactorization cf = trivial_factors(rng, 1);
  const ConstraintData cd = build_constraint_data(cf, 1);
  const Mat j = signature(1);
  for (double w : {0.0, 1.0, 10.0}) {
    CHECK((cd.Phi.response(w) + j).norm() < 1e-14);
    CHECK(cd.Lambda.response(w).norm() < 1e-14);
    CHECK((cd.Pi.response(w) - j).norm() < 1e-14);
  }
  const FrequencyGrid grid = verification_grid();
  CHECK(std::abs(constraint_residual(cd, static_parameter(Mat::Zero(2, 2)), grid) - j.norm()) <
        1e-14);
  CHECK(constraint_residual(cd, static_parameter(Mat::Identity(2, 2)), grid) < 1e-14);
  CHECK_THROWS_AS(build_constraint_data(cf, 2), DimensionMismatch);
}

TEST_CASE("J-unitary loop block has vanishing Pi") {
  // Loop block is the cavity (s−1)/(s+1)·I2, stable, so zero gains work.
  const StateSpace cav = slh_to_statespace(cavity_slh(2.0, 0.0));
  Mat b = Mat::Zero(2, 4);
  Mat c = Mat::Zero(4, 2);
  b.rightCols(2) = cav.B();
  c.bottomRows(2) = cav.C();
  b.leftCols(2) = cav.B();
  c.topRows(2) = cav.C();
  Mat d = Mat::Zero(4, 4);
  d.bottomRightCorner(2, 2) = cav.D();
  d.topRightCorner(2, 2) = Mat::Identity(2, 2);
  const ModifiedPlant mp(StateSpace(cav.A(), b, c, d), 2, 2, 2, 2);
  const CoprimeFactorization cf =
      coprime_factorization(mp, stabilizing_gains(mp.A(), mp.B2(), mp.C2(), GainPolicy::zero()));
  const ConstraintData cd = build_constraint_data(cf, 1);
  for (double w : verification_grid().points()) CHECK(cd.Pi.response(w).norm() < 1e-8);
}

TEST_CASE("Phi and Pi are Hermitian on the axis") {
  Rng rng(33);
  for (int trial = 0; trial < 5; ++trial) {
    const ModifiedPlant mp = qtest::random_modified_plant(rng, rng.integer(1, 5), 2, 2, 2);
    const CoprimeFactorization cf =
        coprime_factorization(mp, stabilizing_gains(mp.A(), mp.B2(), mp.C2()));
    const ConstraintData cd = build_constraint_data(cf, 1);
    for (int i = 0; i < 5; ++i) {
      const double w = rng.uniform(-20.0, 20.0);
      const Mat phi = cd.Phi.response(w);
      const Mat pi = cd.Pi.response(w);
      CHECK((phi - phi.adjoint()).norm() < 1e-10 * std::max(1.0, phi.norm()));
      CHECK((pi - pi.adjoint()).norm() < 1e-10 * std::max(1.0, pi.norm()));
    }
  }
}

TEST_CASE("feedthrough condition") {
  Rng rng(34);
  const CoprimeFactorization cf = trivial_factors(rng, 1);
  CHECK(feedthrough_ok(cf, static_parameter(Mat::Zero(2, 2))));
  // N(∞) = 0, so any static Q passes.
  CHECK(feedthrough_ok(cf, static_parameter(rng.matrix(2, 2))));
}

TEST_CASE("membership in the realizable parameter set") {
  Rng rng(35);
  const CoprimeFactorization cf = trivial_factors(rng, 1);
  const ConstraintData cd = build_constraint_data(cf, 1);
  const FrequencyGrid grid = verification_grid();

  const Mat s = Mat::Constant(1, 1, std::polar(1.0, 0.7));
  const MembershipVerdict ok =
      membership_qhat(cf, cd, static_parameter(doubled_up(s, Mat::Zero(1, 1))), grid);
  CHECK(ok.stable);
  CHECK(ok.feedthrough_ok);
  CHECK(ok.residual_ok);
  CHECK(ok.spectrally_generic_ok);
  CHECK(ok.dmu_ok);
  CHECK(ok.in_q);
  CHECK(ok.in_qhat);
  CHECK(ok.failure.empty());

  const Mat j = signature(1);
  const ConstraintData doubled = constant_data(-j, Mat::Zero(2, 2), 2.0 * j, 1);
  const MembershipVerdict bad =
      membership_qhat(cf, doubled, static_parameter(Mat::Identity(2, 2)), grid);
  CHECK_FALSE(bad.residual_ok);
  CHECK(std::abs(bad.residual - j.norm()) < 1e-12);
  CHECK_FALSE(bad.in_q);
  CHECK_FALSE(bad.failure.empty());

  const MembershipVerdict shrunk =
      membership_qhat(cf, cd, static_parameter(doubled_up(0.9 * s, Mat::Zero(1, 1))), grid);
  CHECK_FALSE(shrunk.dmu_ok);
  CHECK_FALSE(shrunk.in_qhat);

  YoulaParameter unstable(1.0, 0, 2, 2);
  unstable.set_offset(StateSpace(Mat::Identity(1, 1), Mat::Ones(1, 2), Mat::Ones(2, 1),
                                 Mat::Identity(2, 2)));
  const MembershipVerdict us = membership_qhat(cf, cd, unstable, grid);
  CHECK_FALSE(us.stable);
  CHECK_FALSE(us.in_qhat);
}

TEST_CASE("parameter of a realizable controller satisfies the constraint") {
  Rng rng(36);
  const FrequencyGrid grid = verification_grid();
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const StateSpace plant = slh_to_statespace(rng.slh(rng.integer(1, 2), 2, 0.0));
    const ModifiedPlant mp = modify_plant(plant, PartitionSpec{1, 1, 1, 1});
    const CoprimeFactorization cf =
        coprime_factorization(mp, stabilizing_gains(mp.A(), mp.B2(), mp.C2()));
    const ConstraintData cd = build_constraint_data(cf, 1);
    const StateSpace k =
        slh_to_statespace(cavity_slh(rng.uniform(0.5, 3.0), rng.uniform(-2.0, 2.0)));
    StateSpace q;
    try {
      q = parameter_from_controller(cf, k);
    } catch (const NotInYoulaRange&) {
      continue;
    }
    ++checked;
    CHECK(constraint_residual(cd, offset_parameter(q), grid) < 1e-6);
    CHECK(membership_qhat(cf, cd, offset_parameter(q), grid).in_qhat);
  }
  CHECK(checked >= 10);
}

TEST_CASE("tangent subspace, projection and restoration") {
  Rng rng(37);
  const CoprimeFactorization cf = trivial_factors(rng, 1);
  const ConstraintData cd = build_constraint_data(cf, 1);
  const FrequencyGrid grid = FrequencyGrid::logspace(1e-2, 1e2, 25);
  const ConstraintSamples cs = sample_constraint(cd, grid.points());

  // Lossless base point inside the basis span: Δ(e^{iθ}, 0)·(s−1)/(s+1).
  const Mat u = doubled_up(Mat::Constant(1, 1, std::polar(1.0, 0.4)), Mat::Zero(1, 1));
  const YoulaParameter base(1.0, {u, -2.0 * u, Mat::Zero(2, 2)});
  CHECK(constraint_residual(cs, base) < 1e-14);
  const TangentSubspace ts(cs, base);
  CHECK(ts.constraint_matrix().rows() == static_cast<Eigen::Index>(grid.size()) * 4);
  CHECK(ts.residual_vector().norm() < 1e-13);
  const RMat& nb = ts.null_basis();
  REQUIRE(nb.cols() > 0);
  CHECK((nb.transpose() * nb - RMat::Identity(nb.cols(), nb.cols())).norm() < 1e-10);
  for (Eigen::Index c = 0; c < nb.cols(); ++c) CHECK(ts.map_residual(nb.col(c)) < 1e-9);

  // Map output is Hermitian.
  const Mat x = rng.matrix(2, 2);
  const Mat mapped = ts.map(3, x);
  CHECK((mapped - mapped.adjoint()).norm() < 1e-13);

  std::vector<Mat> samples;
  for (std::size_t i = 0; i < grid.size(); ++i) samples.push_back(rng.matrix(2, 2));
  const Projection p = project_direction(ts, samples);
  CHECK(ts.map_residual(p.coeffs) < 1e-8);

  // Idempotency: projecting the projection returns it.
  std::vector<Mat> again;
  for (double w : grid.points()) again.push_back(p.X.response(w));
  const Projection pp = project_direction(ts, again);
  CHECK((pp.coeffs - p.coeffs).norm() < 1e-8 * std::max(1.0, p.coeffs.norm()));

  // Orthogonality against the feasible directions.
  for (int i = 0; i < 5; ++i) {
    RVec r(nb.cols());
    for (Eigen::Index k = 0; k < r.size(); ++k) r(k) = rng.normal();
    const YoulaParameter y = base.with_packed(nb * r);
    double pairing = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      pairing += (y.response(grid[k]).adjoint() * (samples[k] - p.X.response(grid[k])))
                     .trace()
                     .real();
    }
    CHECK(std::abs(pairing) < 1e-8);
  }

  // Gauss–Newton restoration after a step along the tangent.
  const YoulaParameter moved = base.with_packed(base.pack() + 0.05 * nb.col(0));
  const double before = constraint_residual(cs, moved);
  const YoulaParameter fixed = restore_constraint(cs, moved, 5);
  CHECK(constraint_residual(cs, fixed) < std::max(1e-10, 1e-3 * before));
}

TEST_CASE("vacuous constraint reduces projection to a least-squares fit") {
  Rng rng(38);
  const ConstraintData cd =
      constant_data(Mat::Zero(1, 1), Mat::Zero(1, 1), Mat::Zero(1, 1), 0);
  const FrequencyGrid grid = FrequencyGrid::logspace(1e-2, 1e2, 15);
  const ConstraintSamples cs = sample_constraint(cd, grid.points());
  const YoulaParameter shape(2.0, 3, 1, 1);
  const TangentSubspace ts(cs, shape);
  CHECK(ts.null_basis().cols() == shape.real_dim());

  std::vector<Mat> samples;
  for (std::size_t i = 0; i < grid.size(); ++i) samples.push_back(rng.matrix(1, 1));
  const Projection p = project_direction(ts, samples);

  // Independent fit: stacked real least squares over the basis values.
  const Eigen::Index n = static_cast<Eigen::Index>(grid.size());
  RMat a(2 * n, shape.real_dim());
  RVec rhs(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const cplx s{0.0, grid[static_cast<std::size_t>(i)]};
    for (int j = 0; j < shape.real_dim(); ++j) {
      const cplx v = shape.basis_element(j, s)(0, 0);
      a(2 * i, j) = v.real();
      a(2 * i + 1, j) = v.imag();
    }
    rhs(2 * i) = samples[static_cast<std::size_t>(i)](0, 0).real();
    rhs(2 * i + 1) = samples[static_cast<std::size_t>(i)](0, 0).imag();
  }
  const RVec ls = a.colPivHouseholderQr().solve(rhs);
  CHECK((p.coeffs - ls).norm() < 1e-8 * std::max(1.0, ls.norm()));
}

TEST_CASE("constrained quadratic solve") {
  RMat m(3, 3);
  m << 4, 1, 0, 1, 3, 0, 0, 0, 2;
  RVec g(3);
  g << 1, 2, 3;
  RMat nb = RMat::Zero(3, 2);
  nb(0, 0) = 1.0;
  nb(2, 1) = 1.0;
  const ConstrainedSolution sol = solve_in_subspace(m, g, nb);
  CHECK(std::abs(sol.x(0) - 0.25) < 1e-14);
  CHECK(sol.x(1) == 0.0);
  CHECK(std::abs(sol.x(2) - 1.5) < 1e-14);
  CHECK_FALSE(sol.rank_deficient);
}
