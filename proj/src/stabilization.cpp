#include "qyoula/stabilization.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>

#include "qyoula/errors.hpp"

namespace qyoula {

namespace {

std::string fmt(cplx z) {
  std::ostringstream os;
  os.precision(6);
  os << z.real() << (z.imag() < 0 ? "-" : "+") << std::abs(z.imag()) << "i";
  return os.str();
}

std::vector<int> iota_from(int start, int count) {
  std::vector<int> v(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = start + i;
  return v;
}

void append(std::vector<int>& dst, const std::vector<int>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

// Column/row order taking (a, b, a#, b#) to (a, a#, b, b#).
std::vector<int> regroup_order(int na, int nb) {
  std::vector<int> order;
  append(order, iota_from(0, na));
  append(order, iota_from(na + nb, na));
  append(order, iota_from(na, nb));
  append(order, iota_from(2 * na + nb, nb));
  return order;
}

std::vector<int> inverse_order(const std::vector<int>& order) {
  std::vector<int> inv(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inv[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
  return inv;
}

// Decision for the eigenvalue sitting at the bottom of the Schur form:
// either a new location or "keep".
using Chooser = std::function<std::optional<cplx>(cplx lambda, bool controllable)>;

// Swaps diagonal entries k and k+1 of the upper-triangular T.
void swap_adjacent(Mat& t, Mat& z, Mat& bt, Eigen::Index k) {
  const cplx a = t(k, k);
  const cplx c = t(k + 1, k + 1);
  const cplx x = t(k, k + 1);
  Eigen::Vector2cd v(x, c - a);
  const double nv = v.norm();
  if (nv == 0.0) return;
  v /= nv;
  Eigen::Matrix2cd g;
  g << v(0), -std::conj(v(1)), v(1), std::conj(v(0));
  t.middleRows(k, 2) = g.adjoint() * t.middleRows(k, 2);
  t.middleCols(k, 2) = t.middleCols(k, 2) * g;
  t(k + 1, k) = 0.0;
  z.middleCols(k, 2) = z.middleCols(k, 2) * g;
  bt.middleRows(k, 2) = g.adjoint() * bt.middleRows(k, 2);
}

// Varga-style Schur placement: deflate one eigenvalue at a time from the
// bottom of the Schur form, relocate it by a rank-one feedback, lock it at
// the top.
Mat schur_place(const Mat& a, const Mat& b, const Chooser& choose) {
  const Eigen::Index n = a.rows();
  Mat f = Mat::Zero(b.cols(), n);
  if (n == 0) return f;
  Eigen::ComplexSchur<Mat> schur(a);
  if (schur.info() != Eigen::Success) throw PlacementFailed("Schur decomposition failed");
  Mat t = schur.matrixT();
  Mat z = schur.matrixU();
  Mat bt = z.adjoint() * b;
  const double btol = 1e-10 * std::max(1.0, b.norm());
  for (Eigen::Index p = 0; p < n; ++p) {
    const Eigen::Index k = n - 1;
    const cplx lambda = t(k, k);
    const bool controllable = bt.row(k).norm() > btol;
    const std::optional<cplx> target = choose(lambda, controllable);
    if (target && *target != lambda) {
      if (!controllable) {
        throw PlacementFailed("eigenvalue " + fmt(lambda) + " is uncontrollable and cannot move");
      }
      const Mat brow = bt.row(k);
      const Mat g = (*target - lambda) * brow.adjoint() / brow.squaredNorm();
      t.col(k) += bt * g;
      t(k, k) = *target;
      f += g * z.col(k).adjoint();
    }
    for (Eigen::Index j = k - 1; j >= p; --j) swap_adjacent(t, z, bt, j);
  }
  return f;
}

cplx reflected(cplx lambda) { return {-std::max(std::abs(lambda.real()), 1.0), lambda.imag()}; }

Chooser reflect_chooser(double margin) {
  return [margin](cplx lambda, bool) -> std::optional<cplx> {
    if (lambda.real() < -margin) return std::nullopt;
    return reflected(lambda);
  };
}

Chooser list_chooser(std::vector<cplx> targets) {
  auto pool = std::make_shared<std::vector<cplx>>(std::move(targets));
  return [pool](cplx lambda, bool controllable) -> std::optional<cplx> {
    if (pool->empty()) throw PlacementFailed("target list exhausted");
    auto it = pool->begin();
    if (!controllable) {
      // An uncontrollable eigenvalue can only stay; consume the nearest target.
      it = std::min_element(pool->begin(), pool->end(), [lambda](cplx x, cplx y) {
        return std::abs(x - lambda) < std::abs(y - lambda);
      });
      if (std::abs(*it - lambda) > 1e-8 * std::max(1.0, std::abs(lambda))) {
        throw PlacementFailed("eigenvalue " + fmt(lambda) + " is uncontrollable and not in the target list");
      }
      pool->erase(it);
      return std::nullopt;
    }
    const cplx target = *it;
    pool->erase(it);
    return target;
  };
}

std::vector<cplx> conj_all(const std::vector<cplx>& v) {
  std::vector<cplx> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](cplx z) { return std::conj(z); });
  return out;
}

std::vector<cplx> fallback_targets(Eigen::Index n) {
  std::vector<cplx> t;
  for (Eigen::Index i = 1; i <= n; ++i) t.emplace_back(-static_cast<double>(i), 0.0);
  return t;
}

Mat feedback_for(const Mat& a, const Mat& b, const GainPolicy& policy, bool observer,
                 double margin) {
  const Eigen::Index n = a.rows();
  if (policy.kind == GainPolicy::Kind::Assign) {
    std::vector<cplx> targets =
        observer && !policy.observer_targets.empty() ? policy.observer_targets : policy.targets;
    if (static_cast<Eigen::Index>(targets.size()) != n) {
      throw DimensionMismatch("gain policy needs " + std::to_string(n) + " target eigenvalues, got " +
                              std::to_string(targets.size()));
    }
    if (observer) targets = conj_all(targets);
    Mat f = schur_place(a, b, list_chooser(targets));
    if (!is_hurwitz(a + b * f, margin)) {
      throw PlacementFailed("assigned spectrum is not Hurwitz");
    }
    return f;
  }
  Mat f = schur_place(a, b, reflect_chooser(margin));
  if (is_hurwitz(a + b * f, margin)) return f;
  f = schur_place(a, b, list_chooser(fallback_targets(n)));
  if (!is_hurwitz(a + b * f, margin)) throw PlacementFailed("could not stabilize after fallback");
  return f;
}

std::optional<cplx> pbh_failure(const Mat& a, const Mat& b, double tol) {
  const Eigen::Index n = a.rows();
  if (n == 0) return std::nullopt;
  const Vec eig = eigenvalues(a);
  const double scale = std::max(1.0, std::max(a.norm(), b.norm()));
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    const cplx lambda = eig(i);
    if (lambda.real() < -tol) continue;
    Mat pencil(n, n + b.cols());
    pencil << lambda * Mat::Identity(n, n) - a, b;
    Eigen::JacobiSVD<Mat> svd(pencil);
    if (svd.singularValues()(n - 1) <= tol * scale) return lambda;
  }
  return std::nullopt;
}

}  // namespace

void PartitionSpec::validate() const {
  if (n_r < 0 || n_u < 0 || n_z < 0 || n_y < 0) {
    throw DimensionMismatch("partition counts must be non-negative");
  }
  if (n_u != n_y) {
    throw DimensionMismatch("the loop must be square: n_u = " + std::to_string(n_u) +
                            ", n_y = " + std::to_string(n_y));
  }
  if (n_r < n_y) {
    throw Error("physical realizability needs n_r >= n_y (n_r = " + std::to_string(n_r) +
                ", n_y = " + std::to_string(n_y) + ")");
  }
}

ModifiedPlant::ModifiedPlant(StateSpace full, int exo_inputs, int ctrl_inputs, int perf_outputs,
                             int meas_outputs)
    : full_(std::move(full)),
      exo_in_(exo_inputs),
      ctrl_in_(ctrl_inputs),
      perf_out_(perf_outputs),
      meas_out_(meas_outputs) {
  if (exo_in_ < 0 || ctrl_in_ < 0 || perf_out_ < 0 || meas_out_ < 0 ||
      full_.inputs() != exo_in_ + ctrl_in_ || full_.outputs() != perf_out_ + meas_out_) {
    throw DimensionMismatch("modified plant partition does not match the system (" +
                            std::to_string(full_.outputs()) + "x" + std::to_string(full_.inputs()) +
                            ")");
  }
}

ModifiedPlant modify_plant(const StateSpace& plant, const PartitionSpec& spec) {
  spec.validate();
  const int in = 2 * (spec.n_r + spec.n_u);
  const int out = 2 * (spec.n_z + spec.n_y);
  if (plant.inputs() != in || plant.outputs() != out) {
    throw DimensionMismatch("plant is " + std::to_string(plant.outputs()) + "x" +
                            std::to_string(plant.inputs()) + ", partition expects " +
                            std::to_string(out) + "x" + std::to_string(in));
  }
  const auto cols = regroup_order(spec.n_r, spec.n_u);
  const auto rows = regroup_order(spec.n_z, spec.n_y);
  return {plant.select(rows, cols), 2 * spec.n_r, 2 * spec.n_u, 2 * spec.n_z, 2 * spec.n_y};
}

StateSpace restore_plant(const ModifiedPlant& mp, const PartitionSpec& spec) {
  if (mp.exo_inputs() != 2 * spec.n_r || mp.ctrl_inputs() != 2 * spec.n_u ||
      mp.perf_outputs() != 2 * spec.n_z || mp.meas_outputs() != 2 * spec.n_y) {
    throw DimensionMismatch("restore_plant: partition does not match the modified plant");
  }
  const auto cols = inverse_order(regroup_order(spec.n_r, spec.n_u));
  const auto rows = inverse_order(regroup_order(spec.n_z, spec.n_y));
  return mp.full().select(rows, cols);
}

StateSpace extract_p22(const ModifiedPlant& mp) { return mp.p22(); }

ModifiedPlant with_p22(const ModifiedPlant& mp, const StateSpace& p22) {
  if (p22.inputs() != mp.ctrl_inputs() || p22.outputs() != mp.meas_outputs() ||
      p22.states() != mp.states()) {
    throw DimensionMismatch("with_p22: loop block does not conform");
  }
  if ((p22.A() - mp.A()).norm() > 0.0) {
    throw DimensionMismatch("with_p22: loop block must share the plant state matrix");
  }
  Mat b = mp.full().B();
  Mat c = mp.full().C();
  Mat d = mp.full().D();
  b.rightCols(mp.ctrl_inputs()) = p22.B();
  c.bottomRows(mp.meas_outputs()) = p22.C();
  d.bottomRightCorner(mp.meas_outputs(), mp.ctrl_inputs()) = p22.D();
  return {StateSpace(mp.A(), b, c, d), mp.exo_inputs(), mp.ctrl_inputs(), mp.perf_outputs(),
          mp.meas_outputs()};
}

std::optional<cplx> uncontrollable_unstable_mode(const Mat& a, const Mat& b, double tol) {
  if (b.rows() != a.rows()) throw DimensionMismatch("PBH test: B rows must match A");
  return pbh_failure(a, b, tol);
}

std::optional<cplx> unobservable_unstable_mode(const Mat& a, const Mat& c, double tol) {
  if (c.cols() != a.cols()) throw DimensionMismatch("PBH test: C columns must match A");
  const auto mode = pbh_failure(a.adjoint(), c.adjoint(), tol);
  if (mode) return std::conj(*mode);
  return std::nullopt;
}

bool pbh_stabilizable(const Mat& a, const Mat& b, double tol) {
  return !uncontrollable_unstable_mode(a, b, tol).has_value();
}

bool pbh_detectable(const Mat& a, const Mat& c, double tol) {
  return !unobservable_unstable_mode(a, c, tol).has_value();
}

Mat place_eigenvalues(const Mat& a, const Mat& b, const std::vector<cplx>& targets) {
  if (a.rows() != a.cols() || b.rows() != a.rows()) {
    throw DimensionMismatch("place_eigenvalues: A must be square and B must have A's rows");
  }
  if (static_cast<Eigen::Index>(targets.size()) != a.rows()) {
    throw DimensionMismatch("place_eigenvalues: one target per state required");
  }
  return schur_place(a, b, list_chooser(targets));
}

GainPair stabilizing_gains(const Mat& a, const Mat& b2, const Mat& c2, const GainPolicy& policy,
                           double margin) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || b2.rows() != n || c2.cols() != n) {
    throw DimensionMismatch("stabilizing_gains: A, B2, C2 do not conform");
  }
  GainPair g{Mat::Zero(b2.cols(), n), Mat::Zero(n, c2.rows())};
  if (policy.kind == GainPolicy::Kind::Zero) {
    if (!is_hurwitz(a, margin)) {
      throw PlacementFailed("zero gain policy requires a Hurwitz state matrix");
    }
    return g;
  }
  if (const auto mode = uncontrollable_unstable_mode(a, b2)) {
    throw NotStabilizable("(A, B2) is not stabilizable: mode " + fmt(*mode) +
                          " fails the PBH test");
  }
  if (const auto mode = unobservable_unstable_mode(a, c2)) {
    throw NotDetectable("(C2, A) is not detectable: mode " + fmt(*mode) + " fails the PBH test");
  }
  g.F = feedback_for(a, b2, policy, false, margin);
  g.L = feedback_for(a.adjoint(), c2.adjoint(), policy, true, margin).adjoint();
  return g;
}

FrequencyGrid verification_grid() {
  const FrequencyGrid log = FrequencyGrid::logspace(1e-3, 1e3, 129);
  std::vector<double> pts{0.0};
  pts.insert(pts.end(), log.points().begin(), log.points().end());
  return FrequencyGrid(std::move(pts));
}

CoprimeFactorization coprime_factorization(const ModifiedPlant& mp, const GainPair& gains,
                                           const FrequencyGrid& grid, double tol) {
  const int n = mp.states();
  const int nu = mp.ctrl_inputs();
  const int ny = mp.meas_outputs();
  if (gains.F.rows() != nu || gains.F.cols() != n || gains.L.rows() != n || gains.L.cols() != ny) {
    throw DimensionMismatch("coprime_factorization: gain shapes do not match the plant");
  }
  if (nu != ny) throw DimensionMismatch("coprime_factorization: loop must be square");
  const Mat a = mp.A();
  const Mat b2 = mp.B2();
  const Mat c2 = mp.C2();
  const Mat d22 = mp.D22();
  const Mat& f = gains.F;
  const Mat& l = gains.L;
  const Mat af = a + b2 * f;
  const Mat al = a + l * c2;
  if (!is_hurwitz(af, 0.0)) throw FactorUnstable("A + B2 F is not Hurwitz");
  if (!is_hurwitz(al, 0.0)) throw FactorUnstable("A + L C2 is not Hurwitz");

  Mat rb(n, nu + ny), rc(nu + ny, n), rd = Mat::Zero(nu + ny, nu + ny);
  rb << b2, -l;
  rc << f, c2 + d22 * f;
  rd.topLeftCorner(nu, nu).setIdentity();
  rd.bottomLeftCorner(ny, nu) = d22;
  rd.bottomRightCorner(ny, ny).setIdentity();

  Mat lb(n, nu + ny), lc(nu + ny, n), ld = Mat::Zero(nu + ny, nu + ny);
  lb << -(b2 + l * d22), l;
  lc << f, c2;
  ld.topLeftCorner(nu, nu).setIdentity();
  ld.bottomLeftCorner(ny, nu) = -d22;
  ld.bottomRightCorner(ny, ny).setIdentity();

  CoprimeFactorization cf;
  cf.gains = gains;
  cf.ctrl_inputs = nu;
  cf.meas_outputs = ny;
  cf.right = StateSpace(af, rb, rc, rd);
  cf.left = StateSpace(al, lb, lc, ld);
  cf.M = cf.right.block(0, nu, 0, nu);
  cf.U = cf.right.block(0, nu, nu, ny);
  cf.N = cf.right.block(nu, ny, 0, nu);
  cf.V = cf.right.block(nu, ny, nu, ny);
  cf.Vhat = cf.left.block(0, nu, 0, nu);
  cf.Uhat = negate(cf.left.block(0, nu, nu, ny));
  cf.Nhat = negate(cf.left.block(nu, ny, 0, nu));
  cf.Mhat = cf.left.block(nu, ny, nu, ny);

  const double bez = bezout_residual(cf, grid);
  if (bez > tol) {
    throw BezoutResidualTooLarge("Bezout residual " + std::to_string(bez) + " exceeds " +
                                 std::to_string(tol));
  }
  const double fac = factorization_residual(cf, mp.p22(), grid);
  if (fac > tol) {
    throw BezoutResidualTooLarge("factorization residual " + std::to_string(fac) + " exceeds " +
                                 std::to_string(tol));
  }
  return cf;
}

double bezout_residual(const CoprimeFactorization& cf, const FrequencyGrid& grid) {
  const Eigen::Index k = cf.right.outputs();
  double worst = 0.0;
  for (double w : grid.points()) {
    const Mat prod = cf.left.response(w) * cf.right.response(w);
    worst = std::max(worst, (prod - Mat::Identity(k, k)).norm());
  }
  return worst;
}

double factorization_residual(const CoprimeFactorization& cf, const StateSpace& p22,
                              const FrequencyGrid& grid) {
  double worst = 0.0;
  for (double w : grid.points()) {
    Mat p;
    try {
      p = p22.response(w);
    } catch (const SingularResolvent&) {
      continue;  // plant pole on the grid; the factors remain checked by Bezout
    }
    const Mat m = cf.M.response(w);
    const Mat mh = cf.Mhat.response(w);
    Eigen::FullPivLU<Mat> lu_m(m), lu_mh(mh);
    if (!lu_m.isInvertible() || !lu_mh.isInvertible()) continue;
    const double scale = 1.0 + p.norm();
    const Mat right = cf.N.response(w) * lu_m.inverse();
    const Mat left = lu_mh.solve(cf.Nhat.response(w));
    worst = std::max(worst, (right - p).norm() / scale);
    worst = std::max(worst, (left - p).norm() / scale);
  }
  return worst;
}

cplx youla_feedthrough_det(const CoprimeFactorization& cf, const Mat& q_infinity) {
  return (cf.V.D() + cf.N.D() * q_infinity).determinant();
}

namespace {

void require_parameter_shape(const CoprimeFactorization& cf, const StateSpace& q) {
  if (q.outputs() != cf.ctrl_inputs || q.inputs() != cf.meas_outputs) {
    throw DimensionMismatch("Youla parameter must be " + std::to_string(cf.ctrl_inputs) + "x" +
                            std::to_string(cf.meas_outputs));
  }
  if (!is_hurwitz(q.A(), 0.0)) throw NotStable("Youla parameter is not stable");
  const Mat den = cf.V.D() + cf.N.D() * q.D();
  Eigen::JacobiSVD<Mat> svd(den);
  const auto& s = svd.singularValues();
  if (s.size() > 0 && s(s.size() - 1) <= 1e-12 * std::max(1.0, s(0))) {
    throw FeedthroughSingular("V(inf) + N(inf) Q(inf) is singular: interconnection is ill-posed");
  }
}

}  // namespace

StateSpace controller_from_parameter(const CoprimeFactorization& cf, const StateSpace& q) {
  require_parameter_shape(cf, q);
  const StateSpace stacked = series(cf.right, vstack(q, StateSpace::identity(cf.meas_outputs)));
  return right_divide_stacked(stacked, cf.ctrl_inputs);
}

StateSpace controller_from_parameter_left(const CoprimeFactorization& cf, const StateSpace& q) {
  require_parameter_shape(cf, q);
  const int nu = cf.ctrl_inputs;
  const int ny = cf.meas_outputs;
  Mat s = Mat::Identity(nu + ny, nu + ny);
  s.bottomRightCorner(ny, ny) *= -1.0;
  const StateSpace w = premultiply(s, postmultiply(cf.left, s));
  const StateSpace stacked = series(hstack(StateSpace::identity(nu), q), w);
  return left_divide_stacked(stacked, nu);
}

StateSpace parameter_from_controller(const CoprimeFactorization& cf, const StateSpace& k,
                                     double tol) {
  const int nu = cf.ctrl_inputs;
  const int ny = cf.meas_outputs;
  if (k.outputs() != nu || k.inputs() != ny) {
    throw DimensionMismatch("controller must be " + std::to_string(nu) + "x" + std::to_string(ny));
  }
  Mat swap = Mat::Zero(nu + ny, nu + ny);
  swap.topRightCorner(ny, ny).setIdentity();
  swap.bottomLeftCorner(nu, nu).setIdentity();
  const StateSpace nv_mu = premultiply(swap, cf.right);  // [N V; M U]
  const StateSpace z = series(hstack(negate(k), StateSpace::identity(nu)), nv_mu);
  StateSpace q;
  try {
    q = negate(left_divide_stacked(z, nu));
  } catch (const FeedthroughSingular&) {
    throw IllPosedInterconnection("I - K(inf) D22 is singular");
  }
  q = minimal_realization(q, tol);
  if (!is_hurwitz(q.A(), 0.0)) {
    throw NotInYoulaRange("controller does not stabilize the plant: Q has unstable poles");
  }
  return q;
}

ClosedLoopTriple closed_loop_triple(const ModifiedPlant& mp, const CoprimeFactorization& cf) {
  const int n = mp.states();
  const Mat& f = cf.gains.F;
  const Mat& l = cf.gains.L;
  const Mat af = mp.A() + mp.B2() * f;
  const Mat al = mp.A() + l * mp.C2();
  const Mat cf_out = mp.C1() + mp.D12() * f;
  const Mat bl_in = mp.B1() + l * mp.D21();

  Mat a0 = Mat::Zero(2 * n, 2 * n);
  a0.topLeftCorner(n, n) = af;
  a0.topRightCorner(n, n) = -mp.B2() * f;
  a0.bottomRightCorner(n, n) = al;
  Mat b0(2 * n, mp.exo_inputs());
  b0 << mp.B1(), bl_in;
  Mat c0(mp.perf_outputs(), 2 * n);
  c0 << cf_out, -mp.D12() * f;

  ClosedLoopTriple t;
  t.T0 = StateSpace(a0, b0, c0, mp.D11());
  t.T1 = StateSpace(af, mp.B2(), cf_out, mp.D12());
  t.T2 = StateSpace(al, bl_in, mp.C2(), mp.D21());
  return t;
}

StateSpace affine_closed_loop(const ClosedLoopTriple& t, const StateSpace& q) {
  return t.T0 + t.T1 * q * t.T2;
}

}  // namespace qyoula
