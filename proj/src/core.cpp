#include "qyoula/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

#include "qyoula/errors.hpp"

namespace qyoula {

namespace {

constexpr double kResolventRcond = 1e-13;

bool all_finite(const Mat& m) {
  return m.size() == 0 || m.allFinite();
}

std::string dims(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Mat block2(const Mat& a, const Mat& b, const Mat& c, const Mat& d) {
  Mat out(a.rows() + c.rows(), a.cols() + b.cols());
  out << a, b, c, d;
  return out;
}

Mat zeros(Eigen::Index r, Eigen::Index c) { return Mat::Zero(r, c); }

Mat vcat(const Mat& a, const Mat& b) {
  Mat out(a.rows() + b.rows(), std::max(a.cols(), b.cols()));
  if (a.cols() != b.cols()) {
    throw DimensionMismatch("vertical concatenation of " + dims(a) + " and " + dims(b));
  }
  out << a, b;
  return out;
}

Mat hcat(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) {
    throw DimensionMismatch("horizontal concatenation of " + dims(a) + " and " + dims(b));
  }
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Mat diag2(const Mat& a, const Mat& b) {
  return block2(a, zeros(a.rows(), b.cols()), zeros(b.rows(), a.cols()), b);
}

// Solve with an invertibility check; `what` names the failing factor.
template <typename E>
Mat checked_inverse(const Mat& m, const char* what) {
  Eigen::FullPivLU<Mat> lu(m);
  if (m.rows() != m.cols() || !lu.isInvertible() || lu.rcond() < 1e-13) {
    throw E(std::string(what) + " is singular");
  }
  return lu.inverse();
}

// Orthogonal staircase: returns the controllable part of (A, B, C).
void controllable_part(Mat& a, Mat& b, Mat& c, double threshold) {
  const Eigen::Index n = a.rows();
  Eigen::Index done = 0;
  Eigen::Index prev = 0;
  Eigen::Index prev_width = 0;
  while (done < n) {
    const Mat g = done == 0 ? Mat(b) : Mat(a.block(done, prev, n - done, prev_width));
    if (g.cols() == 0) break;
    Eigen::JacobiSVD<Mat> svd(g, Eigen::ComputeFullU);
    const auto& sv = svd.singularValues();
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      if (sv(i) > threshold) ++r;
    }
    if (r == 0) break;
    const Mat u = svd.matrixU();
    const Eigen::Index rest = n - done;
    a.bottomRows(rest) = u.adjoint() * a.bottomRows(rest);
    a.rightCols(rest) = a.rightCols(rest) * u;
    b.bottomRows(rest) = u.adjoint() * b.bottomRows(rest);
    c.rightCols(rest) = c.rightCols(rest) * u;
    prev = done;
    prev_width = r;
    done += r;
  }
  a = Mat(a.topLeftCorner(done, done));
  b = Mat(b.topRows(done));
  c = Mat(c.leftCols(done));
}

}  // namespace

// ---------------------------------------------------------------------------

Mat signature(int half_order) {
  Mat j = Mat::Identity(2 * half_order, 2 * half_order);
  j.bottomRightCorner(half_order, half_order) *= -1.0;
  return j;
}

Mat doubled_up(const Mat& r1, const Mat& r2) {
  if (r1.rows() != r2.rows() || r1.cols() != r2.cols()) {
    throw DimensionMismatch("doubled_up blocks " + dims(r1) + " and " + dims(r2));
  }
  return block2(r1, r2, r2.conjugate(), r1.conjugate());
}

bool is_doubled_up(const Mat& m, double tol) {
  if (m.rows() % 2 != 0 || m.cols() % 2 != 0) return false;
  const auto p = m.rows() / 2;
  const auto q = m.cols() / 2;
  const double e1 = (m.bottomRightCorner(p, q) - m.topLeftCorner(p, q).conjugate()).norm();
  const double e2 = (m.bottomLeftCorner(p, q) - m.topRightCorner(p, q).conjugate()).norm();
  return e1 <= tol && e2 <= tol;
}

FrequencyGrid::FrequencyGrid(std::vector<double> points) : points_(std::move(points)) {
  if (points_.empty()) throw Error("frequency grid is empty");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!std::isfinite(points_[i])) throw Error("frequency grid has a non-finite point");
    if (i > 0 && !(points_[i] > points_[i - 1])) {
      throw Error("frequency grid is not strictly increasing");
    }
  }
}

FrequencyGrid FrequencyGrid::logspace(double omega_min, double omega_max, int points) {
  if (!(omega_min > 0.0) || !(omega_max > omega_min) || points < 2) {
    throw Error("logspace needs 0 < omega_min < omega_max and at least 2 points");
  }
  std::vector<double> pts(static_cast<std::size_t>(points));
  const double l0 = std::log10(omega_min);
  const double l1 = std::log10(omega_max);
  for (int k = 0; k < points; ++k) {
    pts[static_cast<std::size_t>(k)] = std::pow(10.0, l0 + (l1 - l0) * k / (points - 1));
  }
  pts.front() = omega_min;
  pts.back() = omega_max;
  return FrequencyGrid(std::move(pts));
}

FrequencyGrid FrequencyGrid::merged(const FrequencyGrid& other) const {
  std::vector<double> all(points_);
  all.insert(all.end(), other.points_.begin(), other.points_.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return FrequencyGrid(std::move(all));
}

// ---------------------------------------------------------------------------

StateSpace::StateSpace() : a_(0, 0), b_(0, 0), c_(0, 0), d_(0, 0) {}

StateSpace::StateSpace(Mat a, Mat b, Mat c, Mat d)
    : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), d_(std::move(d)) {
  const auto n = a_.rows();
  if (a_.cols() != n || b_.rows() != n || c_.cols() != n || d_.rows() != c_.rows() ||
      d_.cols() != b_.cols()) {
    throw DimensionMismatch("state-space blocks A " + dims(a_) + ", B " + dims(b_) + ", C " +
                            dims(c_) + ", D " + dims(d_) + " do not conform");
  }
  if (!all_finite(a_) || !all_finite(b_) || !all_finite(c_) || !all_finite(d_)) {
    throw Error("state-space model has non-finite entries");
  }
}

StateSpace StateSpace::gain(const Mat& d) {
  return {Mat(0, 0), Mat(0, d.cols()), Mat(d.rows(), 0), d};
}

StateSpace StateSpace::identity(int n) { return gain(Mat::Identity(n, n)); }

StateSpace StateSpace::zero(int outputs, int inputs) { return gain(Mat::Zero(outputs, inputs)); }

Mat StateSpace::eval(cplx s) const {
  if (states() == 0) return d_;
  const Mat resolvent = s * Mat::Identity(states(), states()) - a_;
  Eigen::PartialPivLU<Mat> lu(resolvent);
  if (!(lu.rcond() > kResolventRcond)) {
    throw SingularResolvent("(sI - A) is numerically singular at s = " + std::to_string(s.real()) +
                            (s.imag() < 0 ? "" : "+") + std::to_string(s.imag()) + "i");
  }
  return c_ * lu.solve(b_) + d_;
}

StateSpace StateSpace::select(std::span<const int> rows, std::span<const int> cols) const {
  Mat b(states(), static_cast<Eigen::Index>(cols.size()));
  Mat c(static_cast<Eigen::Index>(rows.size()), states());
  Mat d(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] < 0 || cols[j] >= inputs()) throw DimensionMismatch("input index out of range");
    b.col(static_cast<Eigen::Index>(j)) = b_.col(cols[j]);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= outputs()) throw DimensionMismatch("output index out of range");
    c.row(static_cast<Eigen::Index>(i)) = c_.row(rows[i]);
    for (std::size_t j = 0; j < cols.size(); ++j) {
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d_(rows[i], cols[j]);
    }
  }
  return {a_, b, c, d};
}

StateSpace StateSpace::block(int r0, int nr, int c0, int nc) const {
  if (r0 < 0 || c0 < 0 || nr < 0 || nc < 0 || r0 + nr > outputs() || c0 + nc > inputs()) {
    throw DimensionMismatch("block outside the system's input/output range");
  }
  return {a_, b_.middleCols(c0, nc), c_.middleRows(r0, nr), d_.block(r0, c0, nr, nc)};
}

Mat freq_response(const StateSpace& sys, double omega) { return sys.response(omega); }

std::vector<Mat> freq_response(const StateSpace& sys, const FrequencyGrid& grid) {
  std::vector<Mat> out;
  out.reserve(grid.size());
  for (double w : grid.points()) out.push_back(sys.response(w));
  return out;
}

StateSpace conjugate_system(const StateSpace& sys) {
  return {-sys.A().adjoint(), -sys.C().adjoint(), sys.B().adjoint(), sys.D().adjoint()};
}

StateSpace series(const StateSpace& g1, const StateSpace& g2) {
  if (g1.inputs() != g2.outputs()) {
    throw DimensionMismatch("series: g1 has " + std::to_string(g1.inputs()) +
                            " inputs but g2 has " + std::to_string(g2.outputs()) + " outputs");
  }
  const Mat a = block2(g1.A(), g1.B() * g2.C(), zeros(g2.states(), g1.states()), g2.A());
  const Mat b = vcat(g1.B() * g2.D(), g2.B());
  const Mat c = hcat(g1.C(), g1.D() * g2.C());
  return {a, b, c, g1.D() * g2.D()};
}

StateSpace add(const StateSpace& g1, const StateSpace& g2) {
  if (g1.inputs() != g2.inputs() || g1.outputs() != g2.outputs()) {
    throw DimensionMismatch("add: " + dims(g1.D()) + " vs " + dims(g2.D()));
  }
  return {diag2(g1.A(), g2.A()), vcat(g1.B(), g2.B()), hcat(g1.C(), g2.C()), g1.D() + g2.D()};
}

StateSpace negate(const StateSpace& g) { return {g.A(), g.B(), -g.C(), -g.D()}; }

StateSpace scale(const StateSpace& g, cplx k) { return {g.A(), g.B(), k * g.C(), k * g.D()}; }

StateSpace premultiply(const Mat& k, const StateSpace& g) {
  if (k.cols() != g.outputs()) throw DimensionMismatch("premultiply: " + dims(k) + " vs " + dims(g.D()));
  return {g.A(), g.B(), k * g.C(), k * g.D()};
}

StateSpace postmultiply(const StateSpace& g, const Mat& k) {
  if (k.rows() != g.inputs()) throw DimensionMismatch("postmultiply: " + dims(g.D()) + " vs " + dims(k));
  return {g.A(), g.B() * k, g.C(), g.D() * k};
}

StateSpace hstack(const StateSpace& g1, const StateSpace& g2) {
  if (g1.outputs() != g2.outputs()) throw DimensionMismatch("hstack: output counts differ");
  return {diag2(g1.A(), g2.A()), diag2(g1.B(), g2.B()), hcat(g1.C(), g2.C()), hcat(g1.D(), g2.D())};
}

StateSpace vstack(const StateSpace& g1, const StateSpace& g2) {
  if (g1.inputs() != g2.inputs()) throw DimensionMismatch("vstack: input counts differ");
  return {diag2(g1.A(), g2.A()), vcat(g1.B(), g2.B()), diag2(g1.C(), g2.C()), vcat(g1.D(), g2.D())};
}

StateSpace block_diag(const StateSpace& g1, const StateSpace& g2) {
  return {diag2(g1.A(), g2.A()), diag2(g1.B(), g2.B()), diag2(g1.C(), g2.C()), diag2(g1.D(), g2.D())};
}

StateSpace inverse(const StateSpace& g) {
  const Mat dinv = checked_inverse<FeedthroughSingular>(g.D(), "feedthrough of the inverted system");
  return {g.A() - g.B() * dinv * g.C(), g.B() * dinv, -dinv * g.C(), dinv};
}

StateSpace right_divide_stacked(const StateSpace& stacked, int num_rows) {
  const int den_rows = stacked.outputs() - num_rows;
  if (num_rows < 0 || den_rows != stacked.inputs()) {
    throw DimensionMismatch("right_divide_stacked: denominator must be square");
  }
  const Mat c1 = stacked.C().topRows(num_rows);
  const Mat c2 = stacked.C().bottomRows(den_rows);
  const Mat d1 = stacked.D().topRows(num_rows);
  const Mat d2 = stacked.D().bottomRows(den_rows);
  const Mat d2inv = checked_inverse<FeedthroughSingular>(d2, "denominator feedthrough");
  return {stacked.A() - stacked.B() * d2inv * c2, stacked.B() * d2inv, c1 - d1 * d2inv * c2,
          d1 * d2inv};
}

StateSpace left_divide_stacked(const StateSpace& stacked, int den_cols) {
  if (den_cols != stacked.outputs() || den_cols > stacked.inputs()) {
    throw DimensionMismatch("left_divide_stacked: denominator must be square");
  }
  const int num_cols = stacked.inputs() - den_cols;
  const Mat b1 = stacked.B().leftCols(den_cols);
  const Mat b2 = stacked.B().rightCols(num_cols);
  const Mat d1 = stacked.D().leftCols(den_cols);
  const Mat d2 = stacked.D().rightCols(num_cols);
  const Mat d1inv = checked_inverse<FeedthroughSingular>(d1, "denominator feedthrough");
  return {stacked.A() - b1 * d1inv * stacked.C(), b1 * d1inv * d2 - b2, -d1inv * stacked.C(),
          d1inv * d2};
}

StateSpace operator+(const StateSpace& a, const StateSpace& b) { return add(a, b); }
StateSpace operator-(const StateSpace& a, const StateSpace& b) { return add(a, negate(b)); }
StateSpace operator-(const StateSpace& a) { return negate(a); }
StateSpace operator*(const StateSpace& a, const StateSpace& b) { return series(a, b); }

StateSpace compose_lft(const StateSpace& plant, const StateSpace& ctrl) {
  const int nu = ctrl.outputs();
  const int ny = ctrl.inputs();
  const int nw = plant.inputs() - nu;
  const int nz = plant.outputs() - ny;
  if (nw < 0 || nz < 0) throw DimensionMismatch("compose_lft: controller larger than plant loop");

  const Mat& a = plant.A();
  const Mat b1 = plant.B().leftCols(nw);
  const Mat b2 = plant.B().rightCols(nu);
  const Mat c1 = plant.C().topRows(nz);
  const Mat c2 = plant.C().bottomRows(ny);
  const Mat d11 = plant.D().topLeftCorner(nz, nw);
  const Mat d12 = plant.D().topRightCorner(nz, nu);
  const Mat d21 = plant.D().bottomLeftCorner(ny, nw);
  const Mat d22 = plant.D().bottomRightCorner(ny, nu);

  const Mat loop = Mat::Identity(nu, nu) - ctrl.D() * d22;
  const Mat r = checked_inverse<IllPosedInterconnection>(loop, "I - D_K*D22");

  // u = ux*x + uk*xk + uw*w
  const Mat ux = r * ctrl.D() * c2;
  const Mat uk = r * ctrl.C();
  const Mat uw = r * ctrl.D() * d21;
  const Mat yx = c2 + d22 * ux;
  const Mat yk = d22 * uk;
  const Mat yw = d21 + d22 * uw;

  const Mat acl = block2(a + b2 * ux, b2 * uk, ctrl.B() * yx, ctrl.A() + ctrl.B() * yk);
  const Mat bcl = vcat(b1 + b2 * uw, ctrl.B() * yw);
  const Mat ccl = hcat(c1 + d12 * ux, d12 * uk);
  return {acl, bcl, ccl, d11 + d12 * uw};
}

StateSpace minimal_realization(const StateSpace& sys, double tol) {
  if (!(tol > 0.0)) throw Error("minimal_realization: tol must be positive");
  if (sys.is_static()) return sys;
  const double scale = std::max({sigma_max(sys.A()), sigma_max(sys.B()), sigma_max(sys.C())});
  const double threshold = tol * std::max(scale, std::numeric_limits<double>::min());

  Mat a = sys.A();
  Mat b = sys.B();
  Mat c = sys.C();
  controllable_part(a, b, c, threshold);

  // Observability by duality on (A*, C*, B*).
  Mat at = a.adjoint();
  Mat bt = c.adjoint();
  Mat ct = b.adjoint();
  controllable_part(at, bt, ct, threshold);
  return {at.adjoint(), ct.adjoint(), bt.adjoint(), sys.D()};
}

// ---------------------------------------------------------------------------

Vec eigenvalues(const Mat& a) {
  if (a.rows() == 0) return Vec(0);
  Eigen::ComplexEigenSolver<Mat> es(a, false);
  if (es.info() != Eigen::Success) throw Error("eigenvalue computation did not converge");
  return es.eigenvalues();
}

double spectral_abscissa(const Mat& a) {
  const Vec ev = eigenvalues(a);
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < ev.size(); ++i) best = std::max(best, ev(i).real());
  return best;
}

bool is_hurwitz(const Mat& a, double margin) {
  if (a.rows() != a.cols()) throw DimensionMismatch("is_hurwitz: A must be square");
  return spectral_abscissa(a) < -margin;
}

bool is_spectrally_generic(const Mat& a, double tol) {
  if (a.rows() != a.cols()) throw DimensionMismatch("is_spectrally_generic: A must be square");
  const Vec ev = eigenvalues(a);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    for (Eigen::Index j = i; j < ev.size(); ++j) {
      if (std::abs(ev(i) + std::conj(ev(j))) <= tol) return false;
    }
  }
  return true;
}

bool is_spectrally_generic(const Mat& a) {
  const Vec ev = eigenvalues(a);
  double radius = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) radius = std::max(radius, std::abs(ev(i)));
  return is_spectrally_generic(a, 1e-8 * radius);
}

// ---------------------------------------------------------------------------

Mat solve_sylvester(const Mat& a, const Mat& b, const Mat& c) {
  const auto n = a.rows();
  const auto m = b.rows();
  if (a.cols() != n || b.cols() != m || c.rows() != n || c.cols() != m) {
    throw DimensionMismatch("solve_sylvester: nonconforming operands");
  }
  if (n == 0 || m == 0) return Mat::Zero(n, m);
  Eigen::ComplexSchur<Mat> sa(a);
  Eigen::ComplexSchur<Mat> sb(b);
  const Mat& t = sa.matrixT();
  const Mat& u = sa.matrixU();
  const Mat& s = sb.matrixT();
  const Mat& v = sb.matrixU();

  const Mat f = u.adjoint() * c * v;
  Mat y = Mat::Zero(n, m);
  const double scale = std::max(t.cwiseAbs().maxCoeff(), s.cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < m; ++j) {
    Vec rhs = f.col(j);
    for (Eigen::Index k = 0; k < j; ++k) rhs -= s(k, j) * y.col(k);
    Mat lhs = t;
    lhs.diagonal().array() += s(j, j);
    if (lhs.diagonal().cwiseAbs().minCoeff() <= 1e-14 * std::max(scale, 1.0)) {
      throw Error("Sylvester equation is singular (spectra of A and -B intersect)");
    }
    y.col(j) = lhs.triangularView<Eigen::Upper>().solve(rhs);
  }
  return u * y * v.adjoint();
}

Mat solve_lyapunov(const Mat& a, const Mat& q) {
  const Mat p = solve_sylvester(a, a.adjoint(), -q);
  return 0.5 * (p + p.adjoint());
}

namespace {

void require_stable_strictly_proper(const StateSpace& sys, const char* what) {
  const double scale = std::max(1.0, sys.B().norm() * sys.C().norm());
  if (sys.D().size() > 0 && sys.D().norm() > 1e-12 * scale) {
    throw NotStrictlyProper(std::string(what) + ": feedthrough D is nonzero");
  }
  if (!is_hurwitz(sys.A(), 0.0)) throw NotStable(std::string(what) + ": A is not Hurwitz");
}

}  // namespace

double h2_norm_sq(const StateSpace& sys) {
  require_stable_strictly_proper(sys, "h2_norm_sq");
  if (sys.is_static()) return 0.0;
  const Mat p = solve_lyapunov(sys.A(), sys.B() * sys.B().adjoint());
  return std::max(0.0, (sys.C() * p * sys.C().adjoint()).trace().real());
}

cplx h2_inner(const StateSpace& g1, const StateSpace& g2) {
  if (g1.inputs() != g2.inputs() || g1.outputs() != g2.outputs()) {
    throw DimensionMismatch("h2_inner: shapes differ");
  }
  require_stable_strictly_proper(g1, "h2_inner");
  require_stable_strictly_proper(g2, "h2_inner");
  if (g1.is_static() || g2.is_static()) return {0.0, 0.0};
  // A1*·Y + Y·A2 + C1*·C2 = 0
  const Mat y = solve_sylvester(g1.A().adjoint(), g2.A(), -g1.C().adjoint() * g2.C());
  return (g1.B().adjoint() * y * g2.B()).trace();
}

double sigma_max(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

// ---------------------------------------------------------------------------
// H∞ norm
// ---------------------------------------------------------------------------

namespace {

// Hamiltonian whose imaginary-axis eigenvalues iω mark the frequencies where
// γ is a singular value of Γ(iω). Requires γ > σ_max(D).
Mat hamiltonian(const StateSpace& sys, double gamma) {
  const auto m = sys.inputs();
  const Mat r = gamma * gamma * Mat::Identity(m, m) - sys.D().adjoint() * sys.D();
  const Mat rinv = r.inverse();
  const Mat& a = sys.A();
  const Mat& b = sys.B();
  const Mat& c = sys.C();
  const Mat& d = sys.D();
  const Mat a11 = a + b * rinv * d.adjoint() * c;
  const Mat a12 = b * rinv * b.adjoint();
  const Mat a21 = -c.adjoint() * (Mat::Identity(d.rows(), d.rows()) + d * rinv * d.adjoint()) * c;
  return block2(a11, a12, a21, -a11.adjoint());
}

struct Probe {
  double sigma = 0.0;
  double omega = 0.0;
};

Probe best_on(const StateSpace& sys, const std::vector<double>& omegas) {
  Probe best{-1.0, 0.0};
  for (double w : omegas) {
    const double s = sigma_max(sys.response(w));
    if (s > best.sigma) best = {s, w};
  }
  return best;
}

}  // namespace

HinfNorm hinf_norm(const StateSpace& sys, double rel_tol) {
  if (!(rel_tol > 0.0)) throw Error("hinf_norm: rel_tol must be positive");
  if (sys.is_static()) return {sigma_max(sys.D()), 0.0};
  if (!is_hurwitz(sys.A(), 0.0)) throw NotStable("hinf_norm: A is not Hurwitz");

  // Warm start: log grid on both half-lines scaled to the spectrum, plus the
  // imaginary parts of the poles.
  const Vec ev = eigenvalues(sys.A());
  double lo_mag = std::numeric_limits<double>::infinity();
  double hi_mag = 0.0;
  std::vector<double> omegas{0.0};
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double mag = std::abs(ev(i));
    lo_mag = std::min(lo_mag, mag);
    hi_mag = std::max(hi_mag, mag);
    omegas.push_back(ev(i).imag());
  }
  lo_mag = std::max(lo_mag, 1e-12);
  const FrequencyGrid warm = FrequencyGrid::logspace(lo_mag * 1e-2, std::max(hi_mag, lo_mag) * 1e2, 200);
  for (double w : warm.points()) {
    omegas.push_back(w);
    omegas.push_back(-w);
  }
  Probe best = best_on(sys, omegas);
  const double d_norm = sigma_max(sys.D());
  if (d_norm > best.sigma) best = {d_norm, std::numeric_limits<double>::infinity()};
  if (best.sigma <= 0.0) return {0.0, 0.0};

  // Level-set iteration: at γ slightly above the best attained value, the
  // imaginary Hamiltonian eigenvalues bracket intervals where σ_max ≥ γ.
  for (int iter = 0; iter < 100; ++iter) {
    const double gamma = best.sigma * (1.0 + 2.0 * rel_tol);
    const Mat h = hamiltonian(sys, gamma);
    const Vec hev = eigenvalues(h);
    const double hscale = std::max(1.0, h.cwiseAbs().maxCoeff());
    std::vector<double> crossings;
    for (Eigen::Index i = 0; i < hev.size(); ++i) {
      if (std::abs(hev(i).real()) <= 1e-6 * hscale) crossings.push_back(hev(i).imag());
    }
    if (crossings.empty()) break;
    std::sort(crossings.begin(), crossings.end());
    std::vector<double> probes(crossings);
    for (std::size_t k = 0; k + 1 < crossings.size(); ++k) {
      probes.push_back(0.5 * (crossings[k] + crossings[k + 1]));
    }
    const Probe next = best_on(sys, probes);
    if (next.sigma < gamma * (1.0 - 1e-12)) break;
    best = next;
  }

  // Golden-section polish around the peak; the level set only brackets it
  // to rel_tol.
  if (std::isfinite(best.omega)) {
    const double h = 0.05 * std::max(std::abs(best.omega), lo_mag * 1e-2);
    double a = best.omega - h;
    double b = best.omega + h;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    auto sigma_at = [&sys](double w) { return sigma_max(sys.response(w)); };
    double x1 = b - g * (b - a);
    double x2 = a + g * (b - a);
    double f1 = sigma_at(x1);
    double f2 = sigma_at(x2);
    for (int k = 0; k < 80; ++k) {
      if (f1 > f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - g * (b - a);
        f1 = sigma_at(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + g * (b - a);
        f2 = sigma_at(x2);
      }
    }
    if (f1 > best.sigma) best = {f1, x1};
    if (f2 > best.sigma) best = {f2, x2};
  }
  return {best.sigma, best.omega};
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kGaussPoints = 5;

// Golub-Welsch nodes and weights on [-1, 1].
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_legendre(int n) {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double beta = k / std::sqrt(4.0 * k * k - 1.0);
    jac(k, k - 1) = beta;
    jac(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  return {es.eigenvalues(), 2.0 * es.eigenvectors().row(0).transpose().array().square().matrix()};
}

}  // namespace

Quadrature axis_quadrature(double omega_min, double omega_max, int points_per_decade) {
  if (!(omega_min > 0.0 && omega_max > omega_min) || points_per_decade < 1) {
    throw Error("axis_quadrature: need 0 < omega_min < omega_max and points_per_decade >= 1");
  }
  const auto [x, wx] = gauss_legendre(kGaussPoints);
  const double span = std::log10(omega_max / omega_min);
  const int panels = std::max(1, static_cast<int>(std::ceil(span * points_per_decade / kGaussPoints)));

  std::vector<std::pair<double, double>> half;
  auto add_panel = [&](auto map) {
    for (int k = 0; k < kGaussPoints; ++k) {
      const auto [w, jac] = map(x(k));
      half.emplace_back(w, wx(k) * jac);
    }
  };
  add_panel([&](double t) { return std::pair{0.5 * omega_min * (t + 1.0), 0.5 * omega_min}; });
  for (int p = 0; p < panels; ++p) {
    const double lo = std::log(omega_min) + std::log(omega_max / omega_min) * p / panels;
    const double hi = std::log(omega_min) + std::log(omega_max / omega_min) * (p + 1) / panels;
    add_panel([&](double t) {
      const double w = std::exp(0.5 * (lo + hi) + 0.5 * (hi - lo) * t);
      return std::pair{w, 0.5 * (hi - lo) * w};
    });
  }
  // ω = omega_max / u, u in (0, 1]
  add_panel([&](double t) {
    const double u = 0.5 * (t + 1.0);
    return std::pair{omega_max / u, 0.5 * omega_max / (u * u)};
  });

  Quadrature q;
  const double scale = 1.0 / (2.0 * std::numbers::pi);
  for (auto it = half.rbegin(); it != half.rend(); ++it) {
    q.nodes.push_back(-it->first);
    q.weights.push_back(scale * it->second);
  }
  for (const auto& [w, wt] : half) {
    q.nodes.push_back(w);
    q.weights.push_back(scale * wt);
  }
  return q;
}

std::vector<double> trapezoid_weights(const FrequencyGrid& grid) {
  const auto pts = grid.points();
  std::vector<double> w(pts.size(), 0.0);
  if (pts.size() == 1) {
    w[0] = 1.0;
    return w;
  }
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double h = 0.5 * (pts[k + 1] - pts[k]) / (2.0 * std::numbers::pi);
    w[k] += h;
    w[k + 1] += h;
  }
  return w;
}

}  // namespace qyoula
