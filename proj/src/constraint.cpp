#include "qyoula/constraint.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qyoula/errors.hpp"
#include "qyoula/physreal.hpp"

namespace qyoula {

namespace {

Mat sign_block(int mu) {
  const Mat j = signature(mu);
  Mat d = Mat::Zero(4 * mu, 4 * mu);
  d.topLeftCorner(2 * mu, 2 * mu) = j;
  d.bottomRightCorner(2 * mu, 2 * mu) = -j;
  return d;
}

double hermitian_defect(const StateSpace& sys, const FrequencyGrid& grid) {
  double worst = 0.0;
  for (double w : grid.points()) {
    const Mat g = sys.response(w);
    worst = std::max(worst, (g - g.adjoint()).norm() / (1.0 + g.norm()));
  }
  return worst;
}

// Decoded real coordinate: coefficient index k, entry (row, col), and the
// unit (1 or i) multiplying the scalar basis function.
struct Coordinate {
  int k, row, col;
  cplx unit;
};

Coordinate decode(int j, int rows, int cols) {
  const int part = j % 2;
  const int flat = j / 2;
  const int per = rows * cols;
  const int k = flat / per;
  const int within = flat % per;
  return {k, within % rows, within / rows, part == 0 ? cplx{1.0, 0.0} : kI};
}

double max_abs_eig(const Eigen::SelfAdjointEigenSolver<RMat>& es) {
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

ConstraintData build_constraint_data(const CoprimeFactorization& cf, int mu) {
  if (mu < 0 || cf.ctrl_inputs != 2 * mu || cf.meas_outputs != 2 * mu) {
    throw DimensionMismatch("constraint data needs a loop of width 2*mu = " +
                            std::to_string(2 * mu));
  }
  const int w = 2 * mu;
  const StateSpace mn = cf.right.block(0, 2 * w, 0, w);  // [M; N]
  const StateSpace uv = cf.right.block(0, 2 * w, w, w);  // [U; V]
  const Mat s = sign_block(mu);
  ConstraintData cd;
  cd.mu = mu;
  cd.Phi = series(conjugate_system(uv), premultiply(s, uv));
  cd.Lambda = series(conjugate_system(mn), premultiply(s, uv));
  cd.Pi = series(conjugate_system(mn), premultiply(s, mn));
  const FrequencyGrid grid = verification_grid();
  if (hermitian_defect(cd.Phi, grid) > 1e-8 || hermitian_defect(cd.Pi, grid) > 1e-8) {
    throw Error("constraint data: Phi or Pi is not Hermitian on the imaginary axis");
  }
  return cd;
}

YoulaParameter::YoulaParameter(double beta, int order, int rows, int cols)
    : YoulaParameter(beta, std::vector<Mat>(static_cast<std::size_t>(std::max(order, 0) + 1),
                                            Mat::Zero(rows, cols))) {
  if (order < 0) throw DimensionMismatch("Youla basis order must be non-negative");
}

YoulaParameter::YoulaParameter(double beta, std::vector<Mat> coeffs)
    : beta_(beta), coeffs_(std::move(coeffs)) {
  if (!(beta_ > 0.0) || !std::isfinite(beta_)) throw Error("Youla basis pole beta must be > 0");
  if (coeffs_.empty()) throw DimensionMismatch("Youla parameter needs at least Q0");
  rows_ = static_cast<int>(coeffs_.front().rows());
  cols_ = static_cast<int>(coeffs_.front().cols());
  for (const Mat& c : coeffs_) {
    if (c.rows() != rows_ || c.cols() != cols_) {
      throw DimensionMismatch("Youla coefficients must share one shape");
    }
  }
}

void YoulaParameter::set_coeff(int k, const Mat& value) {
  if (value.rows() != rows_ || value.cols() != cols_) {
    throw DimensionMismatch("Youla coefficient has the wrong shape");
  }
  coeffs_.at(static_cast<std::size_t>(k)) = value;
}

void YoulaParameter::set_offset(StateSpace offset) {
  if (offset.outputs() != rows_ || offset.inputs() != cols_) {
    throw DimensionMismatch("Youla offset has the wrong shape");
  }
  offset_ = std::move(offset);
}

RVec YoulaParameter::pack() const {
  RVec x(real_dim());
  int j = 0;
  for (const Mat& c : coeffs_) {
    for (Eigen::Index col = 0; col < c.cols(); ++col) {
      for (Eigen::Index row = 0; row < c.rows(); ++row) {
        x(j++) = c(row, col).real();
        x(j++) = c(row, col).imag();
      }
    }
  }
  return x;
}

YoulaParameter YoulaParameter::with_packed(const RVec& x) const {
  if (x.size() != real_dim()) throw DimensionMismatch("packed coefficient vector has wrong length");
  YoulaParameter out = *this;
  int j = 0;
  for (Mat& c : out.coeffs_) {
    for (Eigen::Index col = 0; col < c.cols(); ++col) {
      for (Eigen::Index row = 0; row < c.rows(); ++row) {
        c(row, col) = cplx{x(j), x(j + 1)};
        j += 2;
      }
    }
  }
  return out;
}

cplx YoulaParameter::basis_value(int k, cplx s) const {
  return std::pow(s + beta_, -k);
}

Mat YoulaParameter::basis_element(int j, cplx s) const {
  const Coordinate c = decode(j, rows_, cols_);
  Mat e = Mat::Zero(rows_, cols_);
  e(c.row, c.col) = c.unit * basis_value(c.k, s);
  return e;
}

Mat YoulaParameter::eval(cplx s) const {
  Mat q = coeffs_.front();
  const cplx base = 1.0 / (s + beta_);
  cplx factor = 1.0;
  for (std::size_t k = 1; k < coeffs_.size(); ++k) {
    factor *= base;
    q += factor * coeffs_[k];
  }
  if (offset_) q += offset_->eval(s);
  return q;
}

StateSpace YoulaParameter::realization() const {
  const int order_k = order();
  StateSpace chain;
  if (order_k == 0) {
    chain = StateSpace::gain(coeffs_.front());
  } else {
    const int n = order_k * cols_;
    Mat a = -beta_ * Mat::Identity(n, n);
    for (int k = 1; k < order_k; ++k) {
      a.block(k * cols_, (k - 1) * cols_, cols_, cols_).setIdentity();
    }
    Mat b = Mat::Zero(n, cols_);
    b.topRows(cols_).setIdentity();
    Mat c(rows_, n);
    for (int k = 1; k <= order_k; ++k) c.middleCols((k - 1) * cols_, cols_) = coeffs_[static_cast<std::size_t>(k)];
    chain = StateSpace(a, b, c, coeffs_.front());
  }
  if (offset_) return add(chain, *offset_);
  return chain;
}

ConstraintSamples sample_constraint(const ConstraintData& cd, std::span<const double> omegas) {
  ConstraintSamples cs;
  cs.omegas.assign(omegas.begin(), omegas.end());
  for (double w : omegas) {
    cs.Phi.push_back(cd.Phi.response(w));
    cs.Lambda.push_back(cd.Lambda.response(w));
    cs.Pi.push_back(cd.Pi.response(w));
  }
  return cs;
}

Mat constraint_value(const Mat& phi, const Mat& lambda, const Mat& pi, const Mat& q) {
  const Mat ql = q.adjoint() * lambda;
  return phi + ql + ql.adjoint() + q.adjoint() * pi * q;
}

double constraint_residual(const ConstraintSamples& cs, const YoulaParameter& q) {
  double worst = 0.0;
  for (std::size_t i = 0; i < cs.omegas.size(); ++i) {
    const Mat v = constraint_value(cs.Phi[i], cs.Lambda[i], cs.Pi[i], q.response(cs.omegas[i]));
    worst = std::max(worst, v.norm());
  }
  return worst;
}

double constraint_residual(const ConstraintData& cd, const YoulaParameter& q,
                           const FrequencyGrid& grid) {
  return constraint_residual(sample_constraint(cd, grid.points()), q);
}

bool feedthrough_ok(const CoprimeFactorization& cf, const YoulaParameter& q, double tol) {
  const Mat q_inf = q.realization().D();
  return std::abs(youla_feedthrough_det(cf, q_inf)) > tol;
}

MembershipVerdict membership_qhat(const CoprimeFactorization& cf, const ConstraintData& cd,
                                  const YoulaParameter& q, const FrequencyGrid& grid, double tol) {
  MembershipVerdict v;
  const StateSpace qs = q.realization();
  v.stable = is_hurwitz(qs.A(), 0.0);
  if (!v.stable) {
    v.failure = "Q is not stable";
    return v;
  }
  v.feedthrough_ok = feedthrough_ok(cf, q);
  if (!v.feedthrough_ok) {
    v.failure = "det (V + N Q)(inf) = 0";
    return v;
  }
  v.residual = constraint_residual(cd, q, grid);
  v.residual_ok = v.residual <= tol;
  const StateSpace k = controller_from_parameter(cf, qs);
  v.spectrally_generic_ok = is_spectrally_generic(minimal_realization(k).A());
  v.dmu_defect = feedthrough_defect(k.D(), cd.mu);
  v.dmu_ok = v.dmu_defect <= tol;
  v.in_q = v.residual_ok;
  v.in_qhat = v.in_q && v.spectrally_generic_ok && v.dmu_ok;
  if (!v.residual_ok) {
    v.failure = "constraint residual " + std::to_string(v.residual) + " exceeds tolerance";
  } else if (!v.spectrally_generic_ok) {
    v.failure = "controller is not spectrally generic";
  } else if (!v.dmu_ok) {
    v.failure = "K(inf) is not of the form Delta(S, 0) with unitary S";
  }
  return v;
}

RVec pack_hermitian(const Mat& h) {
  const Eigen::Index p = h.rows();
  RVec out(p * p);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < p; ++i) {
    out(r++) = h(i, i).real();
    for (Eigen::Index j = i + 1; j < p; ++j) {
      out(r++) = h(i, j).real();
      out(r++) = h(i, j).imag();
    }
  }
  return out;
}

namespace {

RMat numerical_null_space(const RVec& sv, const RMat& v) {
  const double cut = 1e-11 * sv(0);
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > cut) ++rank;
  return v.rightCols(v.cols() - rank);
}

}  // namespace

TangentSubspace::TangentSubspace(const ConstraintSamples& samples, const YoulaParameter& base,
                                 bool with_null_basis)
    : base_(base), omegas_(samples.omegas) {
  const int rows = base.rows();
  const int cols = base.cols();
  const int d = base.real_dim();
  const Eigen::Index p = cols;
  if (!samples.Lambda.empty() &&
      (samples.Lambda.front().rows() != rows || samples.Lambda.front().cols() != cols)) {
    throw DimensionMismatch("tangent subspace: parameter shape does not match constraint data");
  }
  const Eigen::Index eq = p * p;
  c_ = RMat::Zero(static_cast<Eigen::Index>(omegas_.size()) * eq, d);
  r_ = RVec::Zero(c_.rows());
  for (std::size_t i = 0; i < omegas_.size(); ++i) {
    const cplx s{0.0, omegas_[i]};
    const Mat q = base.eval(s);
    const Mat w = samples.Lambda[i] + samples.Pi[i] * q;
    w_.push_back(w);
    const Eigen::Index r0 = static_cast<Eigen::Index>(i) * eq;
    r_.segment(r0, eq) = pack_hermitian(constraint_value(samples.Phi[i], samples.Lambda[i],
                                                         samples.Pi[i], q));
    for (int j = 0; j < d; ++j) {
      const Coordinate c = decode(j, rows, cols);
      const cplx v = c.unit * base.basis_value(c.k, s);
      Mat m = Mat::Zero(p, p);
      m.row(c.col) += std::conj(v) * w.row(c.row);
      m.col(c.col) += v * w.row(c.row).adjoint();
      c_.block(r0, j, eq, 1) = pack_hermitian(m);
    }
  }
  if (!with_null_basis) return;
  if (c_.rows() == 0 || c_.norm() == 0.0) {
    null_ = RMat::Identity(d, d);
    return;
  }
  Eigen::BDCSVD<RMat> svd(c_, Eigen::ComputeFullV);
  null_ = numerical_null_space(svd.singularValues(), svd.matrixV());
  // BDCSVD occasionally returns accurate singular values with a wrong V.
  if (null_.cols() > 0 && (c_ * null_).norm() > 1e-9 * svd.singularValues()(0)) {
    Eigen::JacobiSVD<RMat> jsvd(c_, Eigen::ComputeFullV);
    null_ = numerical_null_space(jsvd.singularValues(), jsvd.matrixV());
  }
}

Mat TangentSubspace::map(std::size_t i, const Mat& x) const {
  const Mat xw = x.adjoint() * w_.at(i);
  return xw + xw.adjoint();
}

double TangentSubspace::map_residual(const RVec& x) const {
  YoulaParameter shape(base_.beta(), base_.order(), base_.rows(), base_.cols());
  const YoulaParameter xp = shape.with_packed(x);
  double worst = 0.0;
  for (std::size_t i = 0; i < omegas_.size(); ++i) {
    worst = std::max(worst, map(i, xp.response(omegas_[i])).norm());
  }
  return worst;
}

ConstrainedSolution solve_in_subspace(const RMat& metric, const RVec& g, const RMat& null_basis) {
  ConstrainedSolution out;
  const Eigen::Index d = metric.rows();
  if (metric.cols() != d || g.size() != d || null_basis.rows() != d) {
    throw DimensionMismatch("solve_in_subspace: shapes do not conform");
  }
  out.x = RVec::Zero(d);
  if (null_basis.cols() == 0) return out;
  const RMat reduced = null_basis.transpose() * metric * null_basis;
  const RVec rhs = null_basis.transpose() * g;
  Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (reduced + reduced.transpose()));
  const RVec& lam = es.eigenvalues();
  const double top = max_abs_eig(es);
  const double cut = 1e-12 * top;
  RVec inv = RVec::Zero(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) > cut) {
      inv(i) = 1.0 / lam(i);
    } else {
      out.rank_deficient = true;
    }
  }
  const RVec y = es.eigenvectors() * inv.asDiagonal() * (es.eigenvectors().transpose() * rhs);
  out.x = null_basis * y;
  return out;
}

RMat grid_gram(const YoulaParameter& shape, std::span<const double> omegas) {
  const int d = shape.real_dim();
  RMat m = RMat::Zero(d, d);
  std::vector<Coordinate> coords;
  for (int j = 0; j < d; ++j) coords.push_back(decode(j, shape.rows(), shape.cols()));
  std::vector<cplx> vals(static_cast<std::size_t>(d));
  for (double w : omegas) {
    const cplx s{0.0, w};
    for (int j = 0; j < d; ++j) {
      const auto& c = coords[static_cast<std::size_t>(j)];
      vals[static_cast<std::size_t>(j)] = c.unit * shape.basis_value(c.k, s);
    }
    for (int j = 0; j < d; ++j) {
      const auto& cj = coords[static_cast<std::size_t>(j)];
      for (int l = 0; l < d; ++l) {
        const auto& cl = coords[static_cast<std::size_t>(l)];
        if (cj.row != cl.row || cj.col != cl.col) continue;
        m(j, l) += (std::conj(vals[static_cast<std::size_t>(j)]) * vals[static_cast<std::size_t>(l)]).real();
      }
    }
  }
  return m;
}

RVec grid_pairing(const YoulaParameter& shape, std::span<const double> omegas,
                  const std::vector<Mat>& samples) {
  if (samples.size() != omegas.size()) {
    throw DimensionMismatch("grid_pairing: one sample per frequency required");
  }
  const int d = shape.real_dim();
  RVec g = RVec::Zero(d);
  for (std::size_t i = 0; i < omegas.size(); ++i) {
    const cplx s{0.0, omegas[i]};
    const Mat& gs = samples[i];
    if (gs.rows() != shape.rows() || gs.cols() != shape.cols()) {
      throw DimensionMismatch("grid_pairing: sample shape differs from the parameter");
    }
    for (int j = 0; j < d; ++j) {
      const Coordinate c = decode(j, shape.rows(), shape.cols());
      const cplx v = c.unit * shape.basis_value(c.k, s);
      g(j) += (std::conj(v) * gs(c.row, c.col)).real();
    }
  }
  return g;
}

Projection project_direction(const TangentSubspace& ts, const std::vector<Mat>& samples) {
  const YoulaParameter& base = ts.base();
  if (base.order() < 1) throw DimensionMismatch("project_direction: basis order must be >= 1");
  if (ts.omegas().empty()) throw DimensionMismatch("project_direction: empty grid");
  const YoulaParameter shape(base.beta(), base.order(), base.rows(), base.cols());
  const RMat m = grid_gram(shape, ts.omegas());
  const RVec g = grid_pairing(shape, ts.omegas(), samples);
  const ConstrainedSolution sol = solve_in_subspace(m, g, ts.null_basis());
  return {shape.with_packed(sol.x), sol.x, sol.rank_deficient};
}

YoulaParameter restore_constraint(const ConstraintSamples& cs, const YoulaParameter& q,
                                  int max_steps, double target) {
  YoulaParameter cur = q;
  double res = constraint_residual(cs, cur);
  for (int step = 0; step < max_steps && res > target; ++step) {
    const TangentSubspace ts(cs, cur, false);
    Eigen::CompleteOrthogonalDecomposition<RMat> cod(ts.constraint_matrix());
    cod.setThreshold(1e-11);
    const RVec delta = -cod.solve(ts.residual_vector());
    const YoulaParameter trial = cur.with_packed(cur.pack() + delta);
    const double res_trial = constraint_residual(cs, trial);
    if (!(res_trial < res)) break;
    cur = trial;
    res = res_trial;
  }
  return cur;
}

}  // namespace qyoula
