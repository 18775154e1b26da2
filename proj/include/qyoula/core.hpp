#pragma once

// Complex state-space algebra for continuous-time transfer matrices
// Γ(s) = C(sI − A)⁻¹B + D.

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace qyoula {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr cplx kI{0.0, 1.0};

// ---------------------------------------------------------------------------
// Structured matrices
// ---------------------------------------------------------------------------

/// J_r = diag(I_r, −I_r), order 2r.
Mat signature(int half_order);

/// Δ(R1, R2) = [[R1, R2], [conj(R2), conj(R1)]].
Mat doubled_up(const Mat& r1, const Mat& r2);

/// True when `m` has the Δ(·,·) block-conjugate layout within `tol`.
bool is_doubled_up(const Mat& m, double tol);

/// Ordered, finite, strictly increasing set of angular frequencies.
class FrequencyGrid {
 public:
  explicit FrequencyGrid(std::vector<double> points);

  /// `points` log-spaced values over [omega_min, omega_max].
  static FrequencyGrid logspace(double omega_min, double omega_max, int points);

  [[nodiscard]] std::span<const double> points() const { return points_; }
  [[nodiscard]] std::size_t size() const { return points_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const { return points_[i]; }
  [[nodiscard]] double front() const { return points_.front(); }
  [[nodiscard]] double back() const { return points_.back(); }

  /// Union with another grid (duplicates merged).
  [[nodiscard]] FrequencyGrid merged(const FrequencyGrid& other) const;

 private:
  std::vector<double> points_;
};

// ---------------------------------------------------------------------------
// State-space model
// ---------------------------------------------------------------------------

class StateSpace {
 public:
  /// Empty static system (0 inputs, 0 outputs, 0 states).
  StateSpace();
  /// Throws DimensionMismatch unless A is square and B, C, D conform. Rejects
  /// non-finite entries.
  StateSpace(Mat a, Mat b, Mat c, Mat d);

  /// Static gain D (no states).
  static StateSpace gain(const Mat& d);
  static StateSpace identity(int n);
  static StateSpace zero(int outputs, int inputs);

  [[nodiscard]] const Mat& A() const { return a_; }
  [[nodiscard]] const Mat& B() const { return b_; }
  [[nodiscard]] const Mat& C() const { return c_; }
  [[nodiscard]] const Mat& D() const { return d_; }

  [[nodiscard]] int states() const { return static_cast<int>(a_.rows()); }
  [[nodiscard]] int inputs() const { return static_cast<int>(d_.cols()); }
  [[nodiscard]] int outputs() const { return static_cast<int>(d_.rows()); }
  [[nodiscard]] bool is_static() const { return states() == 0; }

  /// Γ(s) at an arbitrary complex point.
  [[nodiscard]] Mat eval(cplx s) const;
  /// Γ(iω).
  [[nodiscard]] Mat response(double omega) const { return eval(cplx{0.0, omega}); }

  /// Subsystem keeping the listed output rows and input columns.
  [[nodiscard]] StateSpace select(std::span<const int> rows, std::span<const int> cols) const;
  /// Contiguous block: outputs [r0, r0+nr), inputs [c0, c0+nc).
  [[nodiscard]] StateSpace block(int r0, int nr, int c0, int nc) const;

 private:
  Mat a_, b_, c_, d_;
};

/// Γ(iω) by an LU solve of (iωI − A) against B. Throws SingularResolvent when
/// the resolvent is numerically singular.
Mat freq_response(const StateSpace& sys, double omega);

/// Responses over a grid.
std::vector<Mat> freq_response(const StateSpace& sys, const FrequencyGrid& grid);

/// Realization (−A*, −C*, B*, D*) of Γ~(s) = Γ(−s̄)*.
StateSpace conjugate_system(const StateSpace& sys);

/// Product g1·g2 (g2 acts first). Throws DimensionMismatch.
StateSpace series(const StateSpace& g1, const StateSpace& g2);
StateSpace add(const StateSpace& g1, const StateSpace& g2);
StateSpace negate(const StateSpace& g);
StateSpace scale(const StateSpace& g, cplx k);
/// Left/right multiplication by constant matrices.
StateSpace premultiply(const Mat& k, const StateSpace& g);
StateSpace postmultiply(const StateSpace& g, const Mat& k);
/// [g1 g2] (shared output).
StateSpace hstack(const StateSpace& g1, const StateSpace& g2);
/// [g1; g2] (shared input).
StateSpace vstack(const StateSpace& g1, const StateSpace& g2);
/// diag(g1, g2).
StateSpace block_diag(const StateSpace& g1, const StateSpace& g2);
/// Γ⁻¹ for invertible feedthrough. Throws FeedthroughSingular.
StateSpace inverse(const StateSpace& g);
/// num·den⁻¹ where [num; den] is realized by `stacked` (the first
/// `num_rows` outputs are num). Shares the state of `stacked`.
StateSpace right_divide_stacked(const StateSpace& stacked, int num_rows);
/// den⁻¹·num where [den, num] is realized by `stacked` (the first `den_cols`
/// inputs belong to den). Shares the state of `stacked`.
StateSpace left_divide_stacked(const StateSpace& stacked, int den_cols);

StateSpace operator+(const StateSpace& a, const StateSpace& b);
StateSpace operator-(const StateSpace& a, const StateSpace& b);
StateSpace operator-(const StateSpace& a);
StateSpace operator*(const StateSpace& a, const StateSpace& b);

/// Lower LFT: P11 + P12·K(I − P22·K)⁻¹·P21, where the plant's last
/// `ctrl.outputs()` inputs and last `ctrl.inputs()` outputs form the loop.
/// State order: plant states then controller states.
StateSpace compose_lft(const StateSpace& plant, const StateSpace& ctrl);

/// Controllable and observable part via orthogonal staircase reductions.
/// Rank decisions use `tol` times the largest singular value of the data.
StateSpace minimal_realization(const StateSpace& sys, double tol = 1e-9);

// ---------------------------------------------------------------------------
// Spectral tests
// ---------------------------------------------------------------------------

Vec eigenvalues(const Mat& a);

/// Every eigenvalue has Re λ < −margin. Empty matrices are Hurwitz.
bool is_hurwitz(const Mat& a, double margin = 1e-9);

/// Largest real part of the spectrum (−inf for empty).
double spectral_abscissa(const Mat& a);

/// min |λ + conj(ν)| over eigenvalue pairs (λ = ν included) exceeds tol.
/// Empty matrices are generic.
bool is_spectrally_generic(const Mat& a, double tol);
/// Same with tol = 1e−8 × spectral radius.
bool is_spectrally_generic(const Mat& a);

// ---------------------------------------------------------------------------
// Matrix equations and norms
// ---------------------------------------------------------------------------

/// Solves A·X + X·B = C through complex Schur forms. Throws Error when
/// the spectra of A and −B intersect.
Mat solve_sylvester(const Mat& a, const Mat& b, const Mat& c);

/// Solves A·P + P·A* + Q = 0.
Mat solve_lyapunov(const Mat& a, const Mat& q);

/// Tr(C·P·C*) with A·P + P·A* + B·B* = 0. Requires Hurwitz A and D = 0.
double h2_norm_sq(const StateSpace& sys);

/// ⟨g1, g2⟩ = (1/2π)∫Tr(g1(iω)*·g2(iω))dω for stable strictly proper systems.
cplx h2_inner(const StateSpace& g1, const StateSpace& g2);

/// Largest singular value of a matrix.
double sigma_max(const Mat& m);

struct HinfNorm {
  double value = 0.0;
  double peak_omega = 0.0;
};

/// sup σ_max(Γ(iω)) by Hamiltonian bisection with a grid warm start.
HinfNorm hinf_norm(const StateSpace& sys, double rel_tol = 1e-6);

// ---------------------------------------------------------------------------
// Frequency quadrature helpers
// ---------------------------------------------------------------------------

/// Nodes and weights on the whole real axis such that
/// Σ wₖ f(ωₖ) ≈ (1/2π)∫f(ω)dω. Composite 5-point Gauss-Legendre: log panels
/// over [omega_min, omega_max] on both half-lines, one panel on
/// [0, omega_min], and the tail through ω = omega_max/u, which keeps
/// integrands decaying like 1/ω² smooth.
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Quadrature axis_quadrature(double omega_min = 1e-5, double omega_max = 1e5,
                           int points_per_decade = 400);

/// Trapezoid weights for a positive grid normalized to approximate
/// (1/2π)∫_{grid span}f(ω)dω.
std::vector<double> trapezoid_weights(const FrequencyGrid& grid);

}  // namespace qyoula
