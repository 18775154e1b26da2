#pragma once

// Seeded random instances and small helpers shared by unit and acceptance
// tests.

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <algorithm>
#include <vector>

#include "qyoula/constraint.hpp"
#include "qyoula/core.hpp"
#include "qyoula/physreal.hpp"
#include "qyoula/stabilization.hpp"

namespace qtest {

using qyoula::cplx;
using qyoula::Mat;
using qyoula::StateSpace;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double normal() { return normal_(gen_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
  cplx complex() { return {normal(), normal()}; }

  Mat matrix(Eigen::Index rows, Eigen::Index cols) {
    Mat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = complex() / std::sqrt(2.0);
    return m;
  }

  Mat unitary(Eigen::Index n) {
    Eigen::HouseholderQR<Mat> qr(matrix(n, n));
    return qr.householderQ() * Mat::Identity(n, n);
  }

  Mat hermitian(Eigen::Index n) {
    const Mat m = matrix(n, n);
    return (m + m.adjoint()) / 2.0;
  }

  /// Hurwitz with spectral abscissa in [-2, -0.2].
  Mat stable_matrix(Eigen::Index n) {
    if (n == 0) return Mat(0, 0);
    Mat a = matrix(n, n);
    const double shift = qyoula::spectral_abscissa(a) + uniform(0.2, 2.0);
    a -= shift * Mat::Identity(n, n);
    return a;
  }

  StateSpace stable_system(int states, int outputs, int inputs, bool strictly_proper) {
    Mat d = strictly_proper ? Mat(Mat::Zero(outputs, inputs)) : matrix(outputs, inputs);
    return {stable_matrix(states), matrix(states, inputs), matrix(outputs, states), d};
  }

  /// `active` scales the H2 and L2 blocks; 0 gives a passive oscillator.
  qyoula::SlhModel slh(int n, int m, double active = 0.5) {
    const Mat s = unitary(m);
    const Mat h1 = hermitian(n);
    const Mat g = matrix(n, n);
    const Mat h2 = active * (g + g.transpose());
    return qyoula::SlhModel::make(s, h1, h2, matrix(m, n), active * matrix(m, n));
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline double max_diff(const StateSpace& a, const StateSpace& b, std::span<const double> omegas) {
  double worst = 0.0;
  for (double w : omegas) worst = std::max(worst, (a.response(w) - b.response(w)).norm());
  return worst;
}

inline double max_diff(const StateSpace& a, const StateSpace& b, const qyoula::FrequencyGrid& g) {
  return max_diff(a, b, g.points());
}

/// Modified plant with literal widths, a random (possibly unstable) A and
/// generic input/output matrices, so that (A, B2, C2) is controllable and
/// observable with probability one. A is scaled by 1/√n, which keeps its
/// spectral radius near 1.5 for every state dimension.
inline qyoula::ModifiedPlant random_modified_plant(Rng& rng, int states, int exo, int loop,
                                                   int perf) {
  const Mat a = rng.matrix(states, states);
  const StateSpace full(a, rng.matrix(states, exo + loop), rng.matrix(perf + loop, states),
                        rng.matrix(perf + loop, exo + loop) * 0.5);
  return {full, exo, loop, perf, loop};
}

/// First-order all-pass (s − β)/(s + β) = 1 − 2β/(s + β).
inline StateSpace allpass(double beta) {
  return {Mat::Constant(1, 1, -beta), Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, -2.0 * beta),
          Mat::Constant(1, 1, 1.0)};
}

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(lo + (hi - lo) * i / (n - 1));
  return v;
}

}  // namespace qtest
