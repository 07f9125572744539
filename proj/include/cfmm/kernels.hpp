#pragma once

// Scalar-generic dense kernels shared by the estimators and optimizers.
// Everything here is a free function over Eigen expressions.

#include "cfmm/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace cfmm::kernels {

/// Least-squares pilot correlation: Y p / (tau sqrt(beta)).
template <typename DY, typename DP>
auto ls_correlate(const Eigen::MatrixBase<DY>& y, const Eigen::MatrixBase<DP>& pilot,
                  typename DY::RealScalar tau, typename DY::RealScalar sqrt_beta) {
  using Scalar = typename DY::Scalar;
  return (y * pilot / Scalar(tau * sqrt_beta)).eval();
}

/// Maximum per-symbol (per-column) squared norm of a transmit block.
template <typename D>
typename D::RealScalar max_column_power(const Eigen::MatrixBase<D>& x) {
  if (x.cols() == 0) return 0;
  return x.colwise().squaredNorm().maxCoeff();
}

/// Solves (A + ridge I) x = b for Hermitian positive definite A + ridge I.
/// Returns false when the factorization reports a non-positive pivot.
template <typename DA, typename DB, typename DX>
bool hermitian_solve(const Eigen::MatrixBase<DA>& a, typename DA::RealScalar ridge,
                     const Eigen::MatrixBase<DB>& b, Eigen::MatrixBase<DX>& x) {
  using Mat = Eigen::Matrix<typename DA::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Mat m = a;
  m.diagonal().array() += ridge;
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) return false;
  x.derived() = llt.solve(b);
  return true;
}

/// Hermitian eigendecomposition used by the scalar power bisections:
/// the per-column power of (T + s I)^{-1} C as a function of the shift s.
template <typename Real>
class ShiftedPowerProfile {
 public:
  using CMat = CMatrix<Real>;
  using RVec = RVector<Real>;

  ShiftedPowerProfile(const CMat& hermitian, const CMat& rhs) {
    const CMat sym = (hermitian + hermitian.adjoint()) / Real(2);
    Eigen::SelfAdjointEigenSolver<CMat> es(sym);
    eigenvalues_ = es.eigenvalues();
    basis_ = es.eigenvectors();
    const CMat proj = basis_.adjoint() * rhs;
    weights_ = proj.rowwise().squaredNorm();
  }

  /// Total power of the regularized solution at eigenvalue shift s.
  Real power(Real shift) const {
    Real p = 0;
    for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) {
      const Real d = eigenvalues_(i) + shift;
      if (weights_(i) == Real(0)) continue;
      p += weights_(i) / (d * d);
    }
    return p;
  }

  Real min_eigenvalue() const { return eigenvalues_.size() ? eigenvalues_.minCoeff() : Real(0); }
  Real max_eigenvalue() const { return eigenvalues_.size() ? eigenvalues_.maxCoeff() : Real(0); }
  Real total_weight() const { return weights_.sum(); }

 private:
  RVec eigenvalues_;
  CMat basis_;
  RVec weights_;
};

/// Smallest shift s >= lower with profile.power(s) <= target, found by
/// bisection on the (strictly decreasing) power curve. Returns lower when
/// the constraint is already inactive there.
template <typename Real>
Real bisect_shift(const ShiftedPowerProfile<Real>& profile, Real lower, Real target, int max_steps = 200) {
  if (profile.power(lower) <= target) return lower;
  // power(s) <= W / (s + e_min)^2, so this bracket is feasible.
  Real hi = std::max(lower, Real(0)) + std::sqrt(profile.total_weight() / target) +
            std::max(Real(0), -profile.min_eigenvalue());
  while (profile.power(hi) > target) hi = hi * 2 + Real(1e-300);
  Real lo = lower;
  for (int i = 0; i < max_steps; ++i) {
    const Real mid = lo + (hi - lo) / 2;
    if (mid <= lo || mid >= hi) break;
    if (profile.power(mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

}  // namespace cfmm::kernels
