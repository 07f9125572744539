#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

namespace cfmm {

template <typename Real>
using Complex = std::complex<Real>;

template <typename Real>
using CMatrix = Eigen::Matrix<Complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Real>
using CVector = Eigen::Matrix<Complex<Real>, Eigen::Dynamic, 1>;

template <typename Real>
using RVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

template <typename Real>
using RMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

// The library is instantiated in double precision; the kernels in
// kernels.hpp stay generic over the scalar.
using cd = Complex<double>;
using CMat = CMatrix<double>;
using CVec = CVector<double>;
using RVec = RVector<double>;
using RMat = RMatrix<double>;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Thrown when every transmitter of a precoded phase has a zero payload.
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SequencingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A transmit signal or precoder violated its power constraint.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// dBm to watts.
inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

inline double watt_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

}  // namespace cfmm
