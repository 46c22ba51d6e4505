#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace dmpes {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration or request (bad sizes, unknown fields, missing
/// options). Maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Shape mismatch between related arrays.
class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Model parameters violate a structural requirement.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A matrix is too ill-conditioned to factor even after repair.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// A matching request cannot be satisfied by the available units.
class FeasibilityError : public Error {
 public:
  using Error::Error;
};

/// Unit-norm linear combination of covariates, or the zero combination in
/// degenerate cases. Scores are inner products with the coefficient vector.
class Direction {
 public:
  Direction() = default;

  static Direction zero(Eigen::Index dim) {
    Direction d;
    d.coeffs_ = Vector::Zero(dim);
    return d;
  }

  /// Normalizes the argument to unit Euclidean norm.
  static Direction unit(const Vector& coeffs) {
    double n = coeffs.norm();
    if (n <= 0.0 || !std::isfinite(n)) {
      throw ConfigError("direction coefficients must be nonzero and finite");
    }
    Direction d;
    d.coeffs_ = coeffs / n;
    return d;
  }

  /// Adopts already-normalized coefficients bit for bit, so directions
  /// round-trip through storage without renormalization drift.
  static Direction stored(const Vector& coeffs) {
    double n = coeffs.norm();
    if (!std::isfinite(n) || (n > 0.5 && std::abs(n - 1.0) > 1e-8)) {
      throw ConfigError("stored direction coefficients must be unit or zero");
    }
    Direction d;
    d.coeffs_ = coeffs;
    return d;
  }

  const Vector& coefficients() const { return coeffs_; }
  Eigen::Index dim() const { return coeffs_.size(); }
  bool is_zero() const { return coeffs_.size() == 0 || coeffs_.norm() < 0.5; }

  double score(const Vector& x) const {
    if (x.size() != coeffs_.size()) {
      throw DimensionError("direction/vector dimension mismatch");
    }
    return coeffs_.dot(x);
  }

 private:
  Vector coeffs_;
};

inline void require_square(const Matrix& m, const std::string& what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(what + " must be square, got " +
                         std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

}  // namespace dmpes
