#ifndef BNN_CORE_HPP
#define BNN_CORE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace bnn {

// Weight matrices are stored row-major so that serialized layouts and
// in-memory layouts coincide.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

inline constexpr const char* kVersion = "0.3.1";

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes do not chain or do not match.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// The operation is not defined for the given architecture or activation.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// A combinatorial budget (slot count, oracle size) was exceeded.
class BudgetError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline bool all_finite(const Eigen::Ref<const Matrix>& a) { return a.allFinite(); }

// |a - b| / max(|a|, |b|, floor); used by tests and acceptance checks alike.
inline double relative_difference(double a, double b, double floor = 1e-300) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

}  // namespace bnn

#endif  // BNN_CORE_HPP
