#ifndef BNN_RNG_HPP
#define BNN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

#include "bnn/core.hpp"

namespace bnn {

// Stream tags keep weight, direction and Monte Carlo draws apart even when
// the remaining keys coincide.
enum class StreamTag : std::uint64_t {
  weights = 0x57,
  direction = 0x44,
  restart = 0x52,
  trial = 0x54,
  record = 0x43,
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Folds a list of keys into a seed. Order matters; equal key lists give
/// equal seeds on every platform.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t state = seed;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t k : keys) {
    state ^= k + 0x632BE59BD9B4E019ULL + (out << 6) + (out >> 2);
    out = splitmix64(state);
  }
  return out;
}

/// Standard normal generator with a platform-independent transform
/// (Box-Muller on top of mt19937_64). std::normal_distribution is
/// implementation-defined, which would make dumps differ across toolchains.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1], u2 in [0, 1)
    const double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  Matrix matrix(Index rows, Index cols) {
    Matrix out(rows, cols);
    double* data = out.data();
    for (Index i = 0; i < out.size(); ++i) data[i] = (*this)();
    return out;
  }

  Vector vector(Index n) {
    Vector out(n);
    for (Index i = 0; i < n; ++i) out[i] = (*this)();
    return out;
  }

  /// Uniform point on the unit sphere of R^n.
  Vector unit_vector(Index n) {
    Vector v = vector(n);
    double norm = v.norm();
    while (norm == 0.0) {
      v = vector(n);
      norm = v.norm();
    }
    return v / norm;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bnn

#endif  // BNN_RNG_HPP
