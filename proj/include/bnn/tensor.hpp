#ifndef BNN_TENSOR_HPP
#define BNN_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bnn/core.hpp"
#include "bnn/rng.hpp"

namespace bnn {

/// Dense real tensor of arbitrary order, row-major (last index fastest).
class DenseTensor {
 public:
  DenseTensor() = default;

  DenseTensor(std::vector<Index> shape, std::vector<double> entries)
      : shape_(std::move(shape)), entries_(std::move(entries)) {
    if (shape_.empty()) throw DimensionError("tensor needs order >= 1");
    Index count = 1;
    for (Index d : shape_) {
      if (d <= 0) throw DimensionError("tensor dimensions must be positive");
      count *= d;
    }
    if (static_cast<Index>(entries_.size()) != count) {
      throw DimensionError("entry count " + std::to_string(entries_.size()) +
                           " does not match shape product " + std::to_string(count));
    }
    for (double e : entries_) {
      if (!std::isfinite(e)) throw DimensionError("tensor entries must be finite");
    }
  }

  static DenseTensor zeros(std::vector<Index> shape) {
    Index count = 1;
    for (Index d : shape) count *= std::max<Index>(d, 0);
    return DenseTensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(count), 0.0));
  }

  static DenseTensor from_matrix(const Matrix& m) {
    return DenseTensor({m.rows(), m.cols()}, std::vector<double>(m.data(), m.data() + m.size()));
  }

  /// Rank-1 tensor v^1 (x) ... (x) v^k.
  static DenseTensor outer(std::span<const Vector> factors) {
    std::vector<Index> shape;
    for (const Vector& f : factors) shape.push_back(f.size());
    DenseTensor t = zeros(shape);
    std::vector<Index> idx(shape.size(), 0);
    for (std::size_t flat = 0; flat < t.entries_.size(); ++flat) {
      double p = 1.0;
      for (std::size_t k = 0; k < idx.size(); ++k) p *= factors[k][idx[k]];
      t.entries_[flat] = p;
      t.advance(idx);
    }
    return t;
  }

  std::size_t order() const { return shape_.size(); }
  const std::vector<Index>& shape() const { return shape_; }
  Index dim(std::size_t k) const { return shape_[k]; }
  std::size_t size() const { return entries_.size(); }
  std::span<const double> entries() const { return entries_; }
  std::span<double> entries() { return entries_; }

  double operator[](std::size_t flat) const { return entries_[flat]; }

  std::size_t flat_index(std::span<const Index> idx) const {
    std::size_t flat = 0;
    for (std::size_t k = 0; k < shape_.size(); ++k) {
      flat = flat * static_cast<std::size_t>(shape_[k]) + static_cast<std::size_t>(idx[k]);
    }
    return flat;
  }

  double at(std::span<const Index> idx) const { return entries_[flat_index(idx)]; }

  /// Odometer increment of a row-major multi-index.
  void advance(std::vector<Index>& idx) const {
    for (std::size_t k = shape_.size(); k-- > 0;) {
      if (++idx[k] < shape_[k]) return;
      idx[k] = 0;
    }
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double e : entries_) s += e * e;
    return std::sqrt(s);
  }

 private:
  std::vector<Index> shape_;
  std::vector<double> entries_;
};

using VectorTuple = std::vector<Vector>;

namespace detail {

inline void check_tuple(const DenseTensor& a, std::span<const Vector> v) {
  if (v.size() != a.order()) {
    throw DimensionError("tuple has " + std::to_string(v.size()) + " vectors, tensor order is " +
                         std::to_string(a.order()));
  }
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (v[k].size() != a.dim(k)) {
      throw DimensionError("tuple vector " + std::to_string(k) + " has length " +
                           std::to_string(v[k].size()) + ", expected " + std::to_string(a.dim(k)));
    }
  }
}

}  // namespace detail

/// Tuple product <A, (v^1, ..., v^k)>: full contraction of A against the
/// rank-1 tensor v^1 (x) ... (x) v^k.
inline double tuple_contract(const DenseTensor& a, std::span<const Vector> v) {
  detail::check_tuple(a, v);
  // Contract the trailing mode repeatedly; each step is a (rest x r_k) GEMV.
  std::vector<double> work(a.entries().begin(), a.entries().end());
  Index rest = static_cast<Index>(a.size());
  for (std::size_t k = a.order(); k-- > 0;) {
    const Index rk = a.dim(k);
    rest /= rk;
    Eigen::Map<const Matrix> block(work.data(), rest, rk);
    Vector next = block * v[k];
    work.assign(next.data(), next.data() + next.size());
  }
  return work[0];
}

/// Gradient of the tuple product with respect to v^slot, all other vectors
/// fixed. The value of v[slot] is ignored.
inline Vector contract_except(const DenseTensor& a, std::span<const Vector> v, std::size_t slot) {
  detail::check_tuple(a, v);
  Vector out = Vector::Zero(a.dim(slot));
  std::vector<Index> idx(a.order(), 0);
  for (std::size_t flat = 0; flat < a.size(); ++flat) {
    double p = a[flat];
    if (p != 0.0) {
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (k != slot) p *= v[k][idx[k]];
      }
      out[idx[slot]] += p;
    }
    a.advance(idx);
  }
  return out;
}

/// Implicit multilinear form given through its partial contractions:
/// partial(i, V) is the linear functional on slot i obtained by fixing every
/// other vector of V (V[i] is ignored). Evaluating it against V[i] yields the
/// full contraction.
struct MultilinearOperator {
  std::vector<Index> dims;
  std::function<Vector(std::size_t, const VectorTuple&)> partial;

  std::size_t order() const { return dims.size(); }
};

inline MultilinearOperator as_operator(const DenseTensor& a) {
  return MultilinearOperator{a.shape(), [a](std::size_t slot, const VectorTuple& v) {
                               return contract_except(a, v, slot);
                             }};
}

struct PowerOptions {
  double tol = 1e-8;
  int max_iters = 500;
  int restarts = 32;
  std::uint64_t seed = 0x5eed;
};

struct PowerResult {
  double value = 0.0;      // |contraction| at the best unit tuple found
  VectorTuple maximizer;   // feasible unit tuple certifying `value`
  bool converged = false;  // the best restart met the relative tolerance
  int iterations = 0;      // sweeps used by the best restart
};

namespace detail {

struct SweepOutcome {
  double value;
  bool converged;
  int iterations;
};

// One alternating-maximization run from the given start. Each slot update is
// the exact maximizer of the (linear) restricted problem; a vanishing
// functional keeps the previous vector.
inline SweepOutcome alternate(const MultilinearOperator& op, VectorTuple& tuple, double tol,
                              int max_iters) {
  double previous = -std::numeric_limits<double>::infinity();
  double value = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    for (std::size_t i = 0; i < op.order(); ++i) {
      Vector g = op.partial(i, tuple);
      const double n = g.norm();
      if (n > 0.0) {
        tuple[i] = g / n;
        value = n;
      } else {
        value = 0.0;
      }
    }
    if (std::abs(value - previous) <= tol * std::abs(value)) return {value, true, it};
    previous = value;
  }
  return {value, false, max_iters};
}

}  // namespace detail

/// Alternating rank-1 power iteration for the spectral norm of an implicit
/// multilinear form. The result is a lower bound certified by `maximizer`.
inline PowerResult spectral_norm_power(const MultilinearOperator& op, const PowerOptions& opts = {}) {
  if (op.order() == 0) throw DimensionError("operator needs order >= 1");
  for (Index d : op.dims) {
    if (d <= 0) throw DimensionError("operator dimensions must be positive");
  }
  PowerResult best;
  best.value = -1.0;
  const int restarts = std::max(1, opts.restarts);
  for (int r = 0; r < restarts; ++r) {
    NormalStream rng(derive_seed(opts.seed, {static_cast<std::uint64_t>(StreamTag::restart),
                                             static_cast<std::uint64_t>(r)}));
    VectorTuple tuple;
    tuple.reserve(op.order());
    for (Index d : op.dims) tuple.push_back(rng.unit_vector(d));
    const detail::SweepOutcome out = detail::alternate(op, tuple, opts.tol, opts.max_iters);
    if (out.value > best.value) {
      best.value = out.value;
      best.maximizer = std::move(tuple);
      best.converged = out.converged;
      best.iterations = out.iterations;
    }
  }
  return best;
}

inline constexpr Index kBruteforceMaxDim = 8;
inline constexpr std::size_t kMaxTensorOrder = 8;

/// Oracle-regime spectral norm: alternating maximization on an explicit
/// tensor with every dimension <= 8. Returns max over restarts of
/// |<A, V>| over unit tuples.
inline double spectral_norm_bruteforce(const DenseTensor& a, int restarts = 32, int iters = 200,
                                       std::uint64_t seed = 0xb7u) {
  if (a.order() < 1) throw DimensionError("tensor needs order >= 1");
  if (a.order() > kMaxTensorOrder) throw BudgetError("tensor order above 8 is out of scope");
  for (Index d : a.shape()) {
    if (d > kBruteforceMaxDim) {
      throw BudgetError("brute-force spectral norm refuses dimension " + std::to_string(d) +
                        " (limit 8)");
    }
  }
  if (a.order() == 1) {
    return Eigen::Map<const Vector>(a.entries().data(), a.dim(0)).norm();
  }
  PowerOptions opts;
  opts.restarts = restarts;
  opts.max_iters = iters;
  opts.tol = 0.0;  // run the full iteration budget
  opts.seed = seed;
  return spectral_norm_power(as_operator(a), opts).value;
}

using TensorMask = std::vector<std::uint8_t>;

/// Box-shaped mask [lo_k, hi_k) in every mode.
inline TensorMask box_mask(const DenseTensor& t, std::span<const Index> lo, std::span<const Index> hi) {
  TensorMask mask(t.size(), 0);
  std::vector<Index> idx(t.order(), 0);
  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    bool inside = true;
    for (std::size_t k = 0; k < idx.size(); ++k) inside = inside && idx[k] >= lo[k] && idx[k] < hi[k];
    mask[flat] = inside ? 1 : 0;
    t.advance(idx);
  }
  return mask;
}

/// Moves the masked entries of t into a dense block whose modes only keep
/// indices the mask touches. Dropped slices are all-zero, so the spectral
/// norm is unchanged.
inline DenseTensor compact_block(const DenseTensor& t, const TensorMask& mask) {
  std::vector<std::vector<Index>> used(t.order());
  std::vector<std::vector<std::uint8_t>> seen(t.order());
  for (std::size_t k = 0; k < t.order(); ++k) seen[k].assign(static_cast<std::size_t>(t.dim(k)), 0);
  std::vector<Index> idx(t.order(), 0);
  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    if (mask[flat]) {
      for (std::size_t k = 0; k < idx.size(); ++k) seen[k][static_cast<std::size_t>(idx[k])] = 1;
    }
    t.advance(idx);
  }
  std::vector<Index> shape(t.order());
  std::vector<std::vector<Index>> remap(t.order());
  for (std::size_t k = 0; k < t.order(); ++k) {
    remap[k].assign(seen[k].size(), -1);
    Index next = 0;
    for (std::size_t i = 0; i < seen[k].size(); ++i) {
      if (seen[k][i]) remap[k][i] = next++;
    }
    shape[k] = std::max<Index>(next, 1);
  }
  DenseTensor out = DenseTensor::zeros(shape);
  std::fill(idx.begin(), idx.end(), 0);
  std::vector<Index> target(t.order());
  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    if (mask[flat]) {
      for (std::size_t k = 0; k < idx.size(); ++k) target[k] = remap[k][static_cast<std::size_t>(idx[k])];
      out.entries()[out.flat_index(target)] = t[flat];
    }
    t.advance(idx);
  }
  return out;
}

struct SubadditivityResult {
  double lhs = 0.0;  // ||T||
  double rhs = 0.0;  // sum of compacted block norms
};

/// Estimates both sides of ||T|| <= sum_k ||T'_k|| for a partition of the
/// support of T into masked blocks.
inline SubadditivityResult block_subadditivity_check(const DenseTensor& t,
                                                     const std::vector<TensorMask>& partition,
                                                     int restarts = 32, int iters = 200) {
  if (partition.empty()) throw Error("partition must contain at least one mask");
  std::vector<int> cover(t.size(), 0);
  for (const TensorMask& mask : partition) {
    if (mask.size() != t.size()) throw DimensionError("mask size does not match tensor");
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] && ++cover[i] > 1) throw Error("partition masks overlap");
    }
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != 0.0 && cover[i] == 0) throw Error("partition does not cover the tensor support");
  }
  SubadditivityResult out;
  out.lhs = spectral_norm_bruteforce(t, restarts, iters);
  for (const TensorMask& mask : partition) {
    out.rhs += spectral_norm_bruteforce(compact_block(t, mask), restarts, iters);
  }
  return out;
}

}  // namespace bnn

#endif  // BNN_TENSOR_HPP
