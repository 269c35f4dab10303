#ifndef BNN_NETWORK_HPP
#define BNN_NETWORK_HPP

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bnn/core.hpp"
#include "bnn/rng.hpp"

namespace bnn {

enum class Activation { identity, tanh };

inline std::string to_string(Activation a) { return a == Activation::identity ? "identity" : "tanh"; }

inline Activation parse_activation(std::string_view name) {
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

/// Upper bound on the total layer count P; substitution expansion costs 2^P
/// forward passes.
inline constexpr int kMaxSlots = 16;

/// Position of one weight matrix W_b^(l); both indices are 0-based.
struct SlotId {
  int block = 0;
  int layer = 0;
  friend bool operator==(const SlotId&, const SlotId&) = default;
};

/// Architecture of a bottleneck network: B wide blocks of depths L_b joined
/// through widths d_0 (input), d_1..d_{B-1} (bottlenecks), d_B (output).
class NetworkSpec {
 public:
  NetworkSpec(std::vector<int> depths, std::vector<Index> widths, Index hidden,
              Activation activation = Activation::identity)
      : depths_(std::move(depths)), widths_(std::move(widths)), hidden_(hidden), activation_(activation) {
    validate();
    for (int b = 0; b < blocks(); ++b) {
      block_offset_.push_back(static_cast<int>(slots_.size()));
      for (int l = 0; l < depths_[static_cast<std::size_t>(b)]; ++l) slots_.push_back({b, l});
    }
  }

  /// The 4-layer single-bottleneck network: input d, bottleneck r, output k.
  static NetworkSpec single_bottleneck(Index d, Index r, Index k, Index m,
                                       Activation activation = Activation::identity) {
    return NetworkSpec({2, 2}, {d, r, k}, m, activation);
  }

  int blocks() const { return static_cast<int>(depths_.size()); }
  const std::vector<int>& depths() const { return depths_; }
  const std::vector<Index>& widths() const { return widths_; }
  Index hidden() const { return hidden_; }
  Activation activation() const { return activation_; }
  Index input_dim() const { return widths_.front(); }
  Index output_dim() const { return widths_.back(); }
  int depth(int b) const { return depths_[static_cast<std::size_t>(b)]; }

  /// Total number of weight matrices, P = sum_b L_b.
  int slot_count() const { return static_cast<int>(slots_.size()); }
  SlotId slot(int s) const { return slots_[static_cast<std::size_t>(s)]; }
  int slot_index(int b, int l) const { return block_offset_[static_cast<std::size_t>(b)] + l; }
  int block_begin(int b) const { return block_offset_[static_cast<std::size_t>(b)]; }
  int block_end(int b) const { return block_begin(b) + depth(b); }
  int block_of(int s) const { return slot(s).block; }
  bool is_block_last(int s) const {
    const SlotId id = slot(s);
    return id.layer == depth(id.block) - 1;
  }

  Index rows(int s) const {
    const SlotId id = slot(s);
    return id.layer == depth(id.block) - 1 ? widths_[static_cast<std::size_t>(id.block) + 1] : hidden_;
  }
  Index cols(int s) const {
    const SlotId id = slot(s);
    return id.layer == 0 ? widths_[static_cast<std::size_t>(id.block)] : hidden_;
  }
  /// Forward scaling 1/sqrt(fan-in) applied after W_b^(l).
  double scale(int s) const { return 1.0 / std::sqrt(static_cast<double>(cols(s))); }

  NetworkSpec with_hidden(Index m) const { return NetworkSpec(depths_, widths_, m, activation_); }
  NetworkSpec with_activation(Activation a) const { return NetworkSpec(depths_, widths_, hidden_, a); }

  std::string describe() const {
    std::string s = "B=" + std::to_string(blocks()) + " L=(";
    for (std::size_t i = 0; i < depths_.size(); ++i) s += (i ? "," : "") + std::to_string(depths_[i]);
    s += ") d=(";
    for (std::size_t i = 0; i < widths_.size(); ++i) s += (i ? "," : "") + std::to_string(widths_[i]);
    return s + ") m=" + std::to_string(hidden_) + " " + to_string(activation_);
  }

  friend bool operator==(const NetworkSpec& a, const NetworkSpec& b) {
    return a.depths_ == b.depths_ && a.widths_ == b.widths_ && a.hidden_ == b.hidden_ &&
           a.activation_ == b.activation_;
  }

 private:
  void validate() const {
    if (depths_.empty()) throw DimensionError("network needs at least one block");
    if (widths_.size() != depths_.size() + 1) {
      throw DimensionError("expected " + std::to_string(depths_.size() + 1) + " widths d_0..d_B, got " +
                           std::to_string(widths_.size()));
    }
    int total = 0;
    for (int l : depths_) {
      if (l < 1) throw DimensionError("block depths must be >= 1");
      total += l;
    }
    for (Index w : widths_) {
      if (w < 1) throw DimensionError("widths must be >= 1");
    }
    if (hidden_ < 1) throw DimensionError("hidden width must be >= 1");
    if (total > kMaxSlots) {
      throw BudgetError("total layer count " + std::to_string(total) + " exceeds " +
                        std::to_string(kMaxSlots));
    }
  }

  std::vector<int> depths_;
  std::vector<Index> widths_;
  Index hidden_;
  Activation activation_;
  std::vector<SlotId> slots_;
  std::vector<int> block_offset_;
};

/// One matrix per slot, shared immutably. Copies are cheap and replacing a
/// slot never touches the other matrices.
class SlotTuple {
 public:
  SlotTuple(NetworkSpec spec, std::vector<Matrix> mats) : spec_(std::move(spec)) {
    if (static_cast<int>(mats.size()) != spec_.slot_count()) {
      throw DimensionError("expected " + std::to_string(spec_.slot_count()) + " matrices, got " +
                           std::to_string(mats.size()));
    }
    mats_.reserve(mats.size());
    for (int s = 0; s < spec_.slot_count(); ++s) {
      Matrix& m = mats[static_cast<std::size_t>(s)];
      check_shape(s, m);
      mats_.push_back(std::make_shared<const Matrix>(std::move(m)));
    }
  }

  const NetworkSpec& spec() const { return spec_; }
  int slot_count() const { return spec_.slot_count(); }
  const Matrix& slot(int s) const { return *mats_[static_cast<std::size_t>(s)]; }
  const Matrix& at(int b, int l) const { return slot(spec_.slot_index(b, l)); }

  /// Pointer view in slot order, for substitution-style evaluation.
  std::vector<const Matrix*> view() const {
    std::vector<const Matrix*> out;
    out.reserve(mats_.size());
    for (const auto& m : mats_) out.push_back(m.get());
    return out;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& m : mats_) s += m->squaredNorm();
    return s;
  }

 protected:
  SlotTuple(NetworkSpec spec, std::vector<std::shared_ptr<const Matrix>> mats)
      : spec_(std::move(spec)), mats_(std::move(mats)) {}

  void check_shape(int s, const Matrix& m) const {
    if (m.rows() != spec_.rows(s) || m.cols() != spec_.cols(s)) {
      const SlotId id = spec_.slot(s);
      throw DimensionError("matrix W_" + std::to_string(id.block + 1) + "^(" + std::to_string(id.layer + 1) +
                           ") has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                           ", expected " + std::to_string(spec_.rows(s)) + "x" + std::to_string(spec_.cols(s)));
    }
    if (!m.allFinite()) throw DimensionError("weight entries must be finite");
  }

  std::vector<std::shared_ptr<const Matrix>> replaced(int s, Matrix m) const {
    check_shape(s, m);
    auto mats = mats_;
    mats[static_cast<std::size_t>(s)] = std::make_shared<const Matrix>(std::move(m));
    return mats;
  }

  NetworkSpec spec_;
  std::vector<std::shared_ptr<const Matrix>> mats_;
};

/// Network parameters W = (W_1, ..., W_B), each W_b = (W_b^(1), ..., W_b^(L_b)).
class WeightSet : public SlotTuple {
 public:
  using SlotTuple::SlotTuple;

  WeightSet with_slot(int s, Matrix m) const { return WeightSet(spec_, replaced(s, std::move(m))); }

  /// Same matrices (shared, not copied) under a different activation.
  WeightSet with_activation(Activation a) const { return WeightSet(spec_.with_activation(a), mats_); }

  WeightSet scaled(double c) const {
    std::vector<Matrix> mats;
    for (int s = 0; s < slot_count(); ++s) mats.push_back(c * slot(s));
    return WeightSet(spec_, std::move(mats));
  }

 private:
  WeightSet(NetworkSpec spec, std::vector<std::shared_ptr<const Matrix>> mats)
      : SlotTuple(std::move(spec), std::move(mats)) {}
};

/// A tangent direction with the same shape as a WeightSet. Per-matrix
/// Frobenius norms are cached at construction.
class Direction : public SlotTuple {
 public:
  Direction(NetworkSpec spec, std::vector<Matrix> mats) : SlotTuple(std::move(spec), std::move(mats)) {
    cache_norms();
  }

  static Direction zero(const NetworkSpec& spec) {
    std::vector<Matrix> mats;
    for (int s = 0; s < spec.slot_count(); ++s) mats.push_back(Matrix::Zero(spec.rows(s), spec.cols(s)));
    return Direction(spec, std::move(mats));
  }

  /// Displacement w - base.
  static Direction between(const WeightSet& base, const WeightSet& w) {
    if (!(base.spec() == w.spec())) throw DimensionError("weight sets have different specs");
    std::vector<Matrix> mats;
    for (int s = 0; s < base.slot_count(); ++s) mats.push_back(w.slot(s) - base.slot(s));
    return Direction(base.spec(), std::move(mats));
  }

  double norm(int s) const { return norms_[static_cast<std::size_t>(s)]; }
  const std::vector<double>& norms() const { return norms_; }

  Direction with_activation(Activation a) const {
    Direction out(spec_.with_activation(a), mats_);
    out.norms_ = norms_;
    return out;
  }

  Direction with_slot(int s, Matrix m) const {
    Direction out(spec_, replaced(s, std::move(m)));
    out.cache_norms();
    return out;
  }

  /// Keeps only the slots of block b; the rest become zero.
  Direction restricted_to_block(int b) const {
    std::vector<Matrix> mats;
    for (int s = 0; s < slot_count(); ++s) {
      mats.push_back(spec_.block_of(s) == b ? slot(s) : Matrix::Zero(spec_.rows(s), spec_.cols(s)));
    }
    return Direction(spec_, std::move(mats));
  }

  Direction scaled(double c) const {
    std::vector<Matrix> mats;
    for (int s = 0; s < slot_count(); ++s) mats.push_back(c * slot(s));
    return Direction(spec_, std::move(mats));
  }

 private:
  Direction(NetworkSpec spec, std::vector<std::shared_ptr<const Matrix>> mats)
      : SlotTuple(std::move(spec), std::move(mats)) {}

  void cache_norms() {
    norms_.clear();
    for (const auto& m : mats_) norms_.push_back(m->norm());
  }

  std::vector<double> norms_;
};

/// Network input x with its cached Euclidean norm.
class InputVector {
 public:
  explicit InputVector(Vector x) : x_(std::move(x)) {
    if (x_.size() < 1) throw DimensionError("input must have length >= 1");
    if (!x_.allFinite()) throw DimensionError("input entries must be finite");
    norm_ = x_.norm();
  }

  /// scale * e_i in R^d.
  static InputVector basis(Index d, Index i = 0, double scale = 1.0) {
    Vector x = Vector::Zero(d);
    x[i] = scale;
    return InputVector(std::move(x));
  }

  const Vector& values() const { return x_; }
  Index size() const { return x_.size(); }
  double norm() const { return norm_; }

 private:
  Vector x_;
  double norm_ = 0.0;
};

namespace detail {

inline void check_input(const NetworkSpec& spec, const InputVector& x) {
  if (x.size() != spec.input_dim()) {
    throw DimensionError("input has length " + std::to_string(x.size()) + ", network expects " +
                         std::to_string(spec.input_dim()));
  }
}

inline void apply_hidden_activation(Vector& v, Activation a) {
  if (a == Activation::tanh) v = v.array().tanh().matrix();
}

/// Applies the slot matrices in order with 1/sqrt(fan-in) scaling;
/// `hidden_after[s]` marks layers followed by the activation.
inline Vector chain_apply(const NetworkSpec& spec, std::span<const Matrix* const> mats, const Vector& x,
                          Activation activation) {
  Vector v = x;
  for (int s = 0; s < spec.slot_count(); ++s) {
    v = spec.scale(s) * ((*mats[static_cast<std::size_t>(s)]) * v);
    if (!spec.is_block_last(s)) apply_hidden_activation(v, activation);
  }
  return v;
}

}  // namespace detail

/// Matrix and activation streams are keyed by (seed, b, l), so the values of
/// one matrix never depend on the generation order of the others.
inline std::uint64_t slot_stream_seed(std::uint64_t seed, StreamTag tag, SlotId id) {
  return derive_seed(seed, {static_cast<std::uint64_t>(tag), static_cast<std::uint64_t>(id.block),
                            static_cast<std::uint64_t>(id.layer)});
}

/// NTK initialization: every entry i.i.d. N(0, 1).
inline WeightSet init_weights(const NetworkSpec& spec, std::uint64_t seed) {
  std::vector<Matrix> mats;
  mats.reserve(static_cast<std::size_t>(spec.slot_count()));
  for (int s = 0; s < spec.slot_count(); ++s) {
    NormalStream rng(slot_stream_seed(seed, StreamTag::weights, spec.slot(s)));
    mats.push_back(rng.matrix(spec.rows(s), spec.cols(s)));
  }
  return WeightSet(spec, std::move(mats));
}

/// L-layer wide network (1/sqrt(fan-in)) W^(L) ... (1/sqrt(fan-in)) W^(1) x.
/// With tanh, the activation follows every layer except the last.
inline Vector forward_wnn(std::span<const Matrix> mats, const Vector& x,
                          Activation activation = Activation::identity) {
  if (mats.empty()) throw DimensionError("a WNN needs at least one layer");
  Vector v = x;
  for (std::size_t l = 0; l < mats.size(); ++l) {
    const Matrix& w = mats[l];
    if (w.cols() != v.size()) {
      throw DimensionError("layer " + std::to_string(l + 1) + " expects input of length " +
                           std::to_string(w.cols()) + ", got " + std::to_string(v.size()));
    }
    v = (w * v) / std::sqrt(static_cast<double>(w.cols()));
    if (l + 1 < mats.size()) detail::apply_hidden_activation(v, activation);
  }
  return v;
}

/// g(W; x) = f_B(W_B; f_{B-1}(... f_1(W_1; x))).
inline Vector forward_bnn(const WeightSet& w, const InputVector& x) {
  detail::check_input(w.spec(), x);
  const auto view = w.view();
  return detail::chain_apply(w.spec(), view, x.values(), w.spec().activation());
}

/// Scalar output for single-output networks.
inline double network_output(const WeightSet& w, const InputVector& x) {
  if (w.spec().output_dim() != 1) throw UnsupportedError("scalar output requires d_B = 1");
  return forward_bnn(w, x)[0];
}

/// W + t * delta.
inline WeightSet displaced(const WeightSet& w, const Direction& delta, double t) {
  if (!(w.spec() == delta.spec())) throw DimensionError("direction does not match weight spec");
  std::vector<Matrix> mats;
  for (int s = 0; s < w.slot_count(); ++s) mats.push_back(w.slot(s) + t * delta.slot(s));
  return WeightSet(w.spec(), std::move(mats));
}

/// g(W + t * delta; x) for every t at once. Column j of the result is the
/// network output at ts[j]. Layer products are applied to the whole batch,
/// W_t v = W v + t (delta v), so no displaced weight set is materialized.
inline Matrix forward_line_batch(const WeightSet& w, const Direction& delta, std::span<const double> ts,
                                 const InputVector& x) {
  const NetworkSpec& spec = w.spec();
  if (!(spec == delta.spec())) throw DimensionError("direction does not match weight spec");
  detail::check_input(spec, x);
  const Index n = static_cast<Index>(ts.size());
  Matrix v = x.values().replicate(1, n);
  Eigen::Map<const RowVector> t(ts.data(), n);
  for (int s = 0; s < spec.slot_count(); ++s) {
    Matrix next = w.slot(s) * v;
    Matrix moved = delta.slot(s) * v;
    next += moved * t.asDiagonal();
    v = spec.scale(s) * next;
    if (!spec.is_block_last(s) && spec.activation() == Activation::tanh) v = v.array().tanh().matrix();
  }
  return v;
}

inline double forward_line(const WeightSet& w, const Direction& delta, double t, const InputVector& x) {
  const double ts[1] = {t};
  return forward_line_batch(w, delta, ts, x)(0, 0);
}

/// Each matrix drawn i.i.d. Gaussian and rescaled to Frobenius norm
/// `per_matrix_norm`, so W_init + direction lies on the boundary of the
/// 2-norm ball of that radius.
inline Direction sample_direction(const NetworkSpec& spec, std::uint64_t seed, double per_matrix_norm) {
  if (!(per_matrix_norm >= 0.0)) throw Error("per-matrix norm must be >= 0");
  std::vector<Matrix> mats;
  for (int s = 0; s < spec.slot_count(); ++s) {
    NormalStream rng(slot_stream_seed(seed, StreamTag::direction, spec.slot(s)));
    Matrix m = rng.matrix(spec.rows(s), spec.cols(s));
    const double n = m.norm();
    if (per_matrix_norm == 0.0 || n == 0.0) {
      m.setZero();
    } else {
      m *= per_matrix_norm / n;
    }
    mats.push_back(std::move(m));
  }
  return Direction(spec, std::move(mats));
}

/// True iff ||W_b^(l) - center_b^(l)||_F <= radius for every slot.
inline bool ball_contains(const WeightSet& center, const WeightSet& w, double radius) {
  if (!(center.spec() == w.spec())) throw DimensionError("weight sets have different specs");
  for (int s = 0; s < w.slot_count(); ++s) {
    if ((w.slot(s) - center.slot(s)).norm() > radius) return false;
  }
  return true;
}

}  // namespace bnn

#endif  // BNN_NETWORK_HPP
