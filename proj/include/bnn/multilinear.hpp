#ifndef BNN_MULTILINEAR_HPP
#define BNN_MULTILINEAR_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bnn/core.hpp"
#include "bnn/network.hpp"
#include "bnn/tensor.hpp"

namespace bnn {

namespace detail {

inline void require_identity(const NetworkSpec& spec, const char* what) {
  if (spec.activation() != Activation::identity) {
    throw UnsupportedError(std::string(what) + " requires the identity activation");
  }
}

inline void require_scalar(const NetworkSpec& spec, const char* what) {
  if (spec.output_dim() != 1) throw UnsupportedError(std::string(what) + " requires output dimension 1");
}

inline void require_match(const NetworkSpec& a, const NetworkSpec& b) {
  if (!(a == b)) throw DimensionError("direction does not match weight spec");
}

/// S_{to-1} ... S_from col, with S_s = scale_s * view[s].
inline Vector col_through(const NetworkSpec& spec, std::span<const Matrix* const> view, int from, int to,
                          Vector col) {
  for (int s = from; s < to; ++s) col = spec.scale(s) * ((*view[static_cast<std::size_t>(s)]) * col);
  return col;
}

/// row S_{to-1} ... S_from, returned as a column vector.
inline Vector row_through(const NetworkSpec& spec, std::span<const Matrix* const> view, int from, int to,
                          Vector row) {
  for (int s = to - 1; s >= from; --s) {
    row = spec.scale(s) * (view[static_cast<std::size_t>(s)]->transpose() * row);
  }
  return row;
}

inline Vector unit_row(const NetworkSpec& spec) { return Vector::Ones(spec.output_dim()); }

// Coefficients of t -> g(w0 + t delta; x) grouped by degree. States are
// (degree k, slots of the current block already taken u); a state collects
// the sum over all substitution subsets sharing that prefix signature, so
// the 2^P subset terms are summed in a fixed order without enumerating them.
// max_per_block < 0 means unrestricted.
inline Matrix expand_states(const WeightSet& w0, const Direction& delta, const Vector& x, int max_degree,
                            int max_per_block) {
  const NetworkSpec& spec = w0.spec();
  const int p = spec.slot_count();
  const int kmax = max_degree < 0 ? p : std::min(max_degree, p);
  const int ucount = max_per_block < 0 ? 1 : max_per_block + 1;
  const auto col = [ucount](int k, int u) { return static_cast<Index>(k * ucount + u); };

  Matrix v = Matrix::Zero(x.size(), (kmax + 1) * ucount);
  v.col(col(0, 0)) = x;
  for (int s = 0; s < p; ++s) {
    if (ucount > 1 && s > 0 && s == spec.block_begin(spec.block_of(s))) {
      for (int k = 0; k <= kmax; ++k) {
        for (int u = 1; u < ucount; ++u) {
          v.col(col(k, 0)) += v.col(col(k, u));
          v.col(col(k, u)).setZero();
        }
      }
    }
    Matrix next = w0.slot(s) * v;
    const Matrix moved = delta.slot(s) * v;
    for (int k = kmax; k >= 1; --k) {
      if (ucount == 1) {
        next.col(col(k, 0)) += moved.col(col(k - 1, 0));
      } else {
        for (int u = 1; u < ucount; ++u) next.col(col(k, u)) += moved.col(col(k - 1, u - 1));
      }
    }
    v = spec.scale(s) * next;
  }
  Matrix out = Matrix::Zero(spec.output_dim(), kmax + 1);
  for (int k = 0; k <= kmax; ++k) {
    for (int u = 0; u < ucount; ++u) out.col(k) += v.col(col(k, u));
  }
  return out;
}

inline std::vector<double> horner_coeffs(const Matrix& states) {
  std::vector<double> c(static_cast<std::size_t>(states.cols()));
  for (Index k = 0; k < states.cols(); ++k) c[static_cast<std::size_t>(k)] = states(0, k);
  return c;
}

}  // namespace detail

/// g(w0 with the slots in `subset` (bit s = slot s) replaced by delta; x).
inline double substitution_value(const WeightSet& w0, const Direction& delta, std::uint32_t subset,
                                 const InputVector& x) {
  detail::require_match(w0.spec(), delta.spec());
  detail::require_scalar(w0.spec(), "substitution");
  detail::check_input(w0.spec(), x);
  auto view = w0.view();
  for (int s = 0; s < w0.slot_count(); ++s) {
    if (subset & (1u << s)) view[static_cast<std::size_t>(s)] = &delta.slot(s);
  }
  return detail::chain_apply(w0.spec(), view, x.values(), Activation::identity)[0];
}

/// Polynomial t -> sum_k c_k t^k equal to g(base + t direction; x).
class PolyCurve {
 public:
  PolyCurve(std::vector<double> coeffs, WeightSet base, Direction direction, InputVector x)
      : coeffs_(std::move(coeffs)), base_(std::move(base)), direction_(std::move(direction)), x_(std::move(x)) {}

  const std::vector<double>& coeffs() const { return coeffs_; }
  double coeff(int k) const { return k < static_cast<int>(coeffs_.size()) ? coeffs_[static_cast<std::size_t>(k)] : 0.0; }
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  const WeightSet& base() const { return base_; }
  const Direction& direction() const { return direction_; }
  const InputVector& input() const { return x_; }

  /// sum_{k <= n} c_k t^k.
  double jet(double t, int n) const {
    if (n < 0) throw Error("jet degree must be >= 0");
    double acc = 0.0;
    for (int k = std::min(n, degree()); k >= 0; --k) acc = acc * t + coeffs_[static_cast<std::size_t>(k)];
    return acc;
  }

  double operator()(double t) const { return jet(t, degree()); }

 private:
  std::vector<double> coeffs_;
  WeightSet base_;
  Direction direction_;
  InputVector x_;
};

/// Exact Taylor coefficients of t -> g(w0 + t delta; x): c_k sums
/// g(w0 with the slots of S replaced by delta; x) over all |S| = k.
inline PolyCurve poly_expand(const WeightSet& w0, const Direction& delta, const InputVector& x) {
  detail::require_identity(w0.spec(), "poly_expand");
  detail::require_scalar(w0.spec(), "poly_expand");
  detail::require_match(w0.spec(), delta.spec());
  detail::check_input(w0.spec(), x);
  auto c = detail::horner_coeffs(detail::expand_states(w0, delta, x.values(), -1, -1));
  return PolyCurve(std::move(c), w0, delta, x);
}

/// Same expansion restricted to subsets with at most one slot per block.
/// Coefficients above degree B vanish.
inline PolyCurve poly_expand_multilinear(const WeightSet& w0, const Direction& delta, const InputVector& x) {
  detail::require_identity(w0.spec(), "poly_expand_multilinear");
  detail::require_scalar(w0.spec(), "poly_expand_multilinear");
  detail::require_match(w0.spec(), delta.spec());
  detail::check_input(w0.spec(), x);
  auto c = detail::horner_coeffs(detail::expand_states(w0, delta, x.values(), -1, 1));
  c.resize(static_cast<std::size_t>(w0.slot_count()) + 1, 0.0);
  return PolyCurve(std::move(c), w0, delta, x);
}

inline double jet_eval(const PolyCurve& curve, double t, int n) { return curve.jet(t, n); }

/// g(base + t direction; x) - jet_n(t), with the forward value computed
/// independently of the expansion.
inline double remainder(const PolyCurve& curve, double t, int n) {
  return forward_line(curve.base(), curve.direction(), t, curve.input()) - curve.jet(t, n);
}

inline std::vector<double> remainder_grid(const PolyCurve& curve, std::span<const double> ts, int n) {
  const Matrix fwd = forward_line_batch(curve.base(), curve.direction(), ts, curve.input());
  std::vector<double> out(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) out[i] = fwd(0, static_cast<Index>(i)) - curve.jet(ts[i], n);
  return out;
}

/// Gradient of g with respect to one slot, kept in factored form
/// scale * left * right^T.
struct RankOneSlot {
  double scale = 1.0;
  Vector left;
  Vector right;

  Matrix dense() const { return scale * left * right.transpose(); }
  /// <G, v> = g(w0 with this slot replaced by v; x).
  double contract(const Matrix& v) const { return scale * left.dot(v * right); }
  double norm() const { return std::abs(scale) * left.norm() * right.norm(); }
};

/// Per-slot gradients of a scalar-output network. Slot s gives
/// left = (rows after s)^T, right = (product before s) x.
inline std::vector<RankOneSlot> slot_gradients(const WeightSet& w0, const InputVector& x) {
  const NetworkSpec& spec = w0.spec();
  detail::require_identity(spec, "slot gradients");
  detail::require_scalar(spec, "slot gradients");
  detail::check_input(spec, x);
  const auto view = w0.view();
  const int p = spec.slot_count();
  std::vector<Vector> rights(static_cast<std::size_t>(p));
  Vector col = x.values();
  for (int s = 0; s < p; ++s) {
    rights[static_cast<std::size_t>(s)] = col;
    col = spec.scale(s) * (w0.slot(s) * col);
  }
  std::vector<RankOneSlot> out(static_cast<std::size_t>(p));
  Vector row = detail::unit_row(spec);
  for (int s = p - 1; s >= 0; --s) {
    out[static_cast<std::size_t>(s)] = {spec.scale(s), row, std::move(rights[static_cast<std::size_t>(s)])};
    row = spec.scale(s) * (w0.slot(s).transpose() * row);
  }
  return out;
}

/// The matrix G with <G, V> = g(w0 with slot <- V; x) for every V.
inline Matrix gradient_by_substitution(const WeightSet& w0, const InputVector& x, SlotId slot) {
  const NetworkSpec& spec = w0.spec();
  detail::require_identity(spec, "gradient_by_substitution");
  detail::require_scalar(spec, "gradient_by_substitution");
  detail::check_input(spec, x);
  const int s = spec.slot_index(slot.block, slot.layer);
  const auto view = w0.view();
  const Vector right = detail::col_through(spec, view, 0, s, x.values());
  const Vector left = detail::row_through(spec, view, s + 1, spec.slot_count(), detail::unit_row(spec));
  return spec.scale(s) * left * right.transpose();
}

inline bool is_single_bottleneck(const NetworkSpec& spec) {
  return spec.blocks() == 2 && spec.depth(0) == 2 && spec.depth(1) == 2 && spec.output_dim() == 1 &&
         spec.activation() == Activation::identity;
}

/// Gradient of the 4-layer single-bottleneck network from the explicit
/// product formulas, every block carrying the factor 1/(m sqrt(r d)).
inline Direction gradient_exact(const WeightSet& w0, const InputVector& x) {
  const NetworkSpec& spec = w0.spec();
  if (!is_single_bottleneck(spec)) {
    throw UnsupportedError("gradient_exact needs B=2, L=(2,2), k=1, identity; use gradient_by_substitution");
  }
  detail::check_input(spec, x);
  const double m = static_cast<double>(spec.hidden());
  const double d = static_cast<double>(spec.widths()[0]);
  const double r = static_cast<double>(spec.widths()[1]);
  const double c = 1.0 / (m * std::sqrt(r * d));
  const Matrix& w11 = w0.at(0, 0);
  const Matrix& w12 = w0.at(0, 1);
  const Matrix& w21 = w0.at(1, 0);
  const Matrix& w22 = w0.at(1, 1);
  const Vector& xv = x.values();

  const Matrix top3 = w22 * w21 * w12;  // 1 x m
  const Matrix top2 = w22 * w21;        // 1 x r
  const Vector h1 = w11 * xv;           // m
  const Vector h2 = w12 * h1;           // r
  const Vector h3 = w21 * h2;           // m

  std::vector<Matrix> g;
  g.push_back(c * top3.transpose() * xv.transpose());
  g.push_back(c * top2.transpose() * h1.transpose());
  g.push_back(c * w22.transpose() * h2.transpose());
  g.push_back(c * h3.transpose());
  return Direction(spec, std::move(g));
}

/// Tangent of one block: one matrix per layer of that block.
using BlockTangent = std::vector<Matrix>;

/// Mixed second derivative of a two-block network between block 1 and
/// block 2, as an implicit operator.
class CrossHessian {
 public:
  CrossHessian(WeightSet w0, InputVector x) : w0_(std::move(w0)), x_(std::move(x)) {
    const NetworkSpec& spec = w0_.spec();
    if (spec.blocks() != 2) throw UnsupportedError("cross-Hessian needs a two-block network");
    detail::require_identity(spec, "cross-Hessian");
    detail::require_scalar(spec, "cross-Hessian");
    detail::check_input(spec, x_);
    const auto view = w0_.view();
    Vector col = x_.values();
    for (int s = spec.block_begin(0); s < spec.block_end(0); ++s) {
      prefix_.push_back(col);
      col = spec.scale(s) * (w0_.slot(s) * col);
    }
    suffix_.resize(static_cast<std::size_t>(spec.depth(1)));
    Vector row = detail::unit_row(spec);
    for (int s = spec.block_end(1) - 1; s >= spec.block_begin(1); --s) {
      suffix_[static_cast<std::size_t>(s - spec.block_begin(1))] = row;
      row = spec.scale(s) * (w0_.slot(s).transpose() * row);
    }
  }

  const WeightSet& base() const { return w0_; }
  const InputVector& input() const { return x_; }

  /// H v2: block-2 tangent to block-1 tangent.
  BlockTangent apply(const BlockTangent& v2) const {
    const NetworkSpec& spec = w0_.spec();
    check_block(1, v2);
    const Vector a = block2_row(v2);
    BlockTangent out(static_cast<std::size_t>(spec.depth(0)));
    Vector row = a;
    for (int s = spec.block_end(0) - 1; s >= spec.block_begin(0); --s) {
      const std::size_t i = static_cast<std::size_t>(s - spec.block_begin(0));
      out[i] = spec.scale(s) * row * prefix_[i].transpose();
      row = spec.scale(s) * (w0_.slot(s).transpose() * row);
    }
    return out;
  }

  /// H^T u1: block-1 tangent to block-2 tangent.
  BlockTangent apply_adjoint(const BlockTangent& u1) const {
    const NetworkSpec& spec = w0_.spec();
    check_block(0, u1);
    Vector col = block1_col(u1);
    BlockTangent out(static_cast<std::size_t>(spec.depth(1)));
    for (int s = spec.block_begin(1); s < spec.block_end(1); ++s) {
      const std::size_t j = static_cast<std::size_t>(s - spec.block_begin(1));
      out[j] = spec.scale(s) * suffix_[j] * col.transpose();
      col = spec.scale(s) * (w0_.slot(s) * col);
    }
    return out;
  }

  /// <u1, H v2> = sum over i in block 1, j in block 2 of
  /// g(w0 with i <- u1_i, j <- v2_j; x).
  double bilinear(const BlockTangent& u1, const BlockTangent& v2) const {
    check_block(0, u1);
    check_block(1, v2);
    return block2_row(v2).dot(block1_col(u1));
  }

 private:
  void check_block(int b, const BlockTangent& v) const {
    const NetworkSpec& spec = w0_.spec();
    if (static_cast<int>(v.size()) != spec.depth(b)) {
      throw DimensionError("block " + std::to_string(b + 1) + " tangent needs " + std::to_string(spec.depth(b)) +
                           " matrices");
    }
    for (int l = 0; l < spec.depth(b); ++l) {
      const int s = spec.slot_index(b, l);
      const Matrix& m = v[static_cast<std::size_t>(l)];
      if (m.rows() != spec.rows(s) || m.cols() != spec.cols(s)) throw DimensionError("block tangent shape mismatch");
    }
  }

  // Row vector (as column) a = sum_j d/dz of block 2 with slot j <- v2_j.
  Vector block2_row(const BlockTangent& v2) const {
    const NetworkSpec& spec = w0_.spec();
    auto view = w0_.view();
    Vector a = Vector::Zero(spec.widths()[1]);
    for (int l = 0; l < spec.depth(1); ++l) {
      const int s = spec.slot_index(1, l);
      view[static_cast<std::size_t>(s)] = &v2[static_cast<std::size_t>(l)];
      a += detail::row_through(spec, view, spec.block_begin(1), spec.block_end(1), detail::unit_row(spec));
      view[static_cast<std::size_t>(s)] = &w0_.slot(s);
    }
    return a;
  }

  // Sum_i of block 1 applied to x with slot i <- u1_i.
  Vector block1_col(const BlockTangent& u1) const {
    const NetworkSpec& spec = w0_.spec();
    auto view = w0_.view();
    Vector c = Vector::Zero(spec.widths()[1]);
    for (int l = 0; l < spec.depth(0); ++l) {
      const int s = spec.slot_index(0, l);
      view[static_cast<std::size_t>(s)] = &u1[static_cast<std::size_t>(l)];
      c += detail::col_through(spec, view, spec.block_begin(0), spec.block_end(0), x_.values());
      view[static_cast<std::size_t>(s)] = &w0_.slot(s);
    }
    return c;
  }

  WeightSet w0_;
  InputVector x_;
  std::vector<Vector> prefix_;  // input to each block-1 slot
  std::vector<Vector> suffix_;  // row functional after each block-2 slot
};

struct BlockNormResult {
  double estimate = 0.0;
  std::optional<double> closed_form;  // available for adjacent slot pairs
  bool same_slot = false;
  bool converged = true;
};

/// Spectral norm of the bilinear form (V_i, V_j) -> g(w0 with i <- V_i,
/// j <- V_j; x), estimated by alternating power iteration.
inline BlockNormResult hessian_block_norm(const WeightSet& w0, const InputVector& x, SlotId slot_i, SlotId slot_j,
                                          const PowerOptions& opts = {}) {
  const NetworkSpec& spec = w0.spec();
  detail::require_identity(spec, "hessian_block_norm");
  detail::require_scalar(spec, "hessian_block_norm");
  detail::check_input(spec, x);
  int i = spec.slot_index(slot_i.block, slot_i.layer);
  int j = spec.slot_index(slot_j.block, slot_j.layer);
  BlockNormResult out;
  if (i == j) {
    out.same_slot = true;
    return out;
  }
  if (i > j) std::swap(i, j);
  const auto view = w0.view();
  const Vector right = detail::col_through(spec, view, 0, i, x.values());
  const Vector left = detail::row_through(spec, view, j + 1, spec.slot_count(), detail::unit_row(spec));
  const Index ri = spec.rows(i), ci = spec.cols(i), rj = spec.rows(j), cj = spec.cols(j);
  const double si = spec.scale(i), sj = spec.scale(j);

  MultilinearOperator op;
  op.dims = {ri * ci, rj * cj};
  op.partial = [&](std::size_t which, const VectorTuple& v) -> Vector {
    if (which == 0) {
      Eigen::Map<const Matrix> vj(v[1].data(), rj, cj);
      const Vector row = detail::row_through(spec, view, i + 1, j, sj * (vj.transpose() * left));
      Matrix g = si * row * right.transpose();
      return Eigen::Map<const Vector>(g.data(), g.size());
    }
    Eigen::Map<const Matrix> vi(v[0].data(), ri, ci);
    const Vector col = detail::col_through(spec, view, i + 1, j, si * (vi * right));
    Matrix g = sj * left * col.transpose();
    return Eigen::Map<const Vector>(g.data(), g.size());
  };
  const PowerResult res = spectral_norm_power(op, opts);
  out.estimate = res.value;
  out.converged = res.converged;
  if (j == i + 1) out.closed_form = si * sj * left.norm() * right.norm();
  return out;
}

/// Flattened tangent: slots concatenated in order, each row-major.
inline Vector flatten(const SlotTuple& t) {
  Index n = 0;
  for (int s = 0; s < t.slot_count(); ++s) n += t.slot(s).size();
  Vector out(n);
  Index off = 0;
  for (int s = 0; s < t.slot_count(); ++s) {
    const Matrix& m = t.slot(s);
    out.segment(off, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    off += m.size();
  }
  return out;
}

inline Direction unflatten(const NetworkSpec& spec, const Vector& v) {
  std::vector<Matrix> mats;
  Index off = 0;
  for (int s = 0; s < spec.slot_count(); ++s) {
    const Index n = spec.rows(s) * spec.cols(s);
    if (off + n > v.size()) throw DimensionError("flattened tangent too short");
    mats.emplace_back(Eigen::Map<const Matrix>(v.data() + off, spec.rows(s), spec.cols(s)));
    off += n;
  }
  if (off != v.size()) throw DimensionError("flattened tangent too long");
  return Direction(spec, std::move(mats));
}

/// Upper limit on the number of injective slot maps enumerated by
/// derivative_operator.
inline constexpr long long kMaxInjectiveMaps = 1 << 20;

/// The order-k derivative tensor of g at w0 as an implicit operator on
/// flattened full-weight tangents: <d^k g, (V_1..V_k)> is the sum over
/// injective maps pi of g(w0 with slot pi(a) <- V_a restricted to pi(a)).
inline MultilinearOperator derivative_operator(const WeightSet& w0, const InputVector& x, int order) {
  const NetworkSpec& spec = w0.spec();
  detail::require_identity(spec, "derivative_operator");
  detail::require_scalar(spec, "derivative_operator");
  detail::check_input(spec, x);
  const int p = spec.slot_count();
  if (order < 1 || order > p) throw Error("derivative order must lie in [1, P]");
  long long count = 1;
  for (int a = 0; a < order; ++a) count *= p - a;
  if (count > kMaxInjectiveMaps) throw BudgetError("too many injective slot maps");

  std::vector<std::vector<int>> maps;
  std::vector<int> cur;
  std::vector<char> used(static_cast<std::size_t>(p), 0);
  auto rec = [&](auto&& self) -> void {
    if (static_cast<int>(cur.size()) == order) {
      maps.push_back(cur);
      return;
    }
    for (int s = 0; s < p; ++s) {
      if (used[static_cast<std::size_t>(s)]) continue;
      used[static_cast<std::size_t>(s)] = 1;
      cur.push_back(s);
      self(self);
      cur.pop_back();
      used[static_cast<std::size_t>(s)] = 0;
    }
  };
  rec(rec);

  std::vector<Index> offsets;
  Index total = 0;
  for (int s = 0; s < p; ++s) {
    offsets.push_back(total);
    total += spec.rows(s) * spec.cols(s);
  }

  MultilinearOperator op;
  op.dims.assign(static_cast<std::size_t>(order), total);
  op.partial = [w0, x, maps = std::move(maps), offsets, total](std::size_t which, const VectorTuple& v) -> Vector {
    const NetworkSpec& sp = w0.spec();
    const int np = sp.slot_count();
    Vector out = Vector::Zero(total);
    std::vector<Matrix> held;
    held.reserve(static_cast<std::size_t>(np));
    for (const auto& pi : maps) {
      auto view = w0.view();
      held.clear();
      for (std::size_t a = 0; a < pi.size(); ++a) {
        if (a == which) continue;
        const int s = pi[a];
        held.emplace_back(Eigen::Map<const Matrix>(v[a].data() + offsets[static_cast<std::size_t>(s)], sp.rows(s),
                                                   sp.cols(s)));
        view[static_cast<std::size_t>(s)] = &held.back();
      }
      const int s = pi[which];
      const Vector right = detail::col_through(sp, view, 0, s, x.values());
      const Vector left = detail::row_through(sp, view, s + 1, np, detail::unit_row(sp));
      Eigen::Map<Matrix> seg(out.data() + offsets[static_cast<std::size_t>(s)], sp.rows(s), sp.cols(s));
      seg.noalias() += sp.scale(s) * left * right.transpose();
    }
    return out;
  };
  return op;
}

/// Degree-B surrogate: constant + gradient term + cross terms, i.e. the sum
/// over substitution subsets with at most one slot per block.
class SurrogateModel {
 public:
  SurrogateModel(WeightSet base, InputVector x, int degree, double constant, std::vector<RankOneSlot> linear,
                 std::optional<CrossHessian> cross)
      : base_(std::move(base)),
        x_(std::move(x)),
        degree_(degree),
        constant_(constant),
        linear_(std::move(linear)),
        cross_(std::move(cross)) {}

  int degree() const { return degree_; }
  double constant() const { return constant_; }
  const std::vector<RankOneSlot>& linear_part() const { return linear_; }
  /// Present for two-block networks.
  const std::optional<CrossHessian>& cross_part() const { return cross_; }
  const WeightSet& base() const { return base_; }
  const InputVector& input() const { return x_; }

  /// g_init^T delta.
  double gradient_term(const Direction& delta) const {
    double acc = 0.0;
    for (int s = 0; s < delta.slot_count(); ++s) acc += linear_[static_cast<std::size_t>(s)].contract(delta.slot(s));
    return acc;
  }

  /// delta_1^T H_init delta_2 (two-block networks only).
  double cross_term(const Direction& delta) const {
    if (!cross_) throw UnsupportedError("cross term is defined for two-block networks");
    const NetworkSpec& spec = base_.spec();
    BlockTangent u1, v2;
    for (int s = spec.block_begin(0); s < spec.block_end(0); ++s) u1.push_back(delta.slot(s));
    for (int s = spec.block_begin(1); s < spec.block_end(1); ++s) v2.push_back(delta.slot(s));
    return cross_->bilinear(u1, v2);
  }

 private:
  WeightSet base_;
  InputVector x_;
  int degree_;
  double constant_;
  std::vector<RankOneSlot> linear_;
  std::optional<CrossHessian> cross_;
};

inline SurrogateModel build_surrogate(const WeightSet& w0, const InputVector& x, int degree) {
  const NetworkSpec& spec = w0.spec();
  detail::require_identity(spec, "build_surrogate");
  detail::require_scalar(spec, "build_surrogate");
  detail::check_input(spec, x);
  if (degree != spec.blocks()) {
    throw Error("surrogate degree " + std::to_string(degree) + " must equal the block count " +
                std::to_string(spec.blocks()));
  }
  std::optional<CrossHessian> cross;
  if (spec.blocks() == 2) cross.emplace(w0, x);
  return SurrogateModel(w0, x, degree, forward_bnn(w0, x)[0], slot_gradients(w0, x), std::move(cross));
}

inline double surrogate_eval(const SurrogateModel& s, const WeightSet& w, const InputVector& x) {
  if (!(w.spec() == s.base().spec())) throw DimensionError("weight spec does not match the surrogate");
  if (x.size() != s.input().size() || x.values() != s.input().values()) {
    throw Error("surrogate was built for a different input");
  }
  const Direction delta = Direction::between(s.base(), w);
  const Matrix c = detail::expand_states(s.base(), delta, x.values(), -1, 1);
  return c.row(0).sum();
}

/// Block-coordinate ascent of |c_K|, K = degree + 1, the leading coefficient
/// of the degree-`degree` remainder along t -> w0 + t delta. c_K is linear in
/// each slot, so the exact maximizer over the sphere of radius `radius` in
/// slot s is radius * sign(rest) * grad / |grad|. Returns the refined
/// direction; every slot keeps Frobenius norm `radius` (slots with a zero
/// gradient keep their previous matrix).
inline Direction ascend_remainder(const WeightSet& w0, const Direction& start, const InputVector& x, int degree,
                                  int sweeps, double radius) {
  const NetworkSpec& spec = w0.spec();
  detail::require_identity(spec, "remainder ascent");
  detail::require_scalar(spec, "remainder ascent");
  detail::require_match(spec, start.spec());
  detail::check_input(spec, x);
  const int p = spec.slot_count();
  const int kk = degree + 1;
  if (degree < 0 || kk > p || sweeps <= 0 || radius <= 0.0) return start;

  std::vector<Matrix> delta;
  for (int s = 0; s < p; ++s) delta.push_back(start.slot(s));
  using Coeffs = std::vector<Vector>;  // index = polynomial degree

  for (int sweep = 0; sweep < sweeps; ++sweep) {
    // left[s][b]: degree-b coefficient of the row functional after slot s.
    std::vector<Coeffs> left(static_cast<std::size_t>(p));
    Coeffs row(static_cast<std::size_t>(kk) + 1);
    row[0] = detail::unit_row(spec);
    for (int b = 1; b <= kk; ++b) row[static_cast<std::size_t>(b)] = Vector::Zero(spec.output_dim());
    for (int s = p - 1; s >= 0; --s) {
      left[static_cast<std::size_t>(s)] = row;
      Coeffs next(row.size());
      for (int b = kk; b >= 0; --b) {
        Vector v = w0.slot(s).transpose() * row[static_cast<std::size_t>(b)];
        if (b > 0) v += delta[static_cast<std::size_t>(s)].transpose() * row[static_cast<std::size_t>(b) - 1];
        next[static_cast<std::size_t>(b)] = spec.scale(s) * v;
      }
      row = std::move(next);
    }

    Coeffs right(static_cast<std::size_t>(kk) + 1);
    right[0] = x.values();
    for (int a = 1; a <= kk; ++a) right[static_cast<std::size_t>(a)] = Vector::Zero(x.size());
    for (int s = 0; s < p; ++s) {
      const Coeffs& l = left[static_cast<std::size_t>(s)];
      Matrix grad = Matrix::Zero(spec.rows(s), spec.cols(s));
      double rest = 0.0;
      for (int a = 0; a <= kk; ++a) {
        const Vector& ra = right[static_cast<std::size_t>(a)];
        if (kk - 1 - a >= 0) grad.noalias() += l[static_cast<std::size_t>(kk - 1 - a)] * ra.transpose();
        rest += l[static_cast<std::size_t>(kk - a)].dot(w0.slot(s) * ra);
      }
      grad *= spec.scale(s);
      rest *= spec.scale(s);
      const double gn = grad.norm();
      if (gn > 0.0) {
        const double sign = rest < 0.0 ? -1.0 : 1.0;
        delta[static_cast<std::size_t>(s)] = (sign * radius / gn) * grad;
      }
      Coeffs next(right.size());
      for (int a = 0; a <= kk; ++a) {
        Vector v = w0.slot(s) * right[static_cast<std::size_t>(a)];
        if (a > 0) v += delta[static_cast<std::size_t>(s)] * right[static_cast<std::size_t>(a) - 1];
        next[static_cast<std::size_t>(a)] = spec.scale(s) * v;
      }
      right = std::move(next);
    }
  }
  return Direction(spec, std::move(delta));
}

/// Same ascent with every slot kept as low-rank factors L R^T. The start is
/// the rank-one point radius * u v^T (u, v seeded unit vectors) of each
/// slot's sphere; updates have rank <= degree + 1, so no dense tangent is
/// formed until the result is returned.
inline Direction ascend_remainder_factored(const WeightSet& w0, const InputVector& x, int degree, int sweeps,
                                           double radius, std::uint64_t seed) {
  const NetworkSpec& spec = w0.spec();
  detail::require_identity(spec, "remainder ascent");
  detail::require_scalar(spec, "remainder ascent");
  detail::check_input(spec, x);
  const int p = spec.slot_count();
  const int kk = degree + 1;
  struct Factors {
    Matrix l;  // rows x k
    Matrix r;  // cols x k
  };
  std::vector<Factors> delta;
  for (int s = 0; s < p; ++s) {
    NormalStream rng(slot_stream_seed(seed, StreamTag::direction, spec.slot(s)));
    Factors f{Matrix(spec.rows(s), 1), Matrix(spec.cols(s), 1)};
    f.l.col(0) = radius * rng.unit_vector(spec.rows(s));
    f.r.col(0) = rng.unit_vector(spec.cols(s));
    delta.push_back(std::move(f));
  }
  if (degree >= 0 && kk <= p && radius > 0.0) {
    for (int sweep = 0; sweep < sweeps; ++sweep) {
      // left[s].col(b): degree-b coefficient of the row functional after s.
      std::vector<Matrix> left(static_cast<std::size_t>(p));
      Matrix row = Matrix::Zero(spec.output_dim(), kk + 1);
      row.col(0) = detail::unit_row(spec);
      for (int s = p - 1; s >= 0; --s) {
        left[static_cast<std::size_t>(s)] = row;
        const Factors& f = delta[static_cast<std::size_t>(s)];
        Matrix next = w0.slot(s).transpose() * row;
        const Matrix moved = f.r * (f.l.transpose() * row.leftCols(kk));
        next.rightCols(kk) += moved;
        row = spec.scale(s) * next;
      }
      Matrix right = Matrix::Zero(x.size(), kk + 1);
      right.col(0) = x.values();
      for (int s = 0; s < p; ++s) {
        const Matrix& l = left[static_cast<std::size_t>(s)];
        const Matrix wr = w0.slot(s) * right;
        double rest = 0.0;
        for (int a = 0; a <= kk; ++a) rest += l.col(kk - a).dot(wr.col(a));
        rest *= spec.scale(s);
        // grad = scale * sum_a l_{K-1-a} r_a^T
        Matrix gl(spec.rows(s), kk), gr(spec.cols(s), kk);
        for (int a = 0; a < kk; ++a) {
          gl.col(a) = l.col(kk - 1 - a);
          gr.col(a) = right.col(a);
        }
        const double gn =
            std::abs(spec.scale(s)) * std::sqrt(std::max(0.0, ((gl.transpose() * gl) * (gr.transpose() * gr)).trace()));
        Factors& f = delta[static_cast<std::size_t>(s)];
        if (gn > 0.0) {
          const double sign = rest < 0.0 ? -1.0 : 1.0;
          f.l = (sign * radius * spec.scale(s) / gn) * gl;
          f.r = std::move(gr);
        }
        Matrix next = wr;
        next.rightCols(kk) += f.l * (f.r.transpose() * right.leftCols(kk));
        right = spec.scale(s) * next;
      }
    }
  }
  std::vector<Matrix> mats;
  for (const auto& f : delta) mats.push_back(f.l * f.r.transpose());
  return Direction(spec, std::move(mats));
}

}  // namespace bnn

#endif  // BNN_MULTILINEAR_HPP
