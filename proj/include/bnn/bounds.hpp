#ifndef BNN_BOUNDS_HPP
#define BNN_BOUNDS_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bnn/core.hpp"
#include "bnn/multilinear.hpp"
#include "bnn/network.hpp"
#include "bnn/rng.hpp"

namespace bnn {

namespace detail {

inline void require_positive(double v, const char* name) {
  if (!(v > 0.0)) throw DimensionError(std::string(name) + " must be positive");
}

inline void require_nonnegative(double v, const char* name) {
  if (!(v >= 0.0)) throw DimensionError(std::string(name) + " must be non-negative");
}

}  // namespace detail

// All logarithms are natural.

/// Third-order remainder bound for the single-bottleneck network on the
/// ball of radius R.
inline double bound_R3(double m, double r, double d, double R, double xnorm) {
  detail::require_positive(m, "m");
  detail::require_positive(r, "r");
  detail::require_positive(d, "d");
  detail::require_nonnegative(R, "R");
  detail::require_nonnegative(xnorm, "xnorm");
  return (8.0 * std::sqrt(m) + 2.0 * std::sqrt(r) + std::sqrt(d) + 1.0 + 4.0 * R) * xnorm * R * R * R /
         (m * std::sqrt(r * d));
}

/// Within-block Hessian norm bound 2(sqrt6 + sqrt d) |x| log m / sqrt(m d).
inline double bound_hessian_offdiag(double m, double d, double xnorm) {
  detail::require_positive(m, "m");
  detail::require_positive(d, "d");
  detail::require_nonnegative(xnorm, "xnorm");
  return 2.0 * (std::sqrt(6.0) + std::sqrt(d)) * xnorm * std::log(m) / std::sqrt(m * d);
}

/// Cross-block Hessian lower bound |x| / (24 sqrt(r d)).
inline double bound_H_lower(double r, double d, double xnorm) {
  detail::require_positive(r, "r");
  detail::require_positive(d, "d");
  detail::require_nonnegative(xnorm, "xnorm");
  return xnorm / (24.0 * std::sqrt(r * d));
}

/// (B+1)-th derivative bound (3 + R/sqrt m)^B |x| / (sqrt(prod d_b) sqrt m);
/// `bottlenecks` holds d_1..d_{B-1}.
inline double bound_deriv_Bplus1(double m, double R, int B, std::span<const double> bottlenecks, double xnorm) {
  detail::require_positive(m, "m");
  detail::require_nonnegative(R, "R");
  detail::require_nonnegative(xnorm, "xnorm");
  if (B < 1) throw DimensionError("B must be >= 1");
  if (static_cast<int>(bottlenecks.size()) != B - 1) throw DimensionError("expected B-1 bottleneck widths");
  double prod = 1.0;
  for (double d : bottlenecks) {
    detail::require_positive(d, "bottleneck width");
    prod *= d;
  }
  return std::pow(3.0 + R / std::sqrt(m), B) * xnorm / (std::sqrt(prod) * std::sqrt(m));
}

/// B-th derivative lower bound 2 |x| prod_b 1 / (2^{L_b/2} sqrt d_{b-1});
/// `inputs` holds d_0..d_{B-1}.
inline double bound_deriv_B_lower(int B, std::span<const int> depths, std::span<const double> inputs, double xnorm) {
  detail::require_nonnegative(xnorm, "xnorm");
  if (B < 1) throw DimensionError("B must be >= 1");
  if (static_cast<int>(depths.size()) != B || static_cast<int>(inputs.size()) != B) {
    throw DimensionError("expected B depths and B input widths");
  }
  double v = 2.0 * xnorm;
  for (int b = 0; b < B; ++b) {
    detail::require_positive(inputs[static_cast<std::size_t>(b)], "width");
    v /= std::pow(2.0, depths[static_cast<std::size_t>(b)] / 2.0) * std::sqrt(inputs[static_cast<std::size_t>(b)]);
  }
  return v;
}

/// WNN output bound (sqrt6/2 + R/sqrt m)^L log m sqrt c |x| / sqrt d.
inline double bound_wnn_output(int L, double m, double R, double c, double d, double xnorm) {
  detail::require_positive(m, "m");
  detail::require_positive(d, "d");
  detail::require_nonnegative(c, "c");
  detail::require_nonnegative(R, "R");
  detail::require_nonnegative(xnorm, "xnorm");
  if (L < 1) throw DimensionError("L must be >= 1");
  return std::pow(std::sqrt(6.0) / 2.0 + R / std::sqrt(m), L) * std::log(m) * std::sqrt(c) * xnorm / std::sqrt(d);
}

/// p-th derivative of an L-layer WNN: (3 sqrt m + R)^{L-p} |x| / (m^{(L-1)/2} sqrt d).
inline double bound_p_derivative(int L, int p, double m, double R, double d, double xnorm) {
  detail::require_positive(m, "m");
  detail::require_positive(d, "d");
  detail::require_nonnegative(R, "R");
  detail::require_nonnegative(xnorm, "xnorm");
  if (p < 1 || p > L) throw DimensionError("need 0 < p <= L");
  return std::pow(3.0 * std::sqrt(m) + R, L - p) * xnorm / (std::pow(m, (L - 1) / 2.0) * std::sqrt(d));
}

/// Lower bound sqrt m / (2^{L_b/2} sqrt d_{b-1}) on |u_{b,init}|.
inline double bound_u_b_lower(double m, int L_b, double d_prev) {
  detail::require_positive(m, "m");
  detail::require_positive(d_prev, "d_prev");
  if (L_b < 0) throw DimensionError("L_b must be >= 0");
  return std::sqrt(m) / (std::pow(2.0, L_b / 2.0) * std::sqrt(d_prev));
}

enum class BoundKind { upper, lower };

/// A theoretical value paired with the empirical quantity it controls.
struct BoundReport {
  std::string bound_name;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  double theoretical = 0.0;
  double empirical = 0.0;
  BoundKind kind = BoundKind::upper;
  bool satisfied = false;
  std::uint64_t seed = 0;

  static BoundReport make(std::string name, BoundKind kind, double theoretical, double empirical,
                          nlohmann::ordered_json params, std::uint64_t seed) {
    BoundReport r;
    r.bound_name = std::move(name);
    r.kind = kind;
    r.theoretical = theoretical;
    r.empirical = empirical;
    r.params = std::move(params);
    r.seed = seed;
    r.satisfied = kind == BoundKind::upper ? empirical <= theoretical : empirical >= theoretical;
    return r;
  }

  nlohmann::ordered_json to_json() const {
    return {{"bound_name", bound_name},
            {"params", params},
            {"theoretical", theoretical},
            {"empirical", empirical},
            {"kind", kind == BoundKind::upper ? "upper" : "lower"},
            {"satisfied", satisfied},
            {"seed", seed}};
  }
};

/// Names accepted by the bound suite, in report order.
inline const std::vector<std::string>& bound_names() {
  static const std::vector<std::string> names = {
      "R3",          "hessian_offdiag", "H_lower",    "deriv_Bplus1",  "deriv_B_lower", "wnn_output",
      "p_derivative", "u_b_lower",      "tail_gaussian", "tail_chi2",  "tail_matrix"};
  return names;
}

/// |u_{b,init}| for every block, u_b = (scaled product of the first L_b - 1
/// layers of block b) e_1.
inline std::vector<double> u_b_norms(const WeightSet& w0) {
  const NetworkSpec& spec = w0.spec();
  const auto view = w0.view();
  std::vector<double> out;
  for (int b = 0; b < spec.blocks(); ++b) {
    Vector e = Vector::Zero(spec.widths()[static_cast<std::size_t>(b)]);
    e[0] = 1.0;
    out.push_back(detail::col_through(spec, view, spec.block_begin(b), spec.block_end(b) - 1, e).norm());
  }
  return out;
}

struct Theorem1Witness {
  BlockTangent u1;                   // block-1 part (row 0 of W_1^(2) slot)
  BlockTangent v2;                   // block-2 part (W_2^(2) slot)
  double rayleigh = 0.0;             // <u1, H v2> through the operator
  std::optional<double> closed_form;  // exact when x is a multiple of e_1
};

namespace detail {

inline bool aligned_with_e1(const InputVector& x) {
  for (Index i = 1; i < x.size(); ++i) {
    if (x.values()[i] != 0.0) return false;
  }
  return true;
}

}  // namespace detail

/// Unit witness for the cross Hessian of the single-bottleneck network:
/// the W_1^(2) slot gets row 0 = a^T / N, the W_2^(2) slot gets b^T / N with
/// a = W_1^(1) e_1, b = W_2^(1) e_1, N^2 = |a|^2 + |b|^2.
inline Theorem1Witness witness_vector_theorem1(const WeightSet& w0, const InputVector& x) {
  const NetworkSpec& spec = w0.spec();
  if (!is_single_bottleneck(spec)) throw UnsupportedError("witness needs B=2, L=(2,2), k=1, identity");
  detail::check_input(spec, x);
  const Vector a = w0.at(0, 0).col(0);
  const Vector b = w0.at(1, 0).col(0);
  const double n2 = a.squaredNorm() + b.squaredNorm();
  const double n = std::sqrt(n2);

  Theorem1Witness out;
  out.u1 = {Matrix::Zero(spec.rows(0), spec.cols(0)), Matrix::Zero(spec.rows(1), spec.cols(1))};
  out.v2 = {Matrix::Zero(spec.rows(2), spec.cols(2)), Matrix::Zero(spec.rows(3), spec.cols(3))};
  if (n > 0.0) {
    out.u1[1].row(0) = a.transpose() / n;
    out.v2[1].row(0) = b.transpose() / n;
  }
  const CrossHessian h(w0, x);
  out.rayleigh = h.bilinear(out.u1, out.v2);
  if (detail::aligned_with_e1(x)) {
    const double m = static_cast<double>(spec.hidden());
    const double d = static_cast<double>(spec.widths()[0]);
    const double r = static_cast<double>(spec.widths()[1]);
    out.closed_form = n2 > 0.0 ? x.values()[0] * a.squaredNorm() * b.squaredNorm() / (n2 * m * std::sqrt(r * d)) : 0.0;
  }
  return out;
}

struct TheoremBWitness {
  std::vector<Direction> directions;  // v_1..v_B, each a unit tangent
  double contraction = 0.0;           // <d^B g, (v_1..v_B)> by substitution
  std::optional<double> closed_form;  // exact when x is a multiple of e_1
  std::vector<double> u_norms;
};

/// Witness for the B-th derivative: v_b has row 0 of the last slot of block
/// b equal to u_{b,init}^T / |u_{b,init}| and is zero elsewhere. For x
/// parallel to e_1 the contraction is x_1 prod_b s_b |u_{b,init}|, s_b the
/// scaling of the last layer of block b.
inline TheoremBWitness witness_direction_theoremB(const WeightSet& w0, const InputVector& x) {
  const NetworkSpec& spec = w0.spec();
  detail::require_identity(spec, "theorem B witness");
  detail::require_scalar(spec, "theorem B witness");
  detail::check_input(spec, x);
  const auto view = w0.view();
  TheoremBWitness out;
  std::vector<Matrix> repl;
  double closed = 1.0;
  for (int b = 0; b < spec.blocks(); ++b) {
    const int last = spec.block_end(b) - 1;
    Vector e = Vector::Zero(spec.widths()[static_cast<std::size_t>(b)]);
    e[0] = 1.0;
    const Vector u = detail::col_through(spec, view, spec.block_begin(b), last, e);
    const double un = u.norm();
    out.u_norms.push_back(un);
    Matrix v = Matrix::Zero(spec.rows(last), spec.cols(last));
    if (un > 0.0) v.row(0) = u.transpose() / un;
    repl.push_back(v);
    out.directions.push_back(Direction::zero(spec).with_slot(last, v));
    closed *= spec.scale(last) * un;
  }
  auto sub = view;
  for (int b = 0; b < spec.blocks(); ++b) {
    sub[static_cast<std::size_t>(spec.block_end(b) - 1)] = &repl[static_cast<std::size_t>(b)];
  }
  out.contraction = detail::chain_apply(spec, sub, x.values(), Activation::identity)[0];
  if (detail::aligned_with_e1(x)) out.closed_form = x.values()[0] * closed;
  return out;
}

enum class TailKind { gaussian, chi2, matrix };

inline std::string to_string(TailKind k) {
  switch (k) {
    case TailKind::gaussian: return "gaussian";
    case TailKind::chi2: return "chi2";
    case TailKind::matrix: return "matrix";
  }
  return "?";
}

inline TailKind parse_tail_kind(std::string_view s) {
  if (s == "gaussian") return TailKind::gaussian;
  if (s == "chi2") return TailKind::chi2;
  if (s == "matrix") return TailKind::matrix;
  throw ConfigError("unknown tail kind '" + std::string(s) + "'");
}

/// gaussian: X ~ N(0, sigma^2), event |X| >= t, bound 2 exp(-t^2 / 2 sigma^2).
/// chi2: Q ~ chi^2_m, event |Q/m - 1| >= t, bound 2 exp(-m t^2 / 8).
/// matrix: A rows x cols standard normal, event |A|_2 > sqrt(rows) +
/// sqrt(cols) + t, bound 2 exp(-t^2 / 2).
struct TailParams {
  TailKind kind = TailKind::gaussian;
  double t = 1.0;
  double sigma = 1.0;
  int dof = 64;
  int rows = 256;
  int cols = 64;
};

struct TailResult {
  TailParams params;
  long trials = 0;
  long violations = 0;
  double empirical = 0.0;
  double bound = 0.0;
  double standard_error = 0.0;
  bool satisfied = false;
};

inline double tail_bound_value(const TailParams& p) {
  switch (p.kind) {
    case TailKind::gaussian: return 2.0 * std::exp(-p.t * p.t / (2.0 * p.sigma * p.sigma));
    case TailKind::chi2: return 2.0 * std::exp(-p.dof * p.t * p.t / 8.0);
    case TailKind::matrix: return 2.0 * std::exp(-p.t * p.t / 2.0);
  }
  return 0.0;
}

/// Monte Carlo frequency of the tail event; satisfied iff it does not exceed
/// the bound by more than 3 binomial standard errors.
inline TailResult tail_bound_check(const TailParams& p, long trials, std::uint64_t seed) {
  if (trials < 1) throw Error("trials must be >= 1");
  if (!(p.t >= 0.0)) throw Error("t must be >= 0");
  if (p.kind == TailKind::gaussian && !(p.sigma > 0.0)) throw Error("sigma must be positive");
  if (p.kind == TailKind::chi2 && p.dof < 1) throw Error("dof must be >= 1");
  if (p.kind == TailKind::matrix && (p.rows < 1 || p.cols < 1)) throw Error("matrix shape must be positive");
  TailResult out;
  out.params = p;
  out.trials = trials;
  for (long i = 0; i < trials; ++i) {
    NormalStream rng(derive_seed(seed, {static_cast<std::uint64_t>(StreamTag::trial),
                                        static_cast<std::uint64_t>(p.kind), static_cast<std::uint64_t>(i)}));
    bool hit = false;
    switch (p.kind) {
      case TailKind::gaussian:
        hit = std::abs(p.sigma * rng()) >= p.t;
        break;
      case TailKind::chi2: {
        double q = 0.0;
        for (int k = 0; k < p.dof; ++k) {
          const double z = rng();
          q += z * z;
        }
        hit = std::abs(q / p.dof - 1.0) >= p.t;
        break;
      }
      case TailKind::matrix: {
        const Matrix a = rng.matrix(p.rows, p.cols);
        const Eigen::MatrixXd gram = a.cols() <= a.rows() ? Eigen::MatrixXd(a.transpose() * a)
                                                           : Eigen::MatrixXd(a * a.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
        const double norm = std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
        hit = norm > std::sqrt(static_cast<double>(p.rows)) + std::sqrt(static_cast<double>(p.cols)) + p.t;
        break;
      }
    }
    if (hit) ++out.violations;
  }
  out.empirical = static_cast<double>(out.violations) / static_cast<double>(trials);
  out.bound = tail_bound_value(p);
  out.standard_error = std::sqrt(out.empirical * (1.0 - out.empirical) / static_cast<double>(trials));
  out.satisfied = out.empirical <= out.bound + 3.0 * out.standard_error;
  return out;
}

inline BoundReport to_report(const TailResult& r, std::uint64_t seed) {
  nlohmann::ordered_json params = {{"kind", to_string(r.params.kind)}, {"t", r.params.t}, {"trials", r.trials}};
  switch (r.params.kind) {
    case TailKind::gaussian: params["sigma"] = r.params.sigma; break;
    case TailKind::chi2: params["dof"] = r.params.dof; break;
    case TailKind::matrix:
      params["rows"] = r.params.rows;
      params["cols"] = r.params.cols;
      break;
  }
  params["stderr"] = r.standard_error;
  BoundReport rep = BoundReport::make("tail_" + to_string(r.params.kind), BoundKind::upper,
                                      r.bound + 3.0 * r.standard_error, r.empirical, std::move(params), seed);
  return rep;
}

}  // namespace bnn

#endif  // BNN_BOUNDS_HPP
