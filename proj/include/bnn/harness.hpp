#ifndef BNN_HARNESS_HPP
#define BNN_HARNESS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bnn/bounds.hpp"
#include "bnn/core.hpp"
#include "bnn/multilinear.hpp"
#include "bnn/network.hpp"
#include "bnn/parallel.hpp"
#include "bnn/rng.hpp"
#include "bnn/stats.hpp"
#include "bnn/tensor.hpp"

namespace bnn {

using Json = nlohmann::ordered_json;

/// Architecture minus the hidden width, which the experiments vary.
struct NetworkTemplate {
  std::vector<int> depths{2, 2};
  std::vector<Index> dims{2, 1, 1};  // d_0..d_B
  Activation activation = Activation::identity;

  NetworkSpec spec(Index m) const { return NetworkSpec(depths, dims, m, activation); }
  NetworkSpec spec(Index m, Activation a) const { return NetworkSpec(depths, dims, m, a); }
  bool single_bottleneck() const {
    return depths == std::vector<int>{2, 2} && dims.size() == 3 && dims[2] == 1;
  }
  Json to_json() const { return {{"depths", depths}, {"dims", dims}, {"activation", to_string(activation)}}; }
};

enum class InputKind { e1, ones, gaussian };

inline std::string to_string(InputKind k) {
  switch (k) {
    case InputKind::e1: return "e1";
    case InputKind::ones: return "ones";
    case InputKind::gaussian: return "gaussian";
  }
  return "?";
}

inline InputKind parse_input_kind(std::string_view s) {
  if (s == "e1") return InputKind::e1;
  if (s == "ones") return InputKind::ones;
  if (s == "gaussian") return InputKind::gaussian;
  throw ConfigError("unknown input kind '" + std::string(s) + "'");
}

/// x = scale * (e_1 | normalized all-ones | seeded random unit vector).
struct InputConfig {
  InputKind kind = InputKind::e1;
  double scale = 1.0;
  std::uint64_t seed = 1;

  InputVector make(Index d) const {
    switch (kind) {
      case InputKind::e1: return InputVector::basis(d, 0, scale);
      case InputKind::ones: return InputVector(Vector::Constant(d, scale / std::sqrt(static_cast<double>(d))));
      case InputKind::gaussian: {
        NormalStream rng(derive_seed(seed, {0x78}));
        return InputVector(scale * rng.unit_vector(d));
      }
    }
    throw ConfigError("bad input kind");
  }
  Json to_json() const { return {{"kind", to_string(kind)}, {"scale", scale}, {"seed", seed}}; }
};

enum class DirectionMode { gaussian, ascent };

inline std::string to_string(DirectionMode d) { return d == DirectionMode::gaussian ? "gaussian" : "ascent"; }

inline DirectionMode parse_direction_mode(std::string_view s) {
  if (s == "gaussian") return DirectionMode::gaussian;
  if (s == "ascent") return DirectionMode::ascent;
  throw ConfigError("unknown direction mode '" + std::string(s) + "'");
}

inline void check_widths(const std::vector<Index>& widths, const char* section) {
  if (widths.empty()) throw ConfigError(std::string(section) + ".widths must not be empty");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1) throw ConfigError(std::string(section) + ".widths must be positive");
    if (i > 0 && widths[i] <= widths[i - 1]) {
      throw ConfigError(std::string(section) + ".widths must be strictly increasing");
    }
  }
}

// ---------------------------------------------------------------- sweep

struct SweepConfig {
  NetworkTemplate network;
  InputConfig input;
  std::vector<Index> widths{64, 128, 256, 512, 1024, 2048, 4096};
  int seeds = 8;
  int directions = 4;
  double radius = 1.0;
  int jet_degree = -1;  // -1: the block count B
  int t_points = 41;
  double t_max = 1.0;
  DirectionMode direction_mode = DirectionMode::ascent;
  int ascent_sweeps = 4;
  double slope_min = -0.65;
  double slope_max = -0.35;
  std::string slope_statistic = "max";
  double bound_rate = 0.95;
  Index bound_min_width = 256;
  std::uint64_t master_seed = 20240901;
  int jobs = 1;

  int degree() const { return jet_degree < 0 ? static_cast<int>(network.depths.size()) : jet_degree; }

  void validate() const {
    network.spec(1);
    if (network.activation != Activation::identity) throw ConfigError("sweep requires the identity activation");
    if (network.dims.back() != 1) throw ConfigError("sweep requires output dimension 1");
    check_widths(widths, "sweep");
    if (widths.size() < 4) throw ConfigError("sweep.widths needs at least 4 values for the slope fit");
    if (seeds < 1) throw ConfigError("sweep.seeds must be >= 1");
    if (directions < 1) throw ConfigError("sweep.directions must be >= 1");
    if (!(radius >= 0.0)) throw ConfigError("sweep.radius must be >= 0");
    if (t_points < 2) throw ConfigError("sweep.t_points must be >= 2");
    if (!(t_max > 0.0)) throw ConfigError("sweep.t_max must be positive");
    if (ascent_sweeps < 0) throw ConfigError("sweep.ascent_sweeps must be >= 0");
    if (!(slope_min < slope_max)) throw ConfigError("sweep.slope_min must be below sweep.slope_max");
    if (slope_statistic != "max" && slope_statistic != "median") {
      throw ConfigError("sweep.slope_statistic must be max or median");
    }
    if (!(bound_rate > 0.0 && bound_rate <= 1.0)) throw ConfigError("sweep.bound_rate must lie in (0, 1]");
  }

  Json to_json() const {
    return {{"network", network.to_json()},
            {"input", input.to_json()},
            {"sweep",
             {{"widths", widths},
              {"seeds", seeds},
              {"directions", directions},
              {"radius", radius},
              {"jet_degree", jet_degree},
              {"t_points", t_points},
              {"t_max", t_max},
              {"direction_mode", to_string(direction_mode)},
              {"ascent_sweeps", ascent_sweeps},
              {"slope_min", slope_min},
              {"slope_max", slope_max},
              {"slope_statistic", slope_statistic},
              {"bound_rate", bound_rate},
              {"bound_min_width", bound_min_width}}},
            {"run", {{"seed", master_seed}}}};
  }
};

struct SweepRecord {
  Index m = 0;
  int seed = 0;
  int direction = 0;
  double max_residual_jet = 0.0;
  double max_residual_surrogate = 0.0;
  double max_surrogate_gap = 0.0;  // max_t |surrogate - 2-jet|, two-block networks
};

struct SweepAggregate {
  Index m = 0;
  double max = 0.0;
  double median = 0.0;
  double surrogate_max = 0.0;
  double surrogate_median = 0.0;
};

struct SweepReport {
  SweepConfig config;
  std::vector<SweepRecord> records;
  std::vector<SweepAggregate> per_m;
  std::optional<LineFit> slope;
  bool slope_in_band = false;
  int monotone_inversions = 0;
  std::vector<BoundReport> bounds;

  bool passed() const {
    if (!slope_in_band) return false;
    return std::all_of(bounds.begin(), bounds.end(), [](const BoundReport& b) { return b.satisfied; });
  }
};

inline std::uint64_t record_weight_seed(std::uint64_t master, Index m, int seed) {
  return derive_seed(master, {static_cast<std::uint64_t>(StreamTag::record), static_cast<std::uint64_t>(m),
                              static_cast<std::uint64_t>(seed)});
}

inline std::uint64_t record_direction_seed(std::uint64_t master, Index m, int seed, int direction) {
  return derive_seed(master, {static_cast<std::uint64_t>(StreamTag::direction), static_cast<std::uint64_t>(m),
                              static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(direction)});
}

/// Boundary direction used by the sweep: a Gaussian matrix per slot, or
/// (ascent mode) a rank-one start refined by remainder ascent so the grid
/// maximum tracks the supremum over the ball more closely.
inline Direction sweep_direction(const WeightSet& w, const InputVector& x, const SweepConfig& cfg, int seed,
                                 int dir) {
  const NetworkSpec& spec = w.spec();
  const std::uint64_t dseed = record_direction_seed(cfg.master_seed, spec.hidden(), seed, dir);
  if (cfg.direction_mode == DirectionMode::ascent && cfg.radius > 0.0) {
    return ascend_remainder_factored(w, x, cfg.degree(), cfg.ascent_sweeps, cfg.radius, dseed);
  }
  return sample_direction(spec, dseed, cfg.radius);
}

inline std::vector<SweepRecord> sweep_item(const SweepConfig& cfg, Index m, int seed) {
  const NetworkSpec spec = cfg.network.spec(m);
  const InputVector x = cfg.input.make(spec.input_dim());
  const WeightSet w = init_weights(spec, record_weight_seed(cfg.master_seed, m, seed));
  const std::vector<double> ts = linspace(-cfg.t_max, cfg.t_max, cfg.t_points);
  const int n = cfg.degree();
  std::vector<SweepRecord> out;
  for (int dir = 0; dir < cfg.directions; ++dir) {
    const Direction delta = sweep_direction(w, x, cfg, seed, dir);
    const PolyCurve curve = poly_expand(w, delta, x);
    const PolyCurve multi = poly_expand_multilinear(w, delta, x);
    const Matrix fwd = forward_line_batch(w, delta, ts, x);
    SweepRecord rec{m, seed, dir, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const double f = fwd(0, static_cast<Index>(i));
      rec.max_residual_jet = std::max(rec.max_residual_jet, std::abs(f - curve.jet(ts[i], n)));
      rec.max_residual_surrogate = std::max(rec.max_residual_surrogate, std::abs(f - multi(ts[i])));
      if (spec.blocks() == 2) {
        rec.max_surrogate_gap = std::max(rec.max_surrogate_gap, std::abs(multi(ts[i]) - curve.jet(ts[i], 2)));
      }
    }
    out.push_back(rec);
  }
  return out;
}

inline std::size_t within_block_pairs(const NetworkSpec& spec) {
  std::size_t n = 0;
  for (int b = 0; b < spec.blocks(); ++b) n += static_cast<std::size_t>(spec.depth(b) * (spec.depth(b) - 1) / 2);
  return n;
}

/// Aggregates a list of per-seed values against a fixed theoretical value.
/// The reported empirical value is the order statistic matching the
/// required rate, so `satisfied` agrees with "empirical within bound".
inline BoundReport aggregate_bound(const std::string& name, BoundKind kind, double theoretical,
                                   const std::vector<double>& values, double rate, Json params, std::uint64_t seed,
                                   double rel_slack = 1e-9) {
  if (values.empty()) throw Error("no samples for bound " + name);
  std::vector<bool> ok;
  ok.reserve(values.size());
  for (double v : values) {
    ok.push_back(kind == BoundKind::upper ? v <= theoretical * (1.0 + rel_slack) : v >= theoretical);
  }
  const double hits = static_cast<double>(std::count(ok.begin(), ok.end(), true));
  const double achieved = hits / static_cast<double>(values.size());
  double emp;
  double worst;
  if (kind == BoundKind::upper) {
    emp = order_statistic(values, rate);
    worst = *std::max_element(values.begin(), values.end());
  } else {
    std::vector<double> neg;
    for (double v : values) neg.push_back(-v);
    emp = -order_statistic(neg, rate);
    worst = *std::min_element(values.begin(), values.end());
  }
  params["samples"] = values.size();
  params["required_rate"] = rate;
  params["pass_rate"] = achieved;
  params["worst"] = worst;
  BoundReport r = BoundReport::make(name, kind, theoretical, emp, std::move(params), seed);
  r.satisfied = achieved >= rate;
  return r;
}

inline SweepReport run_width_sweep(const SweepConfig& cfg) {
  cfg.validate();
  SweepReport rep;
  rep.config = cfg;
  struct Item {
    Index m;
    int seed;
  };
  std::vector<Item> items;
  for (Index m : cfg.widths) {
    for (int s = 0; s < cfg.seeds; ++s) items.push_back({m, s});
  }
  std::vector<std::vector<SweepRecord>> results(items.size());
  parallel_for(items.size(), cfg.jobs, [&](std::size_t i) { results[i] = sweep_item(cfg, items[i].m, items[i].seed); });
  for (auto& r : results) rep.records.insert(rep.records.end(), r.begin(), r.end());

  const NetworkSpec proto = cfg.network.spec(cfg.widths.front());
  const double xnorm = cfg.input.make(proto.input_dim()).norm();
  std::vector<double> logm, logr;
  bool positive = true;
  for (Index m : cfg.widths) {
    std::vector<double> jet, sur, gap;
    std::map<int, double> per_seed;
    for (const auto& r : rep.records) {
      if (r.m != m) continue;
      jet.push_back(r.max_residual_jet);
      sur.push_back(r.max_residual_surrogate);
      gap.push_back(r.max_surrogate_gap);
      per_seed[r.seed] = std::max(per_seed[r.seed], r.max_residual_jet);
    }
    SweepAggregate a{m, *std::max_element(jet.begin(), jet.end()), median(jet),
                     *std::max_element(sur.begin(), sur.end()), median(sur)};
    rep.per_m.push_back(a);
    const double stat = cfg.slope_statistic == "max" ? a.max : a.median;
    if (!(stat > 0.0)) positive = false;
    logm.push_back(std::log(static_cast<double>(m)));
    logr.push_back(std::log(stat));

    const NetworkSpec spec = cfg.network.spec(m);
    std::vector<double> seed_max;
    for (const auto& [s, v] : per_seed) seed_max.push_back(v);
    const double fm = static_cast<double>(m);
    if (cfg.network.single_bottleneck() && cfg.degree() == 2 && m >= cfg.bound_min_width) {
      const double d = static_cast<double>(cfg.network.dims[0]);
      const double r = static_cast<double>(cfg.network.dims[1]);
      rep.bounds.push_back(aggregate_bound("R3", BoundKind::upper, bound_R3(fm, r, d, cfg.radius, xnorm), seed_max,
                                           cfg.bound_rate,
                                           {{"m", m}, {"r", r}, {"d", d}, {"R", cfg.radius}, {"xnorm", xnorm}},
                                           cfg.master_seed));
    }
    if (spec.blocks() == 2) {
      const double d = static_cast<double>(cfg.network.dims[0]);
      const double pairs = static_cast<double>(within_block_pairs(spec));
      const double theory = bound_hessian_offdiag(fm, d, xnorm) * cfg.radius * cfg.radius * pairs;
      rep.bounds.push_back(aggregate_bound("surrogate_jet_gap", BoundKind::upper, theory, gap, 0.90,
                                           {{"m", m}, {"d", d}, {"R", cfg.radius}, {"xnorm", xnorm},
                                            {"within_block_pairs", pairs}},
                                           cfg.master_seed));
    }
  }
  for (std::size_t i = 1; i < rep.per_m.size(); ++i) {
    if (rep.per_m[i].median > rep.per_m[i - 1].median) ++rep.monotone_inversions;
  }
  if (positive) {
    rep.slope = fit_line(logm, logr);
    rep.slope_in_band = rep.slope->slope >= cfg.slope_min && rep.slope->slope <= cfg.slope_max;
  }
  return rep;
}

// ---------------------------------------------------------------- curves

struct PerturbConfig {
  NetworkTemplate network;
  InputConfig input;
  Index width = 4096;
  int seeds = 20;
  int directions = 5;
  double radius = 1.0;
  double alpha = 0.75;
  double t_min = -3.0;
  double t_max = 3.0;
  int t_points = 61;
  int jet_degree = -1;  // -1: no jet curves
  double quartic_tol = 0.05;
  double tanh_ratio = 10.0;
  double affine_tol = 1e-10;
  std::uint64_t master_seed = 20240901;
  int jobs = 1;

  void validate() const {
    network.spec(1);
    if (network.dims.back() != 1) throw ConfigError("perturb requires output dimension 1");
    if (width < 1) throw ConfigError("perturb.width must be positive");
    if (seeds < 1) throw ConfigError("perturb.seeds must be >= 1");
    if (directions < 1) throw ConfigError("perturb.directions must be >= 1");
    if (!(radius >= 0.0)) throw ConfigError("perturb.radius must be >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("perturb.alpha must lie in [0, 1]");
    if (t_points < 2) throw ConfigError("perturb.t_points must be >= 2");
    if (!(t_min < t_max)) throw ConfigError("perturb.t_min must be below perturb.t_max");
    if (jet_degree >= 0 && network.activation != Activation::identity) {
      throw ConfigError("jet curves need the identity activation");
    }
  }

  Json to_json() const {
    return {{"network", network.to_json()},
            {"input", input.to_json()},
            {"perturb",
             {{"width", width},
              {"seeds", seeds},
              {"directions", directions},
              {"radius", radius},
              {"alpha", alpha},
              {"t_min", t_min},
              {"t_max", t_max},
              {"t_points", t_points},
              {"jet_degree", jet_degree},
              {"quartic_tol", quartic_tol},
              {"tanh_ratio", tanh_ratio},
              {"affine_tol", affine_tol}}},
            {"run", {{"seed", master_seed}}}};
  }
};

/// Direction whose slot s is radius * normalize(sqrt(alpha) sigma G_s +
/// sqrt(1 - alpha) xi_s): G_s the normalized slot gradient of the identity
/// network at w0, sigma one random sign for the whole direction, xi_s a
/// random unit matrix.
inline Direction signal_aligned_direction(const WeightSet& w0, const InputVector& x, std::uint64_t seed,
                                          double radius, double alpha) {
  const WeightSet lin = w0.with_activation(Activation::identity);
  const NetworkSpec& spec = lin.spec();
  const auto grads = slot_gradients(lin, x);
  const double sign = NormalStream(derive_seed(seed, {0x5167})).uniform() < 0.5 ? -1.0 : 1.0;
  std::vector<Matrix> mats;
  for (int s = 0; s < spec.slot_count(); ++s) {
    NormalStream rng(slot_stream_seed(seed, StreamTag::direction, spec.slot(s)));
    Matrix xi = rng.matrix(spec.rows(s), spec.cols(s));
    xi /= xi.norm();
    Matrix v = std::sqrt(1.0 - alpha) * xi;
    const RankOneSlot& g = grads[static_cast<std::size_t>(s)];
    const double gn = g.norm();
    if (gn > 0.0) v += (sign * std::sqrt(alpha) / gn) * g.dense();
    const double vn = v.norm();
    mats.push_back(vn > 0.0 ? Matrix(v * (radius / vn)) : Matrix(xi * radius));
  }
  return Direction(w0.spec(), std::move(mats));
}

struct CurveRow {
  std::string curve_id;
  double t = 0.0;
  double value = 0.0;
  std::string activation;
  std::string support;
};

struct CurveSeedStats {
  int seed = 0;
  double tanh_quad_residual = 0.0;      // max over directions
  double identity_quad_residual = 0.0;  // max over directions
  double quad_ratio = 0.0;
  double max_quartic_ratio = 0.0;  // (sum_{k>2} |c_k|) / (sum_{k<=2} |c_k|)
  double max_affine_deviation = 0.0;  // block-supported surrogate curves, relative
  double max_block_curvature = 0.0;   // block-supported network curves, relative
};

struct PerturbReport {
  PerturbConfig config;
  std::vector<CurveRow> rows;
  std::vector<CurveSeedStats> stats;

  bool quartic_ok() const {
    return std::all_of(stats.begin(), stats.end(),
                       [&](const CurveSeedStats& s) { return s.max_quartic_ratio <= config.quartic_tol; });
  }
  bool affine_ok() const {
    return std::all_of(stats.begin(), stats.end(),
                       [&](const CurveSeedStats& s) { return s.max_affine_deviation < config.affine_tol; });
  }
  bool tanh_ok() const {
    return std::all_of(stats.begin(), stats.end(),
                       [&](const CurveSeedStats& s) { return s.quad_ratio > config.tanh_ratio; });
  }
  bool passed() const { return quartic_ok() && affine_ok() && tanh_ok(); }
};

inline std::string curve_id(const char* family, int seed, int dir) {
  return std::string(family) + "-s" + std::to_string(seed) + "-d" + std::to_string(dir);
}

inline std::pair<std::vector<CurveRow>, CurveSeedStats> perturb_item(const PerturbConfig& cfg, int seed) {
  const NetworkSpec spec = cfg.network.spec(cfg.width, Activation::identity);
  const InputVector x = cfg.input.make(spec.input_dim());
  const WeightSet w = init_weights(spec, record_weight_seed(cfg.master_seed, cfg.width, seed));
  const WeightSet wt = w.with_activation(Activation::tanh);
  const std::vector<double> ts = linspace(cfg.t_min, cfg.t_max, cfg.t_points);
  std::vector<CurveRow> rows;
  CurveSeedStats st;
  st.seed = seed;
  auto emit = [&](const std::string& id, const std::vector<double>& vals, const std::string& act,
                  const std::string& support) {
    for (std::size_t i = 0; i < ts.size(); ++i) rows.push_back({id, ts[i], vals[i], act, support});
  };
  auto row_values = [](const Matrix& m) {
    std::vector<double> v(static_cast<std::size_t>(m.cols()));
    for (Index i = 0; i < m.cols(); ++i) v[static_cast<std::size_t>(i)] = m(0, i);
    return v;
  };
  for (int dir = 0; dir < cfg.directions; ++dir) {
    const Direction delta = signal_aligned_direction(
        w, x, record_direction_seed(cfg.master_seed, cfg.width, seed, dir), cfg.radius, cfg.alpha);

    const auto tanh_vals = row_values(forward_line_batch(wt, delta.with_activation(Activation::tanh), ts, x));
    emit(curve_id("a", seed, dir), tanh_vals, "tanh", "full");
    st.tanh_quad_residual = std::max(st.tanh_quad_residual, polyfit_max_residual(ts, tanh_vals, 2));

    const auto id_vals = row_values(forward_line_batch(w, delta, ts, x));
    emit(curve_id("b", seed, dir), id_vals, "identity", "full");
    st.identity_quad_residual = std::max(st.identity_quad_residual, polyfit_max_residual(ts, id_vals, 2));
    const PolyCurve curve = poly_expand(w, delta, x);
    double low = 0.0, high = 0.0;
    for (int k = 0; k <= curve.degree(); ++k) (k <= 2 ? low : high) += std::abs(curve.coeff(k));
    st.max_quartic_ratio = std::max(st.max_quartic_ratio, low > 0.0 ? high / low : (high > 0.0 ? INFINITY : 0.0));
    if (cfg.jet_degree >= 0) {
      std::vector<double> jet;
      for (double t : ts) jet.push_back(curve.jet(t, cfg.jet_degree));
      emit(curve_id("jet", seed, dir), jet, "identity", "full");
    }

    // Block-supported lines: the network itself (curvature from the pairs
    // of slots inside the block) and the multilinear surrogate, which is
    // affine in each block.
    auto relative_chord = [&](const std::vector<double>& vals) {
      double scale = 0.0;
      for (double v : vals) scale = std::max(scale, std::abs(v));
      const double dev = chord_deviation(ts, vals);
      return scale > 0.0 ? dev / scale : dev;
    };
    for (int b = 0; b < spec.blocks(); ++b) {
      const Direction part = delta.restricted_to_block(b);
      const std::string family = b < 2 ? std::string(1, static_cast<char>('c' + b)) : "block" + std::to_string(b + 1);
      const std::string support = "block" + std::to_string(b + 1);
      const auto vals = row_values(forward_line_batch(w, part, ts, x));
      emit(curve_id(family.c_str(), seed, dir), vals, "identity", support);
      st.max_block_curvature = std::max(st.max_block_curvature, relative_chord(vals));

      const PolyCurve sur = poly_expand_multilinear(w, part, x);
      std::vector<double> sur_vals;
      for (double t : ts) sur_vals.push_back(sur(t));
      emit(curve_id((family + "s").c_str(), seed, dir), sur_vals, "identity", support);
      st.max_affine_deviation = std::max(st.max_affine_deviation, relative_chord(sur_vals));
    }
  }
  st.quad_ratio = st.identity_quad_residual > 0.0 ? st.tanh_quad_residual / st.identity_quad_residual : INFINITY;
  return {std::move(rows), st};
}

inline PerturbReport run_perturbation_curves(const PerturbConfig& cfg) {
  cfg.validate();
  PerturbReport rep;
  rep.config = cfg;
  std::vector<std::pair<std::vector<CurveRow>, CurveSeedStats>> results(static_cast<std::size_t>(cfg.seeds));
  parallel_for(results.size(), cfg.jobs, [&](std::size_t i) { results[i] = perturb_item(cfg, static_cast<int>(i)); });
  for (auto& [rows, st] : results) {
    rep.rows.insert(rep.rows.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
    rep.stats.push_back(st);
  }
  return rep;
}

// ---------------------------------------------------------------- Hessian

struct HessianConfig {
  NetworkTemplate network;
  InputConfig input;
  std::vector<Index> widths{512, 1024};
  int seeds = 200;
  int restarts = 4;
  int max_iters = 200;
  double tol = 1e-10;
  double within_rate = 0.90;
  double cross_rate = 0.95;
  std::uint64_t master_seed = 20240901;
  int jobs = 1;

  void validate() const {
    network.spec(1);
    if (network.activation != Activation::identity) throw ConfigError("hessian scan requires the identity activation");
    if (network.dims.back() != 1) throw ConfigError("hessian scan requires output dimension 1");
    check_widths(widths, "hessian");
    if (seeds < 1) throw ConfigError("hessian.seeds must be >= 1");
    if (restarts < 1 || max_iters < 1) throw ConfigError("hessian.restarts and hessian.max_iters must be >= 1");
    if (!(tol >= 0.0)) throw ConfigError("hessian.tol must be >= 0");
    if (!(within_rate > 0.0 && within_rate <= 1.0 && cross_rate > 0.0 && cross_rate <= 1.0)) {
      throw ConfigError("hessian rates must lie in (0, 1]");
    }
  }

  PowerOptions power(std::uint64_t seed) const { return {tol, max_iters, restarts, seed}; }

  Json to_json() const {
    return {{"network", network.to_json()},
            {"input", input.to_json()},
            {"hessian",
             {{"widths", widths},
              {"seeds", seeds},
              {"restarts", restarts},
              {"max_iters", max_iters},
              {"tol", tol},
              {"within_rate", within_rate},
              {"cross_rate", cross_rate}}},
            {"run", {{"seed", master_seed}}}};
  }
};

struct HessianRow {
  Index m = 0;
  int seed = 0;
  int slot_i = -1;  // -1/-1: the whole block-1 x block-2 operator
  int slot_j = -1;
  std::string kind;  // same | within | cross | cross_operator
  double estimate = 0.0;
  std::optional<double> closed_form;
  double bound = 0.0;
  bool satisfied = false;
};

struct HessianReport {
  HessianConfig config;
  std::vector<HessianRow> rows;
  std::vector<BoundReport> bounds;
  bool same_slot_zero = true;

  bool passed() const {
    return same_slot_zero &&
           std::all_of(bounds.begin(), bounds.end(), [](const BoundReport& b) { return b.satisfied; });
  }
};

inline Vector flatten_block(const BlockTangent& v) {
  Index n = 0;
  for (const auto& m : v) n += m.size();
  Vector out(n);
  Index off = 0;
  for (const auto& m : v) {
    out.segment(off, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    off += m.size();
  }
  return out;
}

inline BlockTangent unflatten_block(const NetworkSpec& spec, int b, const Vector& v) {
  BlockTangent out;
  Index off = 0;
  for (int s = spec.block_begin(b); s < spec.block_end(b); ++s) {
    out.emplace_back(Eigen::Map<const Matrix>(v.data() + off, spec.rows(s), spec.cols(s)));
    off += spec.rows(s) * spec.cols(s);
  }
  return out;
}

/// Spectral norm estimate of the cross-Hessian of a two-block network.
inline PowerResult cross_hessian_norm(const CrossHessian& h, const PowerOptions& opts) {
  const NetworkSpec& spec = h.base().spec();
  Index n1 = 0, n2 = 0;
  for (int s = spec.block_begin(0); s < spec.block_end(0); ++s) n1 += spec.rows(s) * spec.cols(s);
  for (int s = spec.block_begin(1); s < spec.block_end(1); ++s) n2 += spec.rows(s) * spec.cols(s);
  MultilinearOperator op;
  op.dims = {n1, n2};
  op.partial = [&](std::size_t which, const VectorTuple& v) -> Vector {
    if (which == 0) return flatten_block(h.apply(unflatten_block(spec, 1, v[1])));
    return flatten_block(h.apply_adjoint(unflatten_block(spec, 0, v[0])));
  };
  return spectral_norm_power(op, opts);
}

inline std::vector<HessianRow> hessian_item(const HessianConfig& cfg, Index m, int seed) {
  const NetworkSpec spec = cfg.network.spec(m);
  const InputVector x = cfg.input.make(spec.input_dim());
  const WeightSet w = init_weights(spec, record_weight_seed(cfg.master_seed, m, seed));
  const double d = static_cast<double>(spec.input_dim());
  const double within_bound = bound_hessian_offdiag(static_cast<double>(m), d, x.norm());
  std::vector<HessianRow> rows;
  const int p = spec.slot_count();
  for (int i = 0; i < p; ++i) {
    for (int j = i; j < p; ++j) {
      const auto opts = cfg.power(derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(StreamTag::restart),
                                                                static_cast<std::uint64_t>(m),
                                                                static_cast<std::uint64_t>(seed),
                                                                static_cast<std::uint64_t>(i * p + j)}));
      const BlockNormResult r = hessian_block_norm(w, x, spec.slot(i), spec.slot(j), opts);
      HessianRow row{m, seed, i, j, "", r.estimate, r.closed_form, 0.0, true};
      if (i == j) {
        row.kind = "same";
        row.satisfied = r.estimate == 0.0;
      } else if (spec.block_of(i) == spec.block_of(j)) {
        row.kind = "within";
        row.bound = within_bound;
        row.satisfied = r.estimate <= within_bound;
      } else {
        row.kind = "cross";
      }
      rows.push_back(row);
    }
  }
  if (spec.blocks() == 2) {
    const CrossHessian h(w, x);
    const auto opts = cfg.power(derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(StreamTag::restart),
                                                              static_cast<std::uint64_t>(m),
                                                              static_cast<std::uint64_t>(seed), 0xC0}));
    const PowerResult r = cross_hessian_norm(h, opts);
    const double r_dim = static_cast<double>(spec.widths()[1]);
    const double lower = bound_H_lower(r_dim, d, x.norm());
    rows.push_back({m, seed, -1, -1, "cross_operator", r.value, std::nullopt, lower, r.value >= lower});
  }
  return rows;
}

inline HessianReport run_hessian_scan(const HessianConfig& cfg) {
  cfg.validate();
  HessianReport rep;
  rep.config = cfg;
  struct Item {
    Index m;
    int seed;
  };
  std::vector<Item> items;
  for (Index m : cfg.widths) {
    for (int s = 0; s < cfg.seeds; ++s) items.push_back({m, s});
  }
  std::vector<std::vector<HessianRow>> results(items.size());
  parallel_for(items.size(), cfg.jobs,
               [&](std::size_t i) { results[i] = hessian_item(cfg, items[i].m, items[i].seed); });
  for (auto& r : results) rep.rows.insert(rep.rows.end(), r.begin(), r.end());

  const NetworkSpec proto = cfg.network.spec(cfg.widths.front());
  const double xnorm = cfg.input.make(proto.input_dim()).norm();
  const double d = static_cast<double>(proto.input_dim());
  for (Index m : cfg.widths) {
    std::map<int, double> within_max;
    std::vector<double> cross;
    for (const auto& r : rep.rows) {
      if (r.m != m) continue;
      if (r.kind == "same" && r.estimate != 0.0) rep.same_slot_zero = false;
      if (r.kind == "within") within_max[r.seed] = std::max(within_max[r.seed], r.estimate);
      if (r.kind == "cross_operator") cross.push_back(r.estimate);
    }
    const double fm = static_cast<double>(m);
    if (!within_max.empty()) {
      std::vector<double> v;
      for (const auto& [s, e] : within_max) v.push_back(e);
      rep.bounds.push_back(aggregate_bound("hessian_offdiag", BoundKind::upper, bound_hessian_offdiag(fm, d, xnorm),
                                           v, cfg.within_rate, {{"m", m}, {"d", d}, {"xnorm", xnorm}},
                                           cfg.master_seed, 0.0));
    }
    if (!cross.empty()) {
      const double r_dim = static_cast<double>(proto.widths()[1]);
      rep.bounds.push_back(aggregate_bound("H_lower", BoundKind::lower, bound_H_lower(r_dim, d, xnorm), cross,
                                           cfg.cross_rate, {{"m", m}, {"r", r_dim}, {"d", d}, {"xnorm", xnorm}},
                                           cfg.master_seed));
    }
  }
  return rep;
}

// ---------------------------------------------------------------- bound suite

struct TailConfig {
  long trials = 10000;
  double gaussian_sigma = 1.0;
  double gaussian_t = 2.0;
  int chi2_dof = 64;
  double chi2_t = 0.5;
  int matrix_rows = 256;
  int matrix_cols = 64;
  double matrix_t = 16.0;

  std::vector<TailParams> params() const {
    TailParams g{TailKind::gaussian, gaussian_t, gaussian_sigma, chi2_dof, matrix_rows, matrix_cols};
    TailParams c{TailKind::chi2, chi2_t, gaussian_sigma, chi2_dof, matrix_rows, matrix_cols};
    TailParams m{TailKind::matrix, matrix_t, gaussian_sigma, chi2_dof, matrix_rows, matrix_cols};
    return {g, c, m};
  }

  void validate() const {
    if (trials < 1) throw ConfigError("tails.trials must be >= 1");
    if (!(gaussian_sigma > 0.0)) throw ConfigError("tails.gaussian_sigma must be positive");
    if (!(gaussian_t >= 0.0 && chi2_t >= 0.0 && matrix_t >= 0.0)) throw ConfigError("tail thresholds must be >= 0");
    if (chi2_dof < 1 || matrix_rows < 1 || matrix_cols < 1) throw ConfigError("tail sizes must be positive");
  }

  Json to_json() const {
    return {{"trials", trials},         {"gaussian_sigma", gaussian_sigma}, {"gaussian_t", gaussian_t},
            {"chi2_dof", chi2_dof},     {"chi2_t", chi2_t},                 {"matrix_rows", matrix_rows},
            {"matrix_cols", matrix_cols}, {"matrix_t", matrix_t}};
  }
};

struct BoundSuiteConfig {
  NetworkTemplate network;
  InputConfig input;
  std::vector<Index> widths{256, 512};
  int seeds = 200;
  double radius = 1.0;
  int directions = 1;
  int ascent_sweeps = 4;
  int t_points = 41;
  double rate = 0.95;
  double hessian_rate = 0.90;
  double wnn_rate = 1.0;
  int restarts = 4;
  int max_iters = 200;
  std::vector<std::string> only;  // empty: every bound
  TailConfig tails;
  std::uint64_t master_seed = 20240901;
  int jobs = 1;

  bool wants(const std::string& name) const {
    return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
  }

  void validate() const {
    network.spec(1);
    if (network.activation != Activation::identity) throw ConfigError("bound suite requires the identity activation");
    if (network.dims.back() != 1) throw ConfigError("bound suite requires output dimension 1");
    check_widths(widths, "bounds");
    if (seeds < 1) throw ConfigError("bounds.seeds must be >= 1");
    if (directions < 1) throw ConfigError("bounds.directions must be >= 1");
    if (!(radius >= 0.0)) throw ConfigError("bounds.radius must be >= 0");
    if (t_points < 2) throw ConfigError("bounds.t_points must be >= 2");
    if (restarts < 1 || max_iters < 1) throw ConfigError("bounds.restarts and bounds.max_iters must be >= 1");
    for (double r : {rate, hessian_rate, wnn_rate}) {
      if (!(r > 0.0 && r <= 1.0)) throw ConfigError("bound rates must lie in (0, 1]");
    }
    for (const auto& n : only) {
      const auto& names = bound_names();
      if (std::find(names.begin(), names.end(), n) == names.end()) throw ConfigError("unknown bound '" + n + "'");
    }
    tails.validate();
  }

  Json to_json() const {
    return {{"network", network.to_json()},
            {"input", input.to_json()},
            {"bounds",
             {{"widths", widths},
              {"seeds", seeds},
              {"radius", radius},
              {"directions", directions},
              {"ascent_sweeps", ascent_sweeps},
              {"t_points", t_points},
              {"rate", rate},
              {"hessian_rate", hessian_rate},
              {"wnn_rate", wnn_rate},
              {"restarts", restarts},
              {"max_iters", max_iters},
              {"only", only}}},
            {"tails", tails.to_json()},
            {"run", {{"seed", master_seed}}}};
  }
};

/// One per-seed measurement of the bound suite.
struct BoundSample {
  std::string bound;  // name plus parameter tag, e.g. p_derivative[p=1]
  Index m = 0;
  int seed = 0;
  double theoretical = 0.0;
  double empirical = 0.0;
  BoundKind kind = BoundKind::upper;
};

struct BoundSuiteReport {
  BoundSuiteConfig config;
  std::vector<BoundSample> samples;
  std::vector<BoundReport> reports;

  bool passed() const {
    return !reports.empty() &&
           std::all_of(reports.begin(), reports.end(), [](const BoundReport& b) { return b.satisfied; });
  }
};

/// A single-block network made of block b of `w` (input d_{b}, output
/// d_{b+1}), sharing its matrices.
inline WeightSet block_network(const WeightSet& w, int b) {
  const NetworkSpec& spec = w.spec();
  NetworkSpec sub({spec.depth(b)},
                  {spec.widths()[static_cast<std::size_t>(b)], spec.widths()[static_cast<std::size_t>(b) + 1]},
                  spec.hidden(), spec.activation());
  std::vector<Matrix> mats;
  for (int s = spec.block_begin(b); s < spec.block_end(b); ++s) mats.push_back(w.slot(s));
  return WeightSet(sub, std::move(mats));
}

inline std::vector<BoundSample> bound_item(const BoundSuiteConfig& cfg, Index m, int seed) {
  const NetworkSpec spec = cfg.network.spec(m);
  const InputVector x = cfg.input.make(spec.input_dim());
  const WeightSet w = init_weights(spec, record_weight_seed(cfg.master_seed, m, seed));
  const double fm = static_cast<double>(m);
  const double xnorm = x.norm();
  const double d0 = static_cast<double>(spec.input_dim());
  const int B = spec.blocks();
  std::vector<BoundSample> out;
  auto add = [&](std::string name, double theory, double emp, BoundKind kind) {
    out.push_back({std::move(name), m, seed, theory, emp, kind});
  };
  auto power = [&](std::uint64_t tag) {
    return PowerOptions{1e-10, cfg.max_iters, cfg.restarts,
                        derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(StreamTag::restart),
                                                      static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(seed),
                                                      tag})};
  };
  // A point of the ball, W_init + Delta with every matrix at distance R.
  const Direction ball_dir = sample_direction(spec, record_direction_seed(cfg.master_seed, m, seed, 1000), cfg.radius);
  const WeightSet w_ball = displaced(w, ball_dir, 1.0);

  if (cfg.wants("R3") && cfg.network.single_bottleneck()) {
    SweepConfig sc;
    sc.network = cfg.network;
    sc.input = cfg.input;
    sc.radius = cfg.radius;
    sc.jet_degree = 2;
    sc.ascent_sweeps = cfg.ascent_sweeps;
    sc.master_seed = cfg.master_seed;
    const std::vector<double> ts = linspace(-1.0, 1.0, cfg.t_points);
    double worst = 0.0;
    for (int dir = 0; dir < cfg.directions; ++dir) {
      const Direction delta = sweep_direction(w, x, sc, seed, dir);
      const PolyCurve curve = poly_expand(w, delta, x);
      for (double r : remainder_grid(curve, ts, 2)) worst = std::max(worst, std::abs(r));
    }
    const double r = static_cast<double>(spec.widths()[1]);
    add("R3", bound_R3(fm, r, d0, cfg.radius, xnorm), worst, BoundKind::upper);
  }
  if (cfg.wants("hessian_offdiag")) {
    double worst = 0.0;
    for (int i = 0; i < spec.slot_count(); ++i) {
      for (int j = i + 1; j < spec.slot_count(); ++j) {
        if (spec.block_of(i) != spec.block_of(j)) continue;
        worst = std::max(worst, hessian_block_norm(w, x, spec.slot(i), spec.slot(j),
                                                   power(static_cast<std::uint64_t>(i * 64 + j)))
                                    .estimate);
      }
    }
    add("hessian_offdiag", bound_hessian_offdiag(fm, d0, xnorm), worst, BoundKind::upper);
  }
  if (cfg.wants("H_lower") && cfg.network.single_bottleneck()) {
    const Theorem1Witness wit = witness_vector_theorem1(w, x);
    add("H_lower", bound_H_lower(static_cast<double>(spec.widths()[1]), d0, xnorm), wit.rayleigh, BoundKind::lower);
  }
  if (cfg.wants("deriv_Bplus1") && B + 1 <= spec.slot_count()) {
    long long maps = 1;
    for (int a = 0; a <= B; ++a) maps *= spec.slot_count() - a;
    if (maps <= kMaxInjectiveMaps) {
      const PowerResult r = spectral_norm_power(derivative_operator(w_ball, x, B + 1), power(0xB1));
      std::vector<double> bott;
      for (int b = 1; b < B; ++b) bott.push_back(static_cast<double>(spec.widths()[static_cast<std::size_t>(b)]));
      add("deriv_Bplus1", bound_deriv_Bplus1(fm, cfg.radius, B, bott, xnorm), r.value, BoundKind::upper);
    }
  }
  if (cfg.wants("deriv_B_lower")) {
    const TheoremBWitness wit = witness_direction_theoremB(w, x);
    std::vector<double> ins;
    for (int b = 0; b < B; ++b) ins.push_back(static_cast<double>(spec.widths()[static_cast<std::size_t>(b)]));
    add("deriv_B_lower", bound_deriv_B_lower(B, spec.depths(), ins, xnorm), wit.contraction, BoundKind::lower);
  }
  if (cfg.wants("wnn_output")) {
    const WeightSet first = block_network(w_ball, 0);
    const double c = static_cast<double>(spec.widths()[1]);
    const double value = forward_bnn(first, x).norm();
    add("wnn_output", bound_wnn_output(spec.depth(0), fm, cfg.radius, c, d0, xnorm), value, BoundKind::upper);
  }
  if (cfg.wants("p_derivative") && spec.widths()[1] == 1) {
    const WeightSet first = block_network(w_ball, 0);
    const int L = spec.depth(0);
    for (int p = 1; p <= L; ++p) {
      const PowerResult r = spectral_norm_power(derivative_operator(first, x, p), power(0xD0 + p));
      add("p_derivative[p=" + std::to_string(p) + "]", bound_p_derivative(L, p, fm, cfg.radius, d0, xnorm), r.value,
          BoundKind::upper);
    }
  }
  if (cfg.wants("u_b_lower")) {
    const auto norms = u_b_norms(w);
    for (int b = 0; b < B; ++b) {
      add("u_b_lower[b=" + std::to_string(b + 1) + "]",
          bound_u_b_lower(fm, spec.depth(b), static_cast<double>(spec.widths()[static_cast<std::size_t>(b)])),
          norms[static_cast<std::size_t>(b)], BoundKind::lower);
    }
  }
  return out;
}

inline std::string base_bound_name(const std::string& tagged) { return tagged.substr(0, tagged.find('[')); }

inline BoundSuiteReport run_bound_suite(const BoundSuiteConfig& cfg) {
  cfg.validate();
  BoundSuiteReport rep;
  rep.config = cfg;
  struct Item {
    Index m;
    int seed;
  };
  std::vector<Item> items;
  for (Index m : cfg.widths) {
    for (int s = 0; s < cfg.seeds; ++s) items.push_back({m, s});
  }
  std::vector<std::vector<BoundSample>> results(items.size());
  parallel_for(items.size(), cfg.jobs, [&](std::size_t i) { results[i] = bound_item(cfg, items[i].m, items[i].seed); });
  for (auto& r : results) rep.samples.insert(rep.samples.end(), r.begin(), r.end());

  // Aggregate per (tagged name, m) in first-appearance order.
  std::vector<std::pair<std::string, Index>> keys;
  for (const auto& s : rep.samples) {
    const std::pair<std::string, Index> k{s.bound, s.m};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  const NetworkSpec proto = cfg.network.spec(cfg.widths.front());
  const double xnorm = cfg.input.make(proto.input_dim()).norm();
  for (const auto& [name, m] : keys) {
    std::vector<double> vals;
    double theory = 0.0;
    BoundKind kind = BoundKind::upper;
    for (const auto& s : rep.samples) {
      if (s.bound != name || s.m != m) continue;
      vals.push_back(s.empirical);
      theory = s.theoretical;
      kind = s.kind;
    }
    const std::string base = base_bound_name(name);
    const double rate = base == "hessian_offdiag" ? cfg.hessian_rate : (base == "wnn_output" ? cfg.wnn_rate : cfg.rate);
    Json params = {{"m", m}, {"R", cfg.radius}, {"xnorm", xnorm}, {"depths", cfg.network.depths},
                   {"dims", cfg.network.dims}, {"B", cfg.network.depths.size()}};
    if (name != base) params["tag"] = name.substr(base.size());
    rep.reports.push_back(aggregate_bound(base, kind, theory, vals, rate, std::move(params), cfg.master_seed));
  }
  const auto tails = cfg.tails.params();
  for (std::size_t i = 0; i < tails.size(); ++i) {
    const std::string name = "tail_" + to_string(tails[i].kind);
    if (!cfg.wants(name)) continue;
    const std::uint64_t seed = derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(StreamTag::trial), i});
    rep.reports.push_back(to_report(tail_bound_check(tails[i], cfg.tails.trials, seed), seed));
  }
  return rep;
}

}  // namespace bnn

#endif  // BNN_HARNESS_HPP
