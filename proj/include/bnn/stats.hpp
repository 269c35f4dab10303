#ifndef BNN_STATS_HPP
#define BNN_STATS_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "bnn/core.hpp"

namespace bnn {

inline double median(std::vector<double> v) {
  if (v.empty()) throw Error("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// k-th smallest value with k = ceil(q n); the fraction of the sample not
/// exceeding it is at least q.
inline double order_statistic(std::vector<double> v, double q) {
  if (v.empty()) throw Error("order statistic of an empty sample");
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  std::size_t k = static_cast<std::size_t>(std::ceil(q * n - 1e-12));
  k = std::clamp<std::size_t>(k, 1, v.size());
  return v[k - 1];
}

inline double pass_rate(std::span<const bool> flags) {
  if (flags.empty()) return 0.0;
  const auto hits = std::count(flags.begin(), flags.end(), true);
  return static_cast<double>(hits) / static_cast<double>(flags.size());
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;  // zero when only two points are fitted
  double residual_rms = 0.0;
};

/// Ordinary least squares y = intercept + slope x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("fit_line: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw Error("fit_line needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error("fit_line: x values are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - f.intercept - f.slope * x[i];
    sse += e * e;
  }
  f.residual_rms = std::sqrt(sse / static_cast<double>(n));
  if (n > 2) f.slope_stderr = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
  return f;
}

/// Least-squares polynomial coefficients c_0..c_degree (QR solve).
inline Vector polyfit(std::span<const double> t, std::span<const double> y, int degree) {
  if (t.size() != y.size()) throw DimensionError("polyfit: length mismatch");
  if (degree < 0 || static_cast<int>(t.size()) < degree + 1) throw Error("polyfit: not enough points");
  Eigen::MatrixXd a(static_cast<Index>(t.size()), degree + 1);
  Vector b(static_cast<Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) {
    double p = 1.0;
    for (int k = 0; k <= degree; ++k) {
      a(static_cast<Index>(i), k) = p;
      p *= t[i];
    }
    b[static_cast<Index>(i)] = y[i];
  }
  return a.colPivHouseholderQr().solve(b);
}

/// Largest absolute deviation of y from its least-squares polynomial fit.
inline double polyfit_max_residual(std::span<const double> t, std::span<const double> y, int degree) {
  const Vector c = polyfit(t, y, degree);
  double worst = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double v = 0.0;
    for (Index k = c.size() - 1; k >= 0; --k) v = v * t[i] + c[k];
    worst = std::max(worst, std::abs(y[i] - v));
  }
  return worst;
}

/// Largest deviation of y from the line through its first and last points.
inline double chord_deviation(std::span<const double> t, std::span<const double> y) {
  if (t.size() < 2 || t.size() != y.size()) throw Error("chord_deviation needs two or more matched points");
  const double t0 = t.front(), t1 = t.back(), y0 = y.front(), y1 = y.back();
  double worst = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double line = y0 + (y1 - y0) * (t[i] - t0) / (t1 - t0);
    worst = std::max(worst, std::abs(y[i] - line));
  }
  return worst;
}

inline std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 2) throw Error("linspace needs at least two points");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  out.back() = hi;
  return out;
}

}  // namespace bnn

#endif  // BNN_STATS_HPP
