// Independent reference computations used by the tests. Nothing here calls
// into the library's numerical paths.
#ifndef BNN_TESTS_ORACLES_HPP
#define BNN_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace oracle {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c = Mat::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      long double s = 0.0L;
      for (Eigen::Index k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  }
  return c;
}

/// Forward pass by explicit loops: every layer scaled by 1/sqrt(fan-in),
/// tanh after every layer that is not the last of its block.
inline Vec forward(const std::vector<Mat>& mats, const std::vector<int>& depths, const Vec& x, bool use_tanh) {
  Mat v = x;
  std::size_t s = 0;
  for (int b = 0; b < static_cast<int>(depths.size()); ++b) {
    for (int l = 0; l < depths[static_cast<std::size_t>(b)]; ++l, ++s) {
      v = matmul(mats[s], v) / std::sqrt(static_cast<double>(mats[s].cols()));
      if (use_tanh && l + 1 < depths[static_cast<std::size_t>(b)]) v = v.array().tanh().matrix();
    }
  }
  return v.col(0);
}

/// sum_{ijk} A_ijk u_i v_j w_k for a row-major order-3 tensor.
inline double triple_loop(const std::vector<double>& a, int n0, int n1, int n2, const Vec& u, const Vec& v,
                          const Vec& w) {
  double s = 0.0;
  for (int i = 0; i < n0; ++i) {
    for (int j = 0; j < n1; ++j) {
      for (int k = 0; k < n2; ++k) s += a[static_cast<std::size_t>((i * n1 + j) * n2 + k)] * u[i] * v[j] * w[k];
    }
  }
  return s;
}

inline double largest_singular_value(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

/// Spectral norm of an n x n x 3 tensor: max over unit w of the largest
/// singular value of the slice sum_k A_..k w_k. The unit sphere of w is
/// searched on a (theta, phi) grid of the given step, then on successively
/// finer local grids around the best points.
inline double grid_spectral_norm_nn3(const std::vector<double>& a, int n, double step = 0.05) {
  auto value = [&](double th, double ph) {
    const double w[3] = {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
    Eigen::MatrixXd slice = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k < 3; ++k) slice(i, j) += a[static_cast<std::size_t>((i * n + j) * 3 + k)] * w[k];
      }
    }
    return largest_singular_value(slice);
  };
  struct Point {
    double v, th, ph;
  };
  std::vector<Point> pts;
  for (double th = 0.0; th <= std::numbers::pi + 1e-12; th += step) {
    for (double ph = 0.0; ph < 2.0 * std::numbers::pi; ph += step) pts.push_back({value(th, ph), th, ph});
  }
  std::partial_sort(pts.begin(), pts.begin() + 8, pts.end(), [](const Point& p, const Point& q) { return p.v > q.v; });
  double best = pts.front().v;
  for (int c = 0; c < 8; ++c) {
    Point p = pts[static_cast<std::size_t>(c)];
    for (double h = step; h > 1e-7; h *= 0.5) {
      Point q = p;
      for (int di = -2; di <= 2; ++di) {
        for (int dj = -2; dj <= 2; ++dj) {
          const double th = p.th + di * h / 2.0, ph = p.ph + dj * h / 2.0;
          const double v = value(th, ph);
          if (v > q.v) q = {v, th, ph};
        }
      }
      p = q;
    }
    best = std::max(best, p.v);
  }
  return best;
}

/// Coefficients of the interpolating polynomial through (t_i, y_i), by
/// Gaussian elimination with partial pivoting in long double.
inline std::vector<double> vandermonde_solve(const std::vector<double>& t, const std::vector<double>& y) {
  const std::size_t n = t.size();
  std::vector<std::vector<long double>> a(n, std::vector<long double>(n + 1));
  for (std::size_t i = 0; i < n; ++i) {
    long double p = 1.0L;
    for (std::size_t j = 0; j < n; ++j) {
      a[i][j] = p;
      p *= t[i];
    }
    a[i][n] = y[i];
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const long double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(a[i][n] / a[i][i]);
  return out;
}

/// Symmetric integer nodes 0, 1, -1, 2, -2, ...
inline std::vector<double> symmetric_nodes(int count) {
  std::vector<double> t{0.0};
  for (int k = 1; static_cast<int>(t.size()) < count; ++k) {
    t.push_back(k);
    if (static_cast<int>(t.size()) < count) t.push_back(-k);
  }
  return t;
}

/// Central finite differences of f with respect to every entry of `m`.
inline Mat central_difference(const std::function<double(const Mat&)>& f, const Mat& m, double h) {
  Mat g(m.rows(), m.cols());
  Mat p = m;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double keep = p.data()[i];
    p.data()[i] = keep + h;
    const double up = f(p);
    p.data()[i] = keep - h;
    const double down = f(p);
    p.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Minimal JSON Schema validator: type, const, enum, required, properties,
/// additionalProperties, items, minItems, minimum, oneOf and local $ref.
class SchemaValidator {
 public:
  explicit SchemaValidator(nlohmann::json root) : root_(std::move(root)) {}

  std::vector<std::string> validate(const nlohmann::json& doc) const {
    std::vector<std::string> errors;
    check(root_, doc, "$", errors);
    return errors;
  }

 private:
  const nlohmann::json& resolve(const std::string& ref) const {
    if (ref.rfind("#/", 0) != 0) throw std::runtime_error("only local refs supported: " + ref);
    return root_.at(nlohmann::json::json_pointer(ref.substr(1)));
  }

  static bool has_type(const nlohmann::json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "integer") return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
    if (t == "number") return v.is_number();
    throw std::runtime_error("unknown schema type " + t);
  }

  void check(const nlohmann::json& s, const nlohmann::json& v, const std::string& path,
             std::vector<std::string>& errors) const {
    if (s.contains("$ref")) {
      check(resolve(s["$ref"].get<std::string>()), v, path, errors);
      return;
    }
    if (s.contains("type")) {
      bool ok = false;
      if (s["type"].is_array()) {
        for (const auto& t : s["type"]) ok = ok || has_type(v, t.get<std::string>());
      } else {
        ok = has_type(v, s["type"].get<std::string>());
      }
      if (!ok) {
        errors.push_back(path + ": wrong type");
        return;
      }
    }
    if (s.contains("const") && v != s["const"]) errors.push_back(path + ": const mismatch");
    if (s.contains("enum") && std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end()) {
      errors.push_back(path + ": not in enum");
    }
    if (s.contains("minimum") && v.is_number() && v.get<double>() < s["minimum"].get<double>()) {
      errors.push_back(path + ": below minimum");
    }
    if (s.contains("oneOf")) {
      int matches = 0;
      for (const auto& sub : s["oneOf"]) {
        std::vector<std::string> e;
        check(sub, v, path, e);
        if (e.empty()) ++matches;
      }
      if (matches != 1) errors.push_back(path + ": matches " + std::to_string(matches) + " oneOf branches");
    }
    if (v.is_object()) {
      if (s.contains("required")) {
        for (const auto& k : s["required"]) {
          if (!v.contains(k.get<std::string>())) errors.push_back(path + ": missing " + k.get<std::string>());
        }
      }
      const nlohmann::json props = s.value("properties", nlohmann::json::object());
      for (const auto& [k, val] : v.items()) {
        if (props.contains(k)) {
          check(props[k], val, path + "." + k, errors);
        } else if (s.contains("additionalProperties")) {
          const auto& ap = s["additionalProperties"];
          if (ap.is_boolean()) {
            if (!ap.get<bool>()) errors.push_back(path + ": unexpected key " + k);
          } else {
            check(ap, val, path + "." + k, errors);
          }
        }
      }
    }
    if (v.is_array()) {
      if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) {
        errors.push_back(path + ": too few items");
      }
      if (s.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) check(s["items"], v[i], path + "[" + std::to_string(i) + "]", errors);
      }
    }
  }

  nlohmann::json root_;
};

}  // namespace oracle

#endif  // BNN_TESTS_ORACLES_HPP
