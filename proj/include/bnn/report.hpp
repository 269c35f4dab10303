#ifndef BNN_REPORT_HPP
#define BNN_REPORT_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "bnn/harness.hpp"

namespace bnn {

inline constexpr int kReportSchemaVersion = 1;

/// Shortest decimal form that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline Json versions_json() {
  return {{"bnnlab", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"report_schema", kReportSchemaVersion}};
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never observe a partial file.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path tmp = dir / ("." + path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp, ec);
      throw Error("write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error("cannot move report into " + path.string());
  }
}

inline Json bounds_json(const std::vector<BoundReport>& bounds) {
  Json arr = Json::array();
  for (const auto& b : bounds) arr.push_back(b.to_json());
  return arr;
}

// ---------------------------------------------------------------- sweep

inline std::string sweep_csv(const SweepReport& r) {
  std::string out = "m,seed,direction,max_residual_jet,max_residual_surrogate\n";
  for (const auto& rec : r.records) {
    out += std::to_string(rec.m) + "," + std::to_string(rec.seed) + "," + std::to_string(rec.direction) + "," +
           format_double(rec.max_residual_jet) + "," + format_double(rec.max_residual_surrogate) + "\n";
  }
  return out;
}

inline Json sweep_json(const SweepReport& r) {
  Json per_m = Json::object();
  for (const auto& a : r.per_m) {
    per_m[std::to_string(a.m)] = {{"max", a.max},
                                  {"median", a.median},
                                  {"surrogate_max", a.surrogate_max},
                                  {"surrogate_median", a.surrogate_median}};
  }
  Json slope = nullptr;
  if (r.slope) {
    slope = {{"value", r.slope->slope},
             {"stderr", r.slope->slope_stderr},
             {"intercept", r.slope->intercept},
             {"statistic", r.config.slope_statistic},
             {"band", {r.config.slope_min, r.config.slope_max}},
             {"in_band", r.slope_in_band}};
  }
  return {{"kind", "sweep"},
          {"config", r.config.to_json()},
          {"master_seed", r.config.master_seed},
          {"slope", slope},
          {"per_m", per_m},
          {"monotone_inversions", r.monotone_inversions},
          {"monotone_flag", r.monotone_inversions > 1},
          {"bounds", bounds_json(r.bounds)},
          {"passed", r.passed()},
          {"versions", versions_json()}};
}

struct EmittedFiles {
  std::filesystem::path csv;
  std::filesystem::path json;
};

inline EmittedFiles emit_files(const std::filesystem::path& dir, const std::string& stem, const std::string& csv,
                               const Json& json) {
  EmittedFiles f{dir / (stem + ".csv"), dir / (stem + ".json")};
  write_atomic(f.csv, csv);
  write_atomic(f.json, json.dump(2) + "\n");
  return f;
}

inline EmittedFiles emit_report(const SweepReport& r, const std::filesystem::path& dir,
                                const std::string& stem = "sweep") {
  if (r.records.empty()) throw Error("empty sweep: nothing to report");
  return emit_files(dir, stem, sweep_csv(r), sweep_json(r));
}

// ---------------------------------------------------------------- curves

inline std::string curves_csv(const PerturbReport& r) {
  std::string out = "curve_id,t,value,activation,support\n";
  for (const auto& row : r.rows) {
    out += row.curve_id + "," + format_double(row.t) + "," + format_double(row.value) + "," + row.activation + "," +
           row.support + "\n";
  }
  return out;
}

inline Json curves_json(const PerturbReport& r) {
  Json seeds = Json::array();
  for (const auto& s : r.stats) {
    seeds.push_back({{"seed", s.seed},
                     {"tanh_quad_residual", s.tanh_quad_residual},
                     {"identity_quad_residual", s.identity_quad_residual},
                     {"quad_ratio", s.quad_ratio},
                     {"max_quartic_ratio", s.max_quartic_ratio},
                     {"max_affine_deviation", s.max_affine_deviation},
                     {"max_block_curvature", s.max_block_curvature}});
  }
  return {{"kind", "perturb"},
          {"config", r.config.to_json()},
          {"master_seed", r.config.master_seed},
          {"per_seed", seeds},
          {"checks", {{"quartic", r.quartic_ok()}, {"affine", r.affine_ok()}, {"tanh_contrast", r.tanh_ok()}}},
          {"bounds", Json::array()},
          {"passed", r.passed()},
          {"versions", versions_json()}};
}

inline EmittedFiles emit_report(const PerturbReport& r, const std::filesystem::path& dir,
                                const std::string& stem = "curves") {
  if (r.rows.empty()) throw Error("empty curve table: nothing to report");
  return emit_files(dir, stem, curves_csv(r), curves_json(r));
}

// ---------------------------------------------------------------- Hessian

inline std::string hessian_csv(const HessianReport& r) {
  std::string out = "m,seed,slot_i,slot_j,kind,estimate,closed_form,bound,satisfied\n";
  for (const auto& row : r.rows) {
    out += std::to_string(row.m) + "," + std::to_string(row.seed) + "," + std::to_string(row.slot_i) + "," +
           std::to_string(row.slot_j) + "," + row.kind + "," + format_double(row.estimate) + "," +
           (row.closed_form ? format_double(*row.closed_form) : std::string()) + "," + format_double(row.bound) +
           "," + (row.satisfied ? "1" : "0") + "\n";
  }
  return out;
}

inline Json hessian_json(const HessianReport& r) {
  return {{"kind", "hessian"},
          {"config", r.config.to_json()},
          {"master_seed", r.config.master_seed},
          {"same_slot_zero", r.same_slot_zero},
          {"bounds", bounds_json(r.bounds)},
          {"passed", r.passed()},
          {"versions", versions_json()}};
}

inline EmittedFiles emit_report(const HessianReport& r, const std::filesystem::path& dir,
                                const std::string& stem = "hessian") {
  if (r.rows.empty()) throw Error("empty Hessian scan: nothing to report");
  return emit_files(dir, stem, hessian_csv(r), hessian_json(r));
}

// ---------------------------------------------------------------- bounds

inline std::string bounds_csv(const BoundSuiteReport& r) {
  std::string out = "bound,m,seed,theoretical,empirical,kind\n";
  for (const auto& s : r.samples) {
    out += s.bound + "," + std::to_string(s.m) + "," + std::to_string(s.seed) + "," + format_double(s.theoretical) +
           "," + format_double(s.empirical) + "," + (s.kind == BoundKind::upper ? "upper" : "lower") + "\n";
  }
  return out;
}

inline Json bounds_report_json(const BoundSuiteReport& r) {
  return {{"kind", "verify"},
          {"config", r.config.to_json()},
          {"master_seed", r.config.master_seed},
          {"bounds", bounds_json(r.reports)},
          {"passed", r.passed()},
          {"versions", versions_json()}};
}

inline EmittedFiles emit_report(const BoundSuiteReport& r, const std::filesystem::path& dir,
                                const std::string& stem = "verify") {
  if (r.reports.empty()) throw Error("empty bound suite: nothing to report");
  return emit_files(dir, stem, bounds_csv(r), bounds_report_json(r));
}

}  // namespace bnn

#endif  // BNN_REPORT_HPP
