#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "bnn/report.hpp"

namespace {

using bnn::Index;

bnn::SweepConfig small_sweep() {
  bnn::SweepConfig c;
  c.widths = {16, 32, 64, 128};
  c.seeds = 2;
  c.directions = 2;
  c.t_points = 9;
  return c;
}

TEST(Stats, MedianAndOrderStatistic) {
  EXPECT_EQ(bnn::median({3, 1, 2}), 2.0);
  EXPECT_EQ(bnn::median({4, 1, 3, 2}), 2.5);
  const std::vector<double> v{5, 1, 4, 2, 3, 6, 8, 7, 10, 9};
  EXPECT_EQ(bnn::order_statistic(v, 0.9), 9.0);
  EXPECT_EQ(bnn::order_statistic(v, 1.0), 10.0);
  EXPECT_EQ(bnn::order_statistic(v, 0.0), 1.0);
  EXPECT_THROW(bnn::median({}), bnn::Error);
}

TEST(Stats, ExactLineFit) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y;
  for (double xi : x) y.push_back(1.0 - 0.5 * xi);
  const bnn::LineFit f = bnn::fit_line(x, y);
  EXPECT_NEAR(f.slope, -0.5, 1e-14);
  EXPECT_NEAR(f.intercept, 1.0, 1e-14);
  EXPECT_NEAR(f.slope_stderr, 0.0, 1e-14);
  const std::vector<double> same{2, 2};
  EXPECT_THROW(bnn::fit_line(same, same), bnn::Error);
}

TEST(Stats, PolynomialFitAndChord) {
  const std::vector<double> t = bnn::linspace(-1.0, 1.0, 7);
  EXPECT_EQ(t.front(), -1.0);
  EXPECT_EQ(t.back(), 1.0);
  std::vector<double> quad, line;
  for (double ti : t) {
    quad.push_back(2.0 - ti + 3.0 * ti * ti);
    line.push_back(2.0 - ti);
  }
  const bnn::Vector c = bnn::polyfit(t, quad, 2);
  EXPECT_NEAR(c[0], 2.0, 1e-12);
  EXPECT_NEAR(c[1], -1.0, 1e-12);
  EXPECT_NEAR(c[2], 3.0, 1e-12);
  EXPECT_NEAR(bnn::polyfit_max_residual(t, quad, 2), 0.0, 1e-12);
  EXPECT_NEAR(bnn::chord_deviation(t, line), 0.0, 1e-14);
  EXPECT_NEAR(bnn::chord_deviation(t, quad), 3.0, 1e-12);
}

TEST(Parallel, ResultsIndependentOfJobs) {
  for (int jobs : {1, 2, 5}) {
    std::vector<int> out(37, -1);
    bnn::parallel_for(out.size(), jobs, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
  }
}

TEST(Parallel, RethrowsWorkerError) {
  std::atomic<int> calls{0};
  EXPECT_THROW(bnn::parallel_for(20, 3,
                                 [&](std::size_t i) {
                                   ++calls;
                                   if (i == 7) throw std::runtime_error("boom");
                                 }),
               std::runtime_error);
  EXPECT_LE(calls.load(), 20);
}

TEST(Aggregate, RateDecidesVerdict) {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const bnn::BoundReport up = bnn::aggregate_bound("x", bnn::BoundKind::upper, 9.0, v, 0.9, {}, 0);
  EXPECT_TRUE(up.satisfied);
  EXPECT_EQ(up.empirical, 9.0);
  EXPECT_FALSE(bnn::aggregate_bound("x", bnn::BoundKind::upper, 8.5, v, 0.9, {}, 0).satisfied);
  const bnn::BoundReport low = bnn::aggregate_bound("x", bnn::BoundKind::lower, 2.0, v, 0.9, {}, 0);
  EXPECT_TRUE(low.satisfied);
  EXPECT_EQ(low.empirical, 2.0);
  EXPECT_FALSE(bnn::aggregate_bound("x", bnn::BoundKind::lower, 2.5, v, 0.9, {}, 0).satisfied);
}

TEST(Sweep, ZeroRadiusHasNoResidual) {
  bnn::SweepConfig c = small_sweep();
  c.radius = 0.0;
  const bnn::SweepReport r = bnn::run_width_sweep(c);
  ASSERT_EQ(r.records.size(), 4u * 2u * 2u);
  for (const auto& rec : r.records) {
    EXPECT_EQ(rec.max_residual_jet, 0.0);
    EXPECT_EQ(rec.max_residual_surrogate, 0.0);
  }
  EXPECT_FALSE(r.slope.has_value());
  EXPECT_FALSE(r.passed());
}

TEST(Sweep, FullDegreeJetIsExact) {
  bnn::SweepConfig c = small_sweep();
  c.jet_degree = 4;
  c.radius = 2.0;
  for (const auto& rec : bnn::run_width_sweep(c).records) EXPECT_LT(rec.max_residual_jet, 1e-9);
}

TEST(Sweep, ResidualShrinksWithWidth) {
  bnn::SweepConfig c = small_sweep();
  c.widths = {64, 256, 1024, 4096};
  c.seeds = 2;
  c.directions = 1;
  const bnn::SweepReport r = bnn::run_width_sweep(c);
  ASSERT_TRUE(r.slope.has_value());
  EXPECT_LT(r.slope->slope, -0.3);
  EXPECT_GT(r.per_m.front().max, r.per_m.back().max);
}

TEST(Sweep, JobsDoNotChangeOutput) {
  bnn::SweepConfig c = small_sweep();
  const std::string one = bnn::sweep_csv(bnn::run_width_sweep(c));
  c.jobs = 3;
  const bnn::SweepReport r3 = bnn::run_width_sweep(c);
  EXPECT_EQ(bnn::sweep_csv(r3), one);
}

TEST(Sweep, ScalesLinearlyWithInput) {
  bnn::SweepConfig c = small_sweep();
  c.direction_mode = bnn::DirectionMode::gaussian;
  const bnn::SweepReport base = bnn::run_width_sweep(c);
  c.input.scale = 3.0;
  const bnn::SweepReport scaled = bnn::run_width_sweep(c);
  ASSERT_EQ(base.records.size(), scaled.records.size());
  for (std::size_t i = 0; i < base.records.size(); ++i) {
    EXPECT_NEAR(scaled.records[i].max_residual_jet, 3.0 * base.records[i].max_residual_jet,
                1e-9 * base.records[i].max_residual_jet);
  }
  EXPECT_NEAR(scaled.slope->slope, base.slope->slope, 1e-9);
}

TEST(Sweep, ValidationErrors) {
  auto expect_bad = [](auto&& mutate) {
    bnn::SweepConfig c = small_sweep();
    mutate(c);
    EXPECT_THROW(bnn::run_width_sweep(c), bnn::ConfigError);
  };
  expect_bad([](bnn::SweepConfig& c) { c.widths = {64}; });
  expect_bad([](bnn::SweepConfig& c) { c.widths = {16, 32, 64}; });
  expect_bad([](bnn::SweepConfig& c) { c.widths = {16, 64, 32, 128}; });
  expect_bad([](bnn::SweepConfig& c) { c.network.activation = bnn::Activation::tanh; });
  expect_bad([](bnn::SweepConfig& c) { c.t_points = 1; });
  expect_bad([](bnn::SweepConfig& c) { c.radius = -1.0; });
  expect_bad([](bnn::SweepConfig& c) { c.seeds = 0; });
  expect_bad([](bnn::SweepConfig& c) { c.slope_statistic = "mean"; });
  expect_bad([](bnn::SweepConfig& c) { c.network.dims = {2, 1, 2}; });
}

TEST(Perturb, SmallRunPassesChecks) {
  bnn::PerturbConfig c;
  c.width = 1024;
  c.seeds = 2;
  c.directions = 2;
  c.t_points = 21;
  const bnn::PerturbReport r = bnn::run_perturbation_curves(c);
  c.width = 256;
  const bnn::PerturbReport narrow = bnn::run_perturbation_curves(c);
  for (std::size_t i = 0; i < r.stats.size(); ++i) {
    EXPECT_LT(r.stats[i].identity_quad_residual, narrow.stats[i].identity_quad_residual);
  }
  c.width = 1024;
  EXPECT_TRUE(r.quartic_ok());
  EXPECT_TRUE(r.affine_ok());
  EXPECT_TRUE(r.tanh_ok());
  for (const auto& s : r.stats) EXPECT_GT(s.max_block_curvature, 0.0);
  c.jobs = 2;
  EXPECT_EQ(bnn::curves_csv(bnn::run_perturbation_curves(c)), bnn::curves_csv(r));
}

TEST(Perturb, ValidationErrors) {
  bnn::PerturbConfig c;
  c.network.activation = bnn::Activation::tanh;
  c.jet_degree = 2;
  EXPECT_THROW(bnn::run_perturbation_curves(c), bnn::ConfigError);
  c = {};
  c.t_min = 1.0;
  c.t_max = -1.0;
  EXPECT_THROW(bnn::run_perturbation_curves(c), bnn::ConfigError);
  c = {};
  c.alpha = 1.5;
  EXPECT_THROW(bnn::run_perturbation_curves(c), bnn::ConfigError);
}

TEST(Hessian, SmallScan) {
  bnn::HessianConfig c;
  c.widths = {64, 128};
  c.seeds = 6;
  const bnn::HessianReport r = bnn::run_hessian_scan(c);
  EXPECT_TRUE(r.same_slot_zero);
  int closed = 0;
  for (const auto& row : r.rows) {
    if (row.closed_form) {
      ++closed;
      EXPECT_NEAR(row.estimate, *row.closed_form, 1e-6 * *row.closed_form);
    }
  }
  EXPECT_GT(closed, 0);
  EXPECT_FALSE(r.bounds.empty());
  c.jobs = 2;
  EXPECT_EQ(bnn::hessian_csv(bnn::run_hessian_scan(c)), bnn::hessian_csv(r));
}

TEST(Hessian, ValidationErrors) {
  bnn::HessianConfig c;
  c.widths = {};
  EXPECT_THROW(bnn::run_hessian_scan(c), bnn::ConfigError);
  c = {};
  c.cross_rate = 0.0;
  EXPECT_THROW(bnn::run_hessian_scan(c), bnn::ConfigError);
}

TEST(BoundSuite, SmallRun) {
  bnn::BoundSuiteConfig c;
  c.widths = {128};
  c.seeds = 8;
  c.tails.trials = 200;
  const bnn::BoundSuiteReport r = bnn::run_bound_suite(c);
  ASSERT_FALSE(r.reports.empty());
  for (const auto& b : r.reports) {
    EXPECT_TRUE(std::isfinite(b.theoretical)) << b.bound_name;
    EXPECT_TRUE(std::isfinite(b.empirical)) << b.bound_name;
  }
  c.only = {"R3"};
  const bnn::BoundSuiteReport only = bnn::run_bound_suite(c);
  for (const auto& b : only.reports) EXPECT_EQ(b.bound_name, "R3");
  c.only = {"nonsense"};
  EXPECT_THROW(bnn::run_bound_suite(c), bnn::ConfigError);
}

}  // namespace
