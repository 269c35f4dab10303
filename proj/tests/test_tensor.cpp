#include <gtest/gtest.h>

#include <vector>

#include "bnn/rng.hpp"
#include "bnn/tensor.hpp"
#include "oracles.hpp"

namespace {

using bnn::DenseTensor;
using bnn::Index;
using bnn::Vector;

DenseTensor random_tensor(std::vector<Index> shape, std::uint64_t seed) {
  bnn::NormalStream rng(seed);
  Index n = 1;
  for (Index d : shape) n *= d;
  std::vector<double> e(static_cast<std::size_t>(n));
  for (double& v : e) v = rng();
  return DenseTensor(std::move(shape), std::move(e));
}

TEST(TupleContract, IdentityMatrix) {
  const DenseTensor a = DenseTensor::from_matrix(bnn::Matrix::Identity(2, 2));
  const std::vector<Vector> v{Vector::Unit(2, 0), Vector::Unit(2, 0)};
  EXPECT_DOUBLE_EQ(bnn::tuple_contract(a, v), 1.0);
}

TEST(TupleContract, ZeroTensor) {
  const DenseTensor a = DenseTensor::zeros({3, 2});
  bnn::NormalStream rng(4);
  const std::vector<Vector> v{rng.unit_vector(3), rng.unit_vector(2)};
  EXPECT_EQ(bnn::tuple_contract(a, v), 0.0);
}

TEST(TupleContract, MatchesTripleLoop) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DenseTensor a = random_tensor({3, 4, 2}, seed);
    bnn::NormalStream rng(seed + 100);
    const std::vector<Vector> v{rng.vector(3), rng.vector(4), rng.vector(2)};
    const std::vector<double> e(a.entries().begin(), a.entries().end());
    const double expect = oracle::triple_loop(e, 3, 4, 2, v[0], v[1], v[2]);
    EXPECT_NEAR(bnn::tuple_contract(a, v), expect, 1e-12 * (1.0 + std::abs(expect)));
  }
}

TEST(TupleContract, ShapeMismatchThrows) {
  const DenseTensor a = DenseTensor::zeros({3, 2});
  const std::vector<Vector> wrong_len{Vector::Zero(3), Vector::Zero(3)};
  const std::vector<Vector> wrong_order{Vector::Zero(3)};
  EXPECT_THROW(bnn::tuple_contract(a, wrong_len), bnn::DimensionError);
  EXPECT_THROW(bnn::tuple_contract(a, wrong_order), bnn::DimensionError);
}

TEST(ContractExcept, IsPartialDerivative) {
  const DenseTensor a = random_tensor({3, 4, 2}, 9);
  bnn::NormalStream rng(10);
  std::vector<Vector> v{rng.vector(3), rng.vector(4), rng.vector(2)};
  for (std::size_t slot = 0; slot < 3; ++slot) {
    const Vector g = bnn::contract_except(a, v, slot);
    EXPECT_NEAR(g.dot(v[slot]), bnn::tuple_contract(a, v), 1e-12);
  }
}

TEST(DenseTensorTest, RejectsBadShapes) {
  EXPECT_THROW(DenseTensor({2, 2}, {1.0, 2.0}), bnn::DimensionError);
  EXPECT_THROW(DenseTensor({}, {}), bnn::DimensionError);
  EXPECT_THROW(DenseTensor({1}, {std::nan("")}), bnn::DimensionError);
}

TEST(SpectralNormBruteforce, MatrixIsLargestSingularValue) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DenseTensor a = random_tensor({5, 7}, seed);
    const Eigen::Map<const Eigen::Matrix<double, 5, 7, Eigen::RowMajor>> m(a.entries().data());
    EXPECT_NEAR(bnn::spectral_norm_bruteforce(a), oracle::largest_singular_value(m), 1e-9);
  }
}

TEST(SpectralNormBruteforce, RankOneUnitFactors) {
  bnn::NormalStream rng(3);
  const std::vector<Vector> f{rng.unit_vector(3), rng.unit_vector(4), rng.unit_vector(2)};
  EXPECT_NEAR(bnn::spectral_norm_bruteforce(DenseTensor::outer(f)), 1.0, 1e-12);
}

TEST(SpectralNormBruteforce, MatchesGridSearch) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DenseTensor a = random_tensor({3, 3, 3}, 1000 + seed);
    const std::vector<double> e(a.entries().begin(), a.entries().end());
    EXPECT_NEAR(bnn::spectral_norm_bruteforce(a), oracle::grid_spectral_norm_nn3(e, 3), 1e-3);
  }
}

TEST(SpectralNormBruteforce, RefusesLargeProblems) {
  EXPECT_THROW(bnn::spectral_norm_bruteforce(DenseTensor::zeros({9, 2})), bnn::BudgetError);
  EXPECT_THROW(bnn::spectral_norm_bruteforce(DenseTensor::zeros(std::vector<Index>(9, 1))), bnn::BudgetError);
}

TEST(SpectralNormPower, ExplicitMatrixMatchesSvd) {
  bnn::NormalStream rng(77);
  const bnn::Matrix m = rng.matrix(50, 70);
  const double expect = oracle::largest_singular_value(m);
  const bnn::PowerResult r = bnn::spectral_norm_power(bnn::as_operator(DenseTensor::from_matrix(m)), {1e-14, 2000, 4, 1});
  EXPECT_NEAR(r.value, expect, 1e-6 * expect);
  EXPECT_TRUE(r.converged);
}

TEST(SpectralNormPower, ZeroOperator) {
  const bnn::PowerResult r = bnn::spectral_norm_power(bnn::as_operator(DenseTensor::zeros({3, 4, 2})));
  EXPECT_EQ(r.value, 0.0);
}

TEST(SpectralNormPower, MaximizerCertifiesValue) {
  const DenseTensor a = random_tensor({4, 3, 5}, 21);
  const bnn::PowerResult r = bnn::spectral_norm_power(bnn::as_operator(a));
  ASSERT_EQ(r.maximizer.size(), 3u);
  for (const Vector& v : r.maximizer) EXPECT_NEAR(v.norm(), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(bnn::tuple_contract(a, r.maximizer)), r.value, 1e-9 * r.value);
}

TEST(SpectralNormPower, ImplicitOrder3MatchesBruteforce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DenseTensor a = random_tensor({3, 3, 3}, 500 + seed);
    const double power = bnn::spectral_norm_power(bnn::as_operator(a)).value;
    EXPECT_NEAR(power, bnn::spectral_norm_bruteforce(a), 1e-3);
  }
}

TEST(Subadditivity, SingleBlockIsEquality) {
  const DenseTensor a = random_tensor({3, 3, 3}, 5);
  const bnn::TensorMask all(a.size(), 1);
  const bnn::SubadditivityResult r = bnn::block_subadditivity_check(a, {all});
  EXPECT_NEAR(r.lhs, r.rhs, 1e-12);
}

TEST(Subadditivity, DiagonalMatrixHandComputed) {
  bnn::Matrix m = bnn::Matrix::Zero(2, 2);
  m(0, 0) = 3.0;
  m(1, 1) = 4.0;
  const DenseTensor a = DenseTensor::from_matrix(m);
  const std::vector<Index> lo0{0, 0}, hi0{1, 1}, lo1{1, 1}, hi1{2, 2};
  const bnn::SubadditivityResult r =
      bnn::block_subadditivity_check(a, {bnn::box_mask(a, lo0, hi0), bnn::box_mask(a, lo1, hi1)});
  EXPECT_NEAR(r.lhs, 4.0, 1e-12);
  EXPECT_NEAR(r.rhs, 7.0, 1e-12);
}

TEST(Subadditivity, RejectsBadPartitions) {
  const DenseTensor a = random_tensor({2, 2}, 8);
  const bnn::TensorMask all(a.size(), 1), none(a.size(), 0);
  EXPECT_THROW(bnn::block_subadditivity_check(a, {all, all}), bnn::Error);
  EXPECT_THROW(bnn::block_subadditivity_check(a, {none}), bnn::Error);
  EXPECT_THROW(bnn::block_subadditivity_check(a, {}), bnn::Error);
}

TEST(Subadditivity, OctantPartitionHolds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DenseTensor a = random_tensor({4, 4, 4}, 3000 + seed);
    std::vector<bnn::TensorMask> parts;
    for (int o = 0; o < 8; ++o) {
      std::vector<Index> lo(3), hi(3);
      for (int k = 0; k < 3; ++k) {
        lo[static_cast<std::size_t>(k)] = (o >> k) & 1 ? 2 : 0;
        hi[static_cast<std::size_t>(k)] = lo[static_cast<std::size_t>(k)] + 2;
      }
      parts.push_back(bnn::box_mask(a, lo, hi));
    }
    const bnn::SubadditivityResult r = bnn::block_subadditivity_check(a, parts);
    EXPECT_LE(r.lhs, r.rhs + 1e-9);
  }
}

TEST(Subadditivity, CompactBlockKeepsNorm) {
  const DenseTensor a = random_tensor({4, 4}, 12);
  const std::vector<Index> lo{2, 0}, hi{4, 2};
  const bnn::TensorMask mask = bnn::box_mask(a, lo, hi);
  const DenseTensor block = bnn::compact_block(a, mask);
  EXPECT_EQ(block.shape(), (std::vector<Index>{2, 2}));
  bnn::Matrix masked = bnn::Matrix::Zero(4, 4);
  for (Index i = 2; i < 4; ++i) {
    for (Index j = 0; j < 2; ++j) masked(i, j) = a.entries()[static_cast<std::size_t>(i * 4 + j)];
  }
  EXPECT_NEAR(bnn::spectral_norm_bruteforce(block), oracle::largest_singular_value(masked), 1e-9);
}

}  // namespace
