#include <gtest/gtest.h>

#include "eit/errors.hpp"
#include "eit/rng.hpp"
#include "eit/tensor.hpp"

namespace {

using eit::DType;
using eit::Tensor;

TEST(Tensor, NumelMatchesShapeProduct) {
  const Tensor t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  for (double v : t.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tensor, RejectsZeroExtentAndEmptyShape) {
  EXPECT_THROW(Tensor({2, 0, 3}), eit::ContractViolation);
  EXPECT_THROW(Tensor(eit::Shape{}), eit::ContractViolation);
}

TEST(Tensor, RejectsDataLengthMismatch) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), eit::ContractViolation);
}

TEST(Tensor, MultiIndexIsRowMajor) {
  Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.at({1, 2}), 5.0);
  EXPECT_EQ(t.at({0, 1}), 1.0);
  t.at({1, 0}) = 9.0;
  EXPECT_EQ(t[3], 9.0);
  EXPECT_THROW(t.at({2, 0}), eit::ContractViolation);
  EXPECT_THROW(t.at({0}), eit::ContractViolation);
}

TEST(Tensor, ReshapeKeepsDataAndChecksCount) {
  const Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
  const Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.at({2, 1}), 5.0);
  EXPECT_THROW(t.reshaped({4, 2}), eit::ContractViolation);
}

TEST(Tensor, F32CastRoundsToFloat) {
  const Tensor t({1}, {0.1});
  const Tensor f = t.cast(DType::kF32);
  EXPECT_EQ(f.dtype(), DType::kF32);
  EXPECT_EQ(f[0], static_cast<double>(0.1f));
  EXPECT_NE(f[0], 0.1);
}

TEST(Tensor, DtypeNamesRoundTrip) {
  EXPECT_EQ(eit::dtype_from_name(eit::dtype_name(DType::kF32)), DType::kF32);
  EXPECT_EQ(eit::dtype_from_name(eit::dtype_name(DType::kF64)), DType::kF64);
  EXPECT_THROW(eit::dtype_from_name("f16"), eit::ContractViolation);
}

TEST(Tensor, BitEqualDistinguishesSignedZero) {
  const Tensor a({2}, {0.0, 1.0});
  const Tensor b({2}, {-0.0, 1.0});
  EXPECT_TRUE(a.bit_equal(a));
  EXPECT_FALSE(a.bit_equal(b));
  EXPECT_EQ(eit::max_abs_diff(a, b), 0.0);
}

TEST(Tensor, AccumulateAddsElementwise) {
  Tensor a({3}, {1, 2, 3});
  a.accumulate(Tensor({3}, {10, 20, 30}));
  EXPECT_TRUE(a.bit_equal(Tensor({3}, {11, 22, 33})));
  EXPECT_THROW(a.accumulate(Tensor({2})), eit::ContractViolation);
}

TEST(Tensor, ItemRequiresSingleElement) {
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
  EXPECT_THROW(Tensor({2}).item(), eit::ContractViolation);
}

TEST(Rng, SameSeedSameStream) {
  eit::Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, UniformAndBelowStayInRange) {
  eit::Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
  }
}

TEST(Rng, TruncatedNormalWithinTwoSigma) {
  eit::Rng rng(5);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double v = rng.truncated_normal(0.02);
    EXPECT_LE(std::abs(v), 0.04);
    sum += v;
  }
  EXPECT_NEAR(sum / 20000.0, 0.0, 1e-3);
}

}  // namespace
