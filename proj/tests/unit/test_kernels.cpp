#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eit/errors.hpp"
#include "eit/kernels.hpp"
#include "eit/rng.hpp"
#include "oracles.hpp"

namespace {

using eit::ConvSpec;
using eit::Tensor;
namespace k = eit::kernels;

TEST(Conv2d, IdentityKernelReturnsInput) {
  eit::Rng rng(1);
  const Tensor x = oracle::random_tensor({1, 1, 5, 6}, rng);
  const Tensor w({1, 1, 1, 1}, {1.0});
  const Tensor b({1}, {0.0});
  const Tensor y = k::conv2d(x, w, &b, ConvSpec{1, 1, 1, 0, 1, 1, 1});
  EXPECT_TRUE(y.bit_equal(x));
}

TEST(Conv2d, OutputExtentWorkedValue) { EXPECT_EQ(eit::conv_output_extent(224, 16, 4, 0), 53u); }

TEST(Conv2d, OutputExtentLawExhaustive) {
  for (std::size_t h = 1; h <= 64; ++h)
    for (std::size_t kk = 1; kk <= 16; ++kk)
      for (std::size_t s = 1; s <= 8; ++s)
        for (std::size_t p = 0; p <= 3; ++p) {
          if (h + 2 * p < kk) {
            EXPECT_THROW(eit::conv_output_extent(h, kk, s, p), eit::GeometryError);
            continue;
          }
          // Largest o with (o - 1) * s + k <= h + 2p.
          std::size_t o = 0;
          while (o * s + kk <= h + 2 * p) ++o;
          ASSERT_EQ(eit::conv_output_extent(h, kk, s, p), o) << h << " " << kk << " " << s << " " << p;
        }
}

TEST(Conv2d, DepthwiseMatchesBruteForce) {
  eit::Rng rng(2);
  const Tensor x = oracle::random_tensor({1, 3, 6, 6}, rng);
  const Tensor w = oracle::random_tensor({3, 1, 3, 3}, rng);
  const Tensor b = oracle::random_tensor({3}, rng);
  const Tensor y = k::conv2d(x, w, &b, ConvSpec::depthwise(3, 3, 1));
  const Tensor ref = oracle::conv2d(x, w, &b, 1, 1, 3);
  ASSERT_EQ(y.shape(), ref.shape());
  EXPECT_LE(eit::max_abs_diff(y, ref), 1e-12);
}

TEST(Conv2d, RandomInstancesMatchBruteForce) {
  eit::Rng rng(3);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t groups = oracle::pick(rng, 1, 3);
    const std::size_t cin = groups * oracle::pick(rng, 1, 2);
    const std::size_t cout = groups * oracle::pick(rng, 1, 3);
    const std::size_t kk = oracle::pick(rng, 1, 4);
    const std::size_t stride = oracle::pick(rng, 1, 3);
    const std::size_t pad = oracle::pick(rng, 0, 2);
    const std::size_t h = oracle::pick(rng, std::max<std::size_t>(1, kk > 2 * pad ? kk - 2 * pad : 1), 8);
    const std::size_t w = oracle::pick(rng, std::max<std::size_t>(1, kk > 2 * pad ? kk - 2 * pad : 1), 8);
    const Tensor x = oracle::random_tensor({oracle::pick(rng, 1, 2), cin, h, w}, rng);
    const Tensor wt = oracle::random_tensor({cout, cin / groups, kk, kk}, rng);
    const Tensor b = oracle::random_tensor({cout}, rng);
    const ConvSpec spec{kk, kk, stride, pad, groups, cin, cout};
    const bool with_bias = trial % 2 == 0;
    const Tensor y = k::conv2d(x, wt, with_bias ? &b : nullptr, spec);
    const Tensor ref = oracle::conv2d(x, wt, with_bias ? &b : nullptr, stride, pad, groups);
    ASSERT_EQ(y.shape(), ref.shape());
    ASSERT_LE(eit::max_abs_diff(y, ref), 1e-12) << "trial " << trial;
  }
}

TEST(Conv2d, ShapeMismatchIsContractViolation) {
  const Tensor x({1, 3, 6, 6});
  const Tensor w({4, 2, 3, 3});
  EXPECT_THROW(k::conv2d(x, w, nullptr, ConvSpec{3, 3, 1, 1, 1, 3, 4}), eit::ContractViolation);
  const Tensor x2({1, 2, 6, 6});
  EXPECT_THROW(k::conv2d(x2, Tensor({4, 3, 3, 3}), nullptr, ConvSpec{3, 3, 1, 1, 1, 3, 4}),
               eit::ContractViolation);
}

TEST(Conv2d, TooSmallInputIsGeometryError) {
  const Tensor x({1, 1, 2, 2});
  const Tensor w({1, 1, 5, 5});
  EXPECT_THROW(k::conv2d(x, w, nullptr, ConvSpec{5, 5, 1, 1, 1, 1, 1}), eit::GeometryError);
}

TEST(Conv2d, GroupsMustDivideChannels) {
  EXPECT_THROW((ConvSpec{3, 3, 1, 1, 2, 3, 4}.validate()), eit::ContractViolation);
  EXPECT_TRUE(ConvSpec::depthwise(5, 3, 1).is_depthwise());
}

TEST(MaxPool, UnitWindowIsIdentity) {
  eit::Rng rng(4);
  const Tensor x = oracle::random_tensor({2, 3, 5, 4}, rng);
  EXPECT_TRUE(k::maxpool2d(x, 1, 1).output.bit_equal(x));
}

TEST(MaxPool, OutputExtentWorkedValue) { EXPECT_EQ(eit::pool_output_extent(53, 3, 3), 17u); }

TEST(MaxPool, FourByFourBlockMaxima) {
  const Tensor x({1, 1, 4, 4}, {1, 5, 2, 3,    //
                                4, 0, 8, 6,    //
                                9, 7, 10, 11,  //
                                12, 13, 15, 14});
  const Tensor y = k::maxpool2d(x, 2, 2).output;
  EXPECT_TRUE(y.bit_equal(Tensor({1, 1, 2, 2}, {5, 8, 13, 15})));
}

TEST(MaxPool, RandomInstancesMatchBruteForce) {
  eit::Rng rng(5);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t window = oracle::pick(rng, 1, 3);
    const std::size_t stride = oracle::pick(rng, 1, 3);
    const Tensor x = oracle::random_tensor(
        {oracle::pick(rng, 1, 2), oracle::pick(rng, 1, 3), oracle::pick(rng, window, 8),
         oracle::pick(rng, window, 8)},
        rng);
    const Tensor y = k::maxpool2d(x, window, stride).output;
    const Tensor ref = oracle::maxpool2d(x, window, stride);
    ASSERT_EQ(y.shape(), ref.shape());
    ASSERT_EQ(eit::max_abs_diff(y, ref), 0.0);
  }
}

TEST(MaxPool, WindowLargerThanInputIsGeometryError) {
  EXPECT_THROW(k::maxpool2d(Tensor({1, 1, 2, 2}), 3, 3), eit::GeometryError);
}

TEST(MaxPool, BackwardRoutesToFirstArgmax) {
  const Tensor x({1, 1, 2, 2}, {3, 3, 1, 3});
  const auto fwd = k::maxpool2d(x, 2, 2);
  Tensor grad({1, 1, 2, 2});
  k::maxpool2d_backward(fwd, Tensor({1, 1, 1, 1}, {2.0}), grad);
  EXPECT_TRUE(grad.bit_equal(Tensor({1, 1, 2, 2}, {2, 0, 0, 0})));
}

TEST(Matmul, IdentityTimesX) {
  eit::Rng rng(6);
  const Tensor x = oracle::random_tensor({4, 3}, rng);
  Tensor eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at({i, i}) = 1.0;
  EXPECT_TRUE(k::matmul(eye, x).bit_equal(x));
}

TEST(Matmul, HandArithmetic) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 1}, {5, 6});
  EXPECT_TRUE(k::matmul(a, b).bit_equal(Tensor({2, 1}, {17, 39})));
}

TEST(Matmul, RandomInstancesMatchTripleLoop) {
  eit::Rng rng(7);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t m = oracle::pick(rng, 1, 8), kk = oracle::pick(rng, 1, 8),
                      n = oracle::pick(rng, 1, 8);
    const Tensor a = oracle::random_tensor({m, kk}, rng);
    const Tensor b = oracle::random_tensor({kk, n}, rng);
    ASSERT_LE(eit::max_abs_diff(k::matmul(a, b), oracle::matmul(a, b)), 1e-12);
  }
}

TEST(Matmul, BatchedMatchesPerSlice) {
  eit::Rng rng(8);
  const Tensor a = oracle::random_tensor({3, 4, 5}, rng);
  const Tensor b = oracle::random_tensor({3, 5, 2}, rng);
  const Tensor y = k::matmul(a, b);
  ASSERT_EQ(y.shape(), (eit::Shape{3, 4, 2}));
  for (std::size_t s = 0; s < 3; ++s) {
    Tensor as({4, 5}), bs({5, 2});
    std::copy_n(a.data().begin() + s * 20, 20, as.data().begin());
    std::copy_n(b.data().begin() + s * 10, 10, bs.data().begin());
    const Tensor ref = oracle::matmul(as, bs);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(y[s * 8 + i], ref[i], 1e-12);
  }
}

TEST(Matmul, InnerMismatchIsContractViolation) {
  EXPECT_THROW(k::matmul(Tensor({2, 3}), Tensor({4, 2})), eit::ContractViolation);
}

TEST(Softmax, ZeroRowIsUniform) {
  const Tensor y = k::softmax_rows(Tensor({1, 4}));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, LogThreeWorkedValue) {
  const Tensor y = k::softmax_rows(Tensor({1, 2}, {0.0, std::log(3.0)}));
  EXPECT_NEAR(y[0], 0.25, 1e-15);
  EXPECT_NEAR(y[1], 0.75, 1e-15);
}

TEST(Softmax, RandomRowsMatchOracleSumToOneAndKeepOrder) {
  eit::Rng rng(9);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t rows = oracle::pick(rng, 1, 5), cols = oracle::pick(rng, 1, 8);
    const Tensor x = oracle::random_tensor({rows, cols}, rng, -20.0, 20.0);
    const Tensor y = k::softmax_rows(x);
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> row(x.data().begin() + r * cols, x.data().begin() + (r + 1) * cols);
      const std::vector<double> ref = oracle::softmax(row);
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        ASSERT_NEAR(y.at({r, c}), ref[c], 1e-12);
        total += y.at({r, c});
        for (std::size_t d = 0; d < cols; ++d) {
          if (row[c] < row[d]) ASSERT_LE(y.at({r, c}), y.at({r, d}));
        }
      }
      ASSERT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(Softmax, RowPermutationEquivariance) {
  eit::Rng rng(10);
  const Tensor x = oracle::random_tensor({4, 6}, rng, -5.0, 5.0);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  Tensor px({4, 6});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 6; ++c) px.at({r, c}) = x.at({perm[r], c});
  const Tensor y = k::softmax_rows(x), py = k::softmax_rows(px);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(py.at({r, c}), y.at({perm[r], c}));
}

TEST(Softmax, NonFiniteInputIsContractViolation) {
  EXPECT_THROW(k::softmax_rows(Tensor({1, 2}, {0.0, NAN})), eit::ContractViolation);
}

TEST(LayerNorm, ConstantInputGivesZeros) {
  const auto r = k::layernorm(Tensor::full({2, 5}, 3.0), Tensor::full({5}, 1.0), Tensor({5}), 1e-6);
  for (double v : r.output.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoElementWorkedValue) {
  const auto r = k::layernorm(Tensor({1, 2}, {1.0, 3.0}), Tensor::full({2}, 1.0), Tensor({2}), 1e-15);
  EXPECT_NEAR(r.output[0], -1.0, 1e-12);
  EXPECT_NEAR(r.output[1], 1.0, 1e-12);
}

TEST(LayerNorm, ZeroGainGivesShift) {
  eit::Rng rng(11);
  const Tensor shift = oracle::random_tensor({4}, rng);
  const auto r = k::layernorm(oracle::random_tensor({3, 4}, rng), Tensor({4}), shift, 1e-6);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(r.output[i], shift[i % 4]);
}

TEST(LayerNorm, NormalizedRowsHaveZeroMeanUnitVariance) {
  eit::Rng rng(12);
  const auto r = k::layernorm(oracle::random_tensor({6, 9}, rng, -3.0, 3.0), Tensor::full({9}, 1.0),
                              Tensor({9}), 1e-12);
  for (std::size_t row = 0; row < 6; ++row) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 9; ++c) mean += r.output.at({row, c});
    mean /= 9.0;
    for (std::size_t c = 0; c < 9; ++c) var += std::pow(r.output.at({row, c}) - mean, 2);
    EXPECT_NEAR(mean, 0.0, 1e-6);
    EXPECT_NEAR(var / 9.0, 1.0, 1e-6);
  }
}

TEST(LayerNorm, NonPositiveEpsIsContractViolation) {
  EXPECT_THROW(k::layernorm(Tensor({1, 2}), Tensor({2}), Tensor({2}), 0.0), eit::ContractViolation);
}

TEST(Gelu, MatchesErfFormAndDerivative) {
  for (double x = -4.0; x <= 4.0; x += 0.25) {
    EXPECT_NEAR(k::gelu(x), oracle::gelu(x), 1e-14);
    const double h = 1e-6;
    EXPECT_NEAR(k::gelu_derivative(x), (oracle::gelu(x + h) - oracle::gelu(x - h)) / (2 * h), 1e-8);
  }
}

TEST(Permute, TransposeMovesElements) {
  const Tensor x({2, 3}, {0, 1, 2, 3, 4, 5});
  const Tensor y = k::permute(x, {1, 0});
  EXPECT_EQ(y.shape(), (eit::Shape{3, 2}));
  EXPECT_TRUE(y.bit_equal(Tensor({3, 2}, {0, 3, 1, 4, 2, 5})));
  EXPECT_THROW(k::permute(x, {0, 0}), eit::ContractViolation);
}

TEST(Kernels, IdenticalInputsGiveBitIdenticalOutputs) {
  eit::Rng rng(13);
  const Tensor x = oracle::random_tensor({2, 4, 7, 7}, rng);
  const Tensor w = oracle::random_tensor({4, 1, 3, 3}, rng);
  const auto spec = ConvSpec::depthwise(4, 3, 1);
  EXPECT_TRUE(k::conv2d(x, w, nullptr, spec).bit_equal(k::conv2d(x, w, nullptr, spec)));
  const Tensor a = oracle::random_tensor({5, 6}, rng);
  EXPECT_TRUE(k::softmax_rows(a).bit_equal(k::softmax_rows(a)));
}

}  // namespace
