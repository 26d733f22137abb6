#include <gtest/gtest.h>

#include "eit/errors.hpp"
#include "eit/schedule.hpp"

namespace {

using eit::SplitPolicy;

// floor(units * i / L) by counting, so no division is shared with the library.
std::size_t floor_ratio(std::size_t units, std::size_t i, std::size_t layers) {
  std::size_t q = 0;
  while ((q + 1) * layers <= units * i) ++q;
  return q;
}

TEST(Schedule, DecreasingWorkedValues) {
  const auto s = eit::build_schedule(250, 10, 5, SplitPolicy::kDecreasing);
  ASSERT_EQ(s.layers.size(), 5u);
  EXPECT_EQ(s.layers[0].conv_channels, 200u);
  EXPECT_EQ(s.layers[0].attn_channels, 50u);
  EXPECT_EQ(s.layers[2].conv_channels, 100u);
  EXPECT_EQ(s.layers[2].attn_channels, 150u);
  EXPECT_EQ(s.layers[4].conv_channels, 0u);
  EXPECT_EQ(s.layers[4].attn_channels, 250u);
}

TEST(Schedule, InvariantWorkedValue) {
  const auto s = eit::build_schedule(250, 10, 5, SplitPolicy::kInvariant);
  for (const auto& e : s.layers) {
    EXPECT_EQ(e.conv_channels, 130u);
    EXPECT_EQ(e.attn_channels, 120u);
  }
}

TEST(Schedule, NoneIsPureAttention) {
  for (const auto& e : eit::build_schedule(64, 4, 6, SplitPolicy::kNone).layers) {
    EXPECT_EQ(e.conv_channels, 0u);
    EXPECT_EQ(e.attn_channels, 64u);
  }
}

TEST(Schedule, ParallelGivesBothBranchesAllChannels) {
  for (const auto& e : eit::build_schedule(64, 4, 3, SplitPolicy::kParallel).layers) {
    EXPECT_EQ(e.conv_channels, 64u);
    EXPECT_EQ(e.attn_channels, 64u);
  }
}

TEST(Schedule, IncreasingMirrorsDecreasing) {
  const auto dec = eit::build_schedule(250, 10, 5, SplitPolicy::kDecreasing);
  const auto inc = eit::build_schedule(250, 10, 5, SplitPolicy::kIncreasing);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(inc.layers[i].conv_channels, dec.layers[4 - i].conv_channels);
  }
}

TEST(Schedule, LawHoldsOverSweep) {
  for (std::size_t h = 1; h <= 12; ++h)
    for (std::size_t units = 1; units <= 40; ++units)
      for (std::size_t layers = 1; layers <= 12; ++layers) {
        const std::size_t c = units * h;
        if (units < layers) {
          // Layer 1 would get floor(units / L) = 0 attention heads.
          EXPECT_THROW(eit::build_schedule(c, h, layers, SplitPolicy::kDecreasing),
                       eit::ConfigError);
          continue;
        }
        const auto dec = eit::build_schedule(c, h, layers, SplitPolicy::kDecreasing);
        const auto inc = eit::build_schedule(c, h, layers, SplitPolicy::kIncreasing);
        ASSERT_EQ(dec.layers.size(), layers);
        for (std::size_t i = 0; i < layers; ++i) {
          const auto& e = dec.layers[i];
          ASSERT_EQ(e.conv_channels + e.attn_channels, c);
          ASSERT_EQ(e.attn_channels % h, 0u);
          ASSERT_GE(e.attn_channels, h);
          ASSERT_EQ(e.attn_channels, floor_ratio(units, i + 1, layers) * h);
          if (i > 0) {
            ASSERT_LE(e.conv_channels, dec.layers[i - 1].conv_channels);
            ASSERT_GE(inc.layers[i].conv_channels, inc.layers[i - 1].conv_channels);
          }
        }
        ASSERT_EQ(dec.layers.back().conv_channels, 0u);
      }
}

TEST(Schedule, IndivisibleChannelsIsConfigError) {
  EXPECT_THROW(eit::build_schedule(250, 12, 5, SplitPolicy::kDecreasing), eit::ConfigError);
  EXPECT_THROW(eit::build_schedule(0, 1, 5, SplitPolicy::kDecreasing), eit::ConfigError);
  EXPECT_THROW(eit::build_schedule(16, 4, 0, SplitPolicy::kDecreasing), eit::ConfigError);
}

TEST(Schedule, InvariantWithSingleHeadUnitIsConfigError) {
  // C / h = 1 leaves floor(1 / 2) = 0 attention heads.
  EXPECT_THROW(eit::build_schedule(4, 4, 2, SplitPolicy::kInvariant), eit::ConfigError);
}

}  // namespace
