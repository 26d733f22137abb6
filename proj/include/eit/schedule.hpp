#pragma once

#include <cstddef>
#include <vector>

#include "eit/config.hpp"

namespace eit {

struct SplitEntry {
  std::size_t conv_channels = 0;  // C_i^T, leading channel slice
  std::size_t attn_channels = 0;  // C_i^M, trailing channel slice
};

struct SplitSchedule {
  SplitPolicy policy = SplitPolicy::kDecreasing;
  std::size_t channels = 0;
  std::size_t heads = 0;
  std::vector<SplitEntry> layers;  // index 0 is layer 1
};

// Per-layer channel allocation. For the decreasing policy layer i (1-based)
// keeps floor((C / h) * i / L) * h channels for attention and gives the rest
// to the convolution branch. Throws ConfigError on indivisible C or when a
// layer would be left with a zero-width attention slice.
SplitSchedule build_schedule(std::size_t channels, std::size_t heads, std::size_t layers,
                             SplitPolicy policy);

inline SplitSchedule build_schedule(const ModelConfig& config) {
  return build_schedule(config.channels, config.heads, config.layers, config.split_policy);
}

}  // namespace eit
