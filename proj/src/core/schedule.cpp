#include "eit/schedule.hpp"

#include <string>

#include "eit/errors.hpp"

namespace eit {

SplitSchedule build_schedule(std::size_t channels, std::size_t heads, std::size_t layers,
                             SplitPolicy policy) {
  if (heads == 0) throw ConfigError("heads: must be >= 1");
  if (layers == 0) throw ConfigError("layers: must be >= 1");
  if (channels == 0 || channels % heads != 0) {
    throw ConfigError("channels: " + std::to_string(channels) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  SplitSchedule s{policy, channels, heads, {}};
  const std::size_t units = channels / heads;

  // Attention width of 1-based layer i under the decreasing policy.
  auto decreasing_attn = [&](std::size_t i) { return (units * i) / layers * heads; };

  for (std::size_t i = 1; i <= layers; ++i) {
    std::size_t attn = 0;
    switch (policy) {
      case SplitPolicy::kNone:
        attn = channels;
        break;
      case SplitPolicy::kParallel:
        s.layers.push_back({channels, channels});
        continue;
      case SplitPolicy::kDecreasing:
        attn = decreasing_attn(i);
        break;
      case SplitPolicy::kIncreasing:
        attn = decreasing_attn(layers + 1 - i);
        break;
      case SplitPolicy::kInvariant:
        attn = units / 2 * heads;
        break;
    }
    if (attn == 0) {
      throw ConfigError("split_policy: layer " + std::to_string(i) + " of " +
                        std::to_string(layers) + " gets no attention channels (channels " +
                        std::to_string(channels) + ", heads " + std::to_string(heads) +
                        "); use more channels per head or fewer layers");
    }
    s.layers.push_back({channels - attn, attn});
  }
  return s;
}

}  // namespace eit
