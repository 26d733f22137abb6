#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eit/config.hpp"

namespace eit {

// One multiply-accumulate (MAC) counts as 2 FLOPs. MACs cover convolutions,
// linear projections and the two attention products (q k^T and A v); norms,
// softmax, activations, pooling comparisons and bias additions are not
// counted.
inline constexpr const char* kFlopConvention =
    "flops = 2 * macs; macs = multiply-accumulates of convolutions, linear projections, "
    "q.k^T and A.v; norms, softmax, activations, pooling and bias adds excluded";

struct CostComponent {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::uint64_t flops() const { return 2 * macs; }
};

struct CostReport {
  std::vector<CostComponent> components;
  std::string flop_convention = kFlopConvention;

  std::uint64_t total_params() const;
  std::uint64_t total_macs() const;
  std::uint64_t total_flops() const { return 2 * total_macs(); }
};

// Closed-form building blocks.
namespace cost {
// 4C^2 + 4C: qkv and output projections with biases.
std::uint64_t mha_params(std::uint64_t width);
// qkv + output projections: 4 C^2 T.
std::uint64_t mha_projection_macs(std::uint64_t width, std::uint64_t tokens);
// q k^T and A v across all heads: 2 T^2 C.
std::uint64_t mha_attention_macs(std::uint64_t width, std::uint64_t tokens);
// k^2 C weights plus C biases.
std::uint64_t depthwise_params(std::uint64_t width, std::uint64_t kernel);
// k^2 C per patch token.
std::uint64_t depthwise_macs(std::uint64_t width, std::uint64_t kernel, std::uint64_t patches);
std::uint64_t mlp_params(std::uint64_t width, std::uint64_t ratio);
std::uint64_t mlp_macs(std::uint64_t width, std::uint64_t ratio, std::uint64_t tokens);
}  // namespace cost

// Parameters per component, macs left at zero.
CostReport count_params(const ModelConfig& config);
// Parameters and MACs per component.
CostReport count_flops(const ModelConfig& config);

// JSON document with components, totals and the convention string.
std::string cost_report_json(const ModelConfig& config, const CostReport& report);
// Human-readable schedule, geometry and cost table.
std::string describe_table(const ModelConfig& config, const CostReport& report);

}  // namespace eit
