#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "eit/config.hpp"
#include "eit/tensor.hpp"

namespace eit {

// Named tensors in a fixed insertion order.
class ModelParams {
 public:
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  const std::vector<NamedTensor>& tensors() const { return items_; }
  std::vector<NamedTensor>& tensors() { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t total_elements() const;

 private:
  std::vector<NamedTensor> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ParamSpec {
  std::string name;
  Shape shape;
};

// Every tensor a config instantiates, in canonical order.
std::vector<ParamSpec> param_layout(const ModelConfig& config);

enum class InitScheme {
  // Truncated normal (0.02) for projections and tokens, uniform fan-in for
  // convolutions, ones/zeros for norm gains/shifts.
  kStandard,
  // Every entry drawn at O(1) scale, including gains and biases, so that
  // gradient checks exercise all terms.
  kRandomized,
};

ModelParams init_params(const ModelConfig& config, std::uint64_t seed,
                        InitScheme scheme = InitScheme::kStandard);

// Throws ConfigError when names or shapes differ from param_layout(config).
void check_params(const ModelConfig& config, const ModelParams& params);

}  // namespace eit
