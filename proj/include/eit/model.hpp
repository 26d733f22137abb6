#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eit/autograd.hpp"
#include "eit/config.hpp"
#include "eit/params.hpp"
#include "eit/schedule.hpp"

namespace eit {

class Rng;

// Parameters registered as leaves of one tape.
class BoundParams {
 public:
  static BoundParams bind(Tape& tape, const ModelParams& params, bool requires_grad);
  // Wraps existing leaves; names[i] labels vars[i].
  static BoundParams from_vars(const std::vector<std::string>& names, std::span<const Var> vars);

  Var operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  // Leaves in ModelParams order.
  const std::vector<Var>& ordered() const { return ordered_; }

 private:
  std::map<std::string, Var> vars_;
  std::vector<Var> ordered_;
};

// Activations retained for the diagnostics of one encoder layer.
struct LayerTrace {
  Tensor input;      // residual stream entering the layer, [N, T, C]
  Tensor attention;  // softmax weights, [N, heads, T, T]
};

struct ForwardOptions {
  bool training = false;
  // Dropout source; required only when training with dropout > 0.
  Rng* rng = nullptr;
  bool trace = false;
};

struct ForwardResult {
  Var logits;                       // [N, classes]
  std::vector<LayerTrace> traces;   // one per layer when requested
};

// Patch stage: conv -> max-pool -> tokens, class token prepended at index 0,
// position embedding added when trainable. images [N, 3, H, W] -> [N, T, C].
Var eitp_embed(const ModelConfig& config, const BoundParams& params, Var images);

// Multi-head self-attention over x [N, T, C_M] with parameters under
// `prefix` (".qkv.weight", ".qkv.bias", ".proj.weight", ".proj.bias").
// Writes the softmax weights [N, heads, T, T] to *attention when non-null.
Var mha(Var x, const BoundParams& params, const std::string& prefix, std::size_t heads,
        Tensor* attention = nullptr, double dropout = 0.0, Rng* rng = nullptr);

// Convolution branch over x [N, T, C_T]. The class token (index 0) bypasses
// the branch; patch tokens are laid out on the grid_h x grid_w grid.
Var eitt_branch(Var x, const BoundParams& params, const std::string& prefix,
                const ModelConfig& config, std::size_t grid_h, std::size_t grid_w);

// Pre-norm residual block with the channel split of `entry`.
Var encoder_layer(Var x, const ModelConfig& config, const BoundParams& params,
                  std::size_t layer, const SplitEntry& entry, const ForwardOptions& options,
                  LayerTrace* trace = nullptr);

ForwardResult forward(const ModelConfig& config, const BoundParams& params, Var images,
                      const ForwardOptions& options = {});

// Inference convenience: a throwaway non-recording tape.
Tensor predict(const ModelConfig& config, const ModelParams& params, const Tensor& images);

}  // namespace eit
