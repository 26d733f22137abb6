#include "eit/model.hpp"

#include <cmath>

#include "eit/errors.hpp"
#include "eit/rng.hpp"

namespace eit {

BoundParams BoundParams::bind(Tape& tape, const ModelParams& params, bool requires_grad) {
  BoundParams b;
  for (const NamedTensor& t : params.tensors()) {
    const Var v = tape.leaf(t.value, requires_grad);
    b.vars_.emplace(t.name, v);
    b.ordered_.push_back(v);
  }
  return b;
}

BoundParams BoundParams::from_vars(const std::vector<std::string>& names,
                                   std::span<const Var> vars) {
  if (names.size() != vars.size()) throw ContractViolation("from_vars: name/var count mismatch");
  BoundParams b;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    b.vars_.emplace(names[i], vars[i]);
    b.ordered_.push_back(vars[i]);
  }
  return b;
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractViolation("missing parameter '" + name + "'");
  return it->second;
}

Var eitp_embed(const ModelConfig& config, const BoundParams& params, Var images) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != config.image_channels || s[2] != config.image_height ||
      s[3] != config.image_width) {
    throw ContractViolation("images " + shape_str(s) + " do not match config image [N," +
                            std::to_string(config.image_channels) + "," +
                            std::to_string(config.image_height) + "," +
                            std::to_string(config.image_width) + "]");
  }
  const std::size_t n = s[0];
  const std::size_t C = config.channels;
  const TokenGeometry g = config.geometry();

  ConvSpec spec{config.eitp_kernel, config.eitp_kernel, config.eitp_stride, config.eitp_padding,
                1, config.image_channels, C};
  Var x = conv2d(images, params["patch.conv.weight"], params["patch.conv.bias"], spec);
  if (config.eitp_pool > 1) x = maxpool2d(x, config.eitp_pool, config.eitp_pool);
  x = reshape(x, {n, C, g.patches()});
  x = permute(x, {0, 2, 1});  // [N, P, C]

  // Broadcasting onto a zero block replicates the class token per image.
  Var cls_block = add_broadcast(images.tape().constant(Tensor({n, 1, C})),
                                reshape(params["cls_token"], {1, C}));
  x = concat({cls_block, x}, 1);
  if (config.pos_embed == PosEmbed::kTrainable) x = add_broadcast(x, params["pos_embed"]);
  return x;
}

Var mha(Var x, const BoundParams& params, const std::string& prefix, std::size_t heads,
        Tensor* attention, double dropout_p, Rng* rng) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ContractViolation("mha input must be [N,T,C], got " + shape_str(s));
  const std::size_t n = s[0], t = s[1], width = s[2];
  if (width == 0 || heads == 0 || width % heads != 0) {
    throw ConfigError("heads: attention width " + std::to_string(width) +
                      " is not divisible by " + std::to_string(heads));
  }
  const std::size_t d = width / heads;

  Var qkv = linear(x, params[prefix + ".qkv.weight"], params[prefix + ".qkv.bias"]);
  qkv = permute(reshape(qkv, {n, t, 3, heads, d}), {2, 0, 3, 1, 4});  // [3, N, h, T, d]
  Var q = reshape(slice(qkv, 0, 0, 1), {n, heads, t, d});
  Var k = reshape(slice(qkv, 0, 1, 2), {n, heads, t, d});
  Var v = reshape(slice(qkv, 0, 2, 3), {n, heads, t, d});

  Var scores = scale(matmul(q, permute(k, {0, 1, 3, 2})), 1.0 / std::sqrt(static_cast<double>(d)));
  Var a = softmax_rows(scores);
  if (attention) *attention = a.value();

  Var heads_out = permute(matmul(a, v), {0, 2, 1, 3});  // [N, T, h, d]
  Var merged = reshape(heads_out, {n, t, width});
  Var out = linear(merged, params[prefix + ".proj.weight"], params[prefix + ".proj.bias"]);
  if (dropout_p > 0.0) {
    if (!rng) throw ContractViolation("dropout requires an Rng");
    out = dropout(out, dropout_p, *rng);
  }
  return out;
}

namespace {

Var depthwise(Var grid, const BoundParams& params, const std::string& conv,
              const ModelConfig& config, std::size_t width) {
  const ConvSpec spec = ConvSpec::depthwise(width, config.eitt_kernel, config.eitt_padding());
  return conv2d(grid, params[conv + ".weight"], params[conv + ".bias"], spec);
}

}  // namespace

Var eitt_branch(Var x, const BoundParams& params, const std::string& prefix,
                const ModelConfig& config, std::size_t grid_h, std::size_t grid_w) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ContractViolation("eitt input must be [N,T,C], got " + shape_str(s));
  const std::size_t n = s[0], t = s[1], width = s[2];
  if (t != 1 + grid_h * grid_w) {
    throw ContractViolation("eitt: " + std::to_string(t - 1) + " patch tokens do not fill a " +
                            std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
  }
  if (config.eitt_branch == BranchStyle::kNone) return x;

  const std::size_t patches = grid_h * grid_w;
  Var cls = slice(x, 1, 0, 1);
  Var grid = reshape(permute(slice(x, 1, 1, t), {0, 2, 1}), {n, width, grid_h, grid_w});

  switch (config.eitt_branch) {
    case BranchStyle::kConv:
      grid = depthwise(grid, params, prefix + ".conv0", config, width);
      break;
    case BranchStyle::kConv3:
      for (int j = 0; j < 3; ++j) {
        grid = depthwise(grid, params, prefix + ".conv" + std::to_string(j), config, width);
      }
      break;
    case BranchStyle::kGeluConvFc:
      grid = depthwise(gelu(grid), params, prefix + ".conv0", config, width);
      break;
    case BranchStyle::kConvBnRelu:
      grid = depthwise(grid, params, prefix + ".conv0", config, width);
      grid = relu(batchnorm2d(grid, params[prefix + ".bn.gain"], params[prefix + ".bn.shift"]));
      break;
    case BranchStyle::kNone:
      break;
  }

  Var tokens = permute(reshape(grid, {n, width, patches}), {0, 2, 1});  // [N, P, C_T]
  if (config.eitt_branch == BranchStyle::kGeluConvFc) {
    tokens = linear(tokens, params[prefix + ".fc.weight"], params[prefix + ".fc.bias"]);
  }
  return concat({cls, tokens}, 1);
}

Var encoder_layer(Var x, const ModelConfig& config, const BoundParams& params, std::size_t layer,
                  const SplitEntry& entry, const ForwardOptions& options, LayerTrace* trace) {
  const std::string p = "layers." + std::to_string(layer);
  const std::size_t C = config.channels;
  const TokenGeometry g = config.geometry();
  const double drop = options.training ? config.dropout : 0.0;
  Tensor* attention = trace ? &trace->attention : nullptr;
  if (trace) trace->input = x.value();

  Var normed = layernorm(x, params[p + ".norm1.gain"], params[p + ".norm1.shift"]);
  Var mixed;
  if (config.split_policy == SplitPolicy::kParallel) {
    Var conv = eitt_branch(normed, params, p + ".eitt", config, g.grid_h, g.grid_w);
    Var attn = mha(normed, params, p + ".attn", config.heads, attention, drop, options.rng);
    mixed = add(conv, attn);
  } else if (entry.conv_channels == 0) {
    mixed = mha(normed, params, p + ".attn", config.heads, attention, drop, options.rng);
  } else {
    if (entry.conv_channels + entry.attn_channels != C || entry.attn_channels == 0) {
      throw ContractViolation("split entry (" + std::to_string(entry.conv_channels) + ", " +
                              std::to_string(entry.attn_channels) + ") does not partition " +
                              std::to_string(C) + " channels");
    }
    Var conv_in = slice(normed, 2, 0, entry.conv_channels);
    Var attn_in = slice(normed, 2, C - entry.attn_channels, C);
    Var conv = eitt_branch(conv_in, params, p + ".eitt", config, g.grid_h, g.grid_w);
    Var attn = mha(attn_in, params, p + ".attn", config.heads, attention, drop, options.rng);
    mixed = concat({conv, attn}, 2);
  }
  Var y = add(x, mixed);

  Var h = layernorm(y, params[p + ".norm2.gain"], params[p + ".norm2.shift"]);
  h = gelu(linear(h, params[p + ".mlp.fc1.weight"], params[p + ".mlp.fc1.bias"]));
  if (drop > 0.0) h = dropout(h, drop, *options.rng);
  h = linear(h, params[p + ".mlp.fc2.weight"], params[p + ".mlp.fc2.bias"]);
  if (drop > 0.0) h = dropout(h, drop, *options.rng);
  return add(y, h);
}

ForwardResult forward(const ModelConfig& config, const BoundParams& params, Var images,
                      const ForwardOptions& options) {
  if (options.training && config.dropout > 0.0 && !options.rng) {
    throw ContractViolation("training with dropout requires ForwardOptions::rng");
  }
  const SplitSchedule schedule = build_schedule(config);
  ForwardResult result;
  Var x = eitp_embed(config, params, images);
  if (options.trace) result.traces.resize(config.layers);
  for (std::size_t i = 0; i < config.layers; ++i) {
    x = encoder_layer(x, config, params, i, schedule.layers[i], options,
                      options.trace ? &result.traces[i] : nullptr);
  }
  x = layernorm(x, params["norm.gain"], params["norm.shift"]);
  const std::size_t n = x.shape()[0];
  Var cls = reshape(slice(x, 1, 0, 1), {n, config.channels});
  result.logits = linear(cls, params["head.weight"], params["head.bias"]);
  return result;
}

Tensor predict(const ModelConfig& config, const ModelParams& params, const Tensor& images) {
  Tape tape(Tape::inference());
  const BoundParams bound = BoundParams::bind(tape, params, false);
  return forward(config, bound, tape.constant(images)).logits.value();
}

}  // namespace eit
