#include "eit/params.hpp"

#include <cmath>

#include "eit/errors.hpp"
#include "eit/rng.hpp"
#include "eit/schedule.hpp"

namespace eit {

void ModelParams::add(std::string name, Tensor value) {
  if (contains(name)) throw ContractViolation("duplicate parameter '" + name + "'");
  index_.emplace(name, items_.size());
  items_.push_back({std::move(name), std::move(value)});
}

const Tensor& ModelParams::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractViolation("no parameter named '" + name + "'");
  return items_[it->second].value;
}

Tensor& ModelParams::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractViolation("no parameter named '" + name + "'");
  return items_[it->second].value;
}

std::size_t ModelParams::total_elements() const {
  std::size_t n = 0;
  for (const auto& t : items_) n += t.value.numel();
  return n;
}

namespace {

void eitt_layout(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t width,
                 const ModelConfig& c) {
  if (width == 0 || c.eitt_branch == BranchStyle::kNone) return;
  const std::size_t convs = c.eitt_branch == BranchStyle::kConv3 ? 3 : 1;
  for (std::size_t j = 0; j < convs; ++j) {
    const std::string conv = prefix + ".conv" + std::to_string(j);
    out.push_back({conv + ".weight", {width, 1, c.eitt_kernel, c.eitt_kernel}});
    out.push_back({conv + ".bias", {width}});
  }
  if (c.eitt_branch == BranchStyle::kGeluConvFc) {
    out.push_back({prefix + ".fc.weight", {width, width}});
    out.push_back({prefix + ".fc.bias", {width}});
  }
  if (c.eitt_branch == BranchStyle::kConvBnRelu) {
    out.push_back({prefix + ".bn.gain", {width}});
    out.push_back({prefix + ".bn.shift", {width}});
  }
}

}  // namespace

std::vector<ParamSpec> param_layout(const ModelConfig& c) {
  c.validate();
  const TokenGeometry g = c.geometry();
  const SplitSchedule schedule = build_schedule(c);
  const std::size_t C = c.channels;
  const std::size_t hidden = c.mlp_ratio * C;

  std::vector<ParamSpec> out;
  out.push_back({"patch.conv.weight", {C, c.image_channels, c.eitp_kernel, c.eitp_kernel}});
  out.push_back({"patch.conv.bias", {C}});
  out.push_back({"cls_token", {C}});
  if (c.pos_embed == PosEmbed::kTrainable) out.push_back({"pos_embed", {g.tokens(), C}});

  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::string p = "layers." + std::to_string(i);
    const SplitEntry& e = schedule.layers[i];
    out.push_back({p + ".norm1.gain", {C}});
    out.push_back({p + ".norm1.shift", {C}});
    eitt_layout(out, p + ".eitt", e.conv_channels, c);
    const std::size_t m = e.attn_channels;
    out.push_back({p + ".attn.qkv.weight", {m, 3 * m}});
    out.push_back({p + ".attn.qkv.bias", {3 * m}});
    out.push_back({p + ".attn.proj.weight", {m, m}});
    out.push_back({p + ".attn.proj.bias", {m}});
    out.push_back({p + ".norm2.gain", {C}});
    out.push_back({p + ".norm2.shift", {C}});
    out.push_back({p + ".mlp.fc1.weight", {C, hidden}});
    out.push_back({p + ".mlp.fc1.bias", {hidden}});
    out.push_back({p + ".mlp.fc2.weight", {hidden, C}});
    out.push_back({p + ".mlp.fc2.bias", {C}});
  }
  out.push_back({"norm.gain", {C}});
  out.push_back({"norm.shift", {C}});
  out.push_back({"head.weight", {C, c.classes}});
  out.push_back({"head.bias", {c.classes}});
  return out;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_conv_weight(const ParamSpec& spec) { return spec.shape.size() == 4; }

void init_standard(const ParamSpec& spec, Tensor& t, Rng& rng) {
  if (ends_with(spec.name, ".gain")) {
    t.fill(1.0);
  } else if (ends_with(spec.name, ".shift") || ends_with(spec.name, ".bias")) {
    t.fill(0.0);
  } else if (is_conv_weight(spec)) {
    const double fan_in = static_cast<double>(spec.shape[1] * spec.shape[2] * spec.shape[3]);
    const double bound = 1.0 / std::sqrt(fan_in);
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
  } else {
    for (double& v : t.data()) v = rng.truncated_normal(0.02);
  }
}

void init_randomized(const ParamSpec& spec, Tensor& t, Rng& rng) {
  if (ends_with(spec.name, ".gain")) {
    for (double& v : t.data()) v = rng.uniform(0.5, 1.5);
  } else if (is_conv_weight(spec) || ends_with(spec.name, ".weight")) {
    const double fan_in = static_cast<double>(shape_numel(spec.shape) / spec.shape[0]);
    const double bound = is_conv_weight(spec) ? 1.0 / std::sqrt(fan_in)
                                              : 1.0 / std::sqrt(static_cast<double>(spec.shape[0]));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
  } else {
    for (double& v : t.data()) v = rng.uniform(-0.5, 0.5);
  }
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed, InitScheme scheme) {
  Rng rng(seed);
  ModelParams params;
  for (const ParamSpec& spec : param_layout(config)) {
    Tensor t(spec.shape);
    if (scheme == InitScheme::kStandard) {
      init_standard(spec, t, rng);
    } else {
      init_randomized(spec, t, rng);
    }
    params.add(spec.name, std::move(t));
  }
  return params;
}

void check_params(const ModelConfig& config, const ModelParams& params) {
  const auto layout = param_layout(config);
  if (layout.size() != params.size()) {
    throw ConfigError("parameter set has " + std::to_string(params.size()) +
                      " tensors, config expects " + std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const NamedTensor& t = params.tensors()[i];
    if (t.name != layout[i].name || t.value.shape() != layout[i].shape) {
      throw ConfigError("parameter '" + t.name + "' " + shape_str(t.value.shape()) +
                        " does not match expected '" + layout[i].name + "' " +
                        shape_str(layout[i].shape));
    }
  }
}

}  // namespace eit
