#include "eit/cost.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "eit/schedule.hpp"

namespace eit {

std::uint64_t CostReport::total_params() const {
  std::uint64_t n = 0;
  for (const auto& c : components) n += c.params;
  return n;
}

std::uint64_t CostReport::total_macs() const {
  std::uint64_t n = 0;
  for (const auto& c : components) n += c.macs;
  return n;
}

namespace cost {

std::uint64_t mha_params(std::uint64_t c) { return 4 * c * c + 4 * c; }

std::uint64_t mha_projection_macs(std::uint64_t c, std::uint64_t t) { return 4 * c * c * t; }

std::uint64_t mha_attention_macs(std::uint64_t c, std::uint64_t t) { return 2 * t * t * c; }

std::uint64_t depthwise_params(std::uint64_t c, std::uint64_t k) { return k * k * c + c; }

std::uint64_t depthwise_macs(std::uint64_t c, std::uint64_t k, std::uint64_t patches) {
  return k * k * c * patches;
}

std::uint64_t mlp_params(std::uint64_t c, std::uint64_t r) { return 2 * r * c * c + r * c + c; }

std::uint64_t mlp_macs(std::uint64_t c, std::uint64_t r, std::uint64_t t) {
  return 2 * r * c * c * t;
}

}  // namespace cost

namespace {

CostComponent eitt_cost(const ModelConfig& c, std::uint64_t width, std::uint64_t patches,
                        const std::string& name) {
  CostComponent out{name, 0, 0};
  if (width == 0 || c.eitt_branch == BranchStyle::kNone) return out;
  const std::uint64_t k = c.eitt_kernel;
  const std::uint64_t convs = c.eitt_branch == BranchStyle::kConv3 ? 3 : 1;
  out.params = convs * cost::depthwise_params(width, k);
  out.macs = convs * cost::depthwise_macs(width, k, patches);
  if (c.eitt_branch == BranchStyle::kGeluConvFc) {
    out.params += width * width + width;
    out.macs += width * width * patches;
  }
  if (c.eitt_branch == BranchStyle::kConvBnRelu) out.params += 2 * width;
  return out;
}

}  // namespace

CostReport count_flops(const ModelConfig& c) {
  c.validate();
  const TokenGeometry g = c.geometry();
  const SplitSchedule schedule = build_schedule(c);
  const std::uint64_t C = c.channels;
  const std::uint64_t T = g.tokens();
  const std::uint64_t P = g.patches();
  const std::uint64_t patch_fan_in =
      static_cast<std::uint64_t>(c.image_channels) * c.eitp_kernel * c.eitp_kernel;

  CostReport r;
  r.components.push_back(
      {"patch_embed", patch_fan_in * C + C,
       static_cast<std::uint64_t>(g.conv_h) * g.conv_w * C * patch_fan_in});
  r.components.push_back({"cls_token", C, 0});
  if (c.pos_embed == PosEmbed::kTrainable) r.components.push_back({"pos_embed", T * C, 0});

  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::string p = "layer" + std::to_string(i + 1) + ".";
    const SplitEntry& e = schedule.layers[i];
    r.components.push_back({p + "norms", 4 * C, 0});
    r.components.push_back(eitt_cost(c, e.conv_channels, P, p + "eitt"));
    r.components.push_back({p + "mha", cost::mha_params(e.attn_channels),
                            cost::mha_projection_macs(e.attn_channels, T) +
                                cost::mha_attention_macs(e.attn_channels, T)});
    r.components.push_back(
        {p + "mlp", cost::mlp_params(C, c.mlp_ratio), cost::mlp_macs(C, c.mlp_ratio, T)});
  }
  r.components.push_back({"final_norm", 2 * C, 0});
  r.components.push_back({"head", C * c.classes + c.classes, C * c.classes});
  return r;
}

CostReport count_params(const ModelConfig& c) {
  CostReport r = count_flops(c);
  for (auto& comp : r.components) comp.macs = 0;
  return r;
}

std::string cost_report_json(const ModelConfig& config, const CostReport& report) {
  const TokenGeometry g = config.geometry();
  const SplitSchedule schedule = build_schedule(config);
  nlohmann::ordered_json doc;
  doc["flop_convention"] = report.flop_convention;
  doc["vit_equivalent"] = config.vit_equivalent();
  doc["geometry"] = {{"conv", {g.conv_h, g.conv_w}},
                     {"grid", {g.grid_h, g.grid_w}},
                     {"tokens", g.tokens()}};
  auto& layers = doc["schedule"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < schedule.layers.size(); ++i) {
    layers.push_back({{"layer", i + 1},
                      {"conv_channels", schedule.layers[i].conv_channels},
                      {"attn_channels", schedule.layers[i].attn_channels}});
  }
  auto& comps = doc["components"] = nlohmann::ordered_json::array();
  for (const auto& c : report.components) {
    comps.push_back({{"name", c.name}, {"params", c.params}, {"macs", c.macs}, {"flops", c.flops()}});
  }
  doc["totals"] = {{"params", report.total_params()},
                   {"macs", report.total_macs()},
                   {"flops", report.total_flops()}};
  return doc.dump(2);
}

std::string describe_table(const ModelConfig& config, const CostReport& report) {
  const TokenGeometry g = config.geometry();
  const SplitSchedule schedule = build_schedule(config);
  std::ostringstream os;
  char line[160];

  os << "model: C=" << config.channels << " L=" << config.layers << " heads=" << config.heads
     << " policy=" << to_string(config.split_policy) << " branch=" << to_string(config.eitt_branch)
     << " pos_embed=" << to_string(config.pos_embed) << "\n";
  os << "patch stage: " << config.image_height << "x" << config.image_width << " -> conv "
     << g.conv_h << "x" << g.conv_w << " (k=" << config.eitp_kernel << ", s=" << config.eitp_stride
     << ", p=" << config.eitp_padding << ") -> pool " << g.grid_h << "x" << g.grid_w
     << " (s_m=" << config.eitp_pool << ") -> " << g.tokens() << " tokens\n";
  if (config.vit_equivalent()) os << "geometry: ViT-equivalent (linear patch projection, no conv branch)\n";

  os << "\nsplit schedule\n";
  std::snprintf(line, sizeof line, "  %-6s %10s %10s\n", "layer", "conv C^T", "attn C^M");
  os << line;
  for (std::size_t i = 0; i < schedule.layers.size(); ++i) {
    std::snprintf(line, sizeof line, "  %-6zu %10zu %10zu\n", i + 1,
                  schedule.layers[i].conv_channels, schedule.layers[i].attn_channels);
    os << line;
  }

  os << "\ncosts\n";
  std::snprintf(line, sizeof line, "  %-16s %14s %16s %16s\n", "component", "params", "MACs",
                "FLOPs");
  os << line;
  for (const auto& c : report.components) {
    std::snprintf(line, sizeof line, "  %-16s %14llu %16llu %16llu\n", c.name.c_str(),
                  static_cast<unsigned long long>(c.params),
                  static_cast<unsigned long long>(c.macs),
                  static_cast<unsigned long long>(c.flops()));
    os << line;
  }
  std::snprintf(line, sizeof line, "  %-16s %14llu %16llu %16llu\n", "total",
                static_cast<unsigned long long>(report.total_params()),
                static_cast<unsigned long long>(report.total_macs()),
                static_cast<unsigned long long>(report.total_flops()));
  os << line;
  std::snprintf(line, sizeof line, "\ntotal: %.3fM params, %.3fG MACs, %.3fG FLOPs\n",
                static_cast<double>(report.total_params()) / 1e6,
                static_cast<double>(report.total_macs()) / 1e9,
                static_cast<double>(report.total_flops()) / 1e9);
  os << line;
  os << "convention: " << report.flop_convention << "\n";
  return os.str();
}

}  // namespace eit
