#include "eit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eit/errors.hpp"
#include "eit/kernels.hpp"
#include "eit/schedule.hpp"

namespace eit {

using nlohmann::json;

const char* to_string(SplitPolicy policy) {
  switch (policy) {
    case SplitPolicy::kDecreasing: return "decreasing";
    case SplitPolicy::kIncreasing: return "increasing";
    case SplitPolicy::kInvariant: return "invariant";
    case SplitPolicy::kParallel: return "parallel";
    case SplitPolicy::kNone: return "none";
  }
  return "?";
}

const char* to_string(BranchStyle style) {
  switch (style) {
    case BranchStyle::kConv: return "conv";
    case BranchStyle::kConv3: return "conv3";
    case BranchStyle::kGeluConvFc: return "gelu_conv_fc";
    case BranchStyle::kConvBnRelu: return "conv_bn_relu";
    case BranchStyle::kNone: return "none";
  }
  return "?";
}

const char* to_string(PosEmbed mode) { return mode == PosEmbed::kNone ? "none" : "trainable"; }

SplitPolicy split_policy_from_string(const std::string& s) {
  for (auto p : {SplitPolicy::kDecreasing, SplitPolicy::kIncreasing, SplitPolicy::kInvariant,
                 SplitPolicy::kParallel, SplitPolicy::kNone}) {
    if (s == to_string(p)) return p;
  }
  throw ConfigError("split_policy: unknown value '" + s + "'");
}

BranchStyle branch_style_from_string(const std::string& s) {
  for (auto b : {BranchStyle::kConv, BranchStyle::kConv3, BranchStyle::kGeluConvFc,
                 BranchStyle::kConvBnRelu, BranchStyle::kNone}) {
    if (s == to_string(b)) return b;
  }
  throw ConfigError("eitt_branch: unknown value '" + s + "'");
}

PosEmbed pos_embed_from_string(const std::string& s) {
  if (s == "none") return PosEmbed::kNone;
  if (s == "trainable") return PosEmbed::kTrainable;
  throw ConfigError("pos_embed: unknown value '" + s + "'");
}

namespace {

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw ConfigError(std::string(field) + ": " + what);
}

}  // namespace

TokenGeometry ModelConfig::geometry() const {
  TokenGeometry g;
  try {
    g.conv_h = conv_output_extent(image_height, eitp_kernel, eitp_stride, eitp_padding);
    g.conv_w = conv_output_extent(image_width, eitp_kernel, eitp_stride, eitp_padding);
  } catch (const GeometryError& e) {
    throw ConfigError(std::string("eitp_kernel: ") + e.what());
  }
  try {
    g.grid_h = pool_output_extent(g.conv_h, eitp_pool, eitp_pool);
    g.grid_w = pool_output_extent(g.conv_w, eitp_pool, eitp_pool);
  } catch (const GeometryError& e) {
    throw ConfigError(std::string("eitp_pool: ") + e.what());
  }
  return g;
}

void ModelConfig::validate() const {
  require(channels >= 1, "channels", "must be >= 1");
  require(layers >= 1, "layers", "must be >= 1");
  require(heads >= 1, "heads", "must be >= 1");
  require(channels % heads == 0, "channels",
          std::to_string(channels) + " is not divisible by heads " + std::to_string(heads));
  require(mlp_ratio >= 1, "mlp_ratio", "must be >= 1");
  require(classes >= 1, "classes", "must be >= 1");
  require(image_height >= 1 && image_width >= 1, "image", "extents must be >= 1");
  require(image_channels == 3, "image", "channel count must be 3");
  require(eitp_kernel >= 1, "eitp_kernel", "must be >= 1");
  require(eitp_stride >= 1, "eitp_stride", "must be >= 1");
  require(eitp_stride <= eitp_kernel, "eitp_stride",
          "must not exceed eitp_kernel (" + std::to_string(eitp_kernel) + ")");
  require(eitp_pool >= 1, "eitp_pool", "must be >= 1");
  require(eitt_kernel % 2 == 1, "eitt_kernel", "must be odd so the token grid is preserved");
  require(eitt_stride == 1, "eitt_stride", "must be 1 so the token grid is preserved");
  require(dropout >= 0.0 && dropout < 1.0, "dropout", "must be in [0, 1)");
  geometry();
  build_schedule(*this);
}

bool ModelConfig::vit_equivalent() const {
  return split_policy == SplitPolicy::kNone && eitp_kernel == eitp_stride && eitp_pool == 1 &&
         eitp_padding == 0;
}

namespace {

const std::set<std::string> kRequired = {"channels",    "layers",      "heads",
                                         "classes",     "image",       "eitp_kernel",
                                         "eitp_stride", "eitp_padding", "eitp_pool"};
const std::set<std::string> kOptional = {"mlp_ratio",   "eitt_kernel",  "eitt_stride",
                                         "eitt_branch", "split_policy", "pos_embed",
                                         "dropout"};

std::size_t get_count(const json& doc, const char* key) {
  const json& v = doc.at(key);
  require(v.is_number_integer() && v.get<long long>() >= 0, key,
          "expected a non-negative integer, got " + v.dump());
  return v.get<std::size_t>();
}

std::string get_string(const json& doc, const char* key) {
  const json& v = doc.at(key);
  require(v.is_string(), key, "expected a string, got " + v.dump());
  return v.get<std::string>();
}

}  // namespace

ModelConfig config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  require(doc.is_object(), "config", "top level must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    require(kRequired.count(key) || kOptional.count(key), key.c_str(), "unknown key");
  }
  for (const auto& key : kRequired) {
    require(doc.contains(key), key.c_str(), "missing required key");
  }

  ModelConfig c;
  c.channels = get_count(doc, "channels");
  c.layers = get_count(doc, "layers");
  c.heads = get_count(doc, "heads");
  c.classes = get_count(doc, "classes");
  const json& image = doc.at("image");
  require(image.is_array() && image.size() == 3, "image", "expected [height, width, 3]");
  for (const auto& e : image) {
    require(e.is_number_integer() && e.get<long long>() > 0, "image",
            "extents must be positive integers");
  }
  c.image_height = image[0].get<std::size_t>();
  c.image_width = image[1].get<std::size_t>();
  c.image_channels = image[2].get<std::size_t>();
  c.eitp_kernel = get_count(doc, "eitp_kernel");
  c.eitp_stride = get_count(doc, "eitp_stride");
  c.eitp_padding = get_count(doc, "eitp_padding");
  c.eitp_pool = get_count(doc, "eitp_pool");
  if (doc.contains("mlp_ratio")) c.mlp_ratio = get_count(doc, "mlp_ratio");
  if (doc.contains("eitt_kernel")) c.eitt_kernel = get_count(doc, "eitt_kernel");
  if (doc.contains("eitt_stride")) c.eitt_stride = get_count(doc, "eitt_stride");
  if (doc.contains("eitt_branch")) {
    c.eitt_branch = branch_style_from_string(get_string(doc, "eitt_branch"));
  }
  if (doc.contains("split_policy")) {
    c.split_policy = split_policy_from_string(get_string(doc, "split_policy"));
  }
  if (doc.contains("pos_embed")) c.pos_embed = pos_embed_from_string(get_string(doc, "pos_embed"));
  if (doc.contains("dropout")) {
    require(doc["dropout"].is_number(), "dropout", "expected a number");
    c.dropout = doc["dropout"].get<double>();
  }
  c.validate();
  return c;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return config_from_json(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_to_json(const ModelConfig& c, int indent) {
  nlohmann::ordered_json doc;
  doc["channels"] = c.channels;
  doc["layers"] = c.layers;
  doc["heads"] = c.heads;
  doc["mlp_ratio"] = c.mlp_ratio;
  doc["classes"] = c.classes;
  doc["image"] = {c.image_height, c.image_width, c.image_channels};
  doc["eitp_kernel"] = c.eitp_kernel;
  doc["eitp_stride"] = c.eitp_stride;
  doc["eitp_padding"] = c.eitp_padding;
  doc["eitp_pool"] = c.eitp_pool;
  doc["eitt_kernel"] = c.eitt_kernel;
  doc["eitt_stride"] = c.eitt_stride;
  doc["eitt_branch"] = to_string(c.eitt_branch);
  doc["split_policy"] = to_string(c.split_policy);
  doc["pos_embed"] = to_string(c.pos_embed);
  doc["dropout"] = c.dropout;
  return doc.dump(indent);
}

std::uint64_t config_hash(const ModelConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_json(config, -1)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace eit
