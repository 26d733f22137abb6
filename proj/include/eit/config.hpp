#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

namespace eit {

// How channels are divided between the convolution branch and attention.
enum class SplitPolicy { kDecreasing, kIncreasing, kInvariant, kParallel, kNone };

// Body of the encoder convolution branch.
enum class BranchStyle { kConv, kConv3, kGeluConvFc, kConvBnRelu, kNone };

enum class PosEmbed { kNone, kTrainable };

const char* to_string(SplitPolicy policy);
const char* to_string(BranchStyle style);
const char* to_string(PosEmbed mode);
SplitPolicy split_policy_from_string(const std::string& s);
BranchStyle branch_style_from_string(const std::string& s);
PosEmbed pos_embed_from_string(const std::string& s);

// Spatial bookkeeping derived from the patch stage of a config.
struct TokenGeometry {
  std::size_t conv_h = 0, conv_w = 0;  // after the patch convolution
  std::size_t grid_h = 0, grid_w = 0;  // after max-pooling
  std::size_t patches() const { return grid_h * grid_w; }
  std::size_t tokens() const { return 1 + patches(); }
};

struct ModelConfig {
  std::size_t channels = 0;
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t mlp_ratio = 4;
  std::size_t classes = 0;
  std::size_t image_height = 0;
  std::size_t image_width = 0;
  std::size_t image_channels = 3;

  std::size_t eitp_kernel = 0;
  std::size_t eitp_stride = 0;
  std::size_t eitp_padding = 0;
  std::size_t eitp_pool = 1;

  std::size_t eitt_kernel = 3;
  std::size_t eitt_stride = 1;
  BranchStyle eitt_branch = BranchStyle::kConv;

  SplitPolicy split_policy = SplitPolicy::kDecreasing;
  PosEmbed pos_embed = PosEmbed::kNone;
  double dropout = 0.0;

  // Throws ConfigError naming the offending field.
  void validate() const;
  TokenGeometry geometry() const;
  std::size_t eitt_padding() const { return eitt_kernel / 2; }
  // No convolution branch and a non-overlapping linear patch projection.
  bool vit_equivalent() const;

  bool operator==(const ModelConfig&) const = default;
};

// Flat JSON document; unknown keys are rejected.
ModelConfig config_from_json(const std::string& text);
ModelConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ModelConfig& config, int indent = 2);
// FNV-1a over the canonical compact JSON form.
std::uint64_t config_hash(const ModelConfig& config);

}  // namespace eit
