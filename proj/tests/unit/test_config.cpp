#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "eit/config.hpp"
#include "eit/errors.hpp"

namespace {

using eit::ConfigError;
using eit::ModelConfig;

const char* kMinimal = R"({
  "channels": 8, "layers": 2, "heads": 2, "classes": 4, "image": [8, 8, 3],
  "eitp_kernel": 3, "eitp_stride": 1, "eitp_padding": 1, "eitp_pool": 2
})";

std::string with(const std::string& extra) {
  std::string s = kMinimal;
  s.insert(s.rfind('}'), ", " + extra);
  return s;
}

TEST(Config, MinimalDocumentFillsDefaults) {
  const ModelConfig c = eit::config_from_json(kMinimal);
  EXPECT_EQ(c.channels, 8u);
  EXPECT_EQ(c.mlp_ratio, 4u);
  EXPECT_EQ(c.eitt_kernel, 3u);
  EXPECT_EQ(c.eitt_stride, 1u);
  EXPECT_EQ(c.eitt_branch, eit::BranchStyle::kConv);
  EXPECT_EQ(c.split_policy, eit::SplitPolicy::kDecreasing);
  EXPECT_EQ(c.pos_embed, eit::PosEmbed::kNone);
  EXPECT_EQ(c.dropout, 0.0);
}

TEST(Config, JsonRoundTripPreservesEveryField) {
  const ModelConfig c = eit::config_from_json(
      with(R"("split_policy": "invariant", "pos_embed": "trainable", "eitt_branch": "conv_bn_relu",
              "dropout": 0.1, "mlp_ratio": 2)"));
  const ModelConfig back = eit::config_from_json(eit::config_to_json(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(eit::config_hash(back), eit::config_hash(c));
}

TEST(Config, HashChangesWithAnyField) {
  ModelConfig a = eit::config_from_json(kMinimal);
  ModelConfig b = a;
  b.classes = 5;
  EXPECT_NE(eit::config_hash(a), eit::config_hash(b));
}

TEST(Config, UnknownKeyRejected) {
  try {
    eit::config_from_json(with(R"("colour": 1)"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
  }
}

TEST(Config, MissingRequiredKeyRejected) {
  EXPECT_THROW(eit::config_from_json(R"({"channels": 8})"), ConfigError);
}

TEST(Config, InvalidJsonRejected) { EXPECT_THROW(eit::config_from_json("{"), ConfigError); }

TEST(Config, ChannelsMustDivideHeads) {
  try {
    std::string doc = kMinimal;
    doc.replace(doc.find("\"heads\": 2"), 10, "\"heads\": 3");
    eit::config_from_json(doc);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
}

TEST(Config, StrideAboveKernelRejected) {
  ModelConfig c = eit::config_from_json(kMinimal);
  c.eitp_stride = 4;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, EvenOrStridedEittKernelRejected) {
  ModelConfig c = eit::config_from_json(kMinimal);
  c.eitt_kernel = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c.eitt_kernel = 3;
  c.eitt_stride = 2;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, UnknownEnumValuesRejected) {
  EXPECT_THROW(eit::config_from_json(with(R"("split_policy": "random")")), ConfigError);
  EXPECT_THROW(eit::config_from_json(with(R"("pos_embed": "sinusoid")")), ConfigError);
  EXPECT_THROW(eit::config_from_json(with(R"("eitt_branch": "conv5")")), ConfigError);
}

TEST(Config, EnumNamesRoundTrip) {
  for (auto p : {eit::SplitPolicy::kDecreasing, eit::SplitPolicy::kIncreasing,
                 eit::SplitPolicy::kInvariant, eit::SplitPolicy::kParallel, eit::SplitPolicy::kNone}) {
    EXPECT_EQ(eit::split_policy_from_string(eit::to_string(p)), p);
  }
  for (auto b : {eit::BranchStyle::kConv, eit::BranchStyle::kConv3, eit::BranchStyle::kGeluConvFc,
                 eit::BranchStyle::kConvBnRelu, eit::BranchStyle::kNone}) {
    EXPECT_EQ(eit::branch_style_from_string(eit::to_string(b)), b);
  }
}

TEST(Geometry, PatchStageWorkedValues) {
  ModelConfig c = eit::config_from_json(kMinimal);
  c.image_height = c.image_width = 224;
  c.eitp_kernel = 16;
  c.eitp_stride = 4;
  c.eitp_padding = 0;
  c.eitp_pool = 3;
  const auto g = c.geometry();
  EXPECT_EQ(g.conv_h, 53u);
  EXPECT_EQ(g.grid_h, 17u);
  EXPECT_EQ(g.tokens(), 290u);

  c.image_height = c.image_width = 32;
  c.eitp_kernel = 3;
  c.eitp_stride = 1;
  c.eitp_padding = 1;
  c.eitp_pool = 4;
  EXPECT_EQ(c.geometry().tokens(), 65u);
}

TEST(Geometry, NonOverlappingPatchesMatchVitGrid) {
  ModelConfig c = eit::config_from_json(kMinimal);
  for (std::size_t k : {2u, 4u, 8u}) {
    for (std::size_t h : {8u, 16u, 17u, 32u}) {
      c.image_height = c.image_width = h;
      c.eitp_kernel = c.eitp_stride = k;
      c.eitp_padding = 0;
      c.eitp_pool = 1;
      EXPECT_EQ(c.geometry().tokens(), (h / k) * (h / k) + 1);
    }
  }
}

TEST(Geometry, EmptyGridIsConfigError) {
  ModelConfig c = eit::config_from_json(kMinimal);
  c.eitp_pool = 16;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, ShippedConfigsLoad) {
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(EIT_TEST_CONFIG_DIR)) {
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() != ".json" || name.find("train") != std::string::npos) continue;
    EXPECT_NO_THROW(eit::load_config(entry.path())) << name;
    ++n;
  }
  EXPECT_GE(n, 6u);
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_THROW(eit::load_config("/nonexistent/config.json"), eit::IoError);
}

}  // namespace
