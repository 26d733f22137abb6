#include <gtest/gtest.h>

#include <atomic>

#include "eit/config.hpp"
#include "eit/diagnostics.hpp"
#include "eit/errors.hpp"
#include "eit/gradcheck.hpp"
#include "eit/rng.hpp"
#include "oracles.hpp"

namespace {

using eit::GradcheckOptions;
using eit::NamedTensor;
using eit::Tape;
using eit::Tensor;
using eit::Var;

eit::ModelConfig micro_config() { return eit::load_config(EIT_TEST_CONFIG_DIR "/micro.json"); }

TEST(Gradcheck, SquareAtThree) {
  const auto f = [](Tape&, std::span<const Var> p) { return eit::sum(eit::mul(p[0], p[0])); };
  const auto report = eit::gradcheck(f, {{"x", Tensor({1}, {3.0})}}, GradcheckOptions{});
  ASSERT_EQ(report.entries.size(), 1u);
  EXPECT_TRUE(report.passed());
  EXPECT_LE(report.worst().max_rel_error, 1e-9);
}

TEST(Gradcheck, LayerNormParameters) {
  eit::Rng rng(1);
  const Tensor x = oracle::random_tensor({4, 6}, rng, -2.0, 2.0);
  const Tensor w = oracle::random_tensor({4, 6}, rng, 0.5, 1.5);
  const auto f = [&](Tape& tape, std::span<const Var> p) {
    return eit::sum(eit::mul(eit::layernorm(tape.constant(x), p[0], p[1]), tape.constant(w)));
  };
  GradcheckOptions options;
  options.tolerance = 1e-6;
  const auto report = eit::gradcheck(
      f, {{"gain", oracle::random_tensor({6}, rng)}, {"shift", oracle::random_tensor({6}, rng)}},
      options);
  EXPECT_TRUE(report.passed()) << report.worst().name << " " << report.worst().max_rel_error;
}

TEST(Gradcheck, DepthwiseConvWeights) {
  eit::Rng rng(2);
  const Tensor x = oracle::random_tensor({2, 3, 5, 5}, rng);
  const Tensor w = oracle::random_tensor({2, 3, 5, 5}, rng, 0.5, 1.5);
  const auto spec = eit::ConvSpec::depthwise(3, 3, 1);
  const auto f = [&](Tape& tape, std::span<const Var> p) {
    return eit::sum(eit::mul(eit::conv2d(tape.constant(x), p[0], p[1], spec), tape.constant(w)));
  };
  GradcheckOptions options;
  options.tolerance = 1e-5;
  const auto report = eit::gradcheck(f,
                                     {{"weight", oracle::random_tensor({3, 1, 3, 3}, rng)},
                                      {"bias", oracle::random_tensor({3}, rng)}},
                                     options);
  EXPECT_TRUE(report.passed()) << report.worst().name << " " << report.worst().max_rel_error;
}

TEST(Gradcheck, NonDeterministicFunctionIsDiagnosticError) {
  std::atomic<int> calls{0};
  const auto f = [&](Tape&, std::span<const Var> p) {
    return eit::sum(eit::scale(p[0], 1.0 + 0.1 * ++calls));
  };
  EXPECT_THROW(eit::gradcheck(f, {{"x", Tensor({1}, {1.0})}}, GradcheckOptions{}),
               eit::DiagnosticError);
}

TEST(Gradcheck, NonScalarOutputIsContractViolation) {
  const auto f = [](Tape&, std::span<const Var> p) { return p[0]; };
  EXPECT_THROW(eit::gradcheck(f, {{"x", Tensor({2})}}, GradcheckOptions{}), eit::ContractViolation);
}

TEST(Gradcheck, NonPositiveStepIsContractViolation) {
  const auto f = [](Tape&, std::span<const Var> p) { return eit::sum(p[0]); };
  GradcheckOptions options;
  options.step = 0.0;
  EXPECT_THROW(eit::gradcheck(f, {{"x", Tensor({1})}}, options), eit::ContractViolation);
}

TEST(Gradcheck, MaxEntriesSubsamples) {
  const auto f = [](Tape&, std::span<const Var> p) { return eit::sum(eit::mul(p[0], p[0])); };
  GradcheckOptions options;
  options.max_entries = 5;
  const auto report = eit::gradcheck(f, {{"x", Tensor::full({40}, 0.5)}}, options);
  EXPECT_EQ(report.entries[0].checked, 5u);
}

TEST(GradcheckSuite, EveryPrimitivePassesAtPrimitiveTolerance) {
  eit::GradcheckSuiteOptions options;
  options.model = false;
  const auto suite = eit::run_gradcheck_suite(micro_config(), options);
  ASSERT_EQ(suite.groups.size(), eit::gradcheck_primitive_names().size());
  for (const auto& group : suite.groups) {
    EXPECT_TRUE(group.report.passed()) << group.name;
    EXPECT_LE(group.report.worst().max_rel_error, 1e-5) << group.name;
  }
}

TEST(GradcheckSuite, MicroModelPasses) {
  eit::GradcheckSuiteOptions options;
  options.primitives = false;
  const auto suite = eit::run_gradcheck_suite(micro_config(), options);
  ASSERT_EQ(suite.groups.size(), 1u);
  EXPECT_EQ(suite.groups[0].name, "model");
  EXPECT_TRUE(suite.passed());
  for (const auto& e : suite.groups[0].report.entries) EXPECT_LE(e.max_rel_error, 1e-4) << e.name;
}

TEST(GradcheckSuite, InjectedFaultIsCaughtAndNamed) {
  eit::GradcheckSuiteOptions options;
  options.model = false;
  options.fault_op = "softmax";
  const auto suite = eit::run_gradcheck_suite(micro_config(), options);
  EXPECT_FALSE(suite.passed());
  EXPECT_EQ(suite.worst_group(), "op:softmax");
  EXPECT_GT(suite.worst_ratio(), 1.0);
}

TEST(GradcheckSuite, UnknownFaultOpIsConfigError) {
  eit::GradcheckSuiteOptions options;
  options.fault_op = "nope";
  EXPECT_THROW(eit::run_gradcheck_suite(micro_config(), options), eit::ConfigError);
}

TEST(GradcheckSuite, OversizedModelIsConfigError) {
  const auto config = eit::load_config(EIT_TEST_CONFIG_DIR "/eit16_4_3_mini.json");
  EXPECT_THROW(eit::run_gradcheck_suite(config, {}), eit::ConfigError);
}

TEST(GradcheckSuite, JsonReportNamesEveryGroup) {
  eit::GradcheckSuiteOptions options;
  options.model = false;
  const std::string json = eit::gradcheck_suite_json(eit::run_gradcheck_suite(micro_config(), options));
  for (const auto& name : eit::gradcheck_primitive_names()) {
    EXPECT_NE(json.find("op:" + name), std::string::npos) << name;
  }
}

}  // namespace
