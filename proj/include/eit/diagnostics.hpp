#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eit/config.hpp"
#include "eit/gradcheck.hpp"

namespace eit {

// Models larger than this are refused by the full-model gradient check.
inline constexpr std::size_t kGradcheckParamLimit = 50000;

struct GradcheckGroup {
  std::string name;  // "op:<primitive>" or "model"
  GradcheckReport report;
};

struct GradcheckSuite {
  std::vector<GradcheckGroup> groups;

  bool passed() const;
  // Group and parameter with the largest relative error against its own
  // tolerance; empty names when the suite is empty.
  std::string worst_group() const;
  std::string worst_param() const;
  double worst_ratio() const;
};

struct GradcheckSuiteOptions {
  std::uint64_t seed = 0;
  double step = 1e-5;
  double primitive_tolerance = 1e-5;
  double model_tolerance = 1e-4;
  // Names a primitive whose backward rule is deliberately scaled (negative control).
  std::string fault_op;
  bool primitives = true;
  bool model = true;
};

// The primitive op names covered by the suite, in check order.
std::vector<std::string> gradcheck_primitive_names();

// Per-primitive checks on small random inputs followed by a full-model check
// of `config` with randomized parameters. Throws ConfigError when the model
// exceeds kGradcheckParamLimit parameters.
GradcheckSuite run_gradcheck_suite(const ModelConfig& config, const GradcheckSuiteOptions& options);

// JSON report: one object per group with per-parameter errors and verdicts.
std::string gradcheck_suite_json(const GradcheckSuite& suite);

}  // namespace eit
