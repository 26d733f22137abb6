#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eit/autograd.hpp"

namespace eit {

// Builds a scalar on `tape` from leaf Vars bound to the parameters, in the
// order they were passed to gradcheck().
using ScalarFunction = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error; keeps near-zero gradients from
  // dominating the report.
  double floor = 1e-6;
  // Upper bound on the number of entries perturbed per parameter; 0 checks all.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
  // Passed to Tape::Options::fault_op for the analytic pass.
  std::string fault_op;
};

struct GradcheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double tolerance = 0.0;

  bool passed() const;
  // Entry with the largest relative error.
  const GradcheckEntry& worst() const;
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor)
double relative_error(double analytic, double numeric, double floor);

// Compares backward() against central differences (f(t+h) - f(t-h)) / 2h.
// Throws DiagnosticError when f is not deterministic.
GradcheckReport gradcheck(const ScalarFunction& f, std::vector<NamedTensor> params,
                          const GradcheckOptions& options);

}  // namespace eit
