#include "eit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "eit/errors.hpp"
#include "eit/rng.hpp"

namespace eit {

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

const GradcheckEntry& GradcheckReport::worst() const {
  if (entries.empty()) throw ContractViolation("empty gradcheck report");
  return *std::max_element(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.max_rel_error < b.max_rel_error;
  });
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const ScalarFunction& f, const std::vector<NamedTensor>& params) {
  Tape tape(Tape::inference());
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.leaf(p.value, false));
  const Var out = f(tape, vars);
  if (out.value().numel() != 1) {
    throw ContractViolation("gradcheck function must return a scalar, got " +
                            shape_str(out.shape()));
  }
  return out.value()[0];
}

std::vector<std::size_t> pick_entries(std::size_t numel, std::size_t max_entries, Rng& rng) {
  std::vector<std::size_t> idx(numel);
  std::iota(idx.begin(), idx.end(), 0);
  if (max_entries == 0 || numel <= max_entries) return idx;
  for (std::size_t i = 0; i < max_entries; ++i) {
    std::swap(idx[i], idx[i + rng.below(numel - i)]);
  }
  idx.resize(max_entries);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradcheckReport gradcheck(const ScalarFunction& f, std::vector<NamedTensor> params,
                          const GradcheckOptions& options) {
  if (!(options.step > 0.0)) throw ContractViolation("gradcheck step must be > 0");

  const double base = evaluate(f, params);
  const double again = evaluate(f, params);
  if (std::memcmp(&base, &again, sizeof(double)) != 0) {
    throw DiagnosticError("gradcheck: function is not deterministic (" + std::to_string(base) +
                          " vs " + std::to_string(again) + ")");
  }

  std::vector<Tensor> analytic;
  {
    Tape::Options tape_options;
    tape_options.fault_op = options.fault_op;
    Tape tape(tape_options);
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.leaf(p.value, true));
    const Var out = f(tape, vars);
    const Gradients grads = tape.backward(out);
    for (const Var& v : vars) analytic.push_back(grads.of(v));
  }

  GradcheckReport report;
  report.tolerance = options.tolerance;
  Rng rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    GradcheckEntry entry;
    entry.name = params[pi].name;
    Tensor& theta = params[pi].value;
    for (std::size_t i : pick_entries(theta.numel(), options.max_entries, rng)) {
      const double saved = theta[i];
      theta[i] = saved + options.step;
      const double plus = evaluate(f, params);
      theta[i] = saved - options.step;
      const double minus = evaluate(f, params);
      theta[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[pi][i];
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(a - numeric));
      entry.max_rel_error =
          std::max(entry.max_rel_error, relative_error(a, numeric, options.floor));
      ++entry.checked;
    }
    entry.passed = entry.max_rel_error <= options.tolerance;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace eit
